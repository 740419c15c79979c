use super::{Category, Cut};
use crate::milp::MilpInstance;
use crate::simplex::LpSolution;
use crate::tol;

/// Minimal cover inequalities `Σ_{j∈C} x_j ≤ |C| − 1` for knapsack rows
/// (nonnegative coefficients, binary support). The cover is built greedily
/// by descending `x*` (ties by index), then made minimal by dropping the
/// lowest-`x*` members whose removal keeps it a cover. Only violated covers
/// are returned.
pub fn cover_cuts(inst: &MilpInstance, sol: &LpSolution, round: usize) -> Vec<Cut> {
    let x = &sol.x;
    let mut cuts = Vec::new();
    for row in inst.rows() {
        let support: Vec<usize> = (0..inst.n()).filter(|&j| row.a[j] != 0.0).collect();
        if support.is_empty()
            || row.b < 0.0
            || support.iter().any(|&j| row.a[j] < 0.0 || !inst.is_binary(j))
        {
            continue;
        }
        let mut order = support.clone();
        order.sort_by(|&p, &q| x[q].total_cmp(&x[p]).then(p.cmp(&q)));
        let mut cover = Vec::new();
        let mut weight = 0.0;
        for &j in &order {
            cover.push(j);
            weight += row.a[j];
            if weight > row.b + tol::FEAS {
                break;
            }
        }
        if weight <= row.b + tol::FEAS {
            continue;
        }
        // cover is sorted by descending x*; try to drop from the back
        let mut k = cover.len();
        while k > 0 {
            k -= 1;
            let j = cover[k];
            if weight - row.a[j] > row.b + tol::FEAS {
                weight -= row.a[j];
                cover.remove(k);
            }
        }
        let lhs: f64 = cover.iter().map(|&j| x[j]).sum();
        let rhs = cover.len() as f64 - 1.0;
        if lhs - rhs > 1e-6 {
            let mut a = vec![0.0; inst.n()];
            for &j in &cover {
                a[j] = 1.0;
            }
            if let Ok(cut) = Cut::new(a, rhs, Category::KnapsackCover, round) {
                cuts.push(cut);
            }
        }
    }
    cuts
}
