//! Gomory cuts read off the final simplex tableau.
//!
//! Each nonbasic column is shifted to `t_j ≥ 0` (`x_j − l_j` at its lower
//! bound, `u_j − x_j` at its upper bound), so a tableau row reads
//! `x_B + Σ g_j t_j = x̄_B`. When every `t_j` in the row is integer-valued on
//! integer-feasible points the pure fractional cut `Σ frac(g_j) t_j ≥ frac(x̄_B)`
//! is emitted; rows touching continuous columns use the mixed-integer form.

use super::{clean, Category, Cut};
use crate::error::Result;
use crate::milp::LpRelaxation;
use crate::simplex::{ColKind, ColStatus, LpSolution, LpStatus};
use crate::tol;

const MIN_FRAC: f64 = tol::INT;
const MAX_DYNAMISM: f64 = 1e8;

/// One cut per fractional basic integer row of `sol`'s tableau, keeping only
/// those violated by more than 1e-6 at `sol.x`. `sol` must be the optimum of
/// `rel` (same row order).
pub fn gomory_cuts(sol: &LpSolution, rel: &LpRelaxation, round: usize) -> Result<Vec<Cut>> {
    if sol.status != LpStatus::Optimal {
        return Ok(Vec::new());
    }
    let inst = rel.base();
    let t = &sol.tableau;
    let n = t.n;
    let rows: Vec<(&[f64], f64)> = rel.rows().collect();
    let slack_integral: Vec<bool> = rows
        .iter()
        .map(|(a, b)| {
            is_int_value(*b)
                && (0..n).all(|j| a[j] == 0.0 || (inst.is_integer(j) && is_int_value(a[j])))
        })
        .collect();

    let mut cuts = Vec::new();
    for (i, &basic) in t.basis.iter().enumerate() {
        if basic >= n || !inst.is_integer(basic) {
            continue;
        }
        let f0 = tol::frac(t.values[basic]);
        if f0 <= MIN_FRAC || f0 >= 1.0 - MIN_FRAC {
            continue;
        }
        // collect (column, g_j, integer?) over nonbasic, non-fixed columns
        let mut terms = Vec::new();
        let mut all_integer = true;
        for j in 0..t.ncols() {
            if t.status[j] == ColStatus::Basic || t.is_fixed(j) {
                continue;
            }
            let g = match t.status[j] {
                ColStatus::AtUpper => -t.rows[i][j],
                _ => t.rows[i][j],
            };
            if g.abs() <= 1e-11 {
                continue;
            }
            let integer = match t.kind(j) {
                ColKind::Structural(s) => {
                    inst.is_integer(s)
                        && is_int_value(if t.status[j] == ColStatus::AtUpper {
                            t.col_ub[j]
                        } else {
                            t.col_lb[j]
                        })
                }
                ColKind::Slack(r) => slack_integral[r],
                ColKind::Artificial(_) => false,
            };
            all_integer &= integer;
            terms.push((j, g, integer));
        }
        // Σ coef_j t_j ≥ 1
        let coefs: Vec<(usize, f64)> = terms
            .iter()
            .map(|&(j, g, integer)| {
                let c = if all_integer {
                    tol::frac(g) / f0
                } else if integer {
                    let fj = tol::frac(g);
                    (fj / f0).min((1.0 - fj) / (1.0 - f0))
                } else if g >= 0.0 {
                    g / f0
                } else {
                    -g / (1.0 - f0)
                };
                (j, c)
            })
            .filter(|&(_, c)| c > 1e-12)
            .collect();
        if coefs.is_empty() {
            continue;
        }
        // back to x-space as π·x ≥ π0, then negate to a·x ≤ β
        let mut pi = vec![0.0; n];
        let mut pi0 = 1.0;
        for &(j, c) in &coefs {
            match (t.kind(j), t.status[j]) {
                (ColKind::Structural(s), ColStatus::AtUpper) => {
                    pi[s] -= c;
                    pi0 -= c * t.col_ub[j];
                }
                (ColKind::Structural(s), _) => {
                    pi[s] += c;
                    pi0 += c * t.col_lb[j];
                }
                (ColKind::Slack(r), _) => {
                    // t = s_r = b_r − a_r·x
                    let (a, b) = rows[r];
                    for k in 0..n {
                        pi[k] -= c * a[k];
                    }
                    pi0 -= c * b;
                }
                (ColKind::Artificial(_), _) => unreachable!("artificials are fixed after phase one"),
            }
        }
        let mut a: Vec<f64> = pi.iter().map(|v| -v).collect();
        clean(&mut a);
        let beta = -pi0;
        let inf = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min_nz = a.iter().filter(|v| **v != 0.0).fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if inf == 0.0 || inf / min_nz > MAX_DYNAMISM {
            continue;
        }
        let Ok(cut) = Cut::new(a, beta, Category::GomoryFrac, round) else {
            continue;
        };
        if cut.violation(&sol.x) > 1e-6 {
            cuts.push(cut);
        }
    }
    Ok(cuts)
}

fn is_int_value(v: f64) -> bool {
    (v - v.round()).abs() <= 1e-9
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::cutgen::check_validity;
    use crate::milp::{build_relaxation, MilpInstance, Row};
    use crate::simplex::solve;

    fn toy() -> Arc<MilpInstance> {
        Arc::new(
            MilpInstance::new(
                vec![-1.0, -1.0],
                vec![Row::new(vec![3.0, 2.0], 6.0), Row::new(vec![-3.0, 2.0], 0.0)],
                vec![0, 1],
                vec![0.0; 2],
                vec![3.0; 2],
            )
            .unwrap(),
        )
    }

    #[test]
    fn knapsack_toy_cut_is_violated_and_valid() {
        let rel = build_relaxation(toy());
        let sol = solve(&rel.to_lp()).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-9 && (sol.x[1] - 1.5).abs() < 1e-9);
        let cuts = gomory_cuts(&sol, &rel, 0).unwrap();
        assert!(!cuts.is_empty());
        for cut in &cuts {
            assert!(cut.violation(&sol.x) > 1e-6);
            assert!(check_validity(cut, rel.base()).unwrap());
        }
    }

    #[test]
    fn integral_optimum_gives_nothing() {
        let inst = Arc::new(
            MilpInstance::new(
                vec![-1.0, -1.0],
                vec![Row::new(vec![1.0, 1.0], 2.0)],
                vec![0, 1],
                vec![0.0; 2],
                vec![3.0; 2],
            )
            .unwrap(),
        );
        let rel = build_relaxation(inst);
        let sol = solve(&rel.to_lp()).unwrap();
        assert!(gomory_cuts(&sol, &rel, 0).unwrap().is_empty());
    }

    #[test]
    fn mixed_rows_use_the_mixed_integer_form() {
        // x integer, y continuous: max x + y, 2x + 2y <= 3, y <= 0.25 (as a bound)
        let inst = Arc::new(
            MilpInstance::new(
                vec![-1.0, -0.5],
                vec![Row::new(vec![2.0, 1.0], 3.5)],
                vec![0],
                vec![0.0; 2],
                vec![3.0, 0.25],
            )
            .unwrap(),
        );
        let rel = build_relaxation(inst.clone());
        let sol = solve(&rel.to_lp()).unwrap();
        let cuts = gomory_cuts(&sol, &rel, 0).unwrap();
        assert!(!cuts.is_empty());
        for cut in &cuts {
            assert!(cut.violation(&sol.x) > 1e-6);
            assert!(check_validity(cut, &inst).unwrap());
        }
    }
}
