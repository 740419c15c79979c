use rand::Rng;

use super::{clean, Category, Cut};
use crate::milp::MilpInstance;

/// Near-duplicates of `parent` that are valid whenever the parent is valid
/// but weaker than it: small noise on variables outside the parent's support,
/// compensated in the rhs by the noise's worst case over the bound box, plus
/// a loosening of 5–30% of the parent's violation at `x`.
pub fn decoy_cuts<R: Rng>(
    parent: &Cut,
    inst: &MilpInstance,
    x: &[f64],
    count: usize,
    rng: &mut R,
) -> Vec<Cut> {
    let inf = parent.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let off: Vec<usize> = (0..parent.a.len()).filter(|&j| parent.a[j] == 0.0).collect();
    let viol = parent.violation(x);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let mut a = parent.a.clone();
        let mut beta = parent.beta;
        let mut touched = false;
        for &j in &off {
            if rng.random_bool(0.5) || (!touched && j == *off.last().unwrap()) {
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let eps = sign * inf * rng.random_range(0.002..0.02);
                a[j] = eps;
                beta += (eps * inst.lb()[j]).max(eps * inst.ub()[j]);
                touched = true;
            }
        }
        let loosen = if viol > 0.0 { viol * rng.random_range(0.05..0.3) } else { 0.1 * inf };
        beta += loosen;
        clean(&mut a);
        if let Ok(cut) = Cut::new(a, beta, Category::Decoy, parent.source_round) {
            out.push(cut);
        }
    }
    out
}
