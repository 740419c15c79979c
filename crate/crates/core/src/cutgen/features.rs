use serde::{Deserialize, Serialize};

use super::Cut;
use crate::error::{Error, Result};
use crate::milp::{dot, MilpInstance};
use crate::simplex::LpSolution;
use crate::tol;

pub const N_FEATURES: usize = 13;

/// Per-cut state features, in this order:
///
/// 1. mean |a_i| / ‖a‖∞
/// 2. max |a_i| / ‖a‖∞
/// 3. min nonzero |a_i| / ‖a‖∞
/// 4. standard deviation of a_i / ‖a‖∞
/// 5. support ratio nnz(a) / n
/// 6. share of the support on integer variables
/// 7. normalized violation max(0, a·x − β) / max(1, |β|)
/// 8. efficacy (a·x − β) / ‖a‖₂
/// 9. objective parallelism |a·c| / (‖a‖₂ ‖c‖₂)
/// 10. expected improvement, entry 8 × entry 9
/// 11. normalized rhs β / ‖a‖₂
/// 12. share of the support on variables fractional at x
/// 13. violation scaled by the objective (a·x − β) / (1 + |c·x|)
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutFeatures {
    pub f: [f64; N_FEATURES],
}

impl CutFeatures {
    /// Zero-based indices of the entries unchanged by positive rescaling of
    /// the cut.
    pub const SCALE_INVARIANT: [usize; 11] = [0, 1, 2, 3, 4, 5, 7, 8, 9, 10, 11];
    pub const NORMALIZED_VIOLATION: usize = 6;
    pub const EFFICACY: usize = 7;
    pub const PARALLELISM: usize = 8;
    pub const SUPPORT: usize = 4;
}

pub fn featurize(cut: &Cut, sol: &LpSolution, inst: &MilpInstance) -> Result<CutFeatures> {
    let is_int: Vec<bool> = (0..inst.n()).map(|j| inst.is_integer(j)).collect();
    features_from_x(cut, &sol.x, inst.c(), &is_int)
}

pub fn features_from_x(cut: &Cut, x: &[f64], c: &[f64], is_int: &[bool]) -> Result<CutFeatures> {
    let n = cut.a.len();
    let inf = cut.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if inf == 0.0 {
        return Err(Error::Validation("cannot featurize a zero cut".into()));
    }
    let norm = cut.norm2();
    let scaled: Vec<f64> = cut.a.iter().map(|v| v / inf).collect();
    let mean_abs = scaled.iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let max_abs = scaled.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let min_nz = scaled
        .iter()
        .filter(|v| **v != 0.0)
        .fold(f64::INFINITY, |m, v| m.min(v.abs()));
    let mean = scaled.iter().sum::<f64>() / n as f64;
    let std = (scaled.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let support: Vec<usize> = (0..n).filter(|&j| cut.a[j] != 0.0).collect();
    let nnz = support.len() as f64;
    let int_support = support.iter().filter(|&&j| is_int[j]).count() as f64 / nnz;
    let frac_support = support.iter().filter(|&&j| !tol::is_integral(x[j])).count() as f64 / nnz;
    let viol = cut.violation(x);
    let efficacy = viol / norm;
    let c_norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let parallel = if c_norm == 0.0 { 0.0 } else { dot(&cut.a, c).abs() / (norm * c_norm) };
    let f = [
        mean_abs,
        max_abs,
        min_nz,
        std,
        nnz / n as f64,
        int_support,
        viol.max(0.0) / cut.beta.abs().max(1.0),
        efficacy,
        parallel,
        efficacy * parallel,
        cut.beta / norm,
        frac_support,
        viol / (1.0 + dot(c, x).abs()),
    ];
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("cut features are not finite".into()));
    }
    Ok(CutFeatures { f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cutgen::Category;
    use proptest::prelude::*;

    #[test]
    fn single_coordinate_cut() {
        let n = 4;
        let mut a = vec![0.0; n];
        a[0] = 1.0;
        let cut = Cut::new(a, 0.0, Category::GomoryFrac, 0).unwrap();
        let x = [0.5, 0.0, 1.0, 0.0];
        let f = features_from_x(&cut, &x, &[1.0; 4], &[true; 4]).unwrap();
        assert_eq!(f.f[4], 0.25);
        assert_eq!(f.f[6], 0.5);
        assert_eq!(f.f[1], 1.0);
        assert_eq!(f.f[11], 1.0);
    }

    #[test]
    fn efficacy_matches_independent_norm() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let a: Vec<f64> = (0..6).map(|_| rng.random_range(-4.0..4.0)).collect();
            let x: Vec<f64> = (0..6).map(|_| rng.random_range(0.0..2.0)).collect();
            let beta = rng.random_range(-2.0..2.0);
            let cut = Cut::new(a.clone(), beta, Category::GomoryFrac, 0).unwrap();
            let f = features_from_x(&cut, &x, &[1.0; 6], &[true; 6]).unwrap();
            let mut sq = 0.0;
            let mut ax = 0.0;
            for j in 0..6 {
                sq += a[j] * a[j];
                ax += a[j] * x[j];
            }
            let expect = (ax - beta) / sq.sqrt();
            assert!((f.f[7] - expect).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn scale_invariant_entries(
            a in prop::collection::vec(-5.0f64..5.0, 5),
            beta in -3.0f64..3.0,
            x in prop::collection::vec(0.0f64..2.0, 5),
            lambda in 1e-3f64..1e3,
            pow in -20i32..20,
        ) {
            prop_assume!(a.iter().any(|v| v.abs() > 1e-3));
            let cut = Cut::new(a.clone(), beta, Category::GomoryFrac, 0).unwrap();
            let c = [1.0, -2.0, 0.5, 0.0, 3.0];
            let is_int = [true, false, true, true, false];
            let base = features_from_x(&cut, &x, &c, &is_int).unwrap();
            let scaled = |l: f64| {
                let s = Cut::new(a.iter().map(|v| v * l).collect(), beta * l, Category::GomoryFrac, 0).unwrap();
                features_from_x(&s, &x, &c, &is_int).unwrap()
            };
            let general = scaled(lambda);
            let exact = scaled(2f64.powi(pow));
            for i in CutFeatures::SCALE_INVARIANT {
                prop_assert!((general.f[i] - base.f[i]).abs() <= 1e-12 * (1.0 + base.f[i].abs()));
                prop_assert_eq!(exact.f[i], base.f[i]);
            }
        }
    }
}
