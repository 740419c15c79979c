use super::{Category, Cut};
use crate::error::{Error, Result};
use crate::tol;

/// `a_1 = d`, `a_k = d·(1 + a_1 + … + a_{k−1})`; index 0 of the result is `a_1`.
pub fn lex_coefficients(d: i64, n: usize) -> Result<Vec<f64>> {
    if d < 1 {
        return Err(Error::Parameter(format!("box bound d must be ≥ 1, got {d}")));
    }
    let d = d as f64;
    let mut out = Vec::with_capacity(n);
    let mut sum = 0.0;
    for _ in 0..n {
        let a = d * (1.0 + sum);
        out.push(a);
        sum += a;
    }
    Ok(out)
}

/// The `n + 1` cuts over `(z0, x1, …, xn)` satisfied by every integer vector
/// lexicographically below `z`:
/// `v_i + Σ_{j<i} a_{i−j}(v_j − ⌈z_j⌉) ≤ ⌊z_i⌋`.
pub fn lex_cuts(z: &[f64], d: i64, n: usize, round: usize) -> Result<Vec<Cut>> {
    if z.len() != n + 1 {
        return Err(Error::Parameter(format!("z has {} entries, expected {}", z.len(), n + 1)));
    }
    let a = lex_coefficients(d, n)?;
    let mut cuts = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let mut coef = vec![0.0; n + 1];
        coef[i] = 1.0;
        let mut rhs = tol::floor_snap(z[i]);
        for j in 0..i {
            let w = a[i - j - 1];
            coef[j] = w;
            rhs += w * tol::ceil_snap(z[j]);
        }
        cuts.push(Cut::new(coef, rhs, Category::LexTheory, round)?);
    }
    Ok(cuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::{lex_compare, LexOrder};

    #[test]
    fn coefficient_recurrence() {
        assert_eq!(lex_coefficients(2, 3).unwrap(), vec![2.0, 6.0, 18.0]);
        assert!(matches!(lex_coefficients(0, 2), Err(Error::Parameter(_))));
    }

    #[test]
    fn one_cut_per_coordinate() {
        assert_eq!(lex_cuts(&[1.5, 0.5, 1.0], 2, 2, 0).unwrap().len(), 3);
    }

    #[test]
    fn lexicographically_lower_integers_satisfy_every_cut() {
        use rand::{Rng, SeedableRng};
        let (n, d) = (2usize, 2i64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let z0_max = 6.0;
            let z: Vec<f64> = std::iter::once(rng.random_range(0.0..z0_max))
                .chain((0..n).map(|_| rng.random_range(0.0..d as f64)))
                .collect();
            let cuts = lex_cuts(&z, d, n, 0).unwrap();
            for v0 in 0..=6 {
                for v1 in 0..=d {
                    for v2 in 0..=d {
                        let v = [v0 as f64, v1 as f64, v2 as f64];
                        if lex_compare(&v, &z) == LexOrder::Greater {
                            continue;
                        }
                        for cut in &cuts {
                            assert!(cut.violation(&v) <= 1e-9, "{v:?} z={z:?} cut={cut:?}");
                        }
                    }
                }
            }
        }
    }
}
