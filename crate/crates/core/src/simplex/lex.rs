use super::{solve, LpProblem, LpRow, LpStatus};
use crate::error::{Error, Result};

/// Lexicographic maximum of `(v_0, …, v_{d−1})` over a box-bounded polyhedron.
#[derive(Clone, Debug, PartialEq)]
pub struct LexLpSolution {
    pub z: Vec<f64>,
    /// LP solves performed (one per coordinate).
    pub lp_solves: usize,
    pub pivots: usize,
}

impl LexLpSolution {
    /// The point without its leading objective coordinate.
    pub fn x(&self) -> &[f64] {
        &self.z[1..]
    }
}

/// Sequentially maximize each coordinate, fixing earlier ones at their
/// optimum (lower bound tightened to `opt − tol`) before moving on.
pub fn solve_lex_lp(rows: &[LpRow], lb: &[f64], ub: &[f64]) -> Result<LexLpSolution> {
    let dim = lb.len();
    let mut lb = lb.to_vec();
    let ub = ub.to_vec();
    let mut pivots = 0;
    let mut last_x = Vec::new();
    for i in 0..dim {
        let mut c = vec![0.0; dim];
        c[i] = -1.0;
        let problem = LpProblem { c, rows: rows.to_vec(), lb: lb.clone(), ub: ub.clone() };
        let sol = solve(&problem)?;
        pivots += sol.pivots;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Infeasible(format!(
                "lexicographic stage {i} ended {:?}",
                sol.status
            )));
        }
        let opt = sol.x[i];
        lb[i] = (opt - 1e-9 * (1.0 + opt.abs())).min(ub[i]).max(lb[i]);
        last_x = sol.x;
    }
    Ok(LexLpSolution { z: last_x, lp_solves: dim, pivots })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// (z0, x) space with row z0 − c·x = 0 and extra rows over x.
    fn lift(c: &[f64], rows: &[(Vec<f64>, f64)], d: f64) -> (Vec<LpRow>, Vec<f64>, Vec<f64>) {
        let n = c.len();
        let mut out = vec![LpRow::eq(
            std::iter::once(1.0).chain(c.iter().map(|v| -v)).collect(),
            0.0,
        )];
        for (a, b) in rows {
            out.push(LpRow::le(std::iter::once(0.0).chain(a.iter().copied()).collect(), *b));
        }
        let zmax = d * c.iter().sum::<f64>();
        let mut ub = vec![zmax];
        ub.extend(std::iter::repeat(d).take(n));
        (out, vec![0.0; n + 1], ub)
    }

    #[test]
    fn single_variable() {
        let (rows, lb, ub) = lift(&[1.0], &[], 2.0);
        let s = solve_lex_lp(&rows, &lb, &ub).unwrap();
        assert!((s.z[0] - 2.0).abs() < 1e-7 && (s.z[1] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn breaks_objective_ties_lexicographically() {
        let (rows, lb, ub) = lift(&[1.0, 1.0], &[(vec![1.0, 1.0], 1.5)], 2.0);
        let s = solve_lex_lp(&rows, &lb, &ub).unwrap();
        for (got, want) in s.z.iter().zip([1.5, 1.5, 0.0]) {
            assert!((got - want).abs() < 1e-7, "{:?}", s.z);
        }
        assert_eq!(s.x().len(), 2);
    }

    #[test]
    fn infeasible_is_an_error() {
        let rows = vec![LpRow::le(vec![1.0], -1.0)];
        assert!(matches!(
            solve_lex_lp(&rows, &[0.0], &[1.0]),
            Err(Error::Infeasible(_))
        ));
    }
}
