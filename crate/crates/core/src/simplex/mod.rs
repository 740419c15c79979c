//! Dense bounded-variable primal simplex.
//!
//! Rows are `a·x ≤ b` or `a·x = b`; each gets a slack `s_i = b_i − a_i·x` with
//! bounds `[0, ∞)` or `[0, 0]`. Variable bounds are handled by the ratio test
//! (nonbasic columns sit at a bound), never as rows. Both phases use Bland's
//! smallest-index rule for the entering and the leaving column, so a solve is
//! a deterministic function of its input.
//!
//! The full tableau `B⁻¹[A | I | Art]` is kept and returned with the solution,
//! which is what the Gomory separator reads.

mod lex;

pub use lex::{solve_lex_lp, LexLpSolution};

use crate::error::{Error, Result};
use crate::milp::dot;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Eq,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpRow {
    pub a: Vec<f64>,
    pub b: f64,
    pub sense: RowSense,
}

impl LpRow {
    pub fn le(a: Vec<f64>, b: f64) -> Self {
        Self { a, b, sense: RowSense::Le }
    }

    pub fn eq(a: Vec<f64>, b: f64) -> Self {
        Self { a, b, sense: RowSense::Eq }
    }
}

/// `min c·x` subject to rows and finite box bounds.
#[derive(Clone, Debug, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub rows: Vec<LpRow>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColStatus {
    Basic,
    AtLower,
    AtUpper,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColKind {
    Structural(usize),
    Slack(usize),
    Artificial(usize),
}

/// Final simplex tableau. Row `i` expresses basic column `basis[i]` as
/// `x_B[i] = values[basis[i]] − Σ_{j nonbasic} rows[i][j]·(x_j − values[j])`.
#[derive(Clone, Debug)]
pub struct Tableau {
    pub n: usize,
    pub m: usize,
    pub rows: Vec<Vec<f64>>,
    pub basis: Vec<usize>,
    pub status: Vec<ColStatus>,
    pub col_lb: Vec<f64>,
    pub col_ub: Vec<f64>,
    pub values: Vec<f64>,
    /// Reduced costs of the final phase for every column.
    pub reduced: Vec<f64>,
}

impl Tableau {
    pub fn ncols(&self) -> usize {
        self.col_lb.len()
    }

    pub fn kind(&self, col: usize) -> ColKind {
        if col < self.n {
            ColKind::Structural(col)
        } else if col < self.n + self.m {
            ColKind::Slack(col - self.n)
        } else {
            ColKind::Artificial(col - self.n - self.m)
        }
    }

    pub fn is_fixed(&self, col: usize) -> bool {
        self.col_ub[col] - self.col_lb[col] <= 1e-12
    }
}

#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Structural values (last iterate when not optimal).
    pub x: Vec<f64>,
    pub obj: f64,
    /// Basic column per standard-form row; length equals the row count.
    pub basis: Vec<usize>,
    pub tableau: Tableau,
    /// Row duals `y = c_B B⁻¹` (nonpositive on `≤` rows at optimality).
    pub duals: Vec<f64>,
    pub pivots: usize,
}

impl LpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

/// Lower bound on the optimum certified by the solution's duals: the
/// Lagrangian value of `y` (with `≤`-row duals clipped to be nonpositive).
pub fn dual_bound(problem: &LpProblem, sol: &LpSolution) -> f64 {
    let m = problem.rows.len();
    let y: Vec<f64> = (0..m)
        .map(|i| match problem.rows[i].sense {
            RowSense::Le => sol.duals[i].min(0.0),
            RowSense::Eq => sol.duals[i],
        })
        .collect();
    let mut bound: f64 = (0..m).map(|i| y[i] * problem.rows[i].b).sum();
    for j in 0..problem.c.len() {
        let d = problem.c[j] - (0..m).map(|i| y[i] * problem.rows[i].a[j]).sum::<f64>();
        bound += (d * problem.lb[j]).min(d * problem.ub[j]);
    }
    bound
}

/// Solve an LP. Infeasibility and unboundedness are reported through
/// [`LpSolution::status`]; only numerical breakdowns are errors.
pub fn solve(problem: &LpProblem) -> Result<LpSolution> {
    let n = problem.c.len();
    if problem.lb.len() != n || problem.ub.len() != n {
        return Err(Error::Validation("LP bound vectors do not match c".into()));
    }
    if let Some(i) = problem.rows.iter().position(|r| r.a.len() != n) {
        return Err(Error::Validation(format!("LP row {i} has wrong length")));
    }
    if (0..n).any(|j| !problem.lb[j].is_finite() || !problem.ub[j].is_finite()) {
        return Err(Error::Validation("LP variables must be box-bounded".into()));
    }
    if (0..n).any(|j| problem.lb[j] > problem.ub[j] + tol::FEAS) {
        return Ok(infeasible_shell(problem));
    }
    let mut s = Simplex::new(problem);
    let phase1_needed = s.n_art > 0;
    if phase1_needed {
        let cost: Vec<f64> = (0..s.ncols)
            .map(|c| if c >= s.n + s.m { 1.0 } else { 0.0 })
            .collect();
        s.run(&cost)?;
        let infeas: f64 = (s.n + s.m..s.ncols).map(|c| s.values[c]).sum();
        let scale = 1.0 + problem.rows.iter().map(|r| r.b.abs()).fold(0.0, f64::max);
        if infeas > tol::FEAS * scale {
            return Ok(s.finish(problem, LpStatus::Infeasible));
        }
        for c in s.n + s.m..s.ncols {
            s.col_ub[c] = 0.0;
            if s.status[c] != ColStatus::Basic {
                s.values[c] = 0.0;
                s.status[c] = ColStatus::AtLower;
            }
        }
    }
    let mut cost = vec![0.0; s.ncols];
    cost[..n].copy_from_slice(&problem.c);
    let status = s.run(&cost)?;
    Ok(s.finish(problem, status))
}

fn infeasible_shell(problem: &LpProblem) -> LpSolution {
    let n = problem.c.len();
    LpSolution {
        status: LpStatus::Infeasible,
        x: problem.lb.clone(),
        obj: f64::INFINITY,
        basis: Vec::new(),
        tableau: Tableau {
            n,
            m: 0,
            rows: Vec::new(),
            basis: Vec::new(),
            status: vec![ColStatus::AtLower; n],
            col_lb: problem.lb.clone(),
            col_ub: problem.ub.clone(),
            values: problem.lb.clone(),
            reduced: vec![0.0; n],
        },
        duals: Vec::new(),
        pivots: 0,
    }
}

struct Simplex {
    n: usize,
    m: usize,
    n_art: usize,
    ncols: usize,
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    status: Vec<ColStatus>,
    col_lb: Vec<f64>,
    col_ub: Vec<f64>,
    values: Vec<f64>,
    reduced: Vec<f64>,
    pivots: usize,
}

impl Simplex {
    fn new(p: &LpProblem) -> Self {
        let n = p.c.len();
        let m = p.rows.len();
        let x0 = &p.lb;
        // decide which rows start with an artificial
        let mut art_sign = vec![0.0; m];
        let mut slack_val = vec![0.0; m];
        for (i, row) in p.rows.iter().enumerate() {
            let v = row.b - dot(&row.a, x0);
            slack_val[i] = v;
            let su = match row.sense {
                RowSense::Le => f64::INFINITY,
                RowSense::Eq => 0.0,
            };
            if v < -tol::FEAS {
                art_sign[i] = -1.0;
            } else if v > su + tol::FEAS {
                art_sign[i] = 1.0;
            }
        }
        let n_art = art_sign.iter().filter(|s| **s != 0.0).count();
        let ncols = n + m + n_art;
        let mut col_lb = vec![0.0; ncols];
        let mut col_ub = vec![f64::INFINITY; ncols];
        col_lb[..n].copy_from_slice(&p.lb);
        col_ub[..n].copy_from_slice(&p.ub);
        for (i, row) in p.rows.iter().enumerate() {
            if row.sense == RowSense::Eq {
                col_ub[n + i] = 0.0;
            }
        }
        let mut rows = vec![vec![0.0; ncols]; m];
        let mut basis = vec![0; m];
        let mut status = vec![ColStatus::AtLower; ncols];
        let mut values = vec![0.0; ncols];
        values[..n].copy_from_slice(&p.lb);
        let mut art = n + m;
        for (i, row) in p.rows.iter().enumerate() {
            let sigma = if art_sign[i] == 0.0 { 1.0 } else { art_sign[i] };
            for j in 0..n {
                rows[i][j] = sigma * row.a[j];
            }
            rows[i][n + i] = sigma;
            if art_sign[i] == 0.0 {
                basis[i] = n + i;
                status[n + i] = ColStatus::Basic;
                values[n + i] = slack_val[i].max(0.0).min(col_ub[n + i]);
            } else {
                rows[i][art] = 1.0;
                basis[i] = art;
                status[art] = ColStatus::Basic;
                values[art] = sigma * slack_val[i];
                values[n + i] = 0.0;
                art += 1;
            }
        }
        Self {
            n,
            m,
            n_art,
            ncols,
            rows,
            basis,
            status,
            col_lb,
            col_ub,
            values,
            reduced: vec![0.0; ncols],
            pivots: 0,
        }
    }

    fn compute_reduced(&mut self, cost: &[f64]) {
        self.reduced.copy_from_slice(cost);
        for i in 0..self.m {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                for (d, t) in self.reduced.iter_mut().zip(&self.rows[i]) {
                    *d -= cb * t;
                }
            }
        }
        for &b in &self.basis {
            self.reduced[b] = 0.0;
        }
    }

    fn run(&mut self, cost: &[f64]) -> Result<LpStatus> {
        self.compute_reduced(cost);
        let limit = 200 * (self.m + self.ncols) + 10_000;
        for _ in 0..limit {
            // Bland: smallest index with an improving reduced cost
            let entering = (0..self.ncols).find(|&j| {
                if self.status[j] == ColStatus::Basic || self.col_ub[j] - self.col_lb[j] <= 1e-12 {
                    return false;
                }
                match self.status[j] {
                    ColStatus::AtLower => self.reduced[j] < -tol::OPT,
                    ColStatus::AtUpper => self.reduced[j] > tol::OPT,
                    ColStatus::Basic => false,
                }
            });
            let Some(j) = entering else {
                return Ok(LpStatus::Optimal);
            };
            let dir = if self.status[j] == ColStatus::AtLower { 1.0 } else { -1.0 };

            let mut best_ratio = self.col_ub[j] - self.col_lb[j];
            let mut leave: Option<usize> = None;
            let mut tiny_blocker = false;
            for i in 0..self.m {
                let alpha = self.rows[i][j] * dir;
                let b = self.basis[i];
                let ratio = if alpha > tol::PIVOT {
                    ((self.values[b] - self.col_lb[b]) / alpha).max(0.0)
                } else if alpha < -tol::PIVOT && self.col_ub[b].is_finite() {
                    ((self.col_ub[b] - self.values[b]) / -alpha).max(0.0)
                } else {
                    if alpha.abs() > 1e-14
                        && (alpha > 0.0 || self.col_ub[b].is_finite())
                    {
                        tiny_blocker = true;
                    }
                    continue;
                };
                let better = match leave {
                    _ if ratio < best_ratio - 1e-12 => true,
                    Some(l) if ratio <= best_ratio + 1e-12 => b < self.basis[l],
                    // ties with the bound flip keep the flip
                    _ => false,
                };
                if better {
                    best_ratio = ratio;
                    leave = Some(i);
                }
            }
            if leave.is_none() && !best_ratio.is_finite() {
                if tiny_blocker {
                    return Err(Error::DegeneratePivot { threshold: tol::PIVOT });
                }
                return Ok(LpStatus::Unbounded);
            }
            let step = best_ratio;
            // move along the edge
            self.values[j] += dir * step;
            for i in 0..self.m {
                let b = self.basis[i];
                self.values[b] -= self.rows[i][j] * dir * step;
            }
            match leave {
                None => {
                    // bound flip
                    if dir > 0.0 {
                        self.status[j] = ColStatus::AtUpper;
                        self.values[j] = self.col_ub[j];
                    } else {
                        self.status[j] = ColStatus::AtLower;
                        self.values[j] = self.col_lb[j];
                    }
                }
                Some(r) => {
                    let out = self.basis[r];
                    let alpha = self.rows[r][j] * dir;
                    if alpha > 0.0 {
                        self.status[out] = ColStatus::AtLower;
                        self.values[out] = self.col_lb[out];
                    } else {
                        self.status[out] = ColStatus::AtUpper;
                        self.values[out] = self.col_ub[out];
                    }
                    self.pivot(r, j);
                    self.basis[r] = j;
                    self.status[j] = ColStatus::Basic;
                    self.pivots += 1;
                }
            }
        }
        Err(Error::IterationLimit(limit))
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.rows[r][j];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = std::mem::take(&mut self.rows[r]);
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[j] = 0.0;
            }
        }
        let f = self.reduced[j];
        if f != 0.0 {
            for (d, pv) in self.reduced.iter_mut().zip(&pivot_row) {
                *d -= f * pv;
            }
            self.reduced[j] = 0.0;
        }
        self.rows[r] = pivot_row;
    }

    fn finish(self, problem: &LpProblem, status: LpStatus) -> LpSolution {
        let x = self.values[..self.n].to_vec();
        let obj = match status {
            LpStatus::Optimal => dot(&problem.c, &x),
            LpStatus::Infeasible => f64::INFINITY,
            LpStatus::Unbounded => f64::NEG_INFINITY,
        };
        let duals = (0..self.m).map(|i| -self.reduced[self.n + i]).collect();
        LpSolution {
            status,
            x,
            obj,
            basis: self.basis.clone(),
            tableau: Tableau {
                n: self.n,
                m: self.m,
                rows: self.rows,
                basis: self.basis,
                status: self.status,
                col_lb: self.col_lb,
                col_ub: self.col_ub,
                values: self.values,
                reduced: self.reduced,
            },
            duals,
            pivots: self.pivots,
        }
    }
}
