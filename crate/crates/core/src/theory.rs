//! Finite lexicographic cutting-plane algorithm for pure integer programs
//! `max c·x, x ∈ P ∩ ℤⁿ, P ⊆ [0, d]ⁿ`, and the checks behind its
//! termination proof.
//!
//! The algorithm works in `(z0, x)` space, with `z0` an explicit variable
//! tied to the objective by `z0 − c·x = 0` and bounded by `[0, d·Σc]`.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cutgen::{lex_cuts, Cut};
use crate::error::{Error, Result};
use crate::milp::{enumerate_lattice, EnumOutcome, MilpInstance, Row, DEFAULT_BUDGET};
use crate::simplex::{solve_lex_lp, LpRow};
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LexOrder {
    Less,
    Equal,
    Greater,
}

/// Compare two vectors by their first coordinate differing by more than 1e-9.
pub fn lex_compare(x: &[f64], y: &[f64]) -> LexOrder {
    assert_eq!(x.len(), y.len(), "lex_compare needs equal lengths");
    for (a, b) in x.iter().zip(y) {
        if (a - b).abs() > tol::CMP {
            return if a < b { LexOrder::Less } else { LexOrder::Greater };
        }
    }
    LexOrder::Equal
}

/// Pure integer program in the maximization form used by the theory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlpInstance {
    pub c: Vec<i64>,
    pub rows: Vec<Row>,
    pub d: i64,
}

impl IlpInstance {
    /// Validate and require at least one integer point in `P`.
    pub fn new(c: Vec<i64>, rows: Vec<Row>, d: i64) -> Result<Self> {
        if c.is_empty() || c.iter().any(|&v| v < 0) {
            return Err(Error::Validation("objective must be a nonnegative integer vector".into()));
        }
        if d < 1 {
            return Err(Error::Parameter(format!("box bound d must be ≥ 1, got {d}")));
        }
        let inst = Self { c, rows, d };
        if inst.lex_optimum_by_enumeration()?.is_none() {
            return Err(Error::Infeasible("polyhedron has no integer point".into()));
        }
        Ok(inst)
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn c_sum(&self) -> i64 {
        self.c.iter().sum()
    }

    /// Minimization MILP over `x` (objective negated), box `[0, d]ⁿ`.
    pub fn to_milp(&self) -> Result<MilpInstance> {
        let n = self.n();
        MilpInstance::new(
            self.c.iter().map(|&v| -(v as f64)).collect(),
            self.rows.clone(),
            (0..n).collect(),
            vec![0.0; n],
            vec![self.d as f64; n],
        )
    }

    /// Pure integer program over `(z0, x)` with `z0 = c·x` as two rows.
    pub fn lifted_milp(&self, extra: &[Cut]) -> Result<MilpInstance> {
        let n = self.n();
        let link: Vec<f64> =
            std::iter::once(1.0).chain(self.c.iter().map(|&v| -(v as f64))).collect();
        let mut rows = vec![
            Row::new(link.clone(), 0.0),
            Row::new(link.iter().map(|v| -v).collect(), 0.0),
        ];
        rows.extend(self.rows.iter().map(|r| Row::new(lift(&r.a), r.b)));
        rows.extend(extra.iter().map(|c| Row::new(c.a.clone(), c.beta)));
        let (lb, ub) = self.lifted_bounds();
        MilpInstance::new(vec![0.0; n + 1], rows, (0..=n).collect(), lb, ub)
    }

    fn lifted_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let mut ub = vec![(self.d * self.c_sum()) as f64];
        ub.extend(std::iter::repeat_n(self.d as f64, n));
        (vec![0.0; n + 1], ub)
    }

    /// The lexicographically largest `(c·x, x)` over integer points of `P`.
    pub fn lex_optimum_by_enumeration(&self) -> Result<Option<Vec<f64>>> {
        let milp = self.to_milp()?;
        let mut best: Option<Vec<f64>> = None;
        enumerate_lattice(&milp, DEFAULT_BUDGET, |x| {
            if milp.is_feasible(x) {
                let v = self.extend(x);
                if best.as_ref().is_none_or(|b| lex_compare(&v, b) == LexOrder::Greater) {
                    best = Some(v);
                }
            }
            EnumOutcome::Continue
        })?;
        Ok(best)
    }

    /// `(c·x, x)`.
    pub fn extend(&self, x: &[f64]) -> Vec<f64> {
        let obj: f64 = self.c.iter().zip(x).map(|(&c, v)| c as f64 * v).sum();
        std::iter::once(obj).chain(x.iter().copied()).collect()
    }

    /// `d^{n+1}·(1 + Σc)`.
    pub fn iteration_bound(&self) -> u64 {
        (self.d as u64).pow(self.n() as u32 + 1) * (1 + self.c_sum() as u64)
    }
}

fn lift(a: &[f64]) -> Vec<f64> {
    std::iter::once(0.0).chain(a.iter().copied()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlphaVector(pub Vec<i64>);

impl AlphaVector {
    pub fn as_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&v| v as f64).collect()
    }
}

/// Index of the first coordinate that is not integral (tolerance 1e-6).
pub fn first_fractional(y: &[f64]) -> Option<usize> {
    y.iter().position(|&v| !tol::is_integral(v))
}

/// `α(y)_i = ⌊y_i⌋` for `i ≤ k` and `d` afterwards, `k` the first fractional
/// index; integral vectors map to themselves.
pub fn alpha(y: &[f64], d: i64) -> AlphaVector {
    let k = first_fractional(y).unwrap_or(y.len());
    AlphaVector(
        y.iter()
            .enumerate()
            .map(|(i, &v)| if i <= k { tol::floor_snap(v) as i64 } else { d })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LexIteration {
    pub iteration: usize,
    pub z: Vec<f64>,
    /// Index of the cut added after this solve; `None` once `z` is integral.
    pub k: Option<usize>,
    pub alpha: AlphaVector,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LexRun {
    /// Final integral `(z0, x)`.
    pub z: Vec<f64>,
    /// Number of cuts added.
    pub iterations: usize,
    pub trace: Vec<LexIteration>,
    pub cuts: Vec<Cut>,
}

impl LexRun {
    pub fn alphas(&self) -> Vec<AlphaVector> {
        self.trace.iter().map(|t| t.alpha.clone()).collect()
    }
}

/// Solve the lexicographic LP, add the cut at the first fractional index,
/// repeat until the solution is integral.
pub fn run_lex_cutting_planes(inst: &IlpInstance, max_iter: usize) -> Result<LexRun> {
    let n = inst.n();
    let mut rows = vec![LpRow::eq(
        std::iter::once(1.0).chain(inst.c.iter().map(|&v| -(v as f64))).collect(),
        0.0,
    )];
    rows.extend(inst.rows.iter().map(|r| LpRow::le(lift(&r.a), r.b)));
    let (lb, ub) = inst.lifted_bounds();
    let mut trace = Vec::new();
    let mut cuts: Vec<Cut> = Vec::new();
    for iteration in 0..=max_iter {
        let sol = solve_lex_lp(&rows, &lb, &ub)?;
        let z = sol.z;
        let alpha = alpha(&z, inst.d);
        let Some(k) = first_fractional(&z) else {
            trace.push(LexIteration { iteration, z: z.clone(), k: None, alpha });
            let z = z.iter().map(|v| v.round()).collect();
            return Ok(LexRun { z, iterations: iteration, trace, cuts });
        };
        trace.push(LexIteration { iteration, z: z.clone(), k: Some(k), alpha });
        if iteration == max_iter {
            break;
        }
        let cut = lex_cuts(&z, inst.d, n, iteration)?.swap_remove(k);
        rows.push(LpRow::le(cut.a.clone(), cut.beta));
        cuts.push(cut);
    }
    Err(Error::ConvergenceFailure(max_iter))
}

/// α strictly decreases between consecutive fractional iterates and does
/// not increase on the step that reaches an integral solution.
pub fn check_monotone_decrease(trace: &[LexIteration]) -> bool {
    trace.windows(2).all(|w| {
        let (a, b) = (w[0].alpha.as_f64(), w[1].alpha.as_f64());
        match lex_compare(&b, &a) {
            LexOrder::Less => true,
            LexOrder::Equal => w[1].k.is_none(),
            LexOrder::Greater => false,
        }
    })
}

/// `(d·Σ min(0, c_i), 0, …, 0) ≤_L x* ≤_L α(z*)` with `x* = (c·x, x)`.
pub fn check_boundedness(inst: &IlpInstance, x_star: &[f64], z_star: &[f64]) -> bool {
    let n = inst.n();
    let mut lower = vec![0.0; n + 1];
    lower[0] = (inst.d * inst.c.iter().map(|&v| v.min(0)).sum::<i64>()) as f64;
    let upper = alpha(z_star, inst.d).as_f64();
    lex_compare(&lower, x_star) != LexOrder::Greater
        && lex_compare(x_star, &upper) != LexOrder::Greater
}

/// CSV with columns iteration, z, k, alpha (vectors space-separated).
pub fn trace_csv(run: &LexRun) -> String {
    let join = |v: &mut dyn Iterator<Item = String>| v.collect::<Vec<_>>().join(" ");
    let mut out = String::from("iteration,z,k,alpha\n");
    for t in &run.trace {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            t.iteration,
            join(&mut t.z.iter().map(|v| format!("{v}"))),
            t.k.map_or_else(String::new, |k| k.to_string()),
            join(&mut t.alpha.0.iter().map(|v| v.to_string()))
        );
    }
    out
}

/// Outcome of one run in a random sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub index: usize,
    pub n: usize,
    pub d: i64,
    /// Cuts added before the iterate became integral.
    pub iterations: usize,
    pub bound: u64,
    pub converged: bool,
    pub lex_optimal: bool,
    /// Strict α decrease on every fractional step.
    pub monotone: bool,
    /// Boundedness inequalities at every iterate.
    pub bounded: bool,
    /// Every cut is valid for the integer hull and cuts off its iterate.
    pub cuts_ok: bool,
}

impl SweepRun {
    pub fn within_bound(&self) -> bool {
        self.converged && self.iterations as u64 <= self.bound
    }
}

/// `count` random instances with `n, d` drawn from `{1, 2, 3}`, each run to
/// convergence (with a generous safety cap) and checked against
/// enumeration and the lemmas.
pub fn theory_sweep(count: usize, seed: u64) -> Result<Vec<SweepRun>> {
    use rand::Rng;
    use rayon::prelude::*;
    (0..count)
        .into_par_iter()
        .map(|index| {
            let mut r = crate::rng::stream(seed, "theory-sweep", index as u64);
            let n = r.random_range(1..=3usize);
            let d = r.random_range(1..=3i64);
            let inst = random_ilp(&mut r, n, d)?;
            let bound = inst.iteration_bound();
            let best = inst
                .lex_optimum_by_enumeration()?
                .ok_or_else(|| Error::Infeasible("sweep instance has no integer point".into()))?;
            let cap = (bound as usize).saturating_mul(10).max(1000);
            let run = match run_lex_cutting_planes(&inst, cap) {
                Ok(run) => run,
                Err(Error::ConvergenceFailure(_)) => {
                    return Ok(SweepRun {
                        index,
                        n,
                        d,
                        iterations: cap,
                        bound,
                        converged: false,
                        lex_optimal: false,
                        monotone: false,
                        bounded: false,
                        cuts_ok: false,
                    })
                }
                Err(e) => return Err(e),
            };
            let lifted = inst.lifted_milp(&[])?;
            let mut cuts_ok = true;
            for (cut, t) in run.cuts.iter().zip(&run.trace) {
                cuts_ok &= crate::cutgen::check_validity(cut, &lifted)? && cut.violation(&t.z) > 0.0;
            }
            Ok(SweepRun {
                index,
                n,
                d,
                iterations: run.iterations,
                bound,
                converged: true,
                lex_optimal: lex_compare(&run.z, &best) == LexOrder::Equal,
                monotone: check_monotone_decrease(&run.trace),
                bounded: run.trace.iter().all(|t| check_boundedness(&inst, &best, &t.z)),
                cuts_ok,
            })
        })
        .collect()
}

pub fn sweep_csv(runs: &[SweepRun]) -> String {
    let mut out = String::from("index,n,d,iterations,bound,within_bound,lex_optimal,monotone,bounded,cuts_ok\n");
    for r in runs {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.n,
            r.d,
            r.iterations,
            r.bound,
            r.within_bound(),
            r.lex_optimal,
            r.monotone,
            r.bounded,
            r.cuts_ok
        );
    }
    out
}

/// Random instance with `n` variables, box `[0, d]`, and 1–3 rows that keep
/// at least one integer point (resampled otherwise).
pub fn random_ilp<R: rand::Rng>(rng: &mut R, n: usize, d: i64) -> Result<IlpInstance> {
    for _ in 0..100 {
        let c: Vec<i64> = (0..n).map(|_| rng.random_range(1..=3)).collect();
        let m = rng.random_range(1..=3);
        let rows = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2i32..=4) as f64).collect();
                let top: f64 = a.iter().map(|v| v.max(0.0) * d as f64).sum();
                let b = (top * rng.random_range(0.2..0.9)).floor() + rng.random_range(0.0..1.0);
                Row::new(a, (b * 4.0).round() / 4.0)
            })
            .collect();
        match IlpInstance::new(c, rows, d) {
            Ok(inst) => return Ok(inst),
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::Infeasible("could not draw a feasible instance".into()))
}

impl PartialOrd for AlphaVector {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.0.cmp(&other.0))
    }
}
