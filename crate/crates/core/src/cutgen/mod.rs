//! Candidate cut generation, validity checking and cut features.

mod cover;
mod decoy;
mod features;
mod gomory;
mod lex;

pub use cover::cover_cuts;
pub use decoy::decoy_cuts;
pub use features::{featurize, features_from_x, CutFeatures, N_FEATURES};
pub use gomory::gomory_cuts;
pub use lex::{lex_coefficients, lex_cuts};

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{dot, enumerate_lattice, EnumOutcome, MilpInstance};

/// Cut families. The declaration order is also the tie-break order used when
/// ranking categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    GomoryFrac,
    KnapsackCover,
    LexTheory,
    Decoy,
}

impl Category {
    pub const ALL: [Category; 4] =
        [Category::GomoryFrac, Category::KnapsackCover, Category::LexTheory, Category::Decoy];

    pub fn name(self) -> &'static str {
        match self {
            Category::GomoryFrac => "GomoryFrac",
            Category::KnapsackCover => "KnapsackCover",
            Category::LexTheory => "LexTheory",
            Category::Decoy => "Decoy",
        }
    }
}

/// A linear inequality `a·x ≤ beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cut {
    pub a: Vec<f64>,
    pub beta: f64,
    pub category: Category,
    pub source_round: usize,
}

impl Cut {
    /// Build a cut, rejecting all-zero or non-finite coefficients.
    pub fn new(a: Vec<f64>, beta: f64, category: Category, source_round: usize) -> Result<Self> {
        if a.iter().any(|v| !v.is_finite()) || !beta.is_finite() {
            return Err(Error::Validation("cut has a non-finite entry".into()));
        }
        if a.iter().all(|&v| v == 0.0) {
            return Err(Error::Validation("cut has no nonzero coefficient".into()));
        }
        Ok(Self { a, beta, category, source_round })
    }

    /// `a·x − beta`; positive means `x` is cut off.
    pub fn violation(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.beta
    }

    pub fn norm2(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn efficacy(&self, x: &[f64]) -> f64 {
        self.violation(x) / self.norm2()
    }

    /// Hash key of the cut scaled to unit max-norm, for duplicate detection.
    pub fn dedup_key(&self) -> Vec<i64> {
        let scale = self.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let q = |v: f64| (v / scale * 1e8).round() as i64;
        self.a.iter().map(|&v| q(v)).chain(std::iter::once(q(self.beta))).collect()
    }
}

/// Whether every integer-feasible point of `inst` satisfies `cut`.
pub fn check_validity(cut: &Cut, inst: &MilpInstance) -> Result<bool> {
    check_validity_with_budget(cut, inst, crate::milp::DEFAULT_BUDGET)
}

pub fn check_validity_with_budget(cut: &Cut, inst: &MilpInstance, budget: usize) -> Result<bool> {
    if cut.a.len() != inst.n() {
        return Err(Error::Validation("cut dimension differs from instance".into()));
    }
    let slack = 1e-6 * (1.0 + cut.beta.abs());
    let mixed = inst.int_idx().len() < inst.n();
    let mut valid = true;
    let mut failure = None;
    enumerate_lattice(inst, budget, |x| {
        let ok = if mixed {
            // worst case over the continuous completion: maximize a·x
            match max_over_continuous(cut, inst, x) {
                Ok(None) => true,
                Ok(Some(v)) => v <= cut.beta + slack,
                Err(e) => {
                    failure = Some(e);
                    false
                }
            }
        } else {
            !inst.is_feasible(x) || cut.violation(x) <= slack
        };
        if ok {
            EnumOutcome::Continue
        } else {
            valid = false;
            EnumOutcome::Stop
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(valid)
}

fn max_over_continuous(cut: &Cut, inst: &MilpInstance, x: &[f64]) -> Result<Option<f64>> {
    use crate::simplex::{solve, LpProblem, LpRow, LpStatus};
    let mut lb = inst.lb().to_vec();
    let mut ub = inst.ub().to_vec();
    for &j in inst.int_idx() {
        lb[j] = x[j];
        ub[j] = x[j];
    }
    let p = LpProblem {
        c: cut.a.iter().map(|v| -v).collect(),
        rows: inst.rows().iter().map(|r| LpRow::le(r.a.clone(), r.b)).collect(),
        lb,
        ub,
    };
    let sol = solve(&p)?;
    Ok((sol.status == LpStatus::Optimal).then(|| -sol.obj))
}

/// CSV dump: category, beta, violation, efficacy, then the 13 features.
pub fn cuts_to_csv(cuts: &[Cut], features: &[CutFeatures], x: &[f64]) -> String {
    let mut out = String::from("category,beta,violation,efficacy");
    for i in 1..=N_FEATURES {
        let _ = write!(out, ",f{i}");
    }
    out.push('\n');
    for (cut, f) in cuts.iter().zip(features) {
        let _ = write!(
            out,
            "{},{},{},{}",
            cut.category.name(),
            cut.beta,
            cut.violation(x),
            cut.efficacy(x)
        );
        for v in f.f {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Zero out coefficients that are negligible relative to the largest one.
pub(crate) fn clean(a: &mut [f64]) {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for v in a.iter_mut() {
        if v.abs() <= 1e-12 * scale.max(1.0) {
            *v = 0.0;
        }
    }
}
