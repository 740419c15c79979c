//! Problem representation: MILP instances, their LP relaxations, bound traces
//! and the solver-performance metrics computed from them.
//!
//! Instances are always minimization problems `min c·x  s.t.  A x ≤ b,
//! lb ≤ x ≤ ub, x_j ∈ ℤ for j ∈ I`. Maximization callers negate `c`.

mod enumerate;
mod relax;
mod trace;

pub use enumerate::{enumerate_lattice, milp_optimum_by_enumeration, EnumOutcome, DEFAULT_BUDGET};
pub use relax::{build_relaxation, LpRelaxation};
pub use trace::{improvement_metric, pd_integral, BoundEvent, BoundTrace};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "cutlab-v1";

/// One constraint row `a·x ≤ b`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub a: Vec<f64>,
    pub b: f64,
}

impl Row {
    pub fn new(a: Vec<f64>, b: f64) -> Self {
        Self { a, b }
    }

    pub fn activity(&self, x: &[f64]) -> f64 {
        dot(&self.a, x)
    }

    /// Indices with a nonzero coefficient.
    pub fn support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.a.iter().copied().enumerate().filter(|&(_, v)| v != 0.0)
    }
}

/// A validated mixed-integer linear program in minimization form.
#[derive(Clone, Debug, PartialEq)]
pub struct MilpInstance {
    c: Vec<f64>,
    rows: Vec<Row>,
    int_idx: Vec<usize>,
    is_int: Vec<bool>,
    lb: Vec<f64>,
    ub: Vec<f64>,
}

impl MilpInstance {
    /// Validate and build an instance. `int_idx` is zero-based and may be
    /// unsorted; duplicates are rejected.
    pub fn new(
        c: Vec<f64>,
        rows: Vec<Row>,
        mut int_idx: Vec<usize>,
        lb: Vec<f64>,
        ub: Vec<f64>,
    ) -> Result<Self> {
        let n = c.len();
        if n == 0 {
            return Err(Error::Validation("instance has no variables".into()));
        }
        if lb.len() != n || ub.len() != n {
            return Err(Error::Validation(format!(
                "bound vectors have lengths {}/{} but n = {n}",
                lb.len(),
                ub.len()
            )));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.a.len() != n {
                return Err(Error::Validation(format!(
                    "row {i} has {} coefficients but n = {n}",
                    row.a.len()
                )));
            }
            if !row.b.is_finite() || row.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::Validation(format!("row {i} has a non-finite entry")));
            }
        }
        if c.iter().chain(&lb).chain(&ub).any(|v| !v.is_finite()) {
            return Err(Error::Validation("objective or bounds contain a non-finite entry".into()));
        }
        if let Some(j) = (0..n).find(|&j| lb[j] > ub[j]) {
            return Err(Error::Validation(format!(
                "variable {j} has lb {} > ub {}",
                lb[j], ub[j]
            )));
        }
        int_idx.sort_unstable();
        let len = int_idx.len();
        int_idx.dedup();
        if int_idx.len() != len {
            return Err(Error::Validation("int_idx contains duplicates".into()));
        }
        if let Some(&j) = int_idx.iter().find(|&&j| j >= n) {
            return Err(Error::Validation(format!("int_idx entry {j} out of range (n = {n})")));
        }
        let mut is_int = vec![false; n];
        for &j in &int_idx {
            is_int[j] = true;
        }
        Ok(Self { c, rows, int_idx, is_int, lb, ub })
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn int_idx(&self) -> &[usize] {
        &self.int_idx
    }

    pub fn is_integer(&self, j: usize) -> bool {
        self.is_int[j]
    }

    pub fn lb(&self) -> &[f64] {
        &self.lb
    }

    pub fn ub(&self) -> &[f64] {
        &self.ub
    }

    /// Binary variable: integer with bounds exactly [0, 1].
    pub fn is_binary(&self, j: usize) -> bool {
        self.is_int[j] && self.lb[j] == 0.0 && self.ub[j] == 1.0
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        dot(&self.c, x)
    }

    /// True when `x` satisfies every row, bound and integrality requirement.
    pub fn is_feasible(&self, x: &[f64]) -> bool {
        use crate::tol;
        x.len() == self.n()
            && (0..self.n()).all(|j| {
                x[j] >= self.lb[j] - tol::FEAS
                    && x[j] <= self.ub[j] + tol::FEAS
                    && (!self.is_int[j] || tol::is_integral(x[j]))
            })
            && self.rows.iter().all(|r| r.activity(x) <= r.b + tol::FEAS)
    }

    /// Largest objective value any point in the bound box can reach; a valid
    /// primal bound before an incumbent exists.
    pub fn trivial_primal_bound(&self) -> f64 {
        (0..self.n())
            .map(|j| (self.c[j] * self.lb[j]).max(self.c[j] * self.ub[j]))
            .sum()
    }

    /// Same problem with every integrality requirement dropped.
    pub fn without_integrality(&self) -> Self {
        Self {
            int_idx: Vec::new(),
            is_int: vec![false; self.n()],
            ..self.clone()
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.try_into()
    }
}

/// On-disk instance schema (`"fmt": "cutlab-v1"`).
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub fmt: String,
    pub n: usize,
    pub m: usize,
    pub c: Vec<f64>,
    pub rows: Vec<Row>,
    pub int_idx: Vec<usize>,
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
}

impl From<&MilpInstance> for InstanceFile {
    fn from(inst: &MilpInstance) -> Self {
        Self {
            fmt: FORMAT_TAG.to_string(),
            n: inst.n(),
            m: inst.m(),
            c: inst.c.clone(),
            rows: inst.rows.clone(),
            int_idx: inst.int_idx.clone(),
            lb: inst.lb.clone(),
            ub: inst.ub.clone(),
        }
    }
}

impl TryFrom<InstanceFile> for MilpInstance {
    type Error = Error;

    fn try_from(f: InstanceFile) -> Result<Self> {
        if f.fmt != FORMAT_TAG {
            return Err(Error::Validation(format!(
                "unsupported format tag {:?}, expected {FORMAT_TAG:?}",
                f.fmt
            )));
        }
        if f.n != f.c.len() || f.m != f.rows.len() {
            return Err(Error::Validation(format!(
                "declared n={} m={} but c has {} entries and {} rows are given",
                f.n,
                f.m,
                f.c.len(),
                f.rows.len()
            )));
        }
        MilpInstance::new(f.c, f.rows, f.int_idx, f.lb, f.ub)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
