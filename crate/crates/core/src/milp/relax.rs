use std::sync::Arc;

use super::MilpInstance;
use crate::cutgen::Cut;
use crate::error::{Error, Result};
use crate::simplex::{LpProblem, LpRow};

/// LP relaxation of a shared instance plus the cuts appended to it, kept in
/// the exact order they were added.
#[derive(Clone, Debug)]
pub struct LpRelaxation {
    base: Arc<MilpInstance>,
    extra_rows: Vec<Cut>,
}

/// Drop integrality. Dimension checks already happened when the instance was
/// built, so this cannot fail.
pub fn build_relaxation(inst: Arc<MilpInstance>) -> LpRelaxation {
    LpRelaxation { base: inst, extra_rows: Vec::new() }
}

impl LpRelaxation {
    pub fn base(&self) -> &MilpInstance {
        &self.base
    }

    pub fn base_arc(&self) -> &Arc<MilpInstance> {
        &self.base
    }

    pub fn extra_rows(&self) -> &[Cut] {
        &self.extra_rows
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn row_count(&self) -> usize {
        self.base.m() + self.extra_rows.len()
    }

    pub fn add_cut(&mut self, cut: Cut) -> Result<()> {
        if cut.a.len() != self.n() {
            return Err(Error::Validation(format!(
                "cut has {} coefficients but n = {}",
                cut.a.len(),
                self.n()
            )));
        }
        self.extra_rows.push(cut);
        Ok(())
    }

    /// `(a, b)` pairs of every row: base rows first, then cuts in append order.
    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.base
            .rows()
            .iter()
            .map(|r| (r.a.as_slice(), r.b))
            .chain(self.extra_rows.iter().map(|c| (c.a.as_slice(), c.beta)))
    }

    pub fn to_lp(&self) -> LpProblem {
        self.to_lp_with_bounds(self.base.lb(), self.base.ub())
    }

    /// LP over this relaxation with node-local bounds replacing the box.
    pub fn to_lp_with_bounds(&self, lb: &[f64], ub: &[f64]) -> LpProblem {
        LpProblem {
            c: self.base.c().to_vec(),
            rows: self.rows().map(|(a, b)| LpRow::le(a.to_vec(), b)).collect(),
            lb: lb.to_vec(),
            ub: ub.to_vec(),
        }
    }
}
