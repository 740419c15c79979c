//! Exhaustive lattice enumeration over the integer variables of an instance.
//!
//! Used as the ground-truth oracle for small instances: cut validity, MILP
//! optima and branch-and-bound checks.

use super::MilpInstance;
use crate::error::{Error, Result};
use crate::simplex::{self, LpStatus};
use crate::tol;

pub const DEFAULT_BUDGET: usize = 100_000;

/// Control flow returned by enumeration callbacks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EnumOutcome {
    Continue,
    Stop,
}

/// Visit every assignment of the integer variables inside the bound box that
/// is not ruled out by row activity bounds. Continuous variables are left at
/// their lower bound in the slice handed to `visit`; for pure integer
/// instances every visited point is fully feasible.
///
/// Fails with [`Error::BudgetExceeded`] when the box holds more than `budget`
/// lattice points.
pub fn enumerate_lattice<F>(inst: &MilpInstance, budget: usize, mut visit: F) -> Result<()>
where
    F: FnMut(&[f64]) -> EnumOutcome,
{
    let n = inst.n();
    let ints = inst.int_idx();
    let mut volume = 1.0f64;
    let mut ranges = Vec::with_capacity(ints.len());
    for &j in ints {
        let lo = tol::ceil_snap(inst.lb()[j]);
        let hi = tol::floor_snap(inst.ub()[j]);
        if hi < lo {
            return Ok(());
        }
        volume *= hi - lo + 1.0;
        ranges.push((lo as i64, hi as i64));
    }
    if volume > budget as f64 {
        return Err(Error::BudgetExceeded { points: volume, budget });
    }

    // suffix[k][r]: smallest activity row r can still gain from integer
    // variables ints[k..] and from every continuous variable.
    let m = inst.m();
    let mut cont_min = vec![0.0; m];
    for (r, row) in inst.rows().iter().enumerate() {
        for j in (0..n).filter(|&j| !inst.is_integer(j)) {
            cont_min[r] += (row.a[j] * inst.lb()[j]).min(row.a[j] * inst.ub()[j]);
        }
    }
    let mut suffix = vec![cont_min.clone(); ints.len() + 1];
    for k in (0..ints.len()).rev() {
        let j = ints[k];
        let (lo, hi) = (ranges[k].0 as f64, ranges[k].1 as f64);
        for (r, row) in inst.rows().iter().enumerate() {
            suffix[k][r] = suffix[k + 1][r] + (row.a[j] * lo).min(row.a[j] * hi);
        }
    }

    let mut x: Vec<f64> = inst.lb().to_vec();
    let mut partial = vec![0.0; m];
    let mut stop = false;
    recurse(inst, ints, &ranges, &suffix, 0, &mut x, &mut partial, &mut visit, &mut stop);
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn recurse<F>(
    inst: &MilpInstance,
    ints: &[usize],
    ranges: &[(i64, i64)],
    suffix: &[Vec<f64>],
    k: usize,
    x: &mut [f64],
    partial: &mut [f64],
    visit: &mut F,
    stop: &mut bool,
) where
    F: FnMut(&[f64]) -> EnumOutcome,
{
    if *stop {
        return;
    }
    let rows = inst.rows();
    if rows
        .iter()
        .enumerate()
        .any(|(r, row)| partial[r] + suffix[k][r] > row.b + tol::FEAS)
    {
        return;
    }
    if k == ints.len() {
        if visit(x) == EnumOutcome::Stop {
            *stop = true;
        }
        return;
    }
    let j = ints[k];
    for v in ranges[k].0..=ranges[k].1 {
        let v = v as f64;
        x[j] = v;
        for (r, row) in rows.iter().enumerate() {
            partial[r] += row.a[j] * v;
        }
        recurse(inst, ints, ranges, suffix, k + 1, x, partial, visit, stop);
        for (r, row) in rows.iter().enumerate() {
            partial[r] -= row.a[j] * v;
        }
        if *stop {
            return;
        }
    }
}

/// Optimal MILP value and point by enumeration, or `None` if infeasible.
/// Mixed instances solve an LP over the continuous variables for every
/// integer assignment.
pub fn milp_optimum_by_enumeration(
    inst: &MilpInstance,
    budget: usize,
) -> Result<Option<(f64, Vec<f64>)>> {
    let mixed = inst.int_idx().len() < inst.n();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut failure = None;
    enumerate_lattice(inst, budget, |x| {
        let candidate = if mixed {
            match complete_continuous(inst, x) {
                Ok(c) => c,
                Err(e) => {
                    failure = Some(e);
                    return EnumOutcome::Stop;
                }
            }
        } else if inst.is_feasible(x) {
            Some(x.to_vec())
        } else {
            None
        };
        if let Some(point) = candidate {
            let obj = inst.objective(&point);
            if best.as_ref().is_none_or(|(b, _)| obj < *b - tol::CMP) {
                best = Some((obj, point));
            }
        }
        EnumOutcome::Continue
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(best)
}

/// Fix the integer variables at `x` and minimize over the continuous ones.
fn complete_continuous(inst: &MilpInstance, x: &[f64]) -> Result<Option<Vec<f64>>> {
    let mut lb = inst.lb().to_vec();
    let mut ub = inst.ub().to_vec();
    for &j in inst.int_idx() {
        lb[j] = x[j];
        ub[j] = x[j];
    }
    let rel = super::build_relaxation(std::sync::Arc::new(inst.clone()));
    let sol = simplex::solve(&rel.to_lp_with_bounds(&lb, &ub))?;
    Ok(match sol.status {
        LpStatus::Optimal => {
            let mut p = sol.x;
            for &j in inst.int_idx() {
                p[j] = x[j];
            }
            Some(p)
        }
        _ => None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Row;

    #[test]
    fn counts_points_and_respects_budget() {
        let inst = MilpInstance::new(
            vec![1.0, 1.0],
            vec![Row::new(vec![1.0, 1.0], 2.0)],
            vec![0, 1],
            vec![0.0, 0.0],
            vec![2.0, 2.0],
        )
        .unwrap();
        let mut count = 0;
        enumerate_lattice(&inst, 100, |_| {
            count += 1;
            EnumOutcome::Continue
        })
        .unwrap();
        assert_eq!(count, 6); // (0,0) (0,1) (0,2) (1,0) (1,1) (2,0)
        assert!(matches!(
            enumerate_lattice(&inst, 8, |_| EnumOutcome::Continue),
            Err(Error::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn knapsack_toy_optimum() {
        let inst = MilpInstance::new(
            vec![-1.0, -1.0],
            vec![Row::new(vec![3.0, 2.0], 6.0), Row::new(vec![-3.0, 2.0], 0.0)],
            vec![0, 1],
            vec![0.0, 0.0],
            vec![3.0, 3.0],
        )
        .unwrap();
        let (z, x) = milp_optimum_by_enumeration(&inst, DEFAULT_BUDGET).unwrap().unwrap();
        assert_eq!(z, -2.0);
        assert!(inst.is_feasible(&x));
    }
}
