//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use cutlab_core::env::{reset, CutSelState, EnvConfig};
use cutlab_core::harness::{generate_indexed, Family};
use cutlab_core::milp::{build_relaxation, LpRelaxation};
use cutlab_core::simplex::{self, LpSolution};
use cutlab_core::MilpInstance;

pub fn knapsack(items: usize, knapsacks: usize, idx: usize) -> Arc<MilpInstance> {
    Arc::new(generate_indexed(&Family::MultipleKnapsack { items, knapsacks }, 11, idx).expect("fixture instance"))
}

pub fn set_cover(rows: usize, cols: usize, idx: usize) -> Arc<MilpInstance> {
    Arc::new(generate_indexed(&Family::SetCovering { rows, cols, density: 0.15 }, 11, idx).expect("fixture instance"))
}

/// Relaxation plus its optimal LP solution.
pub fn solved(inst: Arc<MilpInstance>) -> (LpRelaxation, LpSolution) {
    let rel = build_relaxation(inst);
    let sol = simplex::solve(&rel.to_lp()).expect("fixture LP");
    (rel, sol)
}

pub fn root_state(inst: Arc<MilpInstance>, max_candidates: usize) -> CutSelState {
    let cfg = EnvConfig { max_candidates, ..Default::default() };
    reset(inst, &cfg, 0).expect("fixture state")
}
