//! Score-based policy: a per-cut scorer that keeps a fixed ratio of the
//! best-scoring candidates. This is a simplified stand-in for the published
//! SBP; its feature set and search settings are our own.

use super::heuristics::top_by_score;
use super::{feature_matrix, Selector};
use crate::cutgen::{CutFeatures, N_FEATURES};
use crate::env::{ratio_to_count, CutSelState, HierAction};
use crate::error::Result;
use crate::neural::{add_mlp, mlp, ParamSet, Tape};
use crate::rng;

#[derive(Clone, Debug, PartialEq)]
pub struct Sbp {
    pub params: ParamSet,
    pub ratio: f64,
}

impl Sbp {
    /// MLP scorer `13 → hidden → 1` (a linear scorer when `hidden` is 0).
    pub fn new(hidden: usize, ratio: f64, seed: u64) -> Self {
        let mut r = rng::stream(seed, "sbp-init", 0);
        let mut params = ParamSet::new();
        if hidden == 0 {
            add_mlp(&mut params, "s.net", &[N_FEATURES, 1], &mut r);
        } else {
            add_mlp(&mut params, "s.net", &[N_FEATURES, hidden, 1], &mut r);
        }
        Self { params, ratio }
    }

    /// A linear scorer with the given weights and zero bias.
    pub fn linear(weights: [f64; N_FEATURES], ratio: f64) -> Self {
        let mut params = ParamSet::new();
        params.add_values("s.net.0.w", N_FEATURES, 1, weights.to_vec());
        params.add_values("s.net.0.b", 1, 1, vec![0.0]);
        Self { params, ratio }
    }

    pub fn scores(&self, features: &[CutFeatures]) -> Vec<f64> {
        if features.is_empty() {
            return Vec::new();
        }
        let mut tape = Tape::new(&self.params);
        let x = tape.constant(feature_matrix(features));
        let s = mlp(&mut tape, x, "s.net");
        tape.value(s).data.clone()
    }

    pub fn act(&self, state: &CutSelState) -> HierAction {
        let m = ratio_to_count(state.n_candidates(), self.ratio);
        HierAction { ratio: self.ratio, order: top_by_score(&self.scores(&state.features), m) }
    }
}

impl Selector for Sbp {
    fn select(&self, state: &CutSelState, _seed: u64) -> Result<HierAction> {
        Ok(self.act(state))
    }
}
