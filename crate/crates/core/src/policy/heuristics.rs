use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::cutgen::CutFeatures;
use crate::env::{ratio_to_count, CutSelState, HierAction};
use crate::rng;

/// Fixed selection rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum Heuristic {
    NoCuts,
    /// A uniformly random subset, in random order.
    Random { ratio: f64 },
    /// Top by normalized violation.
    Nv { ratio: f64 },
    /// Top by efficacy.
    Eff { ratio: f64 },
    /// Every candidate, randomly permuted.
    RandomAll,
    /// The normalized-violation selection, randomly permuted.
    RandomNv { ratio: f64 },
    /// Top by `0.5·efficacy + 0.3·parallelism + 0.2·support`.
    DefaultLike { ratio: f64 },
}

impl Heuristic {
    pub fn name(&self) -> String {
        match self {
            Heuristic::NoCuts => "NoCuts".into(),
            Heuristic::Random { ratio } => format!("Random({ratio})"),
            Heuristic::Nv { ratio } => format!("NV({ratio})"),
            Heuristic::Eff { ratio } => format!("Eff({ratio})"),
            Heuristic::RandomAll => "RandomAll".into(),
            Heuristic::RandomNv { ratio } => format!("RandomNV({ratio})"),
            Heuristic::DefaultLike { ratio } => format!("DefaultLike({ratio})"),
        }
    }

    pub fn ratio(&self) -> f64 {
        match *self {
            Heuristic::NoCuts => 0.0,
            Heuristic::RandomAll => 1.0,
            Heuristic::Random { ratio }
            | Heuristic::Nv { ratio }
            | Heuristic::Eff { ratio }
            | Heuristic::RandomNv { ratio }
            | Heuristic::DefaultLike { ratio } => ratio,
        }
    }
}

pub fn default_like_score(f: &CutFeatures) -> f64 {
    0.5 * f.f[CutFeatures::EFFICACY] + 0.3 * f.f[CutFeatures::PARALLELISM] + 0.2 * f.f[CutFeatures::SUPPORT]
}

/// Indices of the `m` highest scores, best first; ties go to the lower index.
pub fn top_by_score(scores: &[f64], m: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(m);
    idx
}

pub fn heuristic_act(state: &CutSelState, rule: Heuristic, seed: u64) -> HierAction {
    let n = state.n_candidates();
    let ratio = rule.ratio().clamp(0.0, 1.0);
    let m = ratio_to_count(n, ratio);
    let mut r = rng::stream(seed, "heuristic", 0);
    let feature = |i: usize| -> Vec<f64> { state.features.iter().map(|f| f.f[i]).collect() };
    let order = match rule {
        Heuristic::NoCuts => Vec::new(),
        Heuristic::Random { .. } | Heuristic::RandomAll => {
            let mut all: Vec<usize> = (0..n).collect();
            all.shuffle(&mut r);
            all.truncate(m);
            all
        }
        Heuristic::Nv { .. } => top_by_score(&feature(CutFeatures::NORMALIZED_VIOLATION), m),
        Heuristic::Eff { .. } => top_by_score(&feature(CutFeatures::EFFICACY), m),
        Heuristic::RandomNv { .. } => {
            let mut kept = top_by_score(&feature(CutFeatures::NORMALIZED_VIOLATION), m);
            kept.shuffle(&mut r);
            kept
        }
        Heuristic::DefaultLike { .. } => {
            let scores: Vec<f64> = state.features.iter().map(default_like_score).collect();
            top_by_score(&scores, m)
        }
    };
    HierAction { ratio, order }
}
