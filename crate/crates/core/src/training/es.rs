use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{step, CutSelState, EnvConfig};
use crate::error::{Error, Result};
use crate::policy::Sbp;
use crate::rng;

/// Antithetic evolution strategies for the per-cut scorer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsConfig {
    pub ratio: f64,
    pub hidden: usize,
    /// Perturbation pairs per iteration.
    pub pairs: usize,
    pub sigma: f64,
    pub lr: f64,
    pub iterations: usize,
    /// Roots scored per perturbation (all when 0).
    pub roots_per_eval: usize,
    pub seed: u64,
}

impl Default for EsConfig {
    fn default() -> Self {
        Self { ratio: 0.3, hidden: 0, pairs: 16, sigma: 0.1, lr: 0.05, iterations: 30, roots_per_eval: 16, seed: 0 }
    }
}

impl EsConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(0.0..=1.0).contains(&self.ratio) {
            errs.push(format!("es.ratio: {} outside [0, 1]", self.ratio));
        }
        if self.pairs == 0 {
            errs.push("es.pairs: must be positive".to_string());
        }
        if !(self.sigma > 0.0) {
            errs.push("es.sigma: must be positive".to_string());
        }
        if !(self.lr > 0.0) {
            errs.push("es.lr: must be positive".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn episode_return(sbp: &Sbp, root: &Arc<CutSelState>, env: &EnvConfig) -> Result<f64> {
    let mut state = (**root).clone();
    let mut total = 0.0;
    let mut disc = 1.0;
    loop {
        let out = step(&state, &sbp.act(&state), env)?;
        total += disc * out.reward;
        disc *= env.gamma;
        if out.terminal {
            return Ok(total);
        }
        state = out.state;
    }
}

fn fitness(sbp: &Sbp, roots: &[&Arc<CutSelState>], env: &EnvConfig) -> Result<f64> {
    let sum: f64 = roots.iter().map(|r| episode_return(sbp, r, env)).sum::<Result<f64>>()?;
    Ok(sum / roots.len() as f64)
}

/// Fit the scorer by antithetic ES with centered-rank fitness shaping.
pub fn train_sbp_es(roots: &[Arc<CutSelState>], env: &EnvConfig, cfg: &EsConfig) -> Result<Sbp> {
    cfg.validate()?;
    env.validate()?;
    if roots.is_empty() {
        return Err(Error::Parameter("no training instances".into()));
    }
    let mut sbp = Sbp::new(cfg.hidden, cfg.ratio, cfg.seed);
    let dim = sbp.params.len();
    for it in 0..cfg.iterations {
        let mut r = rng::stream(cfg.seed, "es", it as u64);
        let subset: Vec<&Arc<CutSelState>> = if cfg.roots_per_eval == 0 || cfg.roots_per_eval >= roots.len() {
            roots.iter().collect()
        } else {
            (0..cfg.roots_per_eval).map(|_| &roots[r.random_range(0..roots.len())]).collect()
        };
        let noise: Vec<Vec<f64>> =
            (0..cfg.pairs).map(|_| (0..dim).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
        let scores: Vec<(f64, f64)> = noise
            .par_iter()
            .map(|eps| {
                let mut plus = sbp.clone();
                let mut minus = sbp.clone();
                for ((p, m), e) in plus.params.data.iter_mut().zip(&mut minus.params.data).zip(eps) {
                    *p += cfg.sigma * e;
                    *m -= cfg.sigma * e;
                }
                Ok((fitness(&plus, &subset, env)?, fitness(&minus, &subset, env)?))
            })
            .collect::<Result<_>>()?;
        let flat: Vec<f64> = scores.iter().flat_map(|(a, b)| [*a, *b]).collect();
        let ranks = centered_ranks(&flat);
        let mut grad = vec![0.0; dim];
        for (i, eps) in noise.iter().enumerate() {
            let w = ranks[2 * i] - ranks[2 * i + 1];
            for (g, e) in grad.iter_mut().zip(eps) {
                *g += w * e;
            }
        }
        let scale = cfg.lr / (2.0 * cfg.pairs as f64 * cfg.sigma);
        for (p, g) in sbp.params.data.iter_mut().zip(&grad) {
            *p += scale * g;
        }
    }
    Ok(sbp)
}

/// Ranks mapped linearly onto `[-0.5, 0.5]`; ties share the lower rank.
fn centered_ranks(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = i as f64 / (n - 1) as f64 - 0.5;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_ranks_span_half_interval() {
        assert_eq!(centered_ranks(&[3.0, 1.0, 2.0]), vec![0.5, -0.5, 0.0]);
        assert_eq!(centered_ranks(&[1.0, 1.0]), vec![-0.5, -0.5]);
    }
}
