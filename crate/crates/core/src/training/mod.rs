//! Policy-gradient trainers for the hierarchical policy.
//!
//! * one-round hierarchical policy gradient: `∇θ1 = E[∇log π^h(k|s)·r]`,
//!   `∇θ2 = E[∇log π^l(a|s,k)·r]`, with a leave-one-out batch-mean baseline;
//! * multi-round REINFORCE with discounted Monte-Carlo returns;
//! * HPPO: the clipped surrogate on `π^h·π^l` plus a learned value baseline.
//!
//! Rollouts run in parallel over a frozen parameter snapshot; each sample
//! draws from its own seeded stream and results are reduced in sample order,
//! so runs are bit-reproducible.

mod es;
mod estimators;
mod exact;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use es::{train_sbp_es, EsConfig};
pub use estimators::{
    clip_ratio, collect, hpg_gradient, loo_baseline, ppo_gradient, returns, score_gradient, value_gradient,
    weighted_score_gradient, Trajectory, Transition,
};
pub use exact::{
    check_estimator, count_probabilities, enumerate_outcomes, exact_gradient, exact_objective, Branch, OutcomeNode,
    ProjectionCheck,
};

use crate::env::{reset, CutSelState, EnvConfig};
use crate::error::{Error, Result};
use crate::milp::MilpInstance;
use crate::policy::Policy;
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    HpgOneRound,
    HpgMultiRound,
    Hppo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub batch: usize,
    pub epochs: usize,
    pub lr: f64,
    pub gamma: f64,
    pub clip_eps: f64,
    pub ppo_updates_per_epoch: usize,
    pub baseline: bool,
    pub optimizer: Optimizer,
    /// Standardize rewards by running mean and deviation.
    pub normalize_rewards: bool,
    pub value_coef: f64,
    /// Rescale the update when its L2 norm exceeds this.
    pub max_grad_norm: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::HpgOneRound,
            batch: 32,
            epochs: 100,
            lr: 1e-3,
            gamma: 1.0,
            clip_eps: 0.2,
            ppo_updates_per_epoch: 10,
            baseline: true,
            optimizer: Optimizer::Sgd { momentum: 0.9 },
            normalize_rewards: false,
            value_coef: 0.5,
            max_grad_norm: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.batch < 2 {
            errs.push("train.batch: must be at least 2".to_string());
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            errs.push(format!("train.lr: {} must be positive", self.lr));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            errs.push(format!("train.gamma: {} outside [0, 1]", self.gamma));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            errs.push(format!("train.clip_eps: {} outside (0, 1)", self.clip_eps));
        }
        if self.algorithm == Algorithm::Hppo && self.ppo_updates_per_epoch == 0 {
            errs.push("train.ppo_updates_per_epoch: must be at least 1".to_string());
        }
        match self.optimizer {
            Optimizer::Sgd { momentum } if !(0.0..1.0).contains(&momentum) => {
                errs.push(format!("train.optimizer.momentum: {momentum} outside [0, 1)"))
            }
            Optimizer::Adam { beta1, beta2, eps }
                if !((0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0) =>
            {
                errs.push("train.optimizer: Adam needs beta1, beta2 in [0, 1) and eps > 0".to_string())
            }
            _ => {}
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// First-order update state.
#[derive(Clone, Debug)]
pub struct OptState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl OptState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    /// Move `params` along the ascent direction `grad`.
    pub fn ascend(&mut self, opt: Optimizer, lr: f64, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        match opt {
            Optimizer::Sgd { momentum } => {
                for ((p, m), g) in params.iter_mut().zip(&mut self.m).zip(grad) {
                    *m = momentum * *m + g;
                    *p += lr * *m;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t as i32);
                let c2 = 1.0 - beta2.powi(self.t as i32);
                for (((p, m), v), g) in params.iter_mut().zip(&mut self.m).zip(&mut self.v).zip(grad) {
                    *m = beta1 * *m + (1.0 - beta1) * g;
                    *v = beta2 * *v + (1.0 - beta2) * g * g;
                    *p += lr * (*m / c1) / ((*v / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Welford running mean and variance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub count: usize,
    pub mean: f64,
    m2: f64,
}

impl RunningStats {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let d = x - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn std(&self) -> f64 {
        if self.count < 2 {
            1.0
        } else {
            (self.m2 / (self.count - 1) as f64).sqrt()
        }
    }

    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.mean) / self.std().max(1e-8)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub mean_reward: Option<f64>,
    pub eval_dual_improvement: Option<f64>,
    pub eval_pd_integral: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub config: TrainConfig,
    pub curve: Vec<CurvePoint>,
    pub dropped_ratios: usize,
    pub ratio_evaluations: usize,
    /// More than 1% of importance ratios were not finite.
    pub flagged: bool,
    pub reward_stats: Option<RunningStats>,
}

pub fn curve_csv(curve: &[CurvePoint]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
    let mut s = String::from("epoch,mean_reward,eval_dual_improvement,eval_pd_integral\n");
    for p in curve {
        s += &format!("{},{},{},{}\n", p.epoch, opt(p.mean_reward), opt(p.eval_dual_improvement), opt(p.eval_pd_integral));
    }
    s
}

/// Root states of every instance, computed once and shared by all epochs.
pub fn prepare_roots(instances: &[Arc<MilpInstance>], env: &EnvConfig, seed: u64) -> Result<Vec<Arc<CutSelState>>> {
    instances
        .par_iter()
        .enumerate()
        .map(|(i, inst)| reset(inst.clone(), env, rng::derive(seed, "root", i as u64)).map(Arc::new))
        .collect()
}

/// Hook called after every epoch with `(epoch, policy)`; may return
/// evaluation metrics `(dual_improvement, pd_integral)` for the curve.
pub type EvalHook<'a> = dyn Fn(usize, &Policy) -> Result<Option<(f64, f64)>> + Sync + 'a;

pub fn train(
    policy: &mut Policy,
    roots: &[Arc<CutSelState>],
    env: &EnvConfig,
    cfg: &TrainConfig,
    eval: Option<&EvalHook>,
) -> Result<TrainReport> {
    cfg.validate()?;
    env.validate()?;
    if roots.is_empty() {
        return Err(Error::Parameter("no training instances".into()));
    }
    if cfg.algorithm == Algorithm::HpgOneRound && env.rounds != 1 {
        return Err(Error::Parameter(format!("one-round training needs rounds = 1, got {}", env.rounds)));
    }
    let mut opt = OptState::new(policy.params.len());
    let mut stats = RunningStats::default();
    let mut report = TrainReport {
        config: cfg.clone(),
        curve: Vec::new(),
        dropped_ratios: 0,
        ratio_evaluations: 0,
        flagged: false,
        reward_stats: None,
    };
    if let Some(hook) = eval {
        let m = hook(0, policy)?;
        report.curve.push(point(0, None, m));
    }
    for epoch in 0..cfg.epochs {
        let mut trajs = collect(policy, roots, env, cfg.batch, rng::derive(cfg.seed, "epoch", epoch as u64))?;
        let mean_reward =
            trajs.iter().map(|t| t.steps.iter().map(|s| s.reward).sum::<f64>()).sum::<f64>() / trajs.len() as f64;
        if cfg.normalize_rewards {
            for t in &trajs {
                for s in &t.steps {
                    stats.push(s.reward);
                }
            }
            for t in &mut trajs {
                for s in &mut t.steps {
                    s.reward = stats.normalize(s.reward);
                }
            }
        }
        for t in &mut trajs {
            t.compute_returns(cfg.gamma);
        }
        match cfg.algorithm {
            Algorithm::HpgOneRound | Algorithm::HpgMultiRound => {
                let g = hpg_gradient(policy, &trajs, cfg.baseline)?;
                apply(policy, &mut opt, cfg, &g);
            }
            Algorithm::Hppo => {
                let values: Vec<Vec<f64>> = trajs
                    .iter()
                    .map(|t| t.steps.iter().map(|s| policy.value(&s.value_inputs)).collect())
                    .collect();
                for _ in 0..cfg.ppo_updates_per_epoch {
                    let (mut g, dropped, evaluated) = ppo_gradient(policy, &trajs, &values, cfg.clip_eps)?;
                    report.dropped_ratios += dropped;
                    report.ratio_evaluations += evaluated;
                    let gv = value_gradient(policy, &trajs)?;
                    for (a, b) in g.iter_mut().zip(&gv) {
                        *a += cfg.value_coef * b;
                    }
                    apply(policy, &mut opt, cfg, &g);
                }
            }
        }
        let mean_abs = policy.params.mean_abs();
        if !policy.params.is_finite() || mean_abs > 1e3 {
            return Err(Error::Diverged(mean_abs));
        }
        let m = match eval {
            Some(hook) => hook(epoch + 1, policy)?,
            None => None,
        };
        report.curve.push(point(epoch + 1, Some(mean_reward), m));
    }
    report.flagged = report.ratio_evaluations > 0 && report.dropped_ratios * 100 > report.ratio_evaluations;
    if cfg.normalize_rewards {
        report.reward_stats = Some(stats);
    }
    Ok(report)
}

fn point(epoch: usize, mean_reward: Option<f64>, m: Option<(f64, f64)>) -> CurvePoint {
    CurvePoint {
        epoch,
        mean_reward,
        eval_dual_improvement: m.map(|v| v.0),
        eval_pd_integral: m.map(|v| v.1),
    }
}

fn apply(policy: &mut Policy, opt: &mut OptState, cfg: &TrainConfig, g: &[f64]) {
    let mut g = g.to_vec();
    if let Some(max) = cfg.max_grad_norm {
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > max {
            g.iter_mut().for_each(|v| *v *= max / norm);
        }
    }
    opt.ascend(cfg.optimizer, cfg.lr, &mut policy.params.data, &g);
}

pub fn train_hpg_one_round(policy: &mut Policy, roots: &[Arc<CutSelState>], env: &EnvConfig, cfg: &TrainConfig) -> Result<TrainReport> {
    train(policy, roots, env, &TrainConfig { algorithm: Algorithm::HpgOneRound, ..cfg.clone() }, None)
}

pub fn train_hpg_multi_round(policy: &mut Policy, roots: &[Arc<CutSelState>], env: &EnvConfig, cfg: &TrainConfig) -> Result<TrainReport> {
    train(policy, roots, env, &TrainConfig { algorithm: Algorithm::HpgMultiRound, ..cfg.clone() }, None)
}

pub fn train_hppo(policy: &mut Policy, roots: &[Arc<CutSelState>], env: &EnvConfig, cfg: &TrainConfig) -> Result<TrainReport> {
    train(policy, roots, env, &TrainConfig { algorithm: Algorithm::Hppo, ..cfg.clone() }, None)
}
