//! Cut-selection policies.
//!
//! The hierarchical policy samples a ratio `k` from a tanh-Gaussian head
//! (higher level, parameters under `h.`) and then decodes `⌊N·k⌋` distinct
//! indices with an attention pointer (lower level, `l.`). The HEM variant
//! encodes candidates with LSTMs; HEM++ uses self-attention without
//! positional information and mean pooling, so its whole distribution is a
//! function of the candidate set. A value network (`v.`) serves as the
//! HPPO baseline.

pub mod gradcheck;
mod heuristics;
mod sbp;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use heuristics::{default_like_score, heuristic_act, top_by_score, Heuristic};
pub use sbp::Sbp;

use crate::cutgen::{CutFeatures, N_FEATURES};
use crate::env::{ratio_to_count, CutSelState, HierAction};
use crate::error::{Error, Result};
use crate::neural::{
    add_linear, add_lstm, add_mha, add_mlp, linear, lstm_cell, lstm_encode, mha_encode, mlp, ParamSet, Tape,
    TanhGaussian, Tensor2, Var, K_MAX, K_MIN, SIGMA_FLOOR,
};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// LSTM encoders, sequence-to-sequence pointer.
    Hem,
    /// Attention encoders, set-to-sequence pointer.
    HemPp,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    /// No ratio head; the pointer decides when to stop via an end token.
    WithoutHigher,
    /// No ratio head; always decode `⌊N·k⌋` indices.
    HemRatio(f64),
    /// As `HemRatio`, with the selected set sorted by original index.
    HemRatioOrder(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub variant: Variant,
    pub ablation: Ablation,
    pub hidden: usize,
    pub heads: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self { variant: Variant::Hem, ablation: Ablation::Full, hidden: 64, heads: 4 }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.hidden == 0 {
            errs.push("policy.hidden: must be positive".to_string());
        }
        if self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            errs.push(format!("policy.heads: {} must divide hidden {}", self.heads, self.hidden));
        }
        if let Ablation::HemRatio(k) | Ablation::HemRatioOrder(k) = self.ablation {
            if !(0.0..=1.0).contains(&k) {
                errs.push(format!("policy.ablation: fixed ratio {k} outside [0, 1]"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Per-step record of one decode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeTrace {
    /// Log-probabilities over candidates at each step (masked entries −∞).
    pub step_log_probs: Vec<Vec<f64>>,
    pub chosen: Vec<usize>,
    pub step_logp: Vec<f64>,
    pub logp_l: f64,
    pub logp_h: f64,
}

impl DecodeTrace {
    pub fn total(&self) -> f64 {
        self.logp_h + self.logp_l
    }
}

/// `sign(v)·ln(1 + |v|)`, applied to features before the networks.
pub fn symlog(v: f64) -> f64 {
    v.signum() * v.abs().ln_1p()
}

pub fn feature_matrix(features: &[CutFeatures]) -> Tensor2 {
    let data = features.iter().flat_map(|f| f.f.iter().map(|v| symlog(*v))).collect();
    Tensor2::new(features.len(), N_FEATURES, data)
}

/// Inputs of the value network: mean transformed features, progress
/// through the rounds and a log candidate count.
pub const VALUE_INPUTS: usize = N_FEATURES + 2;

pub fn value_inputs(state: &CutSelState) -> Vec<f64> {
    let n = state.n_candidates();
    let mut out = vec![0.0; VALUE_INPUTS];
    for f in &state.features {
        for (o, v) in out.iter_mut().zip(f.f.iter()) {
            *o += symlog(*v) / n as f64;
        }
    }
    out[N_FEATURES] = state.round as f64 / state.rounds.max(1) as f64;
    out[N_FEATURES + 1] = (n as f64).ln_1p() / 5.0;
    out
}

/// How the forward pass chooses its outputs.
pub enum Plan<'a, R: Rng> {
    Sample(&'a mut R),
    Greedy,
    Given(&'a HierAction),
}

/// Outputs of one forward pass, with log-probabilities still on the tape.
pub struct Forward {
    pub ratio: f64,
    pub order: Vec<usize>,
    pub logp_h: Var,
    pub logp_l: Var,
    pub step_logp: Vec<Var>,
    pub step_log_probs: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    pub config: PolicyConfig,
    pub params: ParamSet,
}

impl Policy {
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let mut r = rng::stream(seed, "policy-init", 0);
        let mut ps = ParamSet::new();
        for level in ["h", "l"] {
            match config.variant {
                Variant::Hem => add_lstm(&mut ps, &format!("{level}.enc"), N_FEATURES, h, &mut r),
                Variant::HemPp => {
                    add_linear(&mut ps, &format!("{level}.emb"), N_FEATURES, h, &mut r);
                    add_mha(&mut ps, &format!("{level}.mha"), h, h, &mut r);
                }
            }
        }
        add_mlp(&mut ps, "h.head", &[h, h, 2], &mut r);
        add_lstm(&mut ps, "l.dec", h, h, &mut r);
        ps.add_uniform("l.start", 1, h, h, &mut r);
        ps.add_uniform("l.end", 1, h, h, &mut r);
        ps.add_uniform("l.att.w1", h, h, h, &mut r);
        ps.add_uniform("l.att.w2", h, h, h, &mut r);
        ps.add_uniform("l.att.v", h, 1, h, &mut r);
        add_mlp(&mut ps, "v.net", &[VALUE_INPUTS, h, 1], &mut r);
        Ok(Self { config, params: ps })
    }

    /// Sample or take the mode. N = 0 gives the empty action.
    pub fn act(&self, state: &CutSelState, mode: ActMode, seed: u64) -> Result<(HierAction, DecodeTrace)> {
        self.act_features(&state.features, mode, seed)
    }

    pub fn act_features(&self, features: &[CutFeatures], mode: ActMode, seed: u64) -> Result<(HierAction, DecodeTrace)> {
        let x = feature_matrix(features);
        let mut tape = Tape::new(&self.params);
        let mut r = rng::stream(seed, "act", 0);
        let plan = match mode {
            ActMode::Sample => Plan::Sample(&mut r),
            ActMode::Greedy => Plan::Greedy,
        };
        let fwd = forward(&mut tape, &self.config, &x, plan)?;
        let trace = DecodeTrace {
            chosen: fwd.order.clone(),
            step_logp: fwd.step_logp.iter().map(|v| tape.scalar(*v)).collect(),
            step_log_probs: fwd.step_log_probs,
            logp_l: tape.scalar(fwd.logp_l),
            logp_h: tape.scalar(fwd.logp_h),
        };
        let mut order = fwd.order;
        if let Ablation::HemRatioOrder(_) = self.config.ablation {
            order.sort_unstable();
        }
        Ok((HierAction { ratio: fwd.ratio, order }, trace))
    }

    /// `(log π^h(k|s), log π^l(a|s,k))` of an action at these parameters.
    pub fn log_prob(&self, state: &CutSelState, action: &HierAction) -> Result<(f64, f64)> {
        self.log_prob_features(&state.features, action)
    }

    pub fn log_prob_features(&self, features: &[CutFeatures], action: &HierAction) -> Result<(f64, f64)> {
        let x = feature_matrix(features);
        let mut tape = Tape::new(&self.params);
        let fwd = forward::<rng::Rng>(&mut tape, &self.config, &x, Plan::Given(action))?;
        Ok((tape.scalar(fwd.logp_h), tape.scalar(fwd.logp_l)))
    }

    pub fn value(&self, inputs: &[f64]) -> f64 {
        let mut tape = Tape::new(&self.params);
        let v = value_on(&mut tape, inputs);
        tape.scalar(v)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let meta = serde_json::to_value(self.config)?;
        self.params.save(path, &meta)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let (params, meta) = ParamSet::load(path)?;
        let config: PolicyConfig =
            serde_json::from_value(meta).map_err(|e| Error::Checkpoint(format!("policy config: {e}")))?;
        let fresh = Policy::new(config, 0)?;
        if fresh.params.specs() != params.specs() {
            return Err(Error::Checkpoint("parameter layout does not match the policy config".into()));
        }
        Ok(Self { config, params })
    }
}

pub fn value_on(tape: &mut Tape, inputs: &[f64]) -> Var {
    let x = tape.constant(Tensor2::new(1, inputs.len(), inputs.to_vec()));
    let out = mlp(tape, x, "v.net");
    tape.pick(out, 0)
}

fn encode(tape: &mut Tape, cfg: &PolicyConfig, x: Var, level: &str) -> (Var, Var) {
    match cfg.variant {
        Variant::Hem => {
            let (hs, last) = lstm_encode(tape, x, &format!("{level}.enc"));
            (hs, last.h)
        }
        Variant::HemPp => {
            let emb = linear(tape, x, &format!("{level}.emb"));
            let emb = tape.tanh(emb);
            let att = mha_encode(tape, emb, &format!("{level}.mha"), cfg.heads);
            let e = tape.add(emb, att);
            let pooled = tape.mean_rows(e);
            (e, pooled)
        }
    }
}

/// `(mu, sigma)` of the ratio distribution.
pub fn ratio_head(tape: &mut Tape, cfg: &PolicyConfig, x: Var) -> (Var, Var) {
    let (_, summary) = encode(tape, cfg, x, "h");
    let out = mlp(tape, summary, "h.head");
    let mu = tape.pick(out, 0);
    let s = tape.pick(out, 1);
    let sp = tape.softplus(s);
    (mu, tape.affine(sp, 1.0, SIGMA_FLOOR))
}

fn pick_index<R: Rng>(log_probs: &[f64], plan: &mut Plan<R>, given: Option<usize>) -> usize {
    match (plan, given) {
        (_, Some(i)) => i,
        (Plan::Greedy, None) => {
            let mut best = 0;
            for (i, v) in log_probs.iter().enumerate() {
                if *v > log_probs[best] {
                    best = i;
                }
            }
            best
        }
        (Plan::Sample(r), None) => {
            let u: f64 = r.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (i, v) in log_probs.iter().enumerate() {
                if *v == f64::NEG_INFINITY {
                    continue;
                }
                acc += v.exp();
                last = i;
                if u < acc {
                    return i;
                }
            }
            last
        }
        (Plan::Given(_), None) => unreachable!("given plans always supply the index"),
    }
}

/// Run the policy on a feature matrix (`N × 13`, already transformed).
pub fn forward<R: Rng>(tape: &mut Tape, cfg: &PolicyConfig, x: &Tensor2, mut plan: Plan<R>) -> Result<Forward> {
    let n = x.rows;
    let given = match &plan {
        Plan::Given(a) => Some((*a).clone()),
        _ => None,
    };
    if let Some(a) = &given {
        let mut seen = vec![false; n];
        for &i in &a.order {
            if i >= n || std::mem::replace(&mut seen[i], true) {
                return Err(Error::ActionContract(format!("invalid index {i} for {n} candidates")));
            }
        }
    }
    let zero = tape.scalar_const(0.0);
    if n == 0 {
        if given.as_ref().is_some_and(|a| !a.order.is_empty()) {
            return Err(Error::ActionContract("indices given for an empty candidate pool".into()));
        }
        return Ok(Forward {
            ratio: 0.0,
            order: Vec::new(),
            logp_h: zero,
            logp_l: zero,
            step_logp: Vec::new(),
            step_log_probs: Vec::new(),
        });
    }
    let xv = tape.constant(x.clone());

    // higher level
    let (ratio, m, logp_h) = match cfg.ablation {
        Ablation::Full => {
            let (mu, sigma) = ratio_head(tape, cfg, xv);
            let dist = TanhGaussian::new(tape.scalar(mu), tape.scalar(sigma))?;
            let k = match (&mut plan, &given) {
                (_, Some(a)) => a.ratio.clamp(K_MIN, K_MAX),
                (Plan::Sample(r), None) => dist.sample(*r).0,
                _ => dist.mode(),
            };
            let lp = TanhGaussian::log_prob_on(tape, mu, sigma, k);
            (k, Some(ratio_to_count(n, k)), lp)
        }
        Ablation::HemRatio(k) | Ablation::HemRatioOrder(k) => (k, Some(ratio_to_count(n, k)), zero),
        Ablation::WithoutHigher => (0.0, None, zero),
    };
    if let (Some(a), Some(m)) = (&given, m) {
        if a.order.len() != m {
            return Err(Error::ActionContract(format!(
                "ratio {} selects {m} of {n} cuts but the order has {}",
                a.ratio,
                a.order.len()
            )));
        }
    }

    // lower level
    let (e, summary) = encode(tape, cfg, xv, "l");
    let h = tape.value(summary).cols;
    let w1 = tape.param("l.att.w1");
    let w2 = tape.param("l.att.w2");
    let v = tape.param("l.att.v");
    let with_end = m.is_none();
    let keys_src = if with_end {
        let end = tape.param("l.end");
        tape.concat_rows(&[e, end])
    } else {
        e
    };
    let keys = tape.matmul(keys_src, w1);
    let n_keys = n + usize::from(with_end);
    // the decoder starts from the encoder summary
    let c0 = tape.constant(Tensor2::zeros(1, h));
    let mut state = crate::neural::LstmState { h: summary, c: c0 };
    let mut input = tape.param("l.start");
    let mut mask = vec![false; n_keys];
    let mut order = Vec::new();
    let mut step_logp = Vec::new();
    let mut step_log_probs = Vec::new();
    let steps = m.unwrap_or(n + 1);
    for t in 0..steps {
        state = lstm_cell(tape, input, state, "l.dec");
        let q = tape.matmul(state.h, w2);
        let u = tape.add_bias(keys, q);
        let u = tape.tanh(u);
        let logits = tape.matmul(u, v);
        let logits = tape.transpose(logits);
        let lsm = tape.log_softmax_masked(logits, &mask);
        let want = given.as_ref().map(|a| a.order.get(t).copied().unwrap_or(n));
        let i = pick_index(&tape.value(lsm).data, &mut plan, want);
        step_log_probs.push(tape.value(lsm).data.clone());
        step_logp.push(tape.pick(lsm, i));
        if i == n {
            break;
        }
        order.push(i);
        mask[i] = true;
        input = tape.row(e, i);
    }
    let logp_l = match step_logp.as_slice() {
        [] => zero,
        [one] => *one,
        many => {
            let cat = tape.concat_cols(many);
            tape.sum(cat)
        }
    };
    let ratio = if with_end { order.len() as f64 / n as f64 } else { ratio };
    Ok(Forward { ratio, order, logp_h, logp_l, step_logp, step_log_probs })
}

/// Anything that turns a state into an action.
pub trait Selector: Send + Sync {
    fn select(&self, state: &CutSelState, seed: u64) -> Result<HierAction>;
}

/// A learned policy acting with a fixed mode.
pub struct PolicySelector<'a> {
    pub policy: &'a Policy,
    pub mode: ActMode,
}

impl Selector for PolicySelector<'_> {
    fn select(&self, state: &CutSelState, seed: u64) -> Result<HierAction> {
        Ok(self.policy.act(state, self.mode, seed)?.0)
    }
}

impl Selector for Heuristic {
    fn select(&self, state: &CutSelState, seed: u64) -> Result<HierAction> {
        Ok(heuristic_act(state, *self, seed))
    }
}

#[cfg(test)]
mod tests;
