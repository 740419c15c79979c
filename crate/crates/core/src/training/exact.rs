//! Exact objectives on small episodes, by enumerating every action.
//!
//! Transitions do not depend on the parameters, so the tree of outcomes is
//! built once. The objective `J(θ) = E[Σ_t r_t]` then follows from the
//! ratio head's count distribution and the pointer's sequence
//! probabilities; its gradient comes from central differences.

use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::env::{step, CutSelState, EnvConfig, HierAction};
use crate::error::{Error, Result};
use crate::neural::{Tape, K_MAX, K_MIN};
use crate::policy::{feature_matrix, ratio_head, value_inputs, Ablation, ActMode, Policy};
use crate::rng;

use super::estimators::{hpg_gradient, Trajectory, Transition};

const MAX_BRANCHES: usize = 20_000;

#[derive(Clone, Debug)]
pub struct OutcomeNode {
    pub state: Arc<CutSelState>,
    pub branches: Vec<Branch>,
}

#[derive(Clone, Debug)]
pub struct Branch {
    pub m: usize,
    pub order: Vec<usize>,
    pub reward: f64,
    pub next: Option<Box<OutcomeNode>>,
}

impl OutcomeNode {
    pub fn size(&self) -> usize {
        self.branches.iter().map(|b| 1 + b.next.as_ref().map_or(0, |n| n.size())).sum()
    }

    fn branch(&self, order: &[usize]) -> Option<&Branch> {
        self.branches.iter().find(|b| b.order == order)
    }
}

/// All ordered subsets of `0..n` with `m` elements.
fn arrangements(n: usize, m: usize) -> Vec<Vec<usize>> {
    fn rec(n: usize, m: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == m {
            out.push(cur.clone());
            return;
        }
        for i in 0..n {
            if !cur.contains(&i) {
                cur.push(i);
                rec(n, m, cur, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(n, m, &mut Vec::new(), &mut out);
    out
}

/// A ratio that selects exactly `m` of `n`.
fn representative(m: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (m as f64 / n as f64).clamp(K_MIN, K_MAX)
    }
}

pub fn enumerate_outcomes(state: Arc<CutSelState>, env: &EnvConfig) -> Result<OutcomeNode> {
    let mut budget = MAX_BRANCHES;
    enumerate(state, env, &mut budget)
}

fn enumerate(state: Arc<CutSelState>, env: &EnvConfig, budget: &mut usize) -> Result<OutcomeNode> {
    let n = state.n_candidates();
    let mut branches = Vec::new();
    for m in 0..=n {
        for order in arrangements(n, m) {
            if *budget == 0 {
                return Err(Error::Parameter(format!("more than {MAX_BRANCHES} outcomes to enumerate")));
            }
            *budget -= 1;
            let action = HierAction { ratio: representative(m, n), order: order.clone() };
            let out = step(&state, &action, env)?;
            let next = if out.terminal { None } else { Some(Box::new(enumerate(Arc::new(out.state), env, budget)?)) };
            branches.push(Branch { m, order, reward: out.reward, next });
        }
    }
    Ok(OutcomeNode { state, branches })
}

/// `P(count = m)` for `m = 0..=n` when `k = clamp((1 + tanh u)/2)`,
/// `u ~ N(mu, sigma²)` and `count = ⌊n·k⌋` (snapped, saturating at the clamp).
pub fn count_probabilities(n: usize, mu: f64, sigma: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Ok(vec![1.0]);
    }
    let normal = Normal::new(mu, sigma).map_err(|e| Error::Parameter(format!("ratio distribution: {e}")))?;
    // tail[j] = P(count ≥ j)
    let mut tail = vec![1.0; n + 2];
    tail[n + 1] = 0.0;
    for (j, t) in tail.iter_mut().enumerate().take(n + 1).skip(1) {
        let thr = ((j as f64 - crate::tol::INT) / n as f64).min(K_MAX);
        *t = normal.sf((2.0 * thr - 1.0).atanh());
    }
    Ok((0..=n).map(|m| tail[m] - tail[m + 1]).collect())
}

/// `E[Σ_t γ^t r_t]` under the policy from `node`.
pub fn exact_objective(policy: &Policy, node: &OutcomeNode, gamma: f64) -> Result<f64> {
    if policy.config.ablation != Ablation::Full {
        return Err(Error::Parameter("exact objectives need the full hierarchical policy".into()));
    }
    let features = &node.state.features;
    let n = features.len();
    let probs = if n == 0 {
        vec![1.0]
    } else {
        let mut tape = Tape::new(&policy.params);
        let x = tape.constant(feature_matrix(features));
        let (mu, sigma) = ratio_head(&mut tape, &policy.config, x);
        count_probabilities(n, tape.scalar(mu), tape.scalar(sigma))?
    };
    let mut total = 0.0;
    for b in &node.branches {
        if probs[b.m] == 0.0 {
            continue;
        }
        let action = HierAction { ratio: representative(b.m, n), order: b.order.clone() };
        let (_, logp_l) = policy.log_prob_features(features, &action)?;
        let future = match &b.next {
            Some(next) => exact_objective(policy, next, gamma)?,
            None => 0.0,
        };
        total += probs[b.m] * logp_l.exp() * (b.reward + gamma * future);
    }
    Ok(total)
}

/// Central-difference gradient of [`exact_objective`].
pub fn exact_gradient(policy: &Policy, node: &OutcomeNode, gamma: f64, eps: f64) -> Result<Vec<f64>> {
    (0..policy.params.len())
        .into_par_iter()
        .map(|i| {
            let mut p = policy.clone();
            p.params.data[i] += eps;
            let up = exact_objective(&p, node, gamma)?;
            p.params.data[i] -= 2.0 * eps;
            let down = exact_objective(&p, node, gamma)?;
            Ok((up - down) / (2.0 * eps))
        })
        .collect()
}

/// One projection of the Monte-Carlo gradient against the exact one.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionCheck {
    pub block: String,
    pub direction: String,
    pub exact: f64,
    pub estimate: f64,
    pub std_err: f64,
}

impl ProjectionCheck {
    pub fn within(&self, z: f64) -> bool {
        (self.estimate - self.exact).abs() <= z * self.std_err
    }
}

/// Sample one trajectory by walking the outcome tree.
fn sample_tree(policy: &Policy, root: &OutcomeNode, seed: u64) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    let mut node = root;
    for t in 0.. {
        let (act, trace) = policy.act(&node.state, ActMode::Sample, rng::derive(seed, "round", t))?;
        let branch = node
            .branch(&trace.chosen)
            .ok_or_else(|| Error::InvariantViolation(format!("sampled order {:?} missing from the tree", trace.chosen)))?;
        traj.steps.push(Transition {
            state: node.state.clone(),
            action: HierAction { ratio: act.ratio, order: trace.chosen.clone() },
            reward: branch.reward,
            ret: 0.0,
            logp_h: trace.logp_h,
            logp_l: trace.logp_l,
            value_inputs: value_inputs(&node.state),
        });
        match &branch.next {
            Some(next) => node = next,
            None => break,
        }
    }
    Ok(traj)
}

/// Compare the batch-averaged policy-gradient estimator (undiscounted
/// returns, leave-one-out baseline) with the exact gradient along, for each
/// of the `h.` and `l.` parameter blocks, the exact direction and
/// `random_dirs` random unit directions. Standard errors are over batches.
pub fn check_estimator(
    policy: &Policy,
    root: &OutcomeNode,
    samples: usize,
    batch: usize,
    random_dirs: usize,
    seed: u64,
) -> Result<Vec<ProjectionCheck>> {
    if batch < 2 || samples < 2 * batch {
        return Err(Error::Parameter("need batch ≥ 2 and at least two batches".into()));
    }
    let exact = exact_gradient(policy, root, 1.0, 1e-5)?;
    let mut dirs: Vec<(String, String, Vec<f64>)> = Vec::new();
    let mut r = rng::stream(seed, "directions", 0);
    for block in ["h.", "l."] {
        let mask = policy.params.block_mask(block);
        let restricted: Vec<f64> = exact.iter().zip(&mask).map(|(g, &m)| if m { *g } else { 0.0 }).collect();
        if let Some(d) = unit(restricted) {
            dirs.push((block.into(), "exact".into(), d));
        }
        for j in 0..random_dirs {
            let raw: Vec<f64> =
                mask.iter().map(|&m| if m { StandardNormal.sample(&mut r) } else { 0.0 }).collect();
            if let Some(d) = unit(raw) {
                dirs.push((block.into(), format!("random{j}"), d));
            }
        }
    }
    let n_batches = samples / batch;
    let mut proj = vec![Vec::with_capacity(n_batches); dirs.len()];
    for b in 0..n_batches {
        let base = rng::derive(seed, "batch", b as u64);
        let mut trajs: Vec<Trajectory> = (0..batch)
            .into_par_iter()
            .map(|i| sample_tree(policy, root, rng::derive(base, "sample", i as u64)))
            .collect::<Result<_>>()?;
        for t in &mut trajs {
            t.compute_returns(1.0);
        }
        let g = hpg_gradient(policy, &trajs, true)?;
        for (p, (_, _, d)) in proj.iter_mut().zip(&dirs) {
            p.push(dot(&g, d));
        }
    }
    Ok(dirs
        .iter()
        .zip(proj)
        .map(|((block, name, d), p)| {
            let nb = p.len() as f64;
            let mean = p.iter().sum::<f64>() / nb;
            let var = p.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nb - 1.0);
            ProjectionCheck {
                block: block.clone(),
                direction: name.clone(),
                exact: dot(&exact, d),
                estimate: mean,
                std_err: (var / nb).sqrt(),
            }
        })
        .collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = dot(&v, &v).sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return None;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    Some(v)
}
