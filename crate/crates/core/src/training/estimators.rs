use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::env::{step, CutSelState, EnvConfig, HierAction};
use crate::error::Result;
use crate::neural::Tape;
use crate::policy::{feature_matrix, forward, value_inputs, value_on, ActMode, Plan, Policy};
use crate::rng;

#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Arc<CutSelState>,
    pub action: HierAction,
    pub reward: f64,
    /// Discounted return from this step on.
    pub ret: f64,
    pub logp_h: f64,
    pub logp_l: f64,
    pub value_inputs: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Trajectory {
    pub steps: Vec<Transition>,
}

impl Trajectory {
    pub fn compute_returns(&mut self, gamma: f64) {
        let rewards: Vec<f64> = self.steps.iter().map(|s| s.reward).collect();
        for (s, g) in self.steps.iter_mut().zip(returns(&rewards, gamma)) {
            s.ret = g;
        }
    }
}

/// `G_t = Σ_{j≥t} γ^{j−t} r_j`.
pub fn returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `b_i = mean of the other entries`; independent of sample `i`, so
/// subtracting it keeps the estimator unbiased.
pub fn loo_baseline(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let total: f64 = values.iter().sum();
    values.iter().map(|v| (total - v) / (n - 1) as f64).collect()
}

/// PPO clipping: `1+ε` when `adv > 0` and `r ≥ 1+ε`, `1−ε` when `adv < 0`
/// and `r ≤ 1−ε`, otherwise `r`.
pub fn clip_ratio(r: f64, adv: f64, eps: f64) -> f64 {
    if adv > 0.0 && r >= 1.0 + eps {
        1.0 + eps
    } else if adv < 0.0 && r <= 1.0 - eps {
        1.0 - eps
    } else {
        r
    }
}

/// Sample `batch` trajectories from uniformly drawn roots.
pub fn collect(
    policy: &Policy,
    roots: &[Arc<CutSelState>],
    env: &EnvConfig,
    batch: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let mut pick = rng::stream(seed, "pick", 0);
    let starts: Vec<usize> = (0..batch).map(|_| pick.random_range(0..roots.len())).collect();
    starts
        .par_iter()
        .enumerate()
        .map(|(i, &r)| rollout(policy, roots[r].clone(), env, rng::derive(seed, "sample", i as u64)))
        .collect()
}

fn rollout(policy: &Policy, root: Arc<CutSelState>, env: &EnvConfig, seed: u64) -> Result<Trajectory> {
    let mut traj = Trajectory::default();
    let mut state = root;
    for t in 0..env.rounds {
        let (act, trace) = policy.act(&state, ActMode::Sample, rng::derive(seed, "round", t as u64))?;
        // train on the decoded sequence even when the policy sorts it for use
        let action = HierAction { ratio: act.ratio, order: trace.chosen.clone() };
        let out = step(&state, &action, env)?;
        traj.steps.push(Transition {
            value_inputs: value_inputs(&state),
            state,
            action,
            reward: out.reward,
            ret: 0.0,
            logp_h: trace.logp_h,
            logp_l: trace.logp_l,
        });
        if out.terminal {
            break;
        }
        state = Arc::new(out.state);
    }
    Ok(traj)
}

/// `∇θ (log π^h(k|s) + log π^l(a|s,k))` over the whole parameter vector.
pub fn score_gradient(policy: &Policy, state: &CutSelState, action: &HierAction) -> Result<Vec<f64>> {
    let x = feature_matrix(&state.features);
    let mut tape = Tape::new(&policy.params);
    let f = forward::<rng::Rng>(&mut tape, &policy.config, &x, Plan::Given(action))?;
    let total = tape.add(f.logp_h, f.logp_l);
    tape.backward(total);
    Ok(tape.param_grads())
}

/// `(1/denom) Σ w_i ∇θ log π(a_i|s_i)`, skipping zero weights.
pub fn weighted_score_gradient(
    policy: &Policy,
    items: &[(&CutSelState, &HierAction, f64)],
    denom: f64,
) -> Result<Vec<f64>> {
    let parts: Vec<Option<Vec<f64>>> = items
        .par_iter()
        .map(|(s, a, w)| {
            if *w == 0.0 {
                Ok(None)
            } else {
                score_gradient(policy, s, a).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let mut g = vec![0.0; policy.params.len()];
    for ((_, _, w), part) in items.iter().zip(parts) {
        if let Some(p) = part {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += w * pi;
            }
        }
    }
    g.iter_mut().for_each(|v| *v /= denom);
    Ok(g)
}

/// Monte-Carlo hierarchical policy gradient on returns already stored in
/// the trajectories. With `baseline`, the return at step `t` is reduced by
/// the mean return at step `t` of the other trajectories that reached it.
/// With one round this is the one-round estimator.
pub fn hpg_gradient(policy: &Policy, trajs: &[Trajectory], baseline: bool) -> Result<Vec<f64>> {
    let horizon = trajs.iter().map(|t| t.steps.len()).max().unwrap_or(0);
    let mut weights: Vec<Vec<f64>> = trajs.iter().map(|t| t.steps.iter().map(|s| s.ret).collect()).collect();
    if baseline {
        for t in 0..horizon {
            let who: Vec<usize> = (0..trajs.len()).filter(|&i| trajs[i].steps.len() > t).collect();
            let vals: Vec<f64> = who.iter().map(|&i| trajs[i].steps[t].ret).collect();
            for (&i, b) in who.iter().zip(loo_baseline(&vals)) {
                weights[i][t] -= b;
            }
        }
    }
    let items: Vec<(&CutSelState, &HierAction, f64)> = trajs
        .iter()
        .zip(&weights)
        .flat_map(|(t, w)| t.steps.iter().zip(w).map(|(s, w)| (s.state.as_ref(), &s.action, *w)))
        .collect();
    weighted_score_gradient(policy, &items, trajs.len().max(1) as f64)
}

/// Gradient of the clipped surrogate `Σ min(r·Â, clip(r)·Â) / B` with
/// `Â = G − V_old(s)`. Returns `(gradient, dropped, evaluated)`; samples
/// whose ratio is not finite are dropped.
pub fn ppo_gradient(
    policy: &Policy,
    trajs: &[Trajectory],
    values: &[Vec<f64>],
    eps: f64,
) -> Result<(Vec<f64>, usize, usize)> {
    let items: Vec<(&Transition, f64)> = trajs
        .iter()
        .zip(values)
        .flat_map(|(t, v)| t.steps.iter().zip(v).map(|(s, v)| (s, s.ret - v)))
        .collect();
    let parts: Vec<(Option<Vec<f64>>, bool)> = items
        .par_iter()
        .map(|(s, adv)| {
            let x = feature_matrix(&s.state.features);
            let mut tape = Tape::new(&policy.params);
            let f = forward::<rng::Rng>(&mut tape, &policy.config, &x, Plan::Given(&s.action))?;
            let lp = tape.add(f.logp_h, f.logp_l);
            let ratio = (tape.scalar(lp) - s.logp_h - s.logp_l).exp();
            if !ratio.is_finite() {
                return Ok((None, true));
            }
            if *adv == 0.0 || clip_ratio(ratio, *adv, eps) != ratio {
                return Ok((None, false));
            }
            // d(r·Â) = Â·r·∇log π
            tape.backward(lp);
            let w = adv * ratio;
            Ok((Some(tape.param_grads().into_iter().map(|g| g * w).collect()), false))
        })
        .collect::<Result<_>>()?;
    let mut g = vec![0.0; policy.params.len()];
    let mut dropped = 0;
    for (part, bad) in &parts {
        dropped += usize::from(*bad);
        if let Some(p) = part {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi += pi;
            }
        }
    }
    let b = trajs.len().max(1) as f64;
    g.iter_mut().for_each(|v| *v /= b);
    Ok((g, dropped, parts.len()))
}

/// Ascent direction of `−mean (V(s) − G)²` (nonzero only on `v.` parameters).
pub fn value_gradient(policy: &Policy, trajs: &[Trajectory]) -> Result<Vec<f64>> {
    let items: Vec<&Transition> = trajs.iter().flat_map(|t| &t.steps).collect();
    if items.is_empty() {
        return Ok(vec![0.0; policy.params.len()]);
    }
    let parts: Vec<Vec<f64>> = items
        .par_iter()
        .map(|s| {
            let mut tape = Tape::new(&policy.params);
            let v = value_on(&mut tape, &s.value_inputs);
            let d = tape.affine(v, 1.0, -s.ret);
            let l = tape.square(d);
            tape.backward(l);
            tape.param_grads()
        })
        .collect();
    let mut g = vec![0.0; policy.params.len()];
    for p in parts {
        for (gi, pi) in g.iter_mut().zip(p) {
            *gi -= pi;
        }
    }
    let n = items.len() as f64;
    g.iter_mut().for_each(|v| *v /= n);
    Ok(g)
}
