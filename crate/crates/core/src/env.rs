//! The cut-selection decision process.
//!
//! A state holds the current relaxation, its LP optimum and a pool of
//! candidate cuts with features. An action is a ratio `k` plus an ordered
//! list of `⌊N·k⌋` distinct candidate indices; the selected cuts are appended
//! in that order and the LP is re-solved. The reward is the dual-bound
//! improvement `z_new − z_old ≥ 0` (equivalently, the negated
//! "negative improvement"), minus an optional per-cut cost.

use std::collections::BTreeSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use crate::bnb::WorkClock;
use crate::bnb::{solve_bnb_with, BnbOptions};
use crate::cutgen::{cover_cuts, decoy_cuts, featurize, gomory_cuts, Cut, CutFeatures};
use crate::error::{Error, Result};
use crate::milp::{build_relaxation, pd_integral, BoundTrace, LpRelaxation, MilpInstance};
use crate::rng;
use crate::simplex::{solve, LpSolution, LpStatus};
use crate::tol;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum RewardKind {
    #[default]
    NegDualBoundDelta,
    NegPdIntegral,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub rounds: usize,
    pub reward_kind: RewardKind,
    pub gamma: f64,
    pub bnb_node_limit: usize,
    pub gomory: bool,
    pub cover: bool,
    /// Decoys generated per real candidate; pools with decoys are shuffled.
    pub decoys_per_cut: usize,
    /// Subtracted from the reward once per selected cut.
    pub cut_cost: f64,
    /// Real candidates kept per round (decoys come on top).
    pub max_candidates: usize,
    pub clock: WorkClock,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            rounds: 1,
            reward_kind: RewardKind::NegDualBoundDelta,
            gamma: 1.0,
            bnb_node_limit: 200,
            gomory: true,
            cover: true,
            decoys_per_cut: 0,
            cut_cost: 0.0,
            max_candidates: 64,
            clock: WorkClock::LpSolves,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.rounds < 1 {
            errs.push("env.rounds: must be at least 1".to_string());
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            errs.push(format!("env.gamma: {} is outside (0, 1]", self.gamma));
        }
        if self.bnb_node_limit < 1 {
            errs.push("env.bnb_node_limit: must be at least 1".to_string());
        }
        if !(self.cut_cost >= 0.0 && self.cut_cost.is_finite()) {
            errs.push("env.cut_cost: must be a nonnegative number".to_string());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Fixed PD-integral horizon: every LP solve an episode can perform.
    pub fn horizon(&self) -> f64 {
        (1 + self.rounds + self.bnb_node_limit) as f64
    }
}

/// Ratio `k` and the ordered indices it selects.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierAction {
    pub ratio: f64,
    pub order: Vec<usize>,
}

impl HierAction {
    pub fn empty() -> Self {
        Self { ratio: 0.0, order: Vec::new() }
    }
}

/// Number of cuts a ratio selects out of `n`: `⌊n·k⌋`, with values within
/// the integrality tolerance of an integer snapped onto it. Ratios at the
/// sampling clamp (`1e-6`, `1 − 1e-6`) count as 0 and 1.
pub fn ratio_to_count(n: usize, k: f64) -> usize {
    if k >= crate::neural::K_MAX {
        return n;
    }
    if k <= crate::neural::K_MIN {
        return 0;
    }
    tol::floor_snap(n as f64 * k).max(0.0) as usize
}

#[derive(Clone, Debug)]
pub struct CutSelState {
    pub relaxation: LpRelaxation,
    pub candidates: Vec<Cut>,
    pub features: Vec<CutFeatures>,
    pub lp_sol: Arc<LpSolution>,
    pub round: usize,
    pub rounds: usize,
    /// LP optimum of the instance before any cut.
    pub root_obj: f64,
    pub lp_solves: usize,
    pub pivots: usize,
    /// Root-phase bound events (one per LP solve).
    pub trace: BoundTrace,
    seen: BTreeSet<Vec<i64>>,
    seed: u64,
}

impl CutSelState {
    pub fn n_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn obj(&self) -> f64 {
        self.lp_sol.obj
    }

    pub fn instance(&self) -> &MilpInstance {
        self.relaxation.base()
    }

    pub fn dual_improvement(&self) -> f64 {
        self.lp_sol.obj - self.root_obj
    }

    /// A round-0 state with a hand-picked candidate pool.
    pub fn with_candidates(inst: Arc<MilpInstance>, candidates: Vec<Cut>, cfg: &EnvConfig) -> Result<Self> {
        let mut state = reset(inst, &EnvConfig { gomory: false, cover: false, decoys_per_cut: 0, ..cfg.clone() }, 0)?;
        let features = candidates
            .iter()
            .map(|c| featurize(c, &state.lp_sol, state.instance()))
            .collect::<Result<Vec<_>>>()?;
        state.candidates = candidates;
        state.features = features;
        Ok(state)
    }

    fn clock(&self, clock: WorkClock) -> f64 {
        match clock {
            WorkClock::LpSolves => (self.lp_solves - 1) as f64,
            WorkClock::Pivots => self.pivots as f64,
        }
    }
}

/// Solve the root LP and build the first candidate pool.
pub fn reset(inst: Arc<MilpInstance>, cfg: &EnvConfig, seed: u64) -> Result<CutSelState> {
    cfg.validate()?;
    let relaxation = build_relaxation(inst);
    let sol = solve(&relaxation.to_lp())?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::EpisodeInvalid(format!("root LP is {:?}", sol.status)));
    }
    let mut state = CutSelState {
        relaxation,
        candidates: Vec::new(),
        features: Vec::new(),
        root_obj: sol.obj,
        lp_solves: 1,
        pivots: sol.pivots,
        lp_sol: Arc::new(sol),
        round: 0,
        rounds: cfg.rounds,
        trace: BoundTrace::new(),
        seen: BTreeSet::new(),
        seed,
    };
    let primal = state.instance().trivial_primal_bound();
    let work = state.clock(cfg.clock);
    state.trace.push(work, primal, state.lp_sol.obj)?;
    regenerate(&mut state, cfg)?;
    Ok(state)
}

fn regenerate(state: &mut CutSelState, cfg: &EnvConfig) -> Result<()> {
    let sol = &state.lp_sol;
    let mut real = Vec::new();
    if cfg.gomory {
        real.extend(gomory_cuts(sol, &state.relaxation, state.round)?);
    }
    if cfg.cover {
        real.extend(cover_cuts(state.instance(), sol, state.round));
    }
    let mut pool = Vec::new();
    let mut keys = BTreeSet::new();
    for cut in real {
        if pool.len() >= cfg.max_candidates {
            break;
        }
        let key = cut.dedup_key();
        if state.seen.contains(&key) || !keys.insert(key) {
            continue;
        }
        pool.push(cut);
    }
    if cfg.decoys_per_cut > 0 && !pool.is_empty() {
        let mut r = rng::stream(state.seed, "decoys", state.round as u64);
        let parents = pool.clone();
        for parent in &parents {
            pool.extend(decoy_cuts(parent, state.instance(), &sol.x, cfg.decoys_per_cut, &mut r));
        }
        pool.shuffle(&mut r);
    }
    let features = pool
        .iter()
        .map(|c| featurize(c, sol, state.instance()))
        .collect::<Result<Vec<_>>>()?;
    state.candidates = pool;
    state.features = features;
    Ok(())
}

/// Check an action against a state: distinct in-range indices, exactly
/// `⌊N·k⌋` of them.
pub fn validate_action(state: &CutSelState, action: &HierAction) -> Result<()> {
    let n = state.n_candidates();
    if !(0.0..=1.0).contains(&action.ratio) {
        return Err(Error::ActionContract(format!("ratio {} outside [0, 1]", action.ratio)));
    }
    let m = ratio_to_count(n, action.ratio);
    if action.order.len() != m {
        return Err(Error::ActionContract(format!(
            "ratio {} selects {m} of {n} cuts but the order has {}",
            action.ratio,
            action.order.len()
        )));
    }
    let mut seen = vec![false; n];
    for &i in &action.order {
        if i >= n {
            return Err(Error::ActionContract(format!("index {i} out of range for {n} candidates")));
        }
        if std::mem::replace(&mut seen[i], true) {
            return Err(Error::ActionContract(format!("index {i} selected twice")));
        }
    }
    Ok(())
}

/// Per-round episode log entry (one JSON line each).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: usize,
    pub n: usize,
    pub k: f64,
    pub m: usize,
    pub order: Vec<usize>,
    pub reward: f64,
    pub work_units: f64,
}

#[derive(Clone, Debug)]
pub struct Step {
    pub state: CutSelState,
    pub reward: f64,
    pub terminal: bool,
    pub log: RoundLog,
}

/// Append the selected cuts in action order, re-solve, and move to the next
/// round (regenerating candidates) unless the episode ends.
pub fn step(state: &CutSelState, action: &HierAction, cfg: &EnvConfig) -> Result<Step> {
    validate_action(state, action)?;
    let mut next = state.clone();
    let m = action.order.len();
    if m > 0 {
        for &i in &action.order {
            let cut = state.candidates[i].clone();
            next.seen.insert(cut.dedup_key());
            next.relaxation.add_cut(cut)?;
        }
        let sol = solve(&next.relaxation.to_lp())?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::EpisodeInvalid(format!("LP became {:?} after adding cuts", sol.status)));
        }
        next.lp_solves += 1;
        next.pivots += sol.pivots;
        // the bound can only move up; absorb round-off
        let obj = sol.obj.max(state.lp_sol.obj);
        let mut sol = sol;
        sol.obj = obj;
        next.lp_sol = Arc::new(sol);
        let primal = next.instance().trivial_primal_bound();
        let work = next.clock(cfg.clock);
        next.trace.push(work, primal, obj)?;
    }
    let improvement = next.lp_sol.obj - state.lp_sol.obj;
    next.round += 1;
    next.candidates.clear();
    next.features.clear();
    if next.round < cfg.rounds {
        regenerate(&mut next, cfg)?;
    }
    let terminal = next.round >= cfg.rounds || next.candidates.is_empty();
    let mut reward = match cfg.reward_kind {
        RewardKind::NegDualBoundDelta => improvement,
        RewardKind::NegPdIntegral if terminal => -finish(&next, cfg)?.0,
        RewardKind::NegPdIntegral => 0.0,
    };
    reward -= cfg.cut_cost * m as f64;
    let log = RoundLog {
        round: state.round,
        n: state.n_candidates(),
        k: action.ratio,
        m,
        order: action.order.clone(),
        reward,
        work_units: next.clock(cfg.clock),
    };
    Ok(Step { state: next, reward, terminal, log })
}

/// Run branch-and-bound on the final relaxation and integrate the combined
/// root-phase and tree trace. Returns `(pd_integral, final work units)`.
fn finish(state: &CutSelState, cfg: &EnvConfig) -> Result<(f64, f64)> {
    let offset = state.clock(cfg.clock) + 1.0;
    let opts = BnbOptions { node_limit: cfg.bnb_node_limit, clock: cfg.clock, work_offset: offset };
    let tree = solve_bnb_with(&state.relaxation, opts)?;
    let mut trace = BoundTrace::new();
    for e in state.trace.events() {
        trace.push(e.work_units, e.primal, e.dual)?;
    }
    let last_dual = trace.last().map_or(f64::NEG_INFINITY, |e| e.dual);
    for e in tree.trace.events() {
        // the tree re-derives the root bound; never report it below the
        // bound already certified in the root phase
        trace.push(e.work_units, e.primal, e.dual.max(last_dual).min(e.primal))?;
    }
    let end = trace.last().map_or(0.0, |e| e.work_units);
    let horizon = match cfg.clock {
        WorkClock::LpSolves => cfg.horizon(),
        WorkClock::Pivots => end,
    };
    Ok((pd_integral(&trace, horizon.max(end))?, end))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub dual_improvement: f64,
    pub pd_integral: f64,
    pub cuts_added: usize,
    pub work_units: f64,
    pub total_reward: f64,
    pub mean_ratio: f64,
    pub log: Vec<RoundLog>,
}

/// Play the rounds with `policy`, then run the budgeted branch-and-bound.
/// `policy` receives the state and a per-round seed.
pub fn evaluate_episode<F>(inst: Arc<MilpInstance>, mut policy: F, cfg: &EnvConfig, seed: u64) -> Result<Metrics>
where
    F: FnMut(&CutSelState, u64) -> Result<HierAction>,
{
    let mut state = reset(inst, cfg, seed)?;
    let mut log = Vec::new();
    let mut total_reward = 0.0;
    let mut ratios = Vec::new();
    while state.round < cfg.rounds && state.n_candidates() > 0 {
        let action = policy(&state, rng::derive(seed, "act", state.round as u64))?;
        ratios.push(action.ratio);
        let out = step(&state, &action, &EnvConfig { reward_kind: RewardKind::NegDualBoundDelta, ..cfg.clone() })?;
        total_reward += out.reward;
        log.push(out.log);
        state = out.state;
        if out.terminal {
            break;
        }
    }
    let (pd, work) = finish(&state, cfg)?;
    if cfg.reward_kind == RewardKind::NegPdIntegral {
        total_reward = -pd - cfg.cut_cost * state.relaxation.extra_rows().len() as f64;
    }
    Ok(Metrics {
        dual_improvement: state.dual_improvement(),
        pd_integral: pd,
        cuts_added: state.relaxation.extra_rows().len(),
        work_units: work,
        total_reward,
        mean_ratio: if ratios.is_empty() { 0.0 } else { ratios.iter().sum::<f64>() / ratios.len() as f64 },
        log,
    })
}

pub fn log_to_jsonl(log: &[RoundLog]) -> String {
    log.iter()
        .map(|l| serde_json::to_string(l).expect("log serializes") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::milp::Row;

    fn toy() -> Arc<MilpInstance> {
        Arc::new(
            MilpInstance::new(
                vec![-1.0, -1.0],
                vec![Row::new(vec![3.0, 2.0], 6.0), Row::new(vec![-3.0, 2.0], 0.0)],
                vec![0, 1],
                vec![0.0; 2],
                vec![3.0; 2],
            )
            .unwrap(),
        )
    }

    fn knapsack() -> Arc<MilpInstance> {
        Arc::new(
            MilpInstance::new(
                vec![-5.0, -4.0, -3.0, -6.0, -2.0],
                vec![
                    Row::new(vec![4.0, 3.0, 2.0, 5.0, 1.0], 7.0),
                    Row::new(vec![1.0, 2.0, 3.0, 1.0, 2.0], 5.0),
                ],
                (0..5).collect(),
                vec![0.0; 5],
                vec![1.0; 5],
            )
            .unwrap(),
        )
    }

    #[test]
    fn integral_root_ends_immediately() {
        let inst = Arc::new(
            MilpInstance::new(vec![-1.0], vec![Row::new(vec![1.0], 2.0)], vec![0], vec![0.0], vec![3.0]).unwrap(),
        );
        let s = reset(inst.clone(), &EnvConfig::default(), 0).unwrap();
        assert_eq!(s.n_candidates(), 0);
        let m = evaluate_episode(inst, |_, _| Ok(HierAction::empty()), &EnvConfig::default(), 0).unwrap();
        assert_eq!(m.total_reward, 0.0);
        assert!(m.log.is_empty());
    }

    #[test]
    fn toy_has_a_violated_gomory_cut() {
        let s = reset(toy(), &EnvConfig::default(), 0).unwrap();
        assert!(s.candidates.iter().any(|c| c.category == crate::Category::GomoryFrac
            && c.violation(&s.lp_sol.x) > 1e-6));
    }

    #[test]
    fn same_seed_same_state() {
        let cfg = EnvConfig { decoys_per_cut: 2, ..EnvConfig::default() };
        let a = reset(knapsack(), &cfg, 9).unwrap();
        let b = reset(knapsack(), &cfg, 9).unwrap();
        assert_eq!(a.candidates, b.candidates);
        assert_eq!(a.features, b.features);
        assert_eq!(a.lp_sol.x, b.lp_sol.x);
    }

    #[test]
    fn empty_action_and_violated_cut() {
        let cfg = EnvConfig::default();
        let s = reset(toy(), &cfg, 0).unwrap();
        let out = step(&s, &HierAction::empty(), &cfg).unwrap();
        assert_eq!(out.reward, 0.0);
        assert!(out.terminal);
        assert_eq!(out.state.obj(), s.obj());

        let n = s.n_candidates();
        let i = (0..n).find(|&i| s.candidates[i].violation(&s.lp_sol.x) > 1e-6).unwrap();
        let ratio = 1.0 / n as f64;
        let out = step(&s, &HierAction { ratio, order: vec![i] }, &cfg).unwrap();
        assert!(out.reward > 1e-9);
    }

    #[test]
    fn contract_violations() {
        let cfg = EnvConfig::default();
        let s = reset(knapsack(), &cfg, 0).unwrap();
        let n = s.n_candidates();
        assert!(n >= 2, "{n}");
        let k = 2.0 / n as f64;
        for order in [vec![0, 0], vec![0, n], vec![0]] {
            assert!(matches!(
                step(&s, &HierAction { ratio: k, order }, &cfg),
                Err(Error::ActionContract(_))
            ));
        }
    }

    #[test]
    fn permutations_reach_the_same_bound() {
        let cfg = EnvConfig::default();
        let s = reset(knapsack(), &cfg, 0).unwrap();
        let n = s.n_candidates();
        let m = n.min(3);
        let k = m as f64 / n as f64;
        let base: Vec<usize> = (0..m).collect();
        let mut rev = base.clone();
        rev.reverse();
        let a = step(&s, &HierAction { ratio: k, order: base }, &cfg).unwrap();
        let b = step(&s, &HierAction { ratio: k, order: rev }, &cfg).unwrap();
        assert!((a.state.obj() - b.state.obj()).abs() < 1e-7);
    }

    #[test]
    fn multi_round_rewards_telescope() {
        let cfg = EnvConfig { rounds: 3, ..EnvConfig::default() };
        let select_all = |s: &CutSelState, _| {
            Ok(HierAction { ratio: 1.0, order: (0..s.n_candidates()).collect() })
        };
        let m = evaluate_episode(knapsack(), select_all, &cfg, 1).unwrap();
        assert!((m.total_reward - m.dual_improvement).abs() < 1e-12);
        assert!(m.dual_improvement >= 0.0);
        let mut prev = f64::NEG_INFINITY;
        for l in &m.log {
            assert!(l.reward >= -1e-7);
            assert!(l.work_units >= prev);
            prev = l.work_units;
        }
        let again = evaluate_episode(knapsack(), select_all, &cfg, 1).unwrap();
        assert_eq!(m, again);
        let none = evaluate_episode(knapsack(), |_, _| Ok(HierAction::empty()), &cfg, 1).unwrap();
        assert_eq!(none.dual_improvement, 0.0);
        assert!(m.pd_integral <= none.pd_integral + 1e-9 || m.cuts_added > 0);
        assert!(log_to_jsonl(&m.log).lines().count() == m.log.len());
    }

    #[test]
    fn config_validation_lists_fields() {
        let cfg = EnvConfig { rounds: 0, gamma: 1.5, ..EnvConfig::default() };
        match cfg.validate() {
            Err(Error::Config(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
