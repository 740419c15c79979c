use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::cutgen::{Category, Cut};
use crate::env::EnvConfig;
use crate::milp::{MilpInstance, Row};
use crate::neural::grad_check;

pub(crate) fn state_with_features(features: Vec<CutFeatures>) -> CutSelState {
    let inst = Arc::new(
        MilpInstance::new(vec![-1.0, -1.0], vec![Row::new(vec![2.0, 2.0], 3.0)], vec![0, 1], vec![0.0; 2], vec![1.0; 2])
            .unwrap(),
    );
    let cuts = (0..features.len())
        .map(|i| Cut::new(vec![1.0, 1.0], 1.0 + i as f64, Category::GomoryFrac, 0).unwrap())
        .collect();
    let mut s = CutSelState::with_candidates(inst, cuts, &EnvConfig::default()).unwrap();
    s.features = features;
    s
}

fn random_features(rng: &mut ChaCha8Rng, n: usize) -> Vec<CutFeatures> {
    (0..n)
        .map(|_| {
            let mut f = [0.0; N_FEATURES];
            f.iter_mut().for_each(|v| *v = rng.random_range(-1.0..2.0));
            CutFeatures { f }
        })
        .collect()
}

fn small(variant: Variant, seed: u64) -> Policy {
    Policy::new(PolicyConfig { variant, hidden: 8, heads: 2, ..PolicyConfig::default() }, seed).unwrap()
}

fn ordered_subsets(n: usize, m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for rest in ordered_subsets(n, m - 1) {
        for i in 0..n {
            if !rest.contains(&i) {
                let mut v = rest.clone();
                v.push(i);
                out.push(v);
            }
        }
    }
    out
}

fn set(p: &mut Policy, name: &str, value: f64) {
    let r = p.params.block(name);
    for range in r {
        p.params.data[range].iter_mut().for_each(|v| *v = value);
    }
}

#[test]
fn ratio_count_examples() {
    assert_eq!(ratio_to_count(4, 0.5), 2);
    assert_eq!(ratio_to_count(1, K_MAX), 1);
    assert_eq!(ratio_to_count(5, 0.4), 2);
    assert_eq!(ratio_to_count(4, 0.74), 2);
}

#[test]
fn zeroed_pointer_is_uniform_over_ordered_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for variant in [Variant::Hem, Variant::HemPp] {
        let mut p = small(variant, 1);
        set(&mut p, "l.att.v", 0.0);
        let feats = random_features(&mut rng, 4);
        for order in ordered_subsets(4, 2) {
            let (_, lp) = p.log_prob_features(&feats, &HierAction { ratio: 0.5, order }).unwrap();
            assert!((lp - (1.0f64 / 12.0).ln()).abs() < 1e-12);
        }
        for order in ordered_subsets(3, 3) {
            let (_, lp) = p.log_prob_features(&feats[..3], &HierAction { ratio: 1.0, order }).unwrap();
            assert!((lp - (1.0f64 / 6.0).ln()).abs() < 1e-12);
        }
    }
}

#[test]
fn lower_level_is_normalized() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for variant in [Variant::Hem, Variant::HemPp] {
        for seed in 0..10 {
            let p = small(variant, seed);
            for (n, m) in [(5, 2), (4, 3), (3, 1)] {
                let feats = random_features(&mut rng, n);
                let ratio = m as f64 / n as f64;
                let total: f64 = ordered_subsets(n, m)
                    .into_iter()
                    .map(|order| p.log_prob_features(&feats, &HierAction { ratio, order }).unwrap().1.exp())
                    .sum();
                assert!((total - 1.0).abs() < 1e-8, "{variant:?} n={n} m={m}: {total}");
            }
        }
    }
}

#[test]
fn log_prob_reproduces_the_decode_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ablations = [Ablation::Full, Ablation::WithoutHigher, Ablation::HemRatio(0.4)];
    for variant in [Variant::Hem, Variant::HemPp] {
        for ablation in ablations {
            let cfg = PolicyConfig { variant, ablation, hidden: 8, heads: 2 };
            let p = Policy::new(cfg, 3).unwrap();
            for seed in 0..10 {
                let n = rng.random_range(1..9);
                let feats = random_features(&mut rng, n);
                let (action, trace) = p.act_features(&feats, ActMode::Sample, seed).unwrap();
                let (lh, ll) = p.log_prob_features(&feats, &action).unwrap();
                assert!((lh - trace.logp_h).abs() < 1e-10);
                assert!((ll - trace.logp_l).abs() < 1e-10);
                assert!((trace.step_logp.iter().sum::<f64>() - trace.logp_l).abs() < 1e-12);
                assert_eq!(trace.chosen, action.order);
            }
        }
    }
}

#[test]
fn log_prob_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for variant in [Variant::Hem, Variant::HemPp] {
        let p = Policy::new(PolicyConfig { variant, hidden: 4, heads: 2, ..PolicyConfig::default() }, 4).unwrap();
        let feats = random_features(&mut rng, 4);
        let (action, _) = p.act_features(&feats, ActMode::Sample, 9).unwrap();
        let x = feature_matrix(&feats);
        let r = grad_check(&p.params, 1e-5, |t| {
            let f = forward::<rng::Rng>(t, &p.config, &x, Plan::Given(&action)).unwrap();
            t.add(f.logp_h, f.logp_l)
        });
        assert!(r.max_rel_err < 1e-4, "{variant:?}: {r:?}");
    }
}

#[test]
fn hempp_is_invariant_to_candidate_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = small(Variant::HemPp, 5);
    for seed in 0..30 {
        let n = rng.random_range(1..8);
        let feats = random_features(&mut rng, n);
        let (action, _) = p.act_features(&feats, ActMode::Sample, seed).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        // position r of the shuffled pool holds candidate perm[r]
        let shuffled: Vec<CutFeatures> = perm.iter().map(|&i| feats[i]).collect();
        let inv: Vec<usize> = (0..n).map(|i| perm.iter().position(|&p| p == i).unwrap()).collect();
        let moved = HierAction { ratio: action.ratio, order: action.order.iter().map(|&i| inv[i]).collect() };
        let a = p.log_prob_features(&feats, &action).unwrap();
        let b = p.log_prob_features(&shuffled, &moved).unwrap();
        assert!((a.0 - b.0).abs() < 1e-8 && (a.1 - b.1).abs() < 1e-8, "{a:?} {b:?}");
    }
}

#[test]
fn saturated_ratio_on_one_candidate_selects_it() {
    let mut p = small(Variant::HemPp, 6);
    let spec = p.params.spec("h.head.1.b").unwrap().offset;
    p.params.data[spec] = 50.0;
    let feats = random_features(&mut ChaCha8Rng::seed_from_u64(0), 1);
    let (a, _) = p.act_features(&feats, ActMode::Greedy, 0).unwrap();
    assert!(a.ratio >= K_MAX);
    assert_eq!(a.order, vec![0]);
}

#[test]
fn greedy_is_deterministic_and_n0_is_empty() {
    let p = small(Variant::Hem, 7);
    let feats = random_features(&mut ChaCha8Rng::seed_from_u64(1), 6);
    let a = p.act_features(&feats, ActMode::Greedy, 1).unwrap();
    let b = p.act_features(&feats, ActMode::Greedy, 2).unwrap();
    assert_eq!(a, b);
    let (empty, trace) = p.act_features(&[], ActMode::Sample, 0).unwrap();
    assert!(empty.order.is_empty());
    assert_eq!(trace.total(), 0.0);
}

#[test]
fn decodes_never_repeat_an_index() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hem = Policy::new(PolicyConfig { hidden: 4, heads: 1, ..PolicyConfig::default() }, 0).unwrap();
    let wo = Policy::new(PolicyConfig { hidden: 4, heads: 1, ablation: Ablation::WithoutHigher, ..PolicyConfig::default() }, 0)
        .unwrap();
    for seed in 0..10_000u64 {
        let n = rng.random_range(1..7);
                let feats = random_features(&mut rng, n);
        let p = if seed % 2 == 0 { &hem } else { &wo };
        let (a, _) = p.act_features(&feats, ActMode::Sample, seed).unwrap();
        let mut seen = vec![false; feats.len()];
        for &i in &a.order {
            assert!(!std::mem::replace(&mut seen[i], true));
        }
        assert_eq!(a.order.len(), ratio_to_count(feats.len(), a.ratio));
    }
}

#[test]
fn ablation_contracts() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let cfg = |ablation| PolicyConfig { ablation, hidden: 8, heads: 2, ..PolicyConfig::default() };
    let order = Policy::new(cfg(Ablation::HemRatioOrder(0.5)), 1).unwrap();
    let ratio = Policy::new(cfg(Ablation::HemRatio(0.3)), 1).unwrap();
    for seed in 0..50 {
        let n = rng.random_range(1..10);
                let feats = random_features(&mut rng, n);
        let (a, _) = order.act_features(&feats, ActMode::Sample, seed).unwrap();
        assert!(a.order.windows(2).all(|w| w[0] < w[1]));
        let (b, _) = ratio.act_features(&feats, ActMode::Sample, seed).unwrap();
        assert_eq!(b.order.len(), ratio_to_count(feats.len(), 0.3));
    }
    // an end token that dominates every candidate stops immediately
    let mut wo = Policy::new(cfg(Ablation::WithoutHigher), 1).unwrap();
    let h = wo.config.hidden;
    set(&mut wo, "l.end", 100.0);
    set(&mut wo, "l.att.v", 100.0);
    set(&mut wo, "l.att.w1", 0.0);
    for i in 0..h {
        let off = wo.params.spec("l.att.w1").unwrap().offset;
        wo.params.data[off + i * h + i] = 1.0;
    }
    let feats = random_features(&mut rng, 5);
    let (a, trace) = wo.act_features(&feats, ActMode::Greedy, 0).unwrap();
    assert!(a.order.is_empty());
    assert_eq!(trace.step_logp.len(), 1);
}

#[test]
fn inconsistent_actions_are_rejected() {
    let p = small(Variant::Hem, 8);
    let feats = random_features(&mut ChaCha8Rng::seed_from_u64(2), 4);
    for order in [vec![0], vec![0, 0], vec![0, 4]] {
        let r = p.log_prob_features(&feats, &HierAction { ratio: 0.5, order });
        assert!(matches!(r, Err(Error::ActionContract(_))));
    }
}

#[test]
fn heuristic_examples() {
    let mut feats = vec![CutFeatures { f: [0.0; N_FEATURES] }; 3];
    for (f, v) in feats.iter_mut().zip([0.9, 0.1, 0.5]) {
        f.f[CutFeatures::NORMALIZED_VIOLATION] = v;
    }
    let s = state_with_features(feats.clone());
    assert!(heuristic_act(&s, Heuristic::NoCuts, 0).order.is_empty());
    assert_eq!(heuristic_act(&s, Heuristic::Nv { ratio: 1.0 }, 0).order, vec![0, 2, 1]);
    let a = heuristic_act(&s, Heuristic::RandomAll, 3);
    assert_eq!(a, heuristic_act(&s, Heuristic::RandomAll, 3));
    let mut sorted = a.order.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, vec![0, 1, 2]);
    let rnv = heuristic_act(&s, Heuristic::RandomNv { ratio: 0.67 }, 1);
    let mut kept = rnv.order.clone();
    kept.sort_unstable();
    assert_eq!(kept, vec![0, 2]);

    let sbp = Sbp::linear(std::array::from_fn(|i| if i == CutFeatures::NORMALIZED_VIOLATION { 1.0 } else { 0.0 }), 1.0);
    assert_eq!(sbp.act(&s).order, vec![0, 2, 1]);
    let ties = state_with_features(vec![feats[0]; 4]);
    assert_eq!(sbp.act(&ties).order, vec![0, 1, 2, 3]);
    assert_eq!(heuristic_act(&ties, Heuristic::DefaultLike { ratio: 0.5 }, 0).order, vec![0, 1]);
}

#[test]
fn policy_checkpoint_round_trip() {
    let p = small(Variant::HemPp, 9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.bin");
    p.save(&path).unwrap();
    assert_eq!(Policy::load(&path).unwrap(), p);
    assert!(p.value(&[0.1; VALUE_INPUTS]).is_finite());
}
