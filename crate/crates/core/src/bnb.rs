//! Best-first branch-and-bound over an LP relaxation, used as a deterministic
//! solver proxy for bound traces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::milp::{BoundTrace, LpRelaxation};
use crate::simplex::{solve, LpStatus};
use crate::tol;

/// What advances the work-unit clock.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WorkClock {
    /// One unit per LP solve.
    #[default]
    LpSolves,
    /// One unit per simplex pivot.
    Pivots,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BnbNode {
    pub lb: Vec<f64>,
    pub ub: Vec<f64>,
    pub depth: usize,
    pub parent_bound: f64,
}

#[derive(Clone, Debug)]
pub struct BnbResult {
    pub incumbent: Option<(f64, Vec<f64>)>,
    pub trace: BoundTrace,
    pub nodes: usize,
    pub lp_solves: usize,
    pub pivots: usize,
    /// The tree was exhausted, so the incumbent (if any) is optimal.
    pub optimal: bool,
}

impl BnbResult {
    pub fn gap(&self) -> f64 {
        let last = self.trace.last().expect("trace has the root event");
        last.primal - last.dual
    }
}

#[derive(Clone, Copy, Debug)]
pub struct BnbOptions {
    pub node_limit: usize,
    pub clock: WorkClock,
    /// Clock value of the first event.
    pub work_offset: f64,
}

impl BnbOptions {
    pub fn new(node_limit: usize) -> Self {
        Self { node_limit, clock: WorkClock::LpSolves, work_offset: 0.0 }
    }
}

struct Open {
    bound: f64,
    seq: usize,
    node: BnbNode,
}

impl PartialEq for Open {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Open {}
impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Open {
    // BinaryHeap is a max-heap: smallest bound, then oldest, pops first
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

pub fn solve_bnb(rel: &LpRelaxation, node_limit: usize) -> Result<BnbResult> {
    solve_bnb_with(rel, BnbOptions::new(node_limit))
}

/// Best-first search (ties FIFO), most-fractional branching. Only
/// LP-integral nodes update the incumbent. An event is recorded after every
/// processed node.
pub fn solve_bnb_with(rel: &LpRelaxation, opts: BnbOptions) -> Result<BnbResult> {
    let inst = rel.base();
    let trivial = inst.trivial_primal_bound();
    let mut heap = BinaryHeap::new();
    let mut seq = 0;
    heap.push(Open {
        bound: f64::NEG_INFINITY,
        seq,
        node: BnbNode { lb: inst.lb().to_vec(), ub: inst.ub().to_vec(), depth: 0, parent_bound: f64::NEG_INFINITY },
    });
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut trace = BoundTrace::new();
    let (mut nodes, mut lp_solves, mut pivots) = (0, 0, 0);
    let mut last_dual = f64::NEG_INFINITY;

    while nodes < opts.node_limit {
        let Some(open) = heap.pop() else { break };
        let best = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        if open.bound >= best - tol::CMP {
            continue;
        }
        let node = open.node;
        let sol = solve(&rel.to_lp_with_bounds(&node.lb, &node.ub))?;
        nodes += 1;
        lp_solves += 1;
        pivots += sol.pivots;
        if sol.status == LpStatus::Optimal && sol.obj < best - tol::CMP {
            let branch = most_fractional(&sol.x, inst.int_idx());
            match branch {
                None => incumbent = Some((sol.obj, sol.x.clone())),
                Some(j) => {
                    let v = sol.x[j];
                    let mut down = node.clone();
                    down.ub[j] = v.floor();
                    down.depth += 1;
                    down.parent_bound = sol.obj;
                    let mut up = node;
                    up.lb[j] = v.ceil();
                    up.depth += 1;
                    up.parent_bound = sol.obj;
                    for child in [down, up] {
                        seq += 1;
                        heap.push(Open { bound: sol.obj, seq, node: child });
                    }
                }
            }
        }
        let primal = incumbent.as_ref().map_or(trivial, |(v, _)| *v);
        let open_min = heap.iter().map(|o| o.bound).fold(f64::INFINITY, f64::min);
        let dual = open_min.min(primal).max(last_dual);
        last_dual = dual;
        let work = match opts.clock {
            WorkClock::LpSolves => (lp_solves - 1) as f64,
            WorkClock::Pivots => pivots as f64,
        };
        trace.push(opts.work_offset + work, primal, dual)?;
    }
    let best = incumbent.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
    let optimal = heap.iter().all(|o| o.bound >= best - tol::CMP);
    Ok(BnbResult { incumbent, trace, nodes, lp_solves, pivots, optimal })
}

fn most_fractional(x: &[f64], ints: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &j in ints {
        if tol::is_integral(x[j]) {
            continue;
        }
        let f = tol::frac(x[j]);
        let score = f.min(1.0 - f);
        if best.is_none_or(|(_, s)| score > s + 1e-12) {
            best = Some((j, score));
        }
    }
    best.map(|(j, _)| j)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::milp::{build_relaxation, milp_optimum_by_enumeration, MilpInstance, Row, DEFAULT_BUDGET};
    use rand::{Rng, SeedableRng};

    fn toy() -> MilpInstance {
        MilpInstance::new(
            vec![-1.0, -1.0],
            vec![Row::new(vec![3.0, 2.0], 6.0), Row::new(vec![-3.0, 2.0], 0.0)],
            vec![0, 1],
            vec![0.0; 2],
            vec![3.0; 2],
        )
        .unwrap()
    }

    #[test]
    fn integral_root_is_one_node() {
        let inst = MilpInstance::new(
            vec![-1.0, -1.0],
            vec![Row::new(vec![1.0, 1.0], 2.0)],
            vec![0, 1],
            vec![0.0; 2],
            vec![3.0; 2],
        )
        .unwrap();
        let r = solve_bnb(&build_relaxation(Arc::new(inst)), 100).unwrap();
        assert_eq!(r.nodes, 1);
        assert!(r.optimal);
        assert_eq!(r.gap(), 0.0);
    }

    #[test]
    fn toy_matches_enumeration() {
        let r = solve_bnb(&build_relaxation(Arc::new(toy())), 1000).unwrap();
        assert!(r.optimal);
        assert_eq!(r.incumbent.unwrap().0, -2.0);
    }

    #[test]
    fn one_node_reports_the_root_bound() {
        let rel = build_relaxation(Arc::new(toy()));
        let root = solve(&rel.to_lp()).unwrap();
        let r = solve_bnb(&rel, 1).unwrap();
        assert_eq!(r.trace.events().len(), 1);
        assert!((r.trace.events()[0].dual - root.obj).abs() < 1e-12);
        assert_eq!(r.trace.events()[0].work_units, 0.0);
    }

    fn random_instance(rng: &mut impl Rng) -> MilpInstance {
        let n = rng.random_range(2..=10);
        let m = rng.random_range(1..=4);
        let mixed = rng.random_bool(0.3);
        let rows = (0..m)
            .map(|_| {
                let a: Vec<f64> = (0..n).map(|_| rng.random_range(-2i32..=6) as f64).collect();
                let b = a.iter().map(|v| v.max(0.0)).sum::<f64>() * rng.random_range(0.2..0.6);
                Row::new(a, b.round())
            })
            .collect();
        let int_idx: Vec<usize> = if mixed {
            (0..n).filter(|j| j % 3 != 2).collect()
        } else {
            (0..n).collect()
        };
        let ub = if n > 6 { 1.0 } else { 2.0 };
        MilpInstance::new(
            (0..n).map(|_| -(rng.random_range(1..=9) as f64)).collect(),
            rows,
            int_idx,
            vec![0.0; n],
            vec![ub; n],
        )
        .unwrap()
    }

    #[test]
    fn matches_enumeration_on_random_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let inst = random_instance(&mut rng);
            let want = milp_optimum_by_enumeration(&inst, DEFAULT_BUDGET).unwrap();
            let r = solve_bnb(&build_relaxation(Arc::new(inst.clone())), 100_000).unwrap();
            assert!(r.optimal);
            match (want, r.incumbent) {
                (Some((w, _)), Some((g, x))) => {
                    assert!((w - g).abs() < 1e-6, "{w} vs {g}");
                    assert!(inst.is_feasible(&x));
                }
                (None, None) => {}
                (w, g) => panic!("mismatch {w:?} {g:?}"),
            }
            let ev = r.trace.events();
            for w in ev.windows(2) {
                assert!(w[1].dual >= w[0].dual - 1e-9);
                assert!(w[1].primal <= w[0].primal + 1e-9);
            }
        }
    }
}
