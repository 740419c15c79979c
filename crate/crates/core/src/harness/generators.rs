use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::milp::{MilpInstance, Row};
use crate::rng;
use crate::simplex::solve;
use crate::simplex::LpStatus;
use crate::theory::random_ilp;

const RETRIES: usize = 50;

/// Instance families. All are minimization problems; maximization
/// objectives are negated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// `min c·x` s.t. every row covered; `density` is the chance that a
    /// column covers a row.
    SetCovering { rows: usize, cols: usize, density: f64 },
    /// Edge formulation on `G(nodes, edge_prob)`.
    MaxIndependentSet { nodes: usize, edge_prob: f64 },
    /// Assign items to at most one of `knapsacks` capacity-limited bins.
    MultipleKnapsack { items: usize, knapsacks: usize },
    /// General-integer knapsack rows with continuous columns mixed in.
    MixedIntKnapsack { int_vars: usize, cont_vars: usize, rows: usize },
    /// Binary multi-row knapsacks meant to run with decoy candidates
    /// (`env.decoys_per_cut > 0`).
    DecoyFamily { items: usize, rows: usize },
    /// Small pure-integer instances for the lexicographic method.
    LexIlp { n: usize, d: i64 },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::SetCovering { .. } => "set_covering",
            Family::MaxIndependentSet { .. } => "max_independent_set",
            Family::MultipleKnapsack { .. } => "multiple_knapsack",
            Family::MixedIntKnapsack { .. } => "mixed_int_knapsack",
            Family::DecoyFamily { .. } => "decoy_family",
            Family::LexIlp { .. } => "lex_ilp",
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                errs.push(format!("dataset.family.{msg}"));
            }
        };
        match *self {
            Family::SetCovering { rows, cols, density } => {
                need(rows >= 1, "rows: must be positive");
                need(cols >= 2, "cols: must be at least 2");
                need(density > 0.0 && density <= 1.0, "density: outside (0, 1]");
            }
            Family::MaxIndependentSet { nodes, edge_prob } => {
                need(nodes >= 2, "nodes: must be at least 2");
                need(edge_prob > 0.0 && edge_prob <= 1.0, "edge_prob: outside (0, 1]");
            }
            Family::MultipleKnapsack { items, knapsacks } => {
                need(items >= 2, "items: must be at least 2");
                need(knapsacks >= 1, "knapsacks: must be positive");
            }
            Family::MixedIntKnapsack { int_vars, rows, .. } => {
                need(int_vars >= 1, "int_vars: must be positive");
                need(rows >= 1, "rows: must be positive");
            }
            Family::DecoyFamily { items, rows } => {
                need(items >= 2, "items: must be at least 2");
                need(rows >= 1, "rows: must be positive");
            }
            Family::LexIlp { n, d } => {
                need((1..=6).contains(&n), "n: outside 1..=6");
                need((1..=10).contains(&d), "d: outside 1..=10");
            }
        }
        errs
    }
}

/// Draw one instance. Draws whose root LP is not optimal are redrawn a
/// bounded number of times.
pub fn generate_instance<R: Rng>(family: &Family, r: &mut R) -> Result<MilpInstance> {
    for _ in 0..RETRIES {
        let inst = match draw(family, r) {
            Ok(inst) => inst,
            Err(Error::Infeasible(_)) => continue,
            Err(e) => return Err(e),
        };
        let sol = solve(&crate::milp::build_relaxation(std::sync::Arc::new(inst.clone())).to_lp())?;
        if sol.status == LpStatus::Optimal {
            return Ok(inst);
        }
    }
    Err(Error::Infeasible(format!("no usable {} instance after {RETRIES} draws", family.name())))
}

/// Instance `index` of a seeded family; independent of the other indices.
pub fn generate_indexed(family: &Family, seed: u64, index: usize) -> Result<MilpInstance> {
    generate_instance(family, &mut rng::stream(seed, "instance", index as u64))
}

fn draw<R: Rng>(family: &Family, r: &mut R) -> Result<MilpInstance> {
    match *family {
        Family::SetCovering { rows, cols, density } => set_covering(r, rows, cols, density),
        Family::MaxIndependentSet { nodes, edge_prob } => mis(r, nodes, edge_prob),
        Family::MultipleKnapsack { items, knapsacks } => multiple_knapsack(r, items, knapsacks),
        Family::MixedIntKnapsack { int_vars, cont_vars, rows } => mixed_int_knapsack(r, int_vars, cont_vars, rows),
        Family::DecoyFamily { items, rows } => multi_row_knapsack(r, items, rows),
        Family::LexIlp { n, d } => random_ilp(r, n, d)?.to_milp(),
    }
}

fn binary(c: Vec<f64>, rows: Vec<Row>) -> Result<MilpInstance> {
    let n = c.len();
    MilpInstance::new(c, rows, (0..n).collect(), vec![0.0; n], vec![1.0; n])
}

fn set_covering<R: Rng>(r: &mut R, m: usize, n: usize, density: f64) -> Result<MilpInstance> {
    let mut cover = vec![vec![false; n]; m];
    for row in cover.iter_mut() {
        for v in row.iter_mut() {
            *v = r.random_bool(density);
        }
        if !row.iter().any(|&v| v) {
            row[r.random_range(0..n)] = true;
        }
    }
    for j in 0..n {
        if !cover.iter().any(|row| row[j]) {
            cover[r.random_range(0..m)][j] = true;
        }
    }
    let c = (0..n).map(|_| r.random_range(1..=100) as f64).collect();
    let rows = cover
        .iter()
        .map(|row| Row::new(row.iter().map(|&v| if v { -1.0 } else { 0.0 }).collect(), -1.0))
        .collect();
    binary(c, rows)
}

fn mis<R: Rng>(r: &mut R, n: usize, p: f64) -> Result<MilpInstance> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random_bool(p) {
                edges.push((u, v));
            }
        }
    }
    if edges.is_empty() {
        let u = r.random_range(0..n - 1);
        edges.push((u, r.random_range(u + 1..n)));
    }
    mis_from_edges(n, &edges)
}

/// Maximum independent set on a given graph.
pub fn mis_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<MilpInstance> {
    let rows = edges
        .iter()
        .map(|&(u, v)| {
            let mut a = vec![0.0; n];
            a[u] = 1.0;
            a[v] = 1.0;
            Row::new(a, 1.0)
        })
        .collect();
    binary(vec![-1.0; n], rows)
}

/// Weakly correlated profits: `w + U[-5, 5]`, at least 1.
fn profit<R: Rng>(r: &mut R, w: i64) -> f64 {
    (w + r.random_range(-5..=5)).max(1) as f64
}

fn multiple_knapsack<R: Rng>(r: &mut R, items: usize, k: usize) -> Result<MilpInstance> {
    let w: Vec<i64> = (0..items).map(|_| r.random_range(5..=30)).collect();
    let p: Vec<f64> = w.iter().map(|&wj| profit(r, wj)).collect();
    let total: i64 = w.iter().sum();
    let n = items * k;
    let mut c = vec![0.0; n];
    let mut rows = Vec::new();
    for i in 0..k {
        let cap = (total as f64 * r.random_range(0.3..0.6) / k as f64).floor();
        let mut a = vec![0.0; n];
        for j in 0..items {
            a[i * items + j] = w[j] as f64;
            c[i * items + j] = -p[j];
        }
        rows.push(Row::new(a, cap));
    }
    if k > 1 {
        for j in 0..items {
            let mut a = vec![0.0; n];
            for i in 0..k {
                a[i * items + j] = 1.0;
            }
            rows.push(Row::new(a, 1.0));
        }
    }
    binary(c, rows)
}

fn multi_row_knapsack<R: Rng>(r: &mut R, items: usize, m: usize) -> Result<MilpInstance> {
    let mut rows = Vec::with_capacity(m);
    let mut wsum = vec![0i64; items];
    for _ in 0..m {
        let w: Vec<i64> = (0..items).map(|_| r.random_range(1..=20)).collect();
        let total: i64 = w.iter().sum();
        for (s, wj) in wsum.iter_mut().zip(&w) {
            *s += wj;
        }
        let cap = (total as f64 * r.random_range(0.3..0.6)).floor();
        rows.push(Row::new(w.iter().map(|&v| v as f64).collect(), cap));
    }
    let c = wsum.iter().map(|&s| -profit(r, s / m as i64)).collect();
    binary(c, rows)
}

fn mixed_int_knapsack<R: Rng>(r: &mut R, ni: usize, nc: usize, m: usize) -> Result<MilpInstance> {
    let n = ni + nc;
    let ub: Vec<f64> = (0..n).map(|j| if j < ni { r.random_range(1..=4) as f64 } else { 10.0 }).collect();
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let a: Vec<f64> =
            (0..n).map(|j| if j < ni { r.random_range(3..=25) as f64 } else { r.random_range(1..=5) as f64 }).collect();
        let top: f64 = a.iter().zip(&ub).map(|(x, u)| x * u).sum();
        rows.push(Row::new(a, (top * r.random_range(0.25..0.5)).floor() + 0.5));
    }
    let c: Vec<f64> = (0..n)
        .map(|j| {
            let col: f64 = rows.iter().map(|row| row.a[j]).sum::<f64>() / m as f64;
            let noise = if j < ni { r.random_range(0.8..1.4) } else { r.random_range(0.3..0.7) };
            -((col * noise) * 4.0).round() / 4.0
        })
        .collect();
    let mut int_idx: Vec<usize> = (0..ni).collect();
    int_idx.shuffle(r);
    MilpInstance::new(c, rows, int_idx, vec![0.0; n], ub)
}
