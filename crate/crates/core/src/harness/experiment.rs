use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{mean, paired_t_greater, stdev, PairedTest};
use super::{generate, to_pretty, DatasetSpec, Family, Manifest};
use crate::env::{evaluate_episode, EnvConfig};
use crate::error::{Error, Result};
use crate::milp::{improvement_metric, MilpInstance};
use crate::policy::{ActMode, Heuristic, Policy, PolicyConfig, PolicySelector, Sbp, Selector, Variant};
use crate::rng;
use crate::training::{curve_csv, prepare_roots, train, train_sbp_es, EsConfig, TrainConfig, TrainReport};

fn default_baselines() -> Vec<Heuristic> {
    vec![
        Heuristic::Random { ratio: 0.5 },
        Heuristic::Nv { ratio: 0.5 },
        Heuristic::Eff { ratio: 0.5 },
        Heuristic::DefaultLike { ratio: 0.5 },
    ]
}

fn yes() -> bool {
    true
}

/// One JSON document describing a run; every default is echoed into the
/// run record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub env: EnvConfig,
    /// Architecture to train (needs `train`) or to load (needs `policy_checkpoint`).
    #[serde(default)]
    pub policy: Option<PolicyConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub policy_checkpoint: Option<String>,
    /// Train and evaluate the per-cut scorer with these settings.
    #[serde(default)]
    pub sbp: Option<EsConfig>,
    /// Fixed rules evaluated next to NoCuts, which is always included.
    #[serde(default = "default_baselines")]
    pub baselines: Vec<Heuristic>,
    /// Also evaluate Random at the learned policy's mean test ratio.
    #[serde(default = "yes")]
    pub matched_random: bool,
    #[serde(default)]
    pub eval_seed: u64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = super::parse_json(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        to_pretty(self) + "\n"
    }

    /// Every problem in the document, each with its field path.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut take = |r: Result<()>| match r {
            Err(Error::Config(v)) => errs.extend(v),
            Err(e) => errs.push(e.to_string()),
            Ok(()) => {}
        };
        take(self.dataset.validate());
        take(self.env.validate());
        if let Some(p) = &self.policy {
            take(p.validate());
        }
        if let Some(t) = &self.train {
            take(t.validate());
        }
        if let Some(s) = &self.sbp {
            take(s.validate());
        }
        match (&self.policy, &self.train, &self.policy_checkpoint) {
            (None, Some(_), _) => errs.push("train: requires a policy section".into()),
            (Some(_), None, None) => errs.push("policy: requires train or policy_checkpoint".into()),
            (_, Some(_), Some(_)) => errs.push("policy_checkpoint: cannot be combined with train".into()),
            _ => {}
        }
        if let Some(t) = &self.train {
            if t.algorithm == crate::training::Algorithm::HpgOneRound && self.env.rounds != 1 {
                errs.push("train.algorithm: hpg_one_round requires env.rounds = 1".into());
            }
        }
        if matches!(self.dataset.family, Family::DecoyFamily { .. }) && self.env.decoys_per_cut == 0 {
            errs.push("env.decoys_per_cut: the decoy family needs at least one decoy per cut".into());
        }
        for (i, h) in self.baselines.iter().enumerate() {
            if !(0.0..=1.0).contains(&h.ratio()) {
                errs.push(format!("baselines[{i}].ratio: {} outside [0, 1]", h.ratio()));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Point every run-level seed (training, scorer, evaluation) at `seed`;
    /// the dataset keeps its own seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Some(t) = &mut self.train {
            t.seed = rng::derive(seed, "train", 0);
        }
        if let Some(s) = &mut self.sbp {
            s.seed = rng::derive(seed, "sbp", 0);
        }
        self.eval_seed = rng::derive(seed, "eval", 0);
        self
    }
}

/// Per-instance result of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub method: String,
    pub instance: usize,
    pub dual_improvement: f64,
    pub pd_integral: f64,
    pub cuts_added: usize,
    pub work_units: f64,
    pub total_reward: f64,
    pub mean_ratio: f64,
    /// Relative PD-integral reduction against NoCuts on the same instance.
    pub improvement: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub instances: usize,
    pub mean_dual_improvement: f64,
    pub std_dual_improvement: f64,
    pub mean_pd_integral: f64,
    pub std_pd_integral: f64,
    pub mean_cuts_added: f64,
    pub std_cuts_added: f64,
    pub mean_work_units: f64,
    pub std_work_units: f64,
    pub mean_ratio: f64,
    /// Over instances where the metric is defined.
    pub mean_improvement: Option<f64>,
}

/// Learned method against another on dual-bound improvement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub method: String,
    pub against: String,
    pub ratio_of_means: f64,
    pub test: PairedTest,
}

pub struct TrainedPolicy {
    pub policy: Policy,
    pub report: Option<TrainReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub manifest: Manifest,
    pub train_report: Option<TrainReport>,
    pub matched_ratio: Option<f64>,
    pub summary: Vec<MethodSummary>,
    pub comparisons: Vec<Comparison>,
    #[serde(skip)]
    pub rows: Vec<EvalRow>,
}

fn policy_name(cfg: &PolicyConfig) -> &'static str {
    match cfg.variant {
        Variant::Hem => "HEM",
        Variant::HemPp => "HEM++",
    }
}

/// Evaluate every `(name, selector)` on every instance. Each instance uses
/// the same episode seed for all methods, so candidate pools match. Rows
/// come out instance-major in input order.
pub fn evaluate_methods(
    instances: &[(usize, Arc<MilpInstance>)],
    methods: &[(String, &dyn Selector)],
    env: &EnvConfig,
    seed: u64,
) -> Result<Vec<EvalRow>> {
    let per_instance: Vec<Vec<EvalRow>> = instances
        .par_iter()
        .map(|(id, inst)| {
            let ep_seed = rng::derive(seed, "eval", *id as u64);
            let mut rows = Vec::with_capacity(methods.len());
            for (name, sel) in methods {
                let m = evaluate_episode(inst.clone(), |s, sd| sel.select(s, sd), env, ep_seed)?;
                rows.push(EvalRow {
                    method: name.clone(),
                    instance: *id,
                    dual_improvement: m.dual_improvement,
                    pd_integral: m.pd_integral,
                    cuts_added: m.cuts_added,
                    work_units: m.work_units,
                    total_reward: m.total_reward,
                    mean_ratio: m.mean_ratio,
                    improvement: None,
                });
            }
            if let Some(base) = rows.iter().find(|r| r.method == "NoCuts").map(|r| r.pd_integral) {
                for r in &mut rows {
                    r.improvement = improvement_metric(base, r.pd_integral).ok();
                }
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    Ok(per_instance.into_iter().flatten().collect())
}

fn column(rows: &[&EvalRow], f: impl Fn(&EvalRow) -> f64) -> Vec<f64> {
    rows.iter().map(|r| f(r)).collect()
}

/// Mean and deviation per method, in first-appearance order.
pub fn summarize(rows: &[EvalRow]) -> Vec<MethodSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    names
        .iter()
        .map(|name| {
            let mine: Vec<&EvalRow> = rows.iter().filter(|r| r.method == *name).collect();
            let di = column(&mine, |r| r.dual_improvement);
            let pd = column(&mine, |r| r.pd_integral);
            let cuts = column(&mine, |r| r.cuts_added as f64);
            let work = column(&mine, |r| r.work_units);
            let imp: Vec<f64> = mine.iter().filter_map(|r| r.improvement).collect();
            MethodSummary {
                method: name.to_string(),
                instances: mine.len(),
                mean_dual_improvement: mean(&di),
                std_dual_improvement: stdev(&di),
                mean_pd_integral: mean(&pd),
                std_pd_integral: stdev(&pd),
                mean_cuts_added: mean(&cuts),
                std_cuts_added: stdev(&cuts),
                mean_work_units: mean(&work),
                std_work_units: stdev(&work),
                mean_ratio: mean(&column(&mine, |r| r.mean_ratio)),
                mean_improvement: if imp.is_empty() { None } else { Some(mean(&imp)) },
            }
        })
        .collect()
}

/// Paired one-sided comparison of `method` against `against` on dual-bound
/// improvement, matching rows by instance.
pub fn compare(rows: &[EvalRow], method: &str, against: &str) -> Result<Comparison> {
    let pick = |name: &str| -> Vec<(usize, f64)> {
        rows.iter().filter(|r| r.method == name).map(|r| (r.instance, r.dual_improvement)).collect()
    };
    let a = pick(method);
    let b = pick(against);
    if a.len() != b.len() || a.iter().zip(&b).any(|(x, y)| x.0 != y.0) {
        return Err(Error::Parameter(format!("{method} and {against} were not run on the same instances")));
    }
    let av: Vec<f64> = a.iter().map(|v| v.1).collect();
    let bv: Vec<f64> = b.iter().map(|v| v.1).collect();
    Ok(Comparison {
        method: method.into(),
        against: against.into(),
        ratio_of_means: mean(&av) / mean(&bv),
        test: paired_t_greater(&av, &bv)?,
    })
}

pub fn rows_csv(rows: &[EvalRow]) -> String {
    let mut s = String::from(
        "method,instance,dual_improvement,pd_integral,cuts_added,work_units,total_reward,mean_ratio,improvement\n",
    );
    for r in rows {
        let imp = r.improvement.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.method, r.instance, r.dual_improvement, r.pd_integral, r.cuts_added, r.work_units, r.total_reward, r.mean_ratio, imp
        );
    }
    s
}

pub fn summary_csv(summary: &[MethodSummary]) -> String {
    let mut s = String::from(
        "method,instances,mean_dual_improvement,std_dual_improvement,mean_pd_integral,std_pd_integral,\
         mean_cuts_added,std_cuts_added,mean_work_units,std_work_units,mean_ratio,mean_improvement\n",
    );
    for m in summary {
        let imp = m.mean_improvement.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            m.method,
            m.instances,
            m.mean_dual_improvement,
            m.std_dual_improvement,
            m.mean_pd_integral,
            m.std_pd_integral,
            m.mean_cuts_added,
            m.std_cuts_added,
            m.mean_work_units,
            m.std_work_units,
            m.mean_ratio,
            imp
        );
    }
    s
}

/// Generate the dataset, train what the config asks for on the train split,
/// evaluate everything on the test split, and (with `out_dir`) write
/// `metrics.csv`, `summary.csv`, `run.json` and any trained artifacts.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<ExperimentReport> {
    cfg.validate()?;
    let data = generate(&cfg.dataset)?;
    let needs_roots = cfg.train.is_some() || cfg.sbp.is_some();
    let roots = if needs_roots {
        prepare_roots(&data.train_instances(), &cfg.env, rng::derive(cfg.dataset.seed, "train-roots", 0))?
    } else {
        Vec::new()
    };

    let learned: Option<TrainedPolicy> = match (&cfg.policy, &cfg.train, &cfg.policy_checkpoint) {
        (Some(pc), Some(tc), _) => {
            let mut policy = Policy::new(*pc, rng::derive(tc.seed, "init", 0))?;
            let report = train(&mut policy, &roots, &cfg.env, tc, None)?;
            Some(TrainedPolicy { policy, report: Some(report) })
        }
        (Some(pc), None, Some(path)) => {
            let policy = Policy::load(Path::new(path))?;
            if policy.config != *pc {
                return Err(Error::Checkpoint(format!("{path} holds a different policy configuration")));
            }
            Some(TrainedPolicy { policy, report: None })
        }
        _ => None,
    };
    let scorer: Option<Sbp> = match &cfg.sbp {
        Some(es) => Some(train_sbp_es(&roots, &cfg.env, es)?),
        None => None,
    };

    let test: Vec<(usize, Arc<MilpInstance>)> = data.test.iter().map(|&i| (i, data.instances[i].clone())).collect();
    let mut methods: Vec<(String, Box<dyn Selector + '_>)> = vec![("NoCuts".into(), Box::new(Heuristic::NoCuts))];
    for h in &cfg.baselines {
        if *h != Heuristic::NoCuts {
            methods.push((h.name(), Box::new(*h)));
        }
    }
    let mut policy_label = None;
    if let Some(tp) = &learned {
        let name = policy_name(&tp.policy.config).to_string();
        methods.push((name.clone(), Box::new(PolicySelector { policy: &tp.policy, mode: ActMode::Greedy })));
        policy_label = Some(name);
    }
    if let Some(s) = &scorer {
        methods.push(("SBP".into(), Box::new(s.clone())));
    }
    let refs: Vec<(String, &dyn Selector)> = methods.iter().map(|(n, s)| (n.clone(), s.as_ref())).collect();
    let mut rows = evaluate_methods(&test, &refs, &cfg.env, cfg.eval_seed)?;

    let mut matched_ratio = None;
    if let (Some(label), true) = (&policy_label, cfg.matched_random) {
        let ratios: Vec<f64> = rows.iter().filter(|r| &r.method == label).map(|r| r.mean_ratio).collect();
        let k = mean(&ratios).clamp(0.0, 1.0);
        matched_ratio = Some(k);
        let sel = Heuristic::Random { ratio: k };
        let extra = evaluate_methods(&test, &[("Random(matched)".into(), &sel)], &cfg.env, cfg.eval_seed)?;
        rows = merge_rows(rows, extra, &test);
    }

    let summary = summarize(&rows);
    let mut comparisons = Vec::new();
    let learned_names: Vec<String> =
        policy_label.iter().cloned().chain(scorer.as_ref().map(|_| "SBP".to_string())).collect();
    for name in &learned_names {
        for other in &summary {
            if &other.method != name && !learned_names.contains(&other.method) && test.len() >= 2 {
                comparisons.push(compare(&rows, name, &other.method)?);
            }
        }
    }

    let report = ExperimentReport {
        config: cfg.clone(),
        manifest: data.manifest(),
        train_report: learned.as_ref().and_then(|t| t.report.clone()),
        matched_ratio,
        summary,
        comparisons,
        rows,
    };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("metrics.csv"), rows_csv(&report.rows))?;
        std::fs::write(dir.join("summary.csv"), summary_csv(&report.summary))?;
        std::fs::write(dir.join("run.json"), to_pretty(&report) + "\n")?;
        if let Some(tp) = &learned {
            if let Some(r) = &tp.report {
                std::fs::write(dir.join("curve.csv"), curve_csv(&r.curve))?;
                tp.policy.save(&dir.join("policy.bin"))?;
            }
        }
        if let Some(s) = &scorer {
            s.params.save(&dir.join("sbp.bin"), &serde_json::json!({ "ratio": s.ratio }))?;
        }
    }
    Ok(report)
}

/// Interleave extra method rows after each instance's existing rows.
fn merge_rows(rows: Vec<EvalRow>, extra: Vec<EvalRow>, test: &[(usize, Arc<MilpInstance>)]) -> Vec<EvalRow> {
    let mut out = Vec::with_capacity(rows.len() + extra.len());
    for (id, _) in test {
        let base = rows.iter().find(|r| r.instance == *id && r.method == "NoCuts").map(|r| r.pd_integral);
        out.extend(rows.iter().filter(|r| r.instance == *id).cloned());
        for r in extra.iter().filter(|r| r.instance == *id) {
            let mut r = r.clone();
            r.improvement = base.and_then(|b| improvement_metric(b, r.pd_integral).ok());
            out.push(r);
        }
    }
    out
}
