//! `cutlab`: generate datasets, train and evaluate cut-selection policies,
//! and run the built-in verification suites.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use cutlab_core::harness::{self, evaluate_methods, parse_json, rows_csv, summarize, summary_csv, ExperimentConfig};
use cutlab_core::policy::gradcheck::{self, grad_check_suite};
use cutlab_core::policy::{ActMode, Heuristic, Policy, PolicySelector, Selector, Variant};
use cutlab_core::rules::{extract_order_rules, DefaultPlus};
use cutlab_core::training::{curve_csv, prepare_roots, train};
use cutlab_core::{rng, theory, Error};

const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Parser)]
#[command(name = "cutlab", version, about = "Hierarchical cut selection laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON configuration document.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset and write it as JSON instances plus a manifest.
    Generate(Common),
    /// Train the configured policy on the train split.
    Train(Common),
    /// Evaluate baselines and learned methods on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        /// `VARIANT:PATH` with VARIANT one of `hem`, `hempp`.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Lexicographic cutting-plane sweep with convergence and lemma checks.
    VerifyTheory(Common),
    /// Count cut categories chosen by a policy and build an ordering rule.
    ExtractRules {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: String,
    },
    /// Finite-difference checks of every differentiable component.
    GradCheck(Common),
}

/// A run completed but one of its checks failed.
#[derive(Debug)]
struct CheckFailed(String);

impl std::fmt::Display for CheckFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for CheckFailed {}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TheoryConfig {
    instances: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self { instances: 100 }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct GradCheckConfig {
    seeds: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { seeds: 20 }
    }
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn experiment(common: &Common) -> anyhow::Result<ExperimentConfig> {
    let path = common.config.as_deref().context("--config is required")?;
    let cfg = ExperimentConfig::from_json(&read_text(path)?)?;
    Ok(match common.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

/// Optional small config; absent file means defaults.
fn small_config<T: Default + serde::de::DeserializeOwned>(common: &Common) -> anyhow::Result<T> {
    match &common.config {
        Some(p) => Ok(parse_json(&read_text(p)?)?),
        None => Ok(T::default()),
    }
}

fn write(dir: &Path, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty<T: Serialize>(v: &T) -> anyhow::Result<String> {
    Ok(serde_json::to_string_pretty(v)? + "\n")
}

/// Parse `VARIANT:PATH` and load the checkpoint, checking the variant.
fn load_policy(spec: &str) -> anyhow::Result<(Policy, String)> {
    let (variant, path) = spec
        .split_once(':')
        .ok_or_else(|| Error::Parameter(format!("--policy {spec}: expected VARIANT:PATH")))?;
    let want = match variant {
        "hem" => Variant::Hem,
        "hempp" => Variant::HemPp,
        other => return Err(Error::Parameter(format!("--policy: unknown variant {other}")).into()),
    };
    let policy = Policy::load(Path::new(path))?;
    if policy.config.variant != want {
        return Err(Error::Checkpoint(format!("{path} does not hold a {variant} policy")).into());
    }
    Ok((policy, path.to_string()))
}

fn cmd_generate(common: &Common) -> anyhow::Result<()> {
    let path = common.config.as_deref().context("--config is required")?;
    let mut cfg = ExperimentConfig::from_json(&read_text(path)?)?;
    if let Some(s) = common.seed {
        cfg.dataset.seed = s;
    }
    let data = harness::generate(&cfg.dataset)?;
    data.write(&common.out_dir)?;
    println!("wrote {} instances to {}", data.instances.len(), common.out_dir.display());
    Ok(())
}

fn cmd_train(common: &Common) -> anyhow::Result<()> {
    let cfg = experiment(common)?;
    let (Some(pc), Some(tc)) = (&cfg.policy, &cfg.train) else {
        return Err(Error::Config(vec!["train: needs both policy and train sections".into()]).into());
    };
    let data = harness::generate(&cfg.dataset)?;
    let roots = prepare_roots(&data.train_instances(), &cfg.env, rng::derive(cfg.dataset.seed, "train-roots", 0))?;
    let mut policy = Policy::new(*pc, rng::derive(tc.seed, "init", 0))?;
    let report = train(&mut policy, &roots, &cfg.env, tc, None)?;
    std::fs::create_dir_all(&common.out_dir)?;
    policy.save(&common.out_dir.join("policy.bin"))?;
    write(&common.out_dir, "curve.csv", curve_csv(&report.curve))?;
    write(&common.out_dir, "train.json", pretty(&serde_json::json!({ "config": cfg, "report": report }))?)?;
    if report.flagged {
        eprintln!("warning: more than 1% of importance ratios were not finite");
    }
    println!("trained {} epochs; outputs in {}", tc.epochs, common.out_dir.display());
    Ok(())
}

fn cmd_eval(common: &Common, policy: Option<&str>) -> anyhow::Result<()> {
    let mut cfg = experiment(common)?;
    if let Some(spec) = policy {
        let (p, path) = load_policy(spec)?;
        cfg.policy = Some(p.config);
        cfg.train = None;
        cfg.policy_checkpoint = Some(path);
    }
    let report = harness::run_experiment(&cfg, Some(&common.out_dir))?;
    for s in &report.summary {
        println!("{:<18} dual_improvement {:>10.4}  pd_integral {:>10.4}", s.method, s.mean_dual_improvement, s.mean_pd_integral);
    }
    for c in &report.comparisons {
        println!("{} vs {}: ratio {:.3}, p = {:.4}", c.method, c.against, c.ratio_of_means, c.test.p_value);
    }
    Ok(())
}

fn cmd_verify_theory(common: &Common) -> anyhow::Result<()> {
    let tc: TheoryConfig = small_config(common)?;
    let runs = theory::theory_sweep(tc.instances, common.seed.unwrap_or(0))?;
    write(&common.out_dir, "theory.csv", theory::sweep_csv(&runs))?;
    let bad: Vec<usize> = runs
        .iter()
        .filter(|r| !(r.within_bound() && r.lex_optimal && r.monotone && r.bounded && r.cuts_ok))
        .map(|r| r.index)
        .collect();
    println!("{} of {} runs passed every check", runs.len() - bad.len(), runs.len());
    if !bad.is_empty() {
        bail!(CheckFailed(format!("theory checks failed on runs {bad:?}")));
    }
    Ok(())
}

fn cmd_extract_rules(common: &Common, policy: &str) -> anyhow::Result<()> {
    let cfg = experiment(common)?;
    let (policy, _) = load_policy(policy)?;
    let data = harness::generate(&cfg.dataset)?;
    let roots = prepare_roots(&data.test_instances(), &cfg.env, rng::derive(cfg.dataset.seed, "rule-roots", 0))?;
    let sel = PolicySelector { policy: &policy, mode: ActMode::Greedy };
    let (rule, logs) = extract_order_rules(&sel, &roots, cfg.eval_seed)?;
    write(&common.out_dir, "rules.json", rule.to_json())?;
    let mut csv = String::from("instance,position,category\n");
    for log in &logs {
        for (pos, c) in log.categories.iter().enumerate() {
            csv += &format!("{},{},{}\n", data.test[log.instance], pos + 1, c.name());
        }
    }
    write(&common.out_dir, "selections.csv", csv)?;

    let ratio = 0.5;
    let plus = DefaultPlus { rule, ratio };
    let base = Heuristic::DefaultLike { ratio };
    let methods: Vec<(String, &dyn Selector)> =
        vec![("NoCuts".into(), &Heuristic::NoCuts), (base.name(), &base), ("Default+".into(), &plus)];
    let test: Vec<_> = data.test.iter().map(|&i| (i, Arc::clone(&data.instances[i]))).collect();
    let rows = evaluate_methods(&test, &methods, &cfg.env, cfg.eval_seed)?;
    write(&common.out_dir, "metrics.csv", rows_csv(&rows))?;
    write(&common.out_dir, "summary.csv", summary_csv(&summarize(&rows)))?;
    println!("rule over {} selections written to {}", logs.len(), common.out_dir.display());
    Ok(())
}

fn cmd_grad_check(common: &Common) -> anyhow::Result<()> {
    let gc: GradCheckConfig = small_config(common)?;
    let rows = grad_check_suite(gc.seeds)?;
    write(&common.out_dir, "grad_check.csv", gradcheck::rows_csv(&rows))?;
    let worst = rows.iter().map(|r| r.max_rel_err).fold(0.0, f64::max);
    println!("{} checks, worst relative error {worst:.3e}", rows.len());
    let failing: Vec<String> = rows
        .iter()
        .filter(|r| !(r.max_rel_err < GRAD_TOLERANCE))
        .map(|r| format!("{}@{}", r.component, r.seed))
        .collect();
    if !failing.is_empty() {
        bail!(CheckFailed(format!("gradient check above {GRAD_TOLERANCE:e}: {}", failing.join(", "))));
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        return 3;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::Validation(_) | Error::Parameter(_) | Error::Checkpoint(_)) => 2,
        _ if err.to_string().starts_with("--config") => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Generate(c) => cmd_generate(c),
        Command::Train(c) => cmd_train(c),
        Command::Eval { common, policy } => cmd_eval(common, policy.as_deref()),
        Command::VerifyTheory(c) => cmd_verify_theory(c),
        Command::ExtractRules { common, policy } => cmd_extract_rules(common, policy),
        Command::GradCheck(c) => cmd_grad_check(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
