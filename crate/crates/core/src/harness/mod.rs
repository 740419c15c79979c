//! Instance generation, datasets, experiment configuration and reporting.

mod experiment;
mod generators;
pub mod stats;

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use experiment::{
    compare, evaluate_methods, rows_csv, run_experiment, summarize, summary_csv, Comparison, EvalRow, ExperimentConfig,
    ExperimentReport, MethodSummary, TrainedPolicy,
};
pub use generators::{generate_indexed, generate_instance, mis_from_edges, Family};

use crate::error::{Error, Result};
use crate::milp::MilpInstance;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub family: Family,
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
}

fn default_train_fraction() -> f64 {
    0.8
}

impl DatasetSpec {
    pub fn new(family: Family, count: usize, seed: u64) -> Self {
        Self { family, count, seed, train_fraction: default_train_fraction() }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = self.family.validate();
        if self.count < 2 {
            errs.push("dataset.count: must be at least 2".to_string());
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            errs.push(format!("dataset.train_fraction: {} outside (0, 1)", self.train_fraction));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub instances: Vec<Arc<MilpInstance>>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub spec: DatasetSpec,
    pub files: Vec<String>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Dataset {
    pub fn train_instances(&self) -> Vec<Arc<MilpInstance>> {
        self.train.iter().map(|&i| self.instances[i].clone()).collect()
    }

    pub fn test_instances(&self) -> Vec<Arc<MilpInstance>> {
        self.test.iter().map(|&i| self.instances[i].clone()).collect()
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            spec: self.spec.clone(),
            files: (0..self.instances.len()).map(instance_file).collect(),
            train: self.train.clone(),
            test: self.test.clone(),
        }
    }

    /// `manifest.json` plus one JSON file per instance.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, inst) in self.instances.iter().enumerate() {
            std::fs::write(dir.join(instance_file(i)), inst.to_json() + "\n")?;
        }
        std::fs::write(dir.join("manifest.json"), to_pretty(&self.manifest()) + "\n")?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let manifest: Manifest = parse_json(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
        let instances = manifest
            .files
            .iter()
            .map(|f| Ok(Arc::new(MilpInstance::from_json(&std::fs::read_to_string(dir.join(f))?)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { spec: manifest.spec, instances, train: manifest.train, test: manifest.test })
    }
}

fn instance_file(i: usize) -> String {
    format!("instance_{i:04}.json")
}

/// Draw every instance and split them into disjoint sorted train and test
/// index sets; both sides get at least one instance.
pub fn generate(spec: &DatasetSpec) -> Result<Dataset> {
    spec.validate()?;
    let instances = (0..spec.count)
        .into_par_iter()
        .map(|i| generate_indexed(&spec.family, spec.seed, i).map(Arc::new))
        .collect::<Result<Vec<_>>>()?;
    let (train, test) = split(spec.count, spec.train_fraction, spec.seed);
    Ok(Dataset { spec: spec.clone(), instances, train, test })
}

pub fn split(count: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..count).collect();
    idx.shuffle(&mut rng::stream(seed, "split", 0));
    let k = ((count as f64 * fraction).round() as usize).clamp(1, count - 1);
    let mut train = idx[..k].to_vec();
    let mut test = idx[k..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

pub(crate) fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes")
}

/// Parse JSON, reporting schema problems with their field path.
pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Config(vec![format!("{path}: {}", e.into_inner())])
    })
}
