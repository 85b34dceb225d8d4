//! Experiment config files (TOML).
//!
//! ```toml
//! method = "pmc"            # source-only | dann | pmc | pmc-pi
//! seeds = [1, 2, 3, 4, 5]
//! out_dir = "runs/pmc"
//! benchmark = "blobs-mm2"   # or a [benchmark] table, or dataset = "path"
//! drop = "B"                # optional: remove a modality from the targets
//!
//! [train]
//! epochs = 40
//! ```
//!
//! Relative paths are resolved against the config file's directory. With a
//! generated benchmark every run seed also seeds its dataset; `train.seed`
//! is replaced by the run seed.

use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use pmc_core::synthdata::{self, BenchmarkSpec, MultiModalDataset};
use pmc_core::trainers::{Mode, TrainConfig};
use serde::{Deserialize, Serialize};

/// An invalid config, spec or input file. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    SourceOnly,
    Dann,
    Pmc,
    PmcPi,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::SourceOnly => "source-only",
            Method::Dann => "dann",
            Method::Pmc => "pmc",
            Method::PmcPi => "pmc-pi",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum BenchmarkSource {
    Preset(String),
    Spec(BenchmarkSpec),
}

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: Method,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    #[serde(default)]
    pub benchmark: Option<BenchmarkSource>,
    #[serde(default)]
    pub drop: Option<String>,
    #[serde(default)]
    pub train: TrainConfig,
}

pub fn preset(name: &str, seed: u64) -> anyhow::Result<BenchmarkSpec> {
    match name {
        "blobs-mm2" => Ok(BenchmarkSpec::blobs_mm2(seed)),
        other => Err(config_error(format!(
            "unknown benchmark preset `{other}` (known: blobs-mm2)"
        ))),
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str, base: &Path) -> anyhow::Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| config_error(format!("invalid experiment config: {e}")))?;
        for p in [&mut cfg.dataset].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Checks everything that can be checked without training.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.seeds.is_empty() {
            return Err(config_error("`seeds` must not be empty"));
        }
        let unique: HashSet<u64> = self.seeds.iter().copied().collect();
        if unique.len() != self.seeds.len() {
            return Err(config_error("`seeds` contains duplicates"));
        }
        match (&self.dataset, &self.benchmark) {
            (Some(_), Some(_)) => return Err(config_error("set either `dataset` or `benchmark`, not both")),
            (None, None) => return Err(config_error("one of `dataset` or `benchmark` is required")),
            (Some(p), None) if !p.is_file() => {
                return Err(config_error(format!("dataset {} does not exist", p.display())))
            }
            (None, Some(BenchmarkSource::Preset(name))) => {
                preset(name, 0)?;
            }
            _ => {}
        }
        self.train
            .validate()
            .map_err(|e| config_error(format!("[train] {e}")))?;
        match (self.method, self.train.mode) {
            (Method::PmcPi, Mode::Mmda) => {
                return Err(config_error("method \"pmc-pi\" needs train.mode = \"mmda-pi\""));
            }
            (m, Mode::MmdaPi) if m != Method::PmcPi => {
                return Err(config_error(format!(
                    "train.mode = \"mmda-pi\" is only valid with method \"pmc-pi\", not \"{}\"",
                    m.as_str()
                )));
            }
            _ => {}
        }
        if self.method == Method::Pmc && self.drop.is_some() {
            return Err(config_error(
                "method \"pmc\" needs every modality on the targets; remove `drop`",
            ));
        }
        Ok(())
    }

    /// The dataset of one run, with `drop` applied.
    pub fn dataset_for(&self, seed: u64) -> anyhow::Result<MultiModalDataset> {
        let ds = match (&self.dataset, &self.benchmark) {
            (Some(path), _) => synthdata::load(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?,
            (None, Some(src)) => {
                let spec = match src {
                    BenchmarkSource::Preset(name) => preset(name, seed)?,
                    BenchmarkSource::Spec(spec) => BenchmarkSpec { seed, ..spec.clone() },
                };
                synthdata::generate_benchmark(&spec).map_err(|e| config_error(e.to_string()))?
            }
            (None, None) => return Err(config_error("no dataset source")),
        };
        let ds = match &self.drop {
            Some(name) => ds.drop_modality(name).map_err(|e| config_error(format!("drop: {e}")))?,
            None => ds,
        };
        let missing = ds.schema().dropped.len();
        if self.method == Method::PmcPi && missing != 1 {
            return Err(config_error(format!(
                "method \"pmc-pi\" needs exactly one modality missing on the targets, found {missing}"
            )));
        }
        if self.method == Method::Pmc && missing != 0 {
            return Err(config_error("method \"pmc\" needs every modality on the targets"));
        }
        Ok(ds)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..self.train.clone()
        }
    }
}
