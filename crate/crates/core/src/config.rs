//! Run configuration: a flat `key = value` format with dotted section keys,
//! plus per-stage content hashes used to chain artifacts safely.
//!
//! ```text
//! # lines starting with '#' are comments
//! dataset = F
//! seed = 7
//! train.lambda_wd = 0
//! koopman.strategy = auto
//! ```

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::DEFAULT_TE_BINS;
use crate::datasets::{DriftKind, DriftParams, DriftSpec};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_TEST_SIZE;
use crate::koopman::{KoopmanOptions, RolloutMode, Strategy, DEFAULT_HARMONICS, DEFAULT_MARGIN, DEFAULT_PCA_THRESHOLD};
use crate::model::NetConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyChoice {
    Auto,
    Fourier,
    DetrendFourier,
}

impl StrategyChoice {
    /// Detrending for the non-periodic kind, plain Fourier otherwise.
    pub fn resolve(self, kind: DriftKind) -> Strategy {
        match self {
            StrategyChoice::Fourier => Strategy::Fourier,
            StrategyChoice::DetrendFourier => Strategy::DetrendFourier,
            StrategyChoice::Auto if kind.is_periodic() => Strategy::Fourier,
            StrategyChoice::Auto => Strategy::DetrendFourier,
        }
    }
}

impl FromStr for StrategyChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(StrategyChoice::Auto),
            other => Ok(match other.parse::<Strategy>()? {
                Strategy::Fourier => StrategyChoice::Fourier,
                Strategy::DetrendFourier => StrategyChoice::DetrendFourier,
            }),
        }
    }
}

impl fmt::Display for StrategyChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyChoice::Auto => f.write_str("auto"),
            StrategyChoice::Fourier => Strategy::Fourier.fmt(f),
            StrategyChoice::DetrendFourier => Strategy::DetrendFourier.fmt(f),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: DriftSpec,
    pub seed: u64,
    pub train: TrainConfig,
    /// Timesteps `0..train_end` are used for training and the Koopman fit.
    pub train_end: usize,
    /// Also train with cold optimizer moments to measure the epoch ratio.
    pub cold_ablation: bool,
    pub strategy: StrategyChoice,
    pub harmonics: usize,
    pub pca_threshold: f64,
    pub margin: f64,
    pub rollout_mode: RolloutMode,
    pub te_bins: usize,
    pub test_size: usize,
    pub out: PathBuf,
    pub jobs: Option<usize>,
    pub force: bool,
}

impl RunConfig {
    pub fn new(kind: DriftKind) -> Self {
        let spec = DriftSpec::new(kind);
        RunConfig {
            spec,
            seed: 0,
            train: TrainConfig::for_head(NetConfig::for_classes(kind.n_classes()).head),
            train_end: 3 * spec.period,
            cold_ablation: true,
            strategy: StrategyChoice::Auto,
            harmonics: DEFAULT_HARMONICS,
            pca_threshold: DEFAULT_PCA_THRESHOLD,
            margin: DEFAULT_MARGIN,
            rollout_mode: RolloutMode::Autonomous,
            te_bins: DEFAULT_TE_BINS,
            test_size: DEFAULT_TEST_SIZE,
            out: PathBuf::from("runs"),
            jobs: None,
            force: false,
        }
    }

    pub fn kind(&self) -> DriftKind {
        self.spec.kind
    }

    pub fn net(&self) -> NetConfig {
        NetConfig::for_classes(self.spec.n_classes())
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy.resolve(self.spec.kind)
    }

    pub fn koopman_options(&self) -> KoopmanOptions {
        KoopmanOptions {
            period: self.spec.period,
            strategy: self.strategy(),
            harmonics: self.harmonics,
            pca_threshold: self.pca_threshold,
            margin: self.margin,
        }
    }

    pub fn horizon(&self) -> usize {
        self.spec.total_steps - self.train_end
    }

    /// Builds a config from ordered pairs. The last `dataset` entry picks the
    /// kind (and its defaults); every other key is then applied in order.
    /// Without `split.train_end`, the first three periods are used for training.
    pub fn from_pairs<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Result<Self> {
        let kind = match pairs.iter().rev().find(|(k, _)| k.as_ref().trim() == "dataset") {
            Some((_, v)) => v.as_ref().parse()?,
            None => return Err(Error::Config("missing required key `dataset`".into())),
        };
        let mut cfg = RunConfig::new(kind);
        let mut split_given = false;
        for (k, v) in pairs {
            let k = k.as_ref().trim();
            if k != "dataset" {
                cfg.set(k, v.as_ref().trim())?;
                split_given |= k == "split.train_end";
            }
        }
        if !split_given {
            cfg.train_end = 3 * cfg.spec.period;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses the text format; returns the pairs so callers can append overrides.
    pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`", i + 1)));
            };
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Ok(pairs)
    }

    pub fn parse(text: &str) -> Result<Self> {
        RunConfig::from_pairs(&RunConfig::parse_pairs(text)?)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
        }
        let p = &mut self.spec.params;
        let t = &mut self.train;
        match key {
            "seed" => self.seed = num(key, value)?,
            "dataset.period" => self.spec.period = num(key, value)?,
            "dataset.total_steps" => self.spec.total_steps = num(key, value)?,
            "dataset.noise_std" => p.noise_std = num(key, value)?,
            "dataset.radius" => p.radius = num(key, value)?,
            "dataset.radius_amp" => p.radius_amp = num(key, value)?,
            "dataset.growth" => p.growth = num(key, value)?,
            "dataset.separation" => p.separation = num(key, value)?,
            "dataset.separation_amp" => p.separation_amp = num(key, value)?,
            "dataset.amp_x" => p.amp_x = num(key, value)?,
            "dataset.amp_y" => p.amp_y = num(key, value)?,
            "dataset.subcluster_offset" => p.subcluster_offset = num(key, value)?,
            "dataset.rotate" => p.rotate = num(key, value)?,
            "train.learning_rate" => t.learning_rate = num(key, value)?,
            "train.lambda_s" => t.lambda_s = num(key, value)?,
            "train.lambda_wd" => t.lambda_wd = num(key, value)?,
            "train.patience" => t.patience = num(key, value)?,
            "train.tolerance" => t.tolerance = num(key, value)?,
            "train.max_epochs" => t.max_epochs = num(key, value)?,
            "train.batch_size" => t.batch_size = num(key, value)?,
            "train.carry_moments" => t.carry_moments = num(key, value)?,
            "train.cold_ablation" => self.cold_ablation = num(key, value)?,
            "split.train_end" => self.train_end = num(key, value)?,
            "koopman.strategy" => self.strategy = value.parse()?,
            "koopman.harmonics" => self.harmonics = num(key, value)?,
            "koopman.pca_threshold" => self.pca_threshold = num(key, value)?,
            "koopman.margin" => self.margin = num(key, value)?,
            "koopman.rollout_mode" => self.rollout_mode = value.parse()?,
            "coupling.te_bins" => self.te_bins = num(key, value)?,
            "eval.test_size" => self.test_size = num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "jobs" => self.jobs = Some(num(key, value)?),
            "force" => self.force = num(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.spec.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        if self.train_end < 3 || self.train_end >= self.spec.total_steps {
            return Err(Error::Config(format!(
                "split.train_end must lie in [3, {})",
                self.spec.total_steps
            )));
        }
        if !(self.pca_threshold > 0.0 && self.pca_threshold <= 1.0) {
            return Err(Error::Config("koopman.pca_threshold must lie in (0, 1]".into()));
        }
        if !(self.margin > 0.0 && self.margin < 1.0) {
            return Err(Error::Config("koopman.margin must lie in (0, 1)".into()));
        }
        if self.te_bins < 2 {
            return Err(Error::Config("coupling.te_bins must be at least 2".into()));
        }
        if self.test_size == 0 {
            return Err(Error::Config("eval.test_size must be positive".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it yields the same config.
    pub fn to_text(&self) -> String {
        let p: &DriftParams = &self.spec.params;
        let t = &self.train;
        let mut lines = vec![
            format!("dataset = {}", self.spec.kind),
            format!("seed = {}", self.seed),
            format!("dataset.period = {}", self.spec.period),
            format!("dataset.total_steps = {}", self.spec.total_steps),
            format!("dataset.noise_std = {}", p.noise_std),
            format!("dataset.radius = {}", p.radius),
            format!("dataset.radius_amp = {}", p.radius_amp),
            format!("dataset.growth = {}", p.growth),
            format!("dataset.separation = {}", p.separation),
            format!("dataset.separation_amp = {}", p.separation_amp),
            format!("dataset.amp_x = {}", p.amp_x),
            format!("dataset.amp_y = {}", p.amp_y),
            format!("dataset.subcluster_offset = {}", p.subcluster_offset),
            format!("dataset.rotate = {}", p.rotate),
            format!("train.learning_rate = {}", t.learning_rate),
            format!("train.lambda_s = {}", t.lambda_s),
            format!("train.lambda_wd = {}", t.lambda_wd),
            format!("train.patience = {}", t.patience),
            format!("train.tolerance = {}", t.tolerance),
            format!("train.max_epochs = {}", t.max_epochs),
            format!("train.batch_size = {}", t.batch_size),
            format!("train.carry_moments = {}", t.carry_moments),
            format!("train.cold_ablation = {}", self.cold_ablation),
            format!("split.train_end = {}", self.train_end),
            format!("koopman.strategy = {}", self.strategy),
            format!("koopman.harmonics = {}", self.harmonics),
            format!("koopman.pca_threshold = {}", self.pca_threshold),
            format!("koopman.margin = {}", self.margin),
            format!(
                "koopman.rollout_mode = {}",
                match self.rollout_mode {
                    RolloutMode::Autonomous => "autonomous",
                    RolloutMode::ReprojectTime => "reproject_time",
                }
            ),
            format!("coupling.te_bins = {}", self.te_bins),
            format!("eval.test_size = {}", self.test_size),
        ];
        if let Some(j) = self.jobs {
            lines.push(format!("jobs = {j}"));
        }
        lines.join("\n") + "\n"
    }

    pub fn hashes(&self) -> StageHashes {
        let data = digest(&[&self.spec, &self.seed]);
        let train = digest(&[&data, &self.train, &self.train_end, &self.cold_ablation]);
        let fit = digest(&[&train, &self.koopman_options()]);
        let rollout = digest(&[&fit, &self.rollout_mode, &self.test_size]);
        let couple = digest(&[&train, &self.te_bins]);
        let report = digest(&[&rollout, &couple]);
        StageHashes {
            data,
            train,
            fit,
            rollout,
            couple,
            report,
        }
    }
}

/// Content hash of every input that feeds a stage, including upstream stages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageHashes {
    pub data: String,
    pub train: String,
    pub fit: String,
    pub rollout: String,
    pub couple: String,
    pub report: String,
}

fn digest(parts: &[&dyn erased::Json]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.json().as_bytes());
        h.update([0u8]);
    }
    h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
}

mod erased {
    pub trait Json {
        fn json(&self) -> String;
    }

    impl<T: serde::Serialize> Json for T {
        fn json(&self) -> String {
            serde_json::to_string(self).expect("config values serialize")
        }
    }
}

/// Hex SHA-256 of a byte slice.
pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
