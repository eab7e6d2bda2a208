//! Run configuration: built-in defaults, overridden by a TOML file,
//! overridden by command-line flags.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE_NAME: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed for simulation, subject split, initialization and ICA.
    pub seed: u64,
    pub paths: PathsConfig,
    pub simulate: SimulateConfig,
    pub train: TrainSection,
    pub clean: CleanSection,
    pub evaluate: EvaluateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            paths: PathsConfig::default(),
            simulate: SimulateConfig::default(),
            train: TrainSection::default(),
            clean: CleanSection::default(),
            evaluate: EvaluateSection::default(),
        }
    }
}

/// Where each stage reads and writes. Every command writes to its own
/// directory unless `--out` is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub dataset: PathBuf,
    pub model: PathBuf,
    pub cleaned: PathBuf,
    pub evaluation: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            dataset: "run/dataset".into(),
            model: "run/model".into(),
            cleaned: "run/cleaned".into(),
            evaluation: "run/evaluation".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub subjects: usize,
    pub duration_s: f64,
    pub fs: f64,
    pub a_range: [f64; 2],
    pub b_range: [f64; 2],
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            subjects: 27,
            duration_s: 30.0,
            fs: 200.0,
            a_range: [0.2, 1.0],
            b_range: [0.1, 0.6],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    /// Share of subjects held out for testing.
    pub test_fraction: f64,
    /// Share of the remaining subjects used for validation.
    pub validation_fraction: f64,
    pub segment_len: usize,
    pub batches_per_epoch: usize,
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub hidden: usize,
    /// Train on this single EEG channel instead of all of them.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_channel: Option<String>,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = lstmica::lstm::TrainConfig::default();
        Self {
            epochs: t.epochs,
            batch_size: t.batch_size,
            patience: t.patience,
            test_fraction: 0.3,
            validation_fraction: t.validation_fraction,
            segment_len: t.segment_len,
            batches_per_epoch: t.batches_per_epoch,
            learning_rate: t.learning_rate,
            clip_norm: t.clip_norm,
            hidden: lstmica::lstm::DEFAULT_HIDDEN,
            single_channel: None,
        }
    }
}

impl TrainSection {
    pub fn to_train_config(&self) -> lstmica::lstm::TrainConfig {
        lstmica::lstm::TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            patience: self.patience,
            validation_fraction: self.validation_fraction,
            segment_len: self.segment_len,
            batches_per_epoch: self.batches_per_epoch,
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleanSection {
    pub threshold: f64,
    pub ica_max_iter: usize,
    pub ica_tol: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub single_channel: Option<String>,
}

impl Default for CleanSection {
    fn default() -> Self {
        Self {
            threshold: lstmica::removal::DEFAULT_THRESHOLD,
            ica_max_iter: lstmica::ica::DEFAULT_MAX_ITER,
            ica_tol: lstmica::ica::DEFAULT_TOL,
            single_channel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    /// Random segments for the EOG estimation error distribution.
    pub segments: usize,
    pub segment_min_len: usize,
    pub segment_max_len: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        let s = lstmica::datagen::SegmentSpec::default();
        Self {
            segments: s.count,
            segment_min_len: s.min_len,
            segment_max_len: s.max_len,
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with `path` if given.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            anyhow::Error::new(ConfigError(e.message().to_string()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulate;
        if s.subjects == 0 {
            bail!(ConfigError("simulate.subjects must be >= 1".into()));
        }
        if !(s.duration_s > 0.0 && s.fs > 0.0) {
            bail!(ConfigError("simulate.duration_s and simulate.fs must be positive".into()));
        }
        for (name, r) in [("a_range", s.a_range), ("b_range", s.b_range)] {
            if !(r[0] <= r[1]) {
                bail!(ConfigError(format!("simulate.{name} must be [low, high]")));
            }
        }
        let t = &self.train;
        if !(0.0..1.0).contains(&t.test_fraction) {
            bail!(ConfigError("train.test_fraction must be in [0, 1)".into()));
        }
        if t.hidden == 0 {
            bail!(ConfigError("train.hidden must be >= 1".into()));
        }
        t.to_train_config()
            .validate()
            .map_err(|e| ConfigError(format!("train: {e}")))?;
        let c = &self.clean;
        if !(c.threshold.is_finite() && c.threshold >= 0.0) {
            bail!(ConfigError("clean.threshold must be a non-negative number".into()));
        }
        if c.ica_max_iter == 0 || !(c.ica_tol > 0.0) {
            bail!(ConfigError("clean.ica_max_iter and clean.ica_tol must be positive".into()));
        }
        let e = &self.evaluate;
        if e.segment_min_len == 0 || e.segment_min_len > e.segment_max_len {
            bail!(ConfigError("evaluate segment lengths must satisfy 1 <= min <= max".into()));
        }
        Ok(())
    }

    /// Writes the effective configuration into `dir`.
    pub fn echo_into(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(CONFIG_FILE_NAME), self.to_toml())
            .with_context(|| format!("writing {}", dir.join(CONFIG_FILE_NAME).display()))
    }
}

/// Invalid configuration value or unknown key.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invalid configuration: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}
