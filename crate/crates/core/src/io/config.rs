//! Run configuration, read from a TOML file. Every field has a default, so
//! an empty file is a valid desk-scale configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::TrainSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Pretrain,
    TrainVd,
    TrainVdsws,
    Compress,
    Evaluate,
    Sweep,
    Report,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CompressionMethod {
    /// Quantize with the trained mixture prior.
    #[default]
    Sws,
    /// Dropout-rate thresholding followed by a fixed EM quantizer.
    VdBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompressionOptions {
    pub method: CompressionMethod,
    pub offset_bits: u8,
    /// Binary dropout rate at or above which a weight is zeroed (baseline only).
    pub threshold: f64,
    /// EM components for the baseline quantizer.
    pub baseline_components: usize,
}

impl Default for CompressionOptions {
    fn default() -> Self {
        Self {
            method: CompressionMethod::Sws,
            offset_bits: 5,
            threshold: 0.95,
            baseline_components: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataOptions {
    pub dir: PathBuf,
    pub train_images: String,
    pub train_labels: String,
    pub test_images: String,
    pub test_labels: String,
    /// Keep only the first N training examples.
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("data/mnist"),
            train_images: "train-images-idx3-ubyte".into(),
            train_labels: "train-labels-idx1-ubyte".into(),
            test_images: "t10k-images-idx3-ubyte".into(),
            test_labels: "t10k-labels-idx1-ubyte".into(),
            train_limit: Some(10_000),
            test_limit: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepOptions {
    pub tau2_values: Vec<f64>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            tau2_values: vec![0.005, 0.01, 0.02, 0.05],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Filled in from the subcommand; not read from the file.
    #[serde(skip)]
    pub mode: Option<Mode>,
    /// Layer widths from input to classes.
    pub architecture: Vec<usize>,
    pub schedule: TrainSchedule,
    pub compression: CompressionOptions,
    pub data: DataOptions,
    pub sweep: SweepOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            architecture: vec![784, 300, 100, 10],
            schedule: TrainSchedule::desk_scale(),
            compression: CompressionOptions::default(),
            data: DataOptions::default(),
            sweep: SweepOptions::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn seed(&self) -> u64 {
        self.schedule.seed
    }

    /// Checks every value the given mode will use.
    pub fn validate(&self) -> Result<()> {
        let mode = self
            .mode
            .ok_or_else(|| Error::Config("no mode selected".into()))?;
        let training = matches!(mode, Mode::Pretrain | Mode::TrainVd | Mode::TrainVdsws | Mode::Sweep);
        if training || mode == Mode::Compress {
            self.schedule.validate()?;
        }
        if self.architecture.len() < 2 || self.architecture.contains(&0) {
            return Err(Error::Config(format!(
                "architecture needs >= 2 positive widths, got {:?}",
                self.architecture
            )));
        }
        if matches!(mode, Mode::Compress | Mode::Sweep) {
            let c = &self.compression;
            if !(1..=16).contains(&c.offset_bits) {
                return Err(Error::Config(format!("offset_bits must be in 1..=16, got {}", c.offset_bits)));
            }
            if !(c.threshold > 0.0 && c.threshold < 1.0) {
                return Err(Error::Config(format!("threshold must lie in (0, 1), got {}", c.threshold)));
            }
            if c.baseline_components == 0 || c.baseline_components > 1024 {
                return Err(Error::Config("baseline_components must be in 1..=1024".into()));
            }
        }
        if mode == Mode::Sweep {
            if self.sweep.tau2_values.is_empty() {
                return Err(Error::Config("sweep needs at least one tau2 value".into()));
            }
            if self.sweep.tau2_values.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
                return Err(Error::Config("sweep tau2 values must be finite and >= 0".into()));
            }
        }
        if matches!(self.data.train_limit, Some(0)) || matches!(self.data.test_limit, Some(0)) {
            return Err(Error::Config("data limits must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.compression.offset_bits, 5);
        assert_eq!(cfg.compression.threshold, 0.95);
        assert_eq!(cfg.compression.baseline_components, 64);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.schedule.phase2_epochs = 3;
        cfg.compression.method = CompressionMethod::VdBaseline;
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[schedule]\nlearning_rate = 3\n").is_err());
    }

    #[test]
    fn validation_catches_out_of_range_values() {
        let mut cfg = RunConfig {
            mode: Some(Mode::Compress),
            ..Default::default()
        };
        cfg.validate().unwrap();
        cfg.compression.threshold = 1.5;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig {
            mode: Some(Mode::Pretrain),
            ..Default::default()
        };
        cfg.schedule.pi0 = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig {
            mode: Some(Mode::Sweep),
            ..Default::default()
        };
        cfg.sweep.tau2_values.clear();
        assert!(cfg.validate().is_err());
        assert!(RunConfig::default().validate().is_err());
    }
}
