//! TOML run configuration. Every section is optional and defaults to the
//! reference recipe.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seld6dof_core::accdoa::DecodeConfig;
use seld6dof_core::metrics::MetricConfig;
use seld6dof_core::net::{ModelConfig, Variant};
use seld6dof_core::sensor::SensorConfig;
use seld6dof_core::sim::{MotionProfile, SplitConfig};

use crate::error::{usage, AppError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub simulate: SplitConfig,
    pub sensor: SensorConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeConfig,
    pub metrics: MetricConfig,
}

/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Dataset directory; holds `manifest.json`.
    pub data_dir: PathBuf,
    pub feature_dir: PathBuf,
    /// Checkpoint, model description, training log and evaluation reports.
    pub run_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { data_dir: "data".into(), feature_dir: "features".into(), run_dir: "run".into(), report_dir: "report".into() }
    }
}

impl Paths {
    pub fn manifest(&self) -> PathBuf {
        self.data_dir.join("manifest.json")
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.data_dir, &mut self.feature_dir, &mut self.run_dir, &mut self.report_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Scenes per optimization step.
    pub batch_size: usize,
    pub seed: u64,
    /// Motion profiles used for training and validation; unset means all
    /// profiles, except static-only for variant A.
    pub profiles: Option<Vec<MotionProfile>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 100, lr: 0.01, batch_size: 8, seed: 0, profiles: None }
    }
}

impl TrainConfig {
    pub fn profiles_for(&self, variant: Variant) -> Vec<MotionProfile> {
        match (&self.profiles, variant) {
            (Some(p), _) => p.clone(),
            (None, Variant::BaselineStat) => vec![MotionProfile::Stat],
            (None, _) => MotionProfile::ALL.to_vec(),
        }
    }
}

impl RunConfig {
    /// Reads a config file; a missing or malformed file is a usage error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = match std::fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => usage!("cannot read config {}: {e}", path.display()),
        };
        let mut cfg: RunConfig = match toml::from_str(&text) {
            Ok(c) => c,
            Err(e) => usage!("invalid config {}: {e}", path.display()),
        };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.paths.resolve(&base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.metrics.validate()?;
        self.simulate.scene.validate()?;
        let t = &self.train;
        if !(1..=100).contains(&t.epochs) {
            usage!("train.epochs must be in 1..=100, got {}", t.epochs);
        }
        if !(t.lr > 0.0) {
            usage!("train.lr must be positive, got {}", t.lr);
        }
        if t.batch_size == 0 {
            usage!("train.batch_size must be at least 1");
        }
        if matches!(&t.profiles, Some(p) if p.is_empty()) {
            usage!("train.profiles must not be empty");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| AppError::Usage(format!("cannot serialize config: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_reference_recipe() {
        let cfg: RunConfig = toml::from_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.train.lr, 0.01);
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.model.gru_hidden, 128);
        assert_eq!(cfg.metrics.theta_deg, 20.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = RunConfig::default();
        cfg.model.variant = Variant::AudioSe;
        cfg.train.profiles = Some(vec![MotionProfile::ThreeDof]);
        let back: RunConfig = toml::from_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<RunConfig>("[train]\nepoch = 3\n").is_err());
    }

    #[test]
    fn static_only_default_for_variant_a() {
        let t = TrainConfig::default();
        assert_eq!(t.profiles_for(Variant::BaselineStat), vec![MotionProfile::Stat]);
        assert_eq!(t.profiles_for(Variant::SensorMmtm).len(), 3);
    }
}
