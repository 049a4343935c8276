//! Pipeline-wide configuration, loadable from a single JSON file.
//!
//! Every section falls back to its defaults when absent, so `{}` is a valid
//! config. The metric epsilon accepts either a number or one of the named
//! presets `"matlab"`, `"numpy"`, `"small"`.

use crate::geometry::RansacConfig;
use crate::heatmap::HeatmapConfig;
use crate::metrics::{KldMode, MetricConfig, EPSILON_MATLAB, EPSILON_NUMPY, EPSILON_SMALL};
use crate::tasklab::ActionConfig;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown epsilon preset {0:?} (expected matlab, numpy, or small)")]
    UnknownEpsilon(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EpsilonSpec {
    Named(String),
    Value(f64),
}

impl EpsilonSpec {
    pub fn resolve(&self) -> Result<f64, ConfigError> {
        match self {
            EpsilonSpec::Value(v) if *v > 0.0 => Ok(*v),
            EpsilonSpec::Value(v) => {
                Err(ConfigError::Invalid(format!("epsilon must be positive, got {v}")))
            }
            EpsilonSpec::Named(name) => match name.as_str() {
                "matlab" => Ok(EPSILON_MATLAB),
                "numpy" => Ok(EPSILON_NUMPY),
                "small" => Ok(EPSILON_SMALL),
                other => Err(ConfigError::UnknownEpsilon(other.to_string())),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsSection {
    pub kld_mode: KldMode,
    pub epsilon: EpsilonSpec,
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self { kld_mode: KldMode::Stable, epsilon: EpsilonSpec::Named("numpy".into()) }
    }
}

impl MetricsSection {
    pub fn resolve(&self) -> Result<MetricConfig, ConfigError> {
        Ok(MetricConfig { kld_mode: self.kld_mode, epsilon: self.epsilon.resolve()? })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub heatmap: HeatmapConfig,
    pub ransac: RansacConfig,
    pub metrics: MetricsSection,
    pub actions: ActionConfig,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        let cfg: PipelineConfig = serde_json::from_str(&text)?;
        cfg.actions.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_all_defaults() {
        let cfg: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.heatmap.sigma_px, 40.0);
        assert_eq!(cfg.heatmap.truncate_radius, 120);
        assert_eq!(cfg.ransac.max_iters, 2000);
        assert_eq!(cfg.metrics.resolve().unwrap().epsilon, EPSILON_NUMPY);
    }

    #[test]
    fn epsilon_accepts_presets_and_numbers() {
        assert_eq!(EpsilonSpec::Named("matlab".into()).resolve().unwrap(), EPSILON_MATLAB);
        assert_eq!(EpsilonSpec::Named("small".into()).resolve().unwrap(), EPSILON_SMALL);
        assert_eq!(EpsilonSpec::Value(1e-6).resolve().unwrap(), 1e-6);
        assert!(EpsilonSpec::Named("tiny".into()).resolve().is_err());
        assert!(EpsilonSpec::Value(0.0).resolve().is_err());
    }

    #[test]
    fn partial_override_keeps_other_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"heatmap": {"sigma_px": 6.0, "truncate_radius": 18, "window_half": 3},
                "metrics": {"epsilon": 0.0001}}"#,
        )
        .unwrap();
        assert_eq!(cfg.heatmap.sigma_px, 6.0);
        assert_eq!(cfg.heatmap.window_half, 3);
        assert_eq!(cfg.ransac.inlier_threshold_px, 3.0);
        assert_eq!(cfg.metrics.resolve().unwrap().epsilon, 1e-4);
    }

    #[test]
    fn config_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        let mut cfg = PipelineConfig::default();
        cfg.ransac.seed = 99;
        cfg.metrics.kld_mode = KldMode::LegacyDreyeve;
        cfg.save(&path).unwrap();
        assert_eq!(PipelineConfig::load(&path).unwrap(), cfg);
    }
}
