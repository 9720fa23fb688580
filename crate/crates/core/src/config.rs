//! Training configuration and its TOML file form.
//!
//! Every key is optional and missing keys take the defaults below. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cdgin::ContrastiveConfig;
use crate::dynamic_fc::{DistanceKind, WindowSpec};
use crate::error::{Error, Result};
use crate::model::{InputConfig, ModelConfig, StreamSelection};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub layers: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub window_size: usize,
    pub stride: usize,
    pub hidden_dim: usize,
    /// Defaults to `hidden_dim`.
    pub projection_dim: Option<usize>,
    /// Defaults to `hidden_dim`.
    pub classifier_hidden: Option<usize>,
    pub reduction_ratio: usize,
    pub alpha: f64,
    pub delta: usize,
    /// `euclidean`, `manhattan` or `mahalanobis`.
    pub distance: String,
    pub mahalanobis_ridge: f64,
    /// `both`, `correlation` or `distance`.
    pub streams: String,
    /// Per-subject, per-ROI z-scoring before windowing.
    pub normalize: bool,
    pub epochs: usize,
    pub seed: u64,
    pub test_fraction: f64,
    pub folds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            layers: 2,
            batch_size: 4,
            lr: 4e-4,
            weight_decay: 2e-4,
            window_size: 35,
            stride: 25,
            hidden_dim: 16,
            projection_dim: None,
            classifier_hidden: None,
            reduction_ratio: 2,
            alpha: 0.1,
            delta: 1,
            distance: "euclidean".into(),
            mahalanobis_ridge: DistanceKind::DEFAULT_RIDGE_SCALE,
            streams: "both".into(),
            normalize: true,
            epochs: 100,
            seed: 0,
            test_fraction: 0.2,
            folds: 4,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("batch_size", self.batch_size),
            ("hidden_dim", self.hidden_dim),
            ("reduction_ratio", self.reduction_ratio),
            ("delta", self.delta),
            ("stride", self.stride),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("`{name}` must be positive")));
            }
        }
        if self.window_size < 2 {
            return Err(Error::Config("`window_size` must be at least 2".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("`lr` must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!("`weight_decay` must be >= 0, got {}", self.weight_decay)));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("`alpha` must be >= 0, got {}", self.alpha)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("`test_fraction` must be in (0, 1), got {}", self.test_fraction)));
        }
        if self.folds < 2 {
            return Err(Error::Config("`folds` must be at least 2".into()));
        }
        self.distance_kind()?;
        self.stream_selection()?;
        Ok(())
    }

    pub fn distance_kind(&self) -> Result<DistanceKind> {
        DistanceKind::parse(&self.distance, self.mahalanobis_ridge)
    }

    pub fn stream_selection(&self) -> Result<StreamSelection> {
        StreamSelection::parse(&self.streams)
    }

    pub fn window_spec(&self) -> Result<WindowSpec> {
        WindowSpec::new(self.window_size, self.stride).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn input_config(&self) -> Result<InputConfig> {
        Ok(InputConfig {
            window: self.window_spec()?,
            distance: self.distance_kind()?,
            normalize: self.normalize,
        })
    }

    /// Model shape for data with `rois` ROIs whose shortest subject yields
    /// `min_windows` windows.
    pub fn model_config(&self, rois: usize, min_windows: usize) -> Result<ModelConfig> {
        let cfg = ModelConfig {
            rois,
            hidden_dim: self.hidden_dim,
            projection_dim: self.projection_dim.unwrap_or(self.hidden_dim),
            layers: self.layers,
            classifier_hidden: self.classifier_hidden.unwrap_or(self.hidden_dim),
            reduction_ratio: self.reduction_ratio,
            temporal_kernel: crate::fusion_head::temporal_kernel_width(min_windows),
            streams: self.stream_selection()?,
            contrastive: ContrastiveConfig {
                delta: self.delta,
                alpha: self.alpha,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Parses `text` after applying `key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        apply_overrides(&mut table, overrides)?;
        let cfg: TrainConfig = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    // Accept bare strings as well as TOML literals.
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

pub fn apply_overrides(table: &mut toml::Table, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (key, value) = o
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{o}` is not key=value")))?;
        table.insert(key.trim().to_string(), parse_override_value(value.trim()));
    }
    Ok(())
}

/// A config file: every [`TrainConfig`] key plus optional `data` and `out`
/// paths.
#[derive(Clone, Debug, PartialEq)]
pub struct CliConfigFile {
    pub train: TrainConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl CliConfigFile {
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e| Error::Config(format!("{e}")))?;
        apply_overrides(&mut table, overrides)?;
        let path_of = |table: &mut toml::Table, key: &str| -> Result<Option<PathBuf>> {
            match table.remove(key) {
                None => Ok(None),
                Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
                Some(other) => Err(Error::Config(format!("`{key}` must be a string, got {other}"))),
            }
        };
        let data = path_of(&mut table, "data")?;
        let out = path_of(&mut table, "out")?;
        let train: TrainConfig = table.try_into().map_err(|e| Error::Config(format!("{e}")))?;
        train.validate()?;
        Ok(CliConfigFile { train, data, out })
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, overrides)
    }
}
