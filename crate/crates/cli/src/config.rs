//! Run configuration: command-line flags layered over an optional TOML file
//! layered over built-in defaults.

use std::path::Path;

use anyhow::{Context, Result};
use isac::duallearn::TrainConfig;
use serde::{Deserialize, Serialize};

/// Every field is optional so that layers can be merged; `None` means "not
/// set here".
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fs: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tmax: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proto: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_auto: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa_budget: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "TrainSection::is_empty")]
    pub train: TrainSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step_size: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signals: Option<usize>,
}

impl TrainSection {
    fn is_empty(&self) -> bool {
        *self == Self::default()
    }

    fn overlay(self, top: Self) -> Self {
        Self {
            beta: top.beta.or(self.beta),
            step_size: top.step_size.or(self.step_size),
            max_iters: top.max_iters.or(self.max_iters),
            tol: top.tol.or(self.tol),
            signals: top.signals.or(self.signals),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("invalid config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Values set in `top` win.
    pub fn overlay(self, top: Self) -> Self {
        Self {
            fs: top.fs.or(self.fs),
            channels: top.channels.or(self.channels),
            tmax: top.tmax.or(self.tmax),
            gamma: top.gamma.or(self.gamma),
            scale: top.scale.or(self.scale),
            proto: top.proto.or(self.proto),
            d: top.d.or(self.d),
            d_auto: top.d_auto.or(self.d_auto),
            kappa_budget: top.kappa_budget.or(self.kappa_budget),
            len: top.len.or(self.len),
            seed: top.seed.or(self.seed),
            train: self.train.overlay(top.train),
        }
    }

    pub fn resolve(&self) -> Settings {
        let train = TrainConfig::default();
        Settings {
            fs: self.fs.unwrap_or(16000.0),
            channels: self.channels.unwrap_or(40),
            tmax: self.tmax.unwrap_or(128),
            gamma: self.gamma.unwrap_or(1.0),
            gamma_explicit: self.gamma.is_some(),
            scale: self.scale.clone().unwrap_or_else(|| "erb".into()),
            proto: self.proto.clone().unwrap_or_else(|| "hann".into()),
            d: self.d,
            d_auto: self.d_auto.unwrap_or(false) && self.d.is_none(),
            kappa_budget: self.kappa_budget.unwrap_or(1.1),
            len: self.len,
            seed: self.seed.unwrap_or(0),
            beta: self.train.beta.unwrap_or(train.beta),
            step_size: self.train.step_size.unwrap_or(train.step_size),
            max_iters: self.train.max_iters.unwrap_or(train.max_iters),
            tol: self.train.tol.unwrap_or(train.tol),
            signals: self.train.signals.unwrap_or(train.signals),
        }
    }
}

/// Fully resolved parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub fs: f64,
    pub channels: usize,
    pub tmax: usize,
    pub gamma: f64,
    /// Whether `gamma` came from the user rather than the default.
    pub gamma_explicit: bool,
    pub scale: String,
    pub proto: String,
    pub d: Option<usize>,
    pub d_auto: bool,
    pub kappa_budget: f64,
    pub len: Option<usize>,
    pub seed: u64,
    pub beta: f64,
    pub step_size: f64,
    pub max_iters: usize,
    pub tol: f64,
    pub signals: usize,
}

#[cfg(test)]
impl RunConfig {
    fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}
