//! One structured config file covering the model, the length regimen, the
//! training loop, the synthetic task, and evaluation. Every value has a desk
//! default and can be overridden by a CLI flag.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extrapolation::{LengthSamplerConfig, SelectionPolicy};
use crate::harness::optim::AdamConfig;
use crate::harness::synthetic::SyntheticTaskConfig;
use crate::rlb::LossMode;
use crate::stca::StcaConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LengthSection {
    pub min: usize,
    pub avg: usize,
    pub max: usize,
    pub infer: usize,
    pub alpha: f64,
    /// `suffix` or `random`.
    pub selection: String,
}

impl Default for LengthSection {
    fn default() -> Self {
        let desk = LengthSamplerConfig::desk();
        LengthSection {
            min: desk.l_min,
            avg: desk.l_avg,
            max: desk.l_max,
            infer: desk.l_infer,
            alpha: desk.alpha,
            selection: "suffix".into(),
        }
    }
}

impl LengthSection {
    pub fn sampler_config(&self) -> LengthSamplerConfig {
        LengthSamplerConfig {
            l_min: self.min,
            l_avg: self.avg,
            l_max: self.max,
            l_infer: self.infer,
            alpha: self.alpha,
        }
    }

    pub fn selection_policy(&self) -> Result<SelectionPolicy> {
        SelectionPolicy::parse(&self.selection)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPhase {
    pub steps: usize,
    pub l_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub embedding_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// `per_user` (the request-level objective) or `flat`.
    pub loss: String,
    /// Train at one fixed length instead of sampling.
    pub fixed_len: Option<usize>,
    /// Optional schedule of (steps, l_max) phases; overrides `steps`.
    pub curriculum: Vec<CurriculumPhase>,
    pub log_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            steps: 300,
            batch_size: 32,
            lr: 1e-3,
            embedding_lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: "per_user".into(),
            fixed_len: None,
            curriculum: Vec::new(),
            log_every: 1,
        }
    }
}

impl TrainSection {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            embedding_lr: self.embedding_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn loss_mode(&self) -> Result<LossMode> {
        match self.loss.as_str() {
            "per_user" => Ok(LossMode::PerUser),
            "flat" => Ok(LossMode::Flat),
            other => Err(Error::Config(format!(
                "unknown loss mode {other:?}, expected per_user|flat"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSection {
    pub vocab: u32,
    pub requests: usize,
    pub history_min: usize,
    pub history_max: usize,
    pub m: usize,
    pub lag_min: usize,
    pub lag_max: usize,
    pub signal_copies: usize,
    pub proxy_lag_min: usize,
    pub proxy_lag_max: usize,
    pub proxy_copies: usize,
    pub proxy_strength: f64,
    pub noise: f64,
    pub clusters: u32,
}

impl Default for DataSection {
    fn default() -> Self {
        let d = SyntheticTaskConfig::desk_long_lag();
        DataSection {
            vocab: d.vocab,
            requests: d.requests,
            history_min: d.history_len.0,
            history_max: d.history_len.1,
            m: d.m,
            lag_min: d.signal_lag.0,
            lag_max: d.signal_lag.1,
            signal_copies: d.signal_copies,
            proxy_lag_min: d.proxy_lag.0,
            proxy_lag_max: d.proxy_lag.1,
            proxy_copies: d.proxy_copies,
            proxy_strength: d.proxy_strength,
            noise: d.noise,
            clusters: d.clusters,
        }
    }
}

impl DataSection {
    pub fn task_config(&self, seed: u64) -> SyntheticTaskConfig {
        SyntheticTaskConfig {
            vocab: self.vocab,
            requests: self.requests,
            history_len: (self.history_min, self.history_max),
            m: self.m,
            signal_lag: (self.lag_min, self.lag_max),
            signal_copies: self.signal_copies,
            proxy_lag: (self.proxy_lag_min, self.proxy_lag_max),
            proxy_copies: self.proxy_copies,
            proxy_strength: self.proxy_strength,
            noise: self.noise,
            clusters: self.clusters,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub infer_len: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { infer_len: 256 }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model: StcaConfig,
    pub length: LengthSection,
    pub train: TrainSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }
}
