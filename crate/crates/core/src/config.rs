//! Pipeline configuration, loadable from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adaptive::{ActiveParams, InitParams, PoolSource};
use crate::classifier::TrainConfig;
use crate::error::{Error, Result};
use crate::quantize::{FillPolicy, PatchMetric};
use crate::samplers::SamplerMethod;

pub const DEFAULT_RATIO: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineKind {
    Dq,
    Dqas,
}

impl std::str::FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dq" => Ok(PipelineKind::Dq),
            "dqas" => Ok(PipelineKind::Dqas),
            other => Err(Error::Config(format!("unknown pipeline `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdaptiveConfig {
    pub enabled: bool,
    pub lb: f64,
    pub max_iter: usize,
    /// Samples added per active-learning round; `budget / 20` when unset.
    pub k: Option<usize>,
    pub rounds: usize,
    pub candidate_subsample: usize,
    pub refine_epochs: usize,
    pub full_retrain: bool,
    pub pool: PoolSource,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        AdaptiveConfig {
            enabled: true,
            lb: 0.5,
            max_iter: 50,
            k: None,
            rounds: 5,
            candidate_subsample: 256,
            refine_epochs: 3,
            full_retrain: false,
            pool: PoolSource::Bins,
        }
    }
}

impl AdaptiveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lb > 0.0 && self.lb < 1.0) {
            return Err(Error::Config(format!("adaptive.lb {} outside (0, 1)", self.lb)));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("adaptive.max_iter must be at least 1".into()));
        }
        if self.k == Some(0) {
            return Err(Error::Config("adaptive.k must be at least 1".into()));
        }
        if self.candidate_subsample == 0 {
            return Err(Error::Config("adaptive.candidate_subsample must be at least 1".into()));
        }
        Ok(())
    }

    pub fn init_params(&self, budget: usize) -> InitParams {
        InitParams {
            budget,
            lb: self.lb,
            max_iter: self.max_iter,
            pool: self.pool,
        }
    }

    pub fn active_params(&self, k: usize) -> ActiveParams {
        ActiveParams {
            k,
            rounds: self.rounds,
            candidate_subsample: self.candidate_subsample,
            refine_epochs: self.refine_epochs,
            full_retrain: self.full_retrain,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub input: Option<PathBuf>,
    pub pipeline: PipelineKind,
    pub n_bins: usize,
    pub ratio: Option<f64>,
    pub budget: Option<usize>,
    pub drop_rate: f64,
    pub n_patches: usize,
    pub patch_metric: PatchMetric,
    pub fill: FillPolicy,
    pub sampler: SamplerMethod,
    pub adaptive: AdaptiveConfig,
    pub classifier: TrainConfig,
    /// When set, this fraction of every class is held out for evaluation
    /// and compression runs on the rest.
    pub holdout_fraction: Option<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: None,
            pipeline: PipelineKind::Dq,
            n_bins: 10,
            ratio: None,
            budget: None,
            drop_rate: 0.25,
            n_patches: 4,
            patch_metric: PatchMetric::Variance,
            fill: FillPolicy::Mean,
            sampler: SamplerMethod::UniformBins,
            adaptive: AdaptiveConfig::default(),
            classifier: TrainConfig::default(),
            holdout_fraction: None,
            seed: 0,
            out: None,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        match (self.ratio, self.budget) {
            (Some(_), Some(_)) => return Err(Error::Config("set either ratio or budget, not both".into())),
            (Some(r), None) if !(r > 0.0 && r <= 1.0) => {
                return Err(Error::Config(format!("ratio {r} outside (0, 1]")));
            }
            (None, Some(0)) => return Err(Error::Config("budget must be positive".into())),
            _ => {}
        }
        if self.n_bins == 0 {
            return Err(Error::Config("n_bins must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::Config(format!("drop_rate {} outside [0, 1)", self.drop_rate)));
        }
        if self.n_patches == 0 {
            return Err(Error::Config("n_patches must be at least 1".into()));
        }
        if let Some(h) = self.holdout_fraction {
            if !(h > 0.0 && h < 1.0) {
                return Err(Error::Config(format!("holdout_fraction {h} outside (0, 1)")));
            }
        }
        if self.pipeline == PipelineKind::Dqas {
            self.adaptive.validate()?;
        }
        self.classifier.validate()
    }

    /// Keep ratio, or [`DEFAULT_RATIO`] when neither ratio nor budget is set.
    pub fn effective_ratio(&self) -> Option<f64> {
        match (self.ratio, self.budget) {
            (Some(r), _) => Some(r),
            (None, None) => Some(DEFAULT_RATIO),
            (None, Some(_)) => None,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
