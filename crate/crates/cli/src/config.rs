//! JSON run configurations, one document type per command. Unknown keys are
//! rejected everywhere.

use std::path::{Path, PathBuf};

use drt_core::data::{gen_blobs, gen_two_moons, read_idx, split_and_subsample, Dataset};
use drt_core::ensemble::Protocol;
use drt_core::model::Activation;
use drt_core::smoothing::SmoothingSpec;
use drt_core::statsim::{MarginModel, TransferConfig};
use drt_core::training::TrainingConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result};

/// Certified-accuracy radii used when a config gives none.
pub fn default_radii() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    TwoMoons {
        n: usize,
        noise_std: f64,
        seed: u64,
    },
    Blobs {
        centers: Vec<Vec<f64>>,
        per_center: usize,
        noise_std: f64,
        seed: u64,
    },
    /// Paths are resolved against the config file's directory.
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
}

impl DatasetSpec {
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        Ok(match self {
            Self::TwoMoons { n, noise_std, seed } => gen_two_moons(*n, *noise_std, *seed)?,
            Self::Blobs {
                centers,
                per_center,
                noise_std,
                seed,
            } => gen_blobs(centers, *per_center, *noise_std, *seed)?,
            Self::Idx { images, labels } => read_idx(&base.join(images), &base.join(labels))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub max_n: Option<usize>,
    /// Keep every `stride`-th test row.
    pub stride: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            max_n: None,
            stride: 1,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn apply(&self, data: &Dataset) -> Result<(Option<Dataset>, Option<Dataset>)> {
        Ok(split_and_subsample(data, self.train_fraction, self.max_n, self.stride, self.seed)?)
    }
}

/// Dataset plus split, resolving to the requested part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub split: SplitSpec,
}

impl DataSection {
    pub fn train(&self, base: &Path) -> Result<Dataset> {
        let data = self.dataset.load(base)?;
        self.split
            .apply(&data)?
            .0
            .ok_or_else(|| CliError::Config("the split leaves no training rows".into()))
    }

    pub fn test(&self, base: &Path) -> Result<Dataset> {
        let data = self.dataset.load(base)?;
        self.split
            .apply(&data)?
            .1
            .ok_or_else(|| CliError::Config("the split leaves no test rows".into()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub members: usize,
    pub hidden: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRun {
    pub data: DataSection,
    pub model: ModelSpec,
    /// Optional plain Gaussian-augmentation phase run before `training`.
    #[serde(default)]
    pub pretrain: Option<TrainingConfig>,
    pub training: TrainingConfig,
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[default]
    Ebs,
    Eas,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyRun {
    pub data: DataSection,
    /// Directory holding `manifest.json`; defaults to the output directory.
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
    /// Defaults to equal-weight WE.
    #[serde(default)]
    pub protocol: Option<Protocol>,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default)]
    pub smoothing: SmoothingSpec,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsRun {
    pub data: DataSection,
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
    pub beta: f64,
    pub r: f64,
    /// WE weights; equal weights by default.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    /// Δ for the two-member radius bound.
    #[serde(default)]
    pub delta: f64,
    /// cos θ for the two-member radius bound; measured from the members'
    /// margin gradients at each input when absent.
    #[serde(default)]
    pub cos_theta: Option<f64>,
    #[serde(default)]
    pub max_inputs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: MarginModel,
    pub ns: Vec<usize>,
    pub lambda1s: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdSpec {
    pub mus: Vec<f64>,
    pub lambda2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RocSpec {
    pub data: DataSection,
    #[serde(default)]
    pub checkpoints: Option<PathBuf>,
    /// Noise draws for the λ proxies.
    pub m: usize,
    pub smoothing: SmoothingSpec,
    #[serde(default)]
    pub max_inputs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRun {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub jobs: Option<usize>,
    #[serde(default)]
    pub transferability: Option<TransferConfig>,
    #[serde(default)]
    pub bound_sweep: Option<SweepSpec>,
    #[serde(default)]
    pub thresholds: Option<ThresholdSpec>,
    #[serde(default)]
    pub roc: Option<RocSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalRun {
    pub records: PathBuf,
    #[serde(default = "default_radii")]
    pub radii: Vec<f64>,
}

/// Any command's configuration, keyed by command name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase", deny_unknown_fields)]
pub enum RunConfig {
    Train(TrainRun),
    Certify(CertifyRun),
    Conditions(ConditionsRun),
    Simulate(SimulateRun),
    Eval(EvalRun),
}

pub fn parse_config<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    serde_json::from_slice(bytes).map_err(|e| CliError::Json {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Parses a command-tagged configuration document.
pub fn parse_run_config(bytes: &[u8]) -> Result<RunConfig> {
    parse_config(bytes)
}
