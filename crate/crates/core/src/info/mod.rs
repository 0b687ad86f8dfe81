//! Entropy, mutual information, conditional mutual information, co-information
//! and total correlation over exact discrete distributions or sampled
//! activations.
//!
//! Three backends are available through [`EstimatorConfig`]:
//!
//! * `exact-discrete` treats every distinct column value as a symbol. On a
//!   [`DiscreteJoint`], or on a dataset enumerating every outcome with its
//!   multiplicity, this is exact.
//! * `binned-plugin` first replaces each neuron column by its quantile bin
//!   index ([`quantile_bin`]) and then uses plug-in frequencies.
//! * `kl-upper-bound` evaluates neuron-set versus label mutual information
//!   with the pairwise-KL mixture bound ([`kl_upper_bound_mi`]). Every other
//!   quantity (entropies, neuron-versus-neuron information, conditional and
//!   higher-order terms) falls back to the binned plug-in path.
//!
//! A [`DiscreteJoint`] source is always evaluated exactly, whatever the backend.

mod dataset;
mod estimator;
mod joint;
mod kl;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{TaskId, VertexId};

pub use dataset::{quantile_bin, ActivationDataset};
pub use estimator::Estimator;
pub use joint::DiscreteJoint;
pub use kl::{gaussian_kl, kl_upper_bound_mi};

/// Largest joint alphabet the exact backend will enumerate.
pub const MAX_EXACT_OUTCOMES: u64 = 1 << 24;

/// A random variable: one neuron output or one task label.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Var {
    Neuron(VertexId),
    Label(TaskId),
}

impl Var {
    pub fn neuron(network: impl Into<String>, layer_hint: u32, index: u32) -> Self {
        Var::Neuron(VertexId::new(network, layer_hint, index))
    }

    pub fn label(task: impl Into<String>) -> Self {
        Var::Label(TaskId::new(task))
    }
}

impl From<VertexId> for Var {
    fn from(v: VertexId) -> Self {
        Var::Neuron(v)
    }
}

impl From<TaskId> for Var {
    fn from(t: TaskId) -> Self {
        Var::Label(t)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::Neuron(v) => write!(f, "{v}"),
            Var::Label(t) => write!(f, "label:{t}"),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    ExactDiscrete,
    #[default]
    BinnedPlugin,
    KlUpperBound,
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exact-discrete" | "exact" => Ok(Backend::ExactDiscrete),
            "binned-plugin" | "binned" => Ok(Backend::BinnedPlugin),
            "kl-upper-bound" | "kl" => Ok(Backend::KlUpperBound),
            other => Err(format!("unknown estimator backend `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    pub(crate) fn scale_nats(self, nats: f64) -> f64 {
        match self {
            LogBase::Bits => nats / std::f64::consts::LN_2,
            LogBase::Nats => nats,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceMode {
    Diagonal,
    #[default]
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorConfig {
    pub backend: Backend,
    pub bins: usize,
    pub log_base: LogBase,
    pub covariance_mode: CovarianceMode,
    pub regularizer: f64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            backend: Backend::BinnedPlugin,
            bins: 30,
            log_base: LogBase::Bits,
            covariance_mode: CovarianceMode::Full,
            regularizer: 1e-6,
        }
    }
}

impl EstimatorConfig {
    pub fn exact() -> Self {
        EstimatorConfig {
            backend: Backend::ExactDiscrete,
            ..Default::default()
        }
    }

    pub fn binned(bins: usize) -> Self {
        EstimatorConfig {
            backend: Backend::BinnedPlugin,
            bins,
            ..Default::default()
        }
    }

    pub fn kl() -> Self {
        EstimatorConfig {
            backend: Backend::KlUpperBound,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), InfoError> {
        if self.bins < 2 {
            return Err(InfoError::InvalidConfig(format!(
                "bins must be at least 2, got {}",
                self.bins
            )));
        }
        if self.backend == Backend::KlUpperBound && !(self.regularizer > 0.0) {
            return Err(InfoError::InvalidConfig(format!(
                "regularizer must be positive for the KL backend, got {}",
                self.regularizer
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("empty variable set")]
    EmptyVariableSet,
    #[error("unknown variable {0}")]
    UnknownVariable(Var),
    #[error("variable {0} appears in more than one argument set")]
    Overlap(Var),
    #[error("co-information needs at least 2 sets, got {0}")]
    TooFewSets(usize),
    #[error("degenerate dataset: {0} samples (need at least 2)")]
    DegenerateDataset(usize),
    #[error("joint alphabet of {outcomes} outcomes exceeds the exact-backend limit of {limit}")]
    AlphabetTooLarge { outcomes: u128, limit: u64 },
    #[error("invalid estimator config: {0}")]
    InvalidConfig(String),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("label class {class} has {count} samples (need at least 2)")]
    ClassTooSmall { class: String, count: usize },
    #[error("covariance is singular after regularization: {0}")]
    Singular(String),
}

/// Where probabilities come from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Joint(&'a DiscreteJoint),
    Data(&'a ActivationDataset),
}

impl<'a> From<&'a DiscreteJoint> for Source<'a> {
    fn from(j: &'a DiscreteJoint) -> Self {
        Source::Joint(j)
    }
}

impl<'a> From<&'a ActivationDataset> for Source<'a> {
    fn from(d: &'a ActivationDataset) -> Self {
        Source::Data(d)
    }
}

pub fn entropy<'a>(
    vars: &[Var],
    source: impl Into<Source<'a>>,
    cfg: &EstimatorConfig,
) -> Result<f64, InfoError> {
    Estimator::new(source.into(), cfg)?.entropy(vars)
}

pub fn mutual_info<'a>(
    set1: &[Var],
    set2: &[Var],
    source: impl Into<Source<'a>>,
    cfg: &EstimatorConfig,
) -> Result<f64, InfoError> {
    Estimator::new(source.into(), cfg)?.mutual_info(set1, set2)
}

pub fn conditional_mi<'a>(
    set1: &[Var],
    set2: &[Var],
    cond: &[Var],
    source: impl Into<Source<'a>>,
    cfg: &EstimatorConfig,
) -> Result<f64, InfoError> {
    Estimator::new(source.into(), cfg)?.conditional_mi(set1, set2, cond)
}

pub fn co_information<'a>(
    sets: &[&[Var]],
    source: impl Into<Source<'a>>,
    cfg: &EstimatorConfig,
) -> Result<f64, InfoError> {
    Estimator::new(source.into(), cfg)?.co_information(sets)
}

pub fn total_correlation<'a>(
    vars: &[Var],
    source: impl Into<Source<'a>>,
    cfg: &EstimatorConfig,
) -> Result<f64, InfoError> {
    Estimator::new(source.into(), cfg)?.total_correlation(vars)
}
