//! Black-box objectives: the loss surface every block optimizes.

mod command;
mod dataset;
mod learners;
mod metrics;
mod pipeline;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::space::{Configuration, SearchSpace, SpaceError};

pub use command::CommandObjective;
pub use dataset::{split_train_valid_test, subsample, Dataset, FeatureKind, Split, Target, TaskKind};
pub use learners::{argmax, Predictions};
pub use metrics::{balanced_accuracy, mse, score, Metric};
pub use pipeline::{pipeline_space, PipelineObjective, PIPELINE_SPACE_JSON};
pub use synthetic::{
    benchmark, benchmark_names, synthetic_suite, ArmSpec, SyntheticKind, SyntheticObjective, SyntheticParams,
    BRANIN_MINIMUM,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("{0}")]
    Io(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("dataset needs at least one feature column and a label column")]
    SingleColumn,
    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("metric {metric:?} does not match a {task:?} dataset")]
    MetricMismatch { metric: Metric, task: TaskKind },
    #[error(transparent)]
    Space(#[from] SpaceError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Failed,
    Timeout,
}

/// Why an evaluation did not produce a loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalFailure {
    pub status: Status,
    pub message: String,
}

impl EvalFailure {
    pub fn failed(message: impl Into<String>) -> Self {
        Self {
            status: Status::Failed,
            message: message.into(),
        }
    }
}

/// A minimized black-box function over a search space.
///
/// `evaluate` must be a pure function of `(config, fidelity, seed)`.
pub trait Objective: Send + Sync {
    fn name(&self) -> &str;

    fn space(&self) -> &SearchSpace;

    /// Loss at `config`, training on the leading `fidelity` fraction of data where applicable.
    fn evaluate(&self, config: &Configuration, fidelity: f64, seed: u64) -> Result<f64, EvalFailure>;

    /// Deterministic estimate of the evaluation cost in seconds.
    fn cost_estimate(&self, _config: &Configuration) -> Option<f64> {
        None
    }

    /// Smallest attainable loss, when known. Caps extrapolated rewards at `-floor`.
    fn loss_floor(&self) -> Option<f64> {
        None
    }
}

/// One objective evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub config: Configuration,
    /// Present iff `status == Ok`.
    pub loss: Option<f64>,
    pub cost: f64,
    pub fidelity: f64,
    pub status: Status,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

impl Observation {
    pub fn reward(&self) -> Option<f64> {
        self.loss.map(|l| -l)
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// FNV-1a over the canonical JSON form of a configuration; stable across platforms.
pub(crate) fn config_hash(config: &Configuration) -> u64 {
    let text = serde_json::to_string(config).expect("configuration serializes");
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3))
}
