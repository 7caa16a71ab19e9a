use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use volcano::blocks::{BlockParams, Budget};
use volcano::ensemble::{DEFAULT_ENSEMBLE_SIZE, DEFAULT_N_TOP};
use volcano::objective::Metric;
use volcano::plan::PlanSpec;

use crate::CliError;

/// A run-configuration document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    /// Dataset metric; defaults to balanced accuracy for classification and MSE for regression.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandSource>,
    #[serde(default = "default_plan")]
    pub plan: PlanChoice,
    pub budget: Budget,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BlockParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<MetaConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
    /// History file; the summary goes next to it with a `.summary.json` suffix.
    pub out: PathBuf,
}

/// An external objective: a shell command template plus the space document it optimizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandSource {
    pub template: String,
    pub space: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout_s: Option<f64>,
}

/// A plan label (`J`, `C`, `A`, `AC`, `CA`, `CA-progressive`) or a full plan document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PlanChoice {
    Label(String),
    Spec(PlanSpec),
}

fn default_plan() -> PlanChoice {
    PlanChoice::Label("CA".into())
}

/// What a plan choice resolves to.
#[derive(Clone, Debug, PartialEq)]
pub enum Strategy {
    Bandit(PlanSpec),
    Progressive,
}

impl PlanChoice {
    pub fn resolve(&self) -> Result<Strategy, CliError> {
        match self {
            PlanChoice::Spec(s) => Ok(Strategy::Bandit(s.clone())),
            PlanChoice::Label(l) if l.eq_ignore_ascii_case("ca-progressive") => Ok(Strategy::Progressive),
            PlanChoice::Label(l) => PlanSpec::from_label(l)
                .map(Strategy::Bandit)
                .ok_or_else(|| CliError::Usage(format!("unknown plan `{l}` (expected J, C, A, AC, CA or CA-progressive)"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetaMode {
    RgpeJoint,
    RanknetConditioning,
}

impl std::str::FromStr for MetaMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "rgpe_joint" | "rgpe" => Ok(MetaMode::RgpeJoint),
            "ranknet_conditioning" | "ranknet" => Ok(MetaMode::RanknetConditioning),
            other => Err(CliError::Usage(format!(
                "unknown meta mode `{other}` (expected rgpe_joint or ranknet_conditioning)"
            ))),
        }
    }
}

fn default_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaConfig {
    pub store: PathBuf,
    pub mode: MetaMode,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn default_size() -> usize {
    DEFAULT_ENSEMBLE_SIZE
}

fn default_n_top() -> usize {
    DEFAULT_N_TOP
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default = "default_n_top")]
    pub n_top: usize,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            size: DEFAULT_ENSEMBLE_SIZE,
            n_top: DEFAULT_N_TOP,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Usage(format!("run config, line {}: {e}", e.line())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read run config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Checks the invariants: exactly one objective source, a positive budget, a known plan.
    pub fn validate(&self) -> Result<(), CliError> {
        let sources = [self.benchmark.is_some(), self.dataset.is_some(), self.command.is_some()];
        match sources.iter().filter(|s| **s).count() {
            1 => {}
            0 => return Err(CliError::Usage("no objective: give one of benchmark, dataset or command".into())),
            _ => return Err(CliError::Usage("give exactly one of benchmark, dataset or command".into())),
        }
        if self.metric.is_some() && self.dataset.is_none() {
            return Err(CliError::Usage("metric applies only to dataset objectives".into()));
        }
        if !self.budget.is_positive() {
            return Err(CliError::Usage(format!("budget must be positive, got {:?}", self.budget)));
        }
        let strategy = self.plan.resolve()?;
        if let Some(e) = &self.ensemble {
            if self.dataset.is_none() {
                return Err(CliError::Usage("ensembles need a dataset objective".into()));
            }
            if e.size == 0 || e.n_top == 0 {
                return Err(CliError::Usage("ensemble size and n_top must be at least 1".into()));
            }
        }
        if let Some(m) = &self.meta {
            if m.k == 0 {
                return Err(CliError::Usage("meta k must be at least 1".into()));
            }
            if strategy == Strategy::Progressive {
                return Err(CliError::Usage("meta-learning does not apply to CA-progressive".into()));
            }
        }
        Ok(())
    }

    pub fn summary_path(&self) -> PathBuf {
        summary_path(&self.out)
    }
}

/// `run.jsonl` → `run.summary.json`.
pub fn summary_path(history: &Path) -> PathBuf {
    let stem = history.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
    history.with_file_name(format!("{stem}.summary.json"))
}
