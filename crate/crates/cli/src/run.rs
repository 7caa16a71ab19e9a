use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Duration;

use volcano::ensemble::build_ensemble;
use volcano::meta::{attach_ranknet, attach_rgpe, extract_dataset_features, MetaStore, RankNetModel, DEFAULT_RGPE_SAMPLES};
use volcano::objective::{benchmark, benchmark_names, CommandObjective, Dataset, Metric, Objective, PipelineObjective, TaskKind};
use volcano::persist::{write_history, Summary};
use volcano::plan::{build_plan, run_block, run_progressive, PlanError, RunResult, DEFAULT_STAGE_FRACTIONS};
use volcano::space::SearchSpace;

use crate::config::{MetaMode, RunConfig, Strategy};
use crate::CliError;

/// File name of a trained ranker inside a prior-task store.
pub const RANKER_FILE: &str = "ranker.json";

pub enum LoadedObjective {
    Synthetic(volcano::objective::SyntheticObjective),
    Pipeline {
        objective: Box<PipelineObjective>,
        dataset_features: Vec<f64>,
    },
    Command(CommandObjective),
}

impl LoadedObjective {
    pub fn objective(&self) -> &dyn Objective {
        match self {
            LoadedObjective::Synthetic(o) => o,
            LoadedObjective::Pipeline { objective, .. } => objective.as_ref(),
            LoadedObjective::Command(o) => o,
        }
    }
}

pub(crate) fn plan_error(e: PlanError) -> CliError {
    match e {
        PlanError::Invalid { .. } | PlanError::Enumeration(_) | PlanError::Space(_) => CliError::Usage(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

/// Loads a CSV dataset as a pipeline objective; a missing file is a usage error naming the path.
pub fn load_dataset_objective(path: &Path, metric: Option<Metric>, seed: u64) -> Result<LoadedObjective, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("dataset not found: {}", path.display())));
    }
    let data = Dataset::load_csv(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let metric = metric.unwrap_or(match data.task_kind() {
        TaskKind::Classification => Metric::BalancedAccuracy,
        TaskKind::Regression => Metric::Mse,
    });
    let name = path.file_stem().map_or_else(|| "dataset".into(), |s| s.to_string_lossy().into_owned());
    let objective = PipelineObjective::new(&name, &data, metric, seed).map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(LoadedObjective::Pipeline {
        objective: Box::new(objective),
        dataset_features: extract_dataset_features(&data),
    })
}

pub fn load_benchmark(name: &str) -> Result<LoadedObjective, CliError> {
    benchmark(name).map(LoadedObjective::Synthetic).ok_or_else(|| {
        CliError::Usage(format!("unknown benchmark `{name}` (known: {})", benchmark_names().join(", ")))
    })
}

pub fn load_objective(config: &RunConfig) -> Result<LoadedObjective, CliError> {
    if let Some(name) = &config.benchmark {
        return load_benchmark(name);
    }
    if let Some(path) = &config.dataset {
        return load_dataset_objective(path, config.metric, config.seed);
    }
    let Some(cmd) = &config.command else {
        return Err(CliError::Usage("no objective source".into()));
    };
    let text = fs::read_to_string(&cmd.space)
        .map_err(|e| CliError::Usage(format!("cannot read space {}: {e}", cmd.space.display())))?;
    let space = SearchSpace::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", cmd.space.display())))?;
    let mut objective = CommandObjective::new(&cmd.template, space);
    if let Some(t) = cmd.timeout_s {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("command timeout must be positive, got {t}")));
        }
        objective = objective.with_timeout(Duration::from_secs_f64(t));
    }
    Ok(LoadedObjective::Command(objective))
}

pub struct RunOutcome {
    pub result: RunResult,
    pub summary: Summary,
    pub warnings: Vec<String>,
}

/// Runs `config` without writing anything.
pub fn execute_config(config: &RunConfig) -> Result<RunOutcome, CliError> {
    config.validate()?;
    let loaded = load_objective(config)?;
    let objective = loaded.objective();
    let params = config.params.unwrap_or_default();
    let mut warnings = Vec::new();
    let result = match config.plan.resolve()? {
        Strategy::Progressive => {
            run_progressive(objective, config.budget, DEFAULT_STAGE_FRACTIONS, params, config.seed).map_err(plan_error)?
        }
        Strategy::Bandit(mut spec) => {
            let mut rgpe_store = None;
            if let Some(meta) = &config.meta {
                match meta.mode {
                    MetaMode::RgpeJoint => {
                        let store = MetaStore::load(&meta.store).map_err(|e| CliError::Usage(e.to_string()))?;
                        if store.is_empty() {
                            warnings.push(format!("meta store {} is empty; running without transfer", meta.store.display()));
                        }
                        rgpe_store = Some(store);
                    }
                    MetaMode::RanknetConditioning => {
                        let features = match &loaded {
                            LoadedObjective::Pipeline { dataset_features, .. } => dataset_features,
                            _ => {
                                return Err(CliError::Usage(
                                    "ranknet_conditioning needs a dataset objective for its meta-features".into(),
                                ))
                            }
                        };
                        match load_ranker(&meta.store)? {
                            Some(model) => {
                                spec = attach_ranknet(&spec, objective.space(), &model, features, meta.k)
                                    .map_err(|e| CliError::Usage(e.to_string()))?;
                            }
                            None => warnings.push(format!(
                                "no {RANKER_FILE} in {}; running without arm pre-selection",
                                meta.store.display()
                            )),
                        }
                    }
                }
            }
            let mut root = build_plan(&spec, objective.space(), params, config.seed).map_err(plan_error)?;
            if let Some(store) = &rgpe_store {
                attach_rgpe(&mut root, store, DEFAULT_RGPE_SAMPLES, 0.0)
                    .map_err(|e| CliError::Usage(e.to_string()))?;
            }
            run_block(root, objective, config.budget, config.seed).map_err(plan_error)?
        }
    };
    let ensemble = match (&config.ensemble, &loaded) {
        (Some(e), LoadedObjective::Pipeline { objective, .. }) => {
            let report = build_ensemble(objective, &result.history, e.size, e.n_top)
                .map_err(|e| CliError::Runtime(format!("ensemble: {e}")))?;
            Some(serde_json::to_value(report).expect("report serializes"))
        }
        _ => None,
    };
    let summary = Summary {
        best_config: result.best_config.clone(),
        best_loss: result.best_loss,
        evaluations: result.evaluations,
        wall_s: result.wall_seconds,
        ensemble,
    };
    Ok(RunOutcome {
        result,
        summary,
        warnings,
    })
}

pub fn load_ranker(store: &Path) -> Result<Option<RankNetModel>, CliError> {
    let path = store.join(RANKER_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn create_parent(path: &Path) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Runtime(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

/// Runs `config` and writes the history and summary files.
pub fn cmd_run(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let outcome = execute_config(config)?;
    create_parent(&config.out)?;
    let file = fs::File::create(&config.out).map_err(|e| CliError::Runtime(format!("{}: {e}", config.out.display())))?;
    let mut out = BufWriter::new(file);
    write_history(&mut out, &outcome.result.history)?;
    out.flush()?;
    let summary = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    fs::write(config.summary_path(), summary + "\n")?;
    Ok(outcome)
}
