//! `volcano meta ...`: building and inspecting prior-task stores.

use std::collections::BTreeSet;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use volcano::blocks::Record;
use volcano::meta::{rank_triples, train_ranknet, MetaStore, RankNetConfig, RankNetModel, TaskMeta};
use volcano::persist::read_history;

use crate::run::RANKER_FILE;
use crate::CliError;

fn store_error(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn read_history_file(path: &Path) -> Result<Vec<Record>, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let lines = read_history(BufReader::new(file)).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(lines.iter().map(|l| l.to_record()).collect())
}

/// Adds one task per history file to `store`. Task ids default to the file stems.
pub fn ingest(
    store: &Path,
    histories: &[PathBuf],
    task_id: Option<&str>,
    dataset_features: &[f64],
    arm: Option<&str>,
) -> Result<Vec<String>, CliError> {
    if histories.is_empty() {
        return Err(CliError::Usage("no history files given".into()));
    }
    if task_id.is_some() && histories.len() > 1 {
        return Err(CliError::Usage("--task-id applies to a single history file".into()));
    }
    let mut ids = Vec::new();
    for path in histories {
        let records = read_history_file(path)?;
        let id = match task_id {
            Some(t) => t.to_string(),
            None => path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .ok_or_else(|| CliError::Usage(format!("cannot derive a task id from {}", path.display())))?,
        };
        let meta = TaskMeta {
            task_id: id.clone(),
            dataset_features: dataset_features.to_vec(),
            arm: arm.map(str::to_string),
        };
        MetaStore::ingest(store, &meta, &records).map_err(store_error)?;
        ids.push(id);
    }
    Ok(ids)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskListing {
    pub task_id: String,
    pub observations: usize,
    pub best_loss: f64,
    pub dataset_features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
}

pub fn list(store: &Path) -> Result<Vec<TaskListing>, CliError> {
    let store = MetaStore::load(store).map_err(store_error)?;
    Ok(store
        .tasks()
        .iter()
        .map(|t| TaskListing {
            task_id: t.task_id.clone(),
            observations: t.history.len(),
            best_loss: t.history.iter().map(|h| h.1).fold(f64::INFINITY, f64::min),
            dataset_features: t.dataset_features.clone(),
            arm: t.arm.clone(),
        })
        .collect())
}

pub struct TrainedRanker {
    pub model: RankNetModel,
    pub triples: usize,
    pub warnings: Vec<String>,
    pub path: PathBuf,
}

/// Trains a ranker on the store's per-arm best losses and saves it as `ranker.json` in the store.
pub fn train_ranker(
    store_dir: &Path,
    algorithm_variable: &str,
    config: &RankNetConfig,
    seed: u64,
) -> Result<TrainedRanker, CliError> {
    let store = MetaStore::load(store_dir).map_err(store_error)?;
    if store.is_empty() {
        return Err(CliError::Usage(format!("no tasks in {}", store_dir.display())));
    }
    let mut vocabulary = BTreeSet::new();
    for t in store.tasks() {
        match &t.arm {
            Some(a) => {
                vocabulary.insert(a.clone());
            }
            None => vocabulary.extend(
                t.history
                    .iter()
                    .filter_map(|(c, _)| c.get(algorithm_variable).and_then(|v| v.as_str()).map(str::to_string)),
            ),
        }
    }
    let vocabulary: Vec<String> = vocabulary.into_iter().collect();
    let (triples, warnings) = rank_triples(&store, algorithm_variable, &vocabulary).map_err(store_error)?;
    if triples.is_empty() {
        return Err(CliError::Usage(
            "no preference triples: no dataset in the store has two arms with different best losses".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = train_ranknet(&triples, config, &mut rng).map_err(|e| CliError::Runtime(e.to_string()))?;
    model.vocabulary = vocabulary;
    let path = store_dir.join(RANKER_FILE);
    fs::write(&path, serde_json::to_string(&model).expect("model serializes"))?;
    Ok(TrainedRanker {
        model,
        triples: triples.len(),
        warnings,
        path,
    })
}
