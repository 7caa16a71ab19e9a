use std::collections::BTreeMap;
use std::fs;
use std::io::BufReader;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{arm_encoding, MetaError, RankTriple};
use crate::persist::{read_history, write_history};
use crate::blocks::Record;
use crate::space::Configuration;

/// Contents of a task's `meta.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskMeta {
    pub task_id: String,
    pub dataset_features: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arm: Option<String>,
}

/// A prior task: its meta-features and successful observations.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaTask {
    pub task_id: String,
    pub dataset_features: Vec<f64>,
    pub arm: Option<String>,
    pub history: Vec<(Configuration, f64)>,
}

/// Prior tasks, one subdirectory each holding `meta.json` and `history.jsonl`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetaStore {
    tasks: Vec<MetaTask>,
}

const META_FILE: &str = "meta.json";
const HISTORY_FILE: &str = "history.jsonl";

impl MetaStore {
    pub fn new(tasks: Vec<MetaTask>) -> Self {
        Self { tasks }
    }

    /// Loads every task directory under `dir` in name order. A missing directory is an empty store.
    pub fn load(dir: &Path) -> Result<Self, MetaError> {
        if !dir.exists() {
            return Ok(Self::default());
        }
        let mut entries: Vec<_> = fs::read_dir(dir)?
            .filter_map(Result::ok)
            .filter(|e| e.path().join(META_FILE).is_file())
            .map(|e| e.path())
            .collect();
        entries.sort();
        let mut tasks = Vec::new();
        let mut width = None;
        for path in entries {
            let meta: TaskMeta = serde_json::from_str(&fs::read_to_string(path.join(META_FILE))?)
                .map_err(|e| MetaError::Store(format!("{}: {e}", path.join(META_FILE).display())))?;
            if *width.get_or_insert(meta.dataset_features.len()) != meta.dataset_features.len() {
                return Err(MetaError::Store(format!(
                    "task `{}` has {} dataset features, others have {}",
                    meta.task_id,
                    meta.dataset_features.len(),
                    width.unwrap_or_default()
                )));
            }
            let file = fs::File::open(path.join(HISTORY_FILE))?;
            let lines = read_history(BufReader::new(file))
                .map_err(|e| MetaError::Store(format!("{}: {e}", path.join(HISTORY_FILE).display())))?;
            let history: Vec<(Configuration, f64)> =
                lines.into_iter().filter_map(|l| l.loss.map(|loss| (l.config, loss))).collect();
            if history.is_empty() {
                return Err(MetaError::Store(format!("task `{}` has no successful observation", meta.task_id)));
            }
            tasks.push(MetaTask {
                task_id: meta.task_id,
                dataset_features: meta.dataset_features,
                arm: meta.arm,
                history,
            });
        }
        Ok(Self { tasks })
    }

    /// Writes one task directory (`dir/<task_id>/`) from a run history.
    pub fn ingest(dir: &Path, meta: &TaskMeta, records: &[Record]) -> Result<(), MetaError> {
        if meta.task_id.is_empty() || meta.task_id.contains(['/', '\\']) || meta.task_id.starts_with('.') {
            return Err(MetaError::Store(format!("invalid task id `{}`", meta.task_id)));
        }
        if !records.iter().any(|r| r.observation.loss.is_some()) {
            return Err(MetaError::Store(format!("task `{}` has no successful observation", meta.task_id)));
        }
        let task_dir = dir.join(&meta.task_id);
        fs::create_dir_all(&task_dir)?;
        fs::write(task_dir.join(META_FILE), serde_json::to_string_pretty(meta).expect("meta serializes"))?;
        let mut out = Vec::new();
        write_history(&mut out, records)?;
        fs::write(task_dir.join(HISTORY_FILE), out)?;
        Ok(())
    }

    pub fn tasks(&self) -> &[MetaTask] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Pairwise preferences from the per-arm best losses of every dataset.
///
/// Tasks with identical dataset features describe the same dataset. An
/// observation's arm is the task's arm label, else the value of
/// `algorithm_variable` in its configuration. Returns the triples and a
/// warning per dataset with fewer than two arms.
pub fn rank_triples(
    store: &MetaStore,
    algorithm_variable: &str,
    vocabulary: &[String],
) -> Result<(Vec<RankTriple>, Vec<String>), MetaError> {
    let mut datasets: Vec<(Vec<f64>, String, BTreeMap<usize, f64>)> = Vec::new();
    for task in store.tasks() {
        let slot = match datasets.iter().position(|d| d.0 == task.dataset_features) {
            Some(i) => i,
            None => {
                datasets.push((task.dataset_features.clone(), task.task_id.clone(), BTreeMap::new()));
                datasets.len() - 1
            }
        };
        for (config, loss) in &task.history {
            let arm = match &task.arm {
                Some(a) => a.clone(),
                None => match config.get(algorithm_variable).and_then(|v| v.as_str()) {
                    Some(a) => a.to_string(),
                    None => continue,
                },
            };
            let idx = vocabulary
                .iter()
                .position(|v| *v == arm)
                .ok_or_else(|| MetaError::Store(format!("task `{}` uses unknown arm `{arm}`", task.task_id)))?;
            let best = datasets[slot].2.entry(idx).or_insert(f64::INFINITY);
            *best = best.min(*loss);
        }
    }
    let mut triples = Vec::new();
    let mut warnings = Vec::new();
    for (features, label, bests) in &datasets {
        if bests.len() < 2 {
            warnings.push(format!("task `{label}` covers fewer than two arms; no preferences extracted"));
            continue;
        }
        for (&j, &lj) in bests {
            for (&k, &lk) in bests {
                if lj < lk {
                    triples.push(RankTriple {
                        dataset: features.clone(),
                        better: arm_encoding(vocabulary, &vocabulary[j]).expect("in vocabulary"),
                        worse: arm_encoding(vocabulary, &vocabulary[k]).expect("in vocabulary"),
                    });
                }
            }
        }
    }
    Ok((triples, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Observation, Status};

    fn rec(iter: usize, arm: &str, loss: f64) -> Record {
        let mut config = Configuration::new();
        config.insert("algo", arm);
        Record {
            iter,
            block_path: vec!["root".into()],
            observation: Observation {
                config,
                loss: Some(loss),
                cost: 0.0,
                fidelity: 1.0,
                status: Status::Ok,
                wall_time: 0.0,
            },
        }
    }

    fn vocab() -> Vec<String> {
        ["knn", "tree", "linear"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn ingest_load_and_triples() {
        let dir = tempfile::tempdir().unwrap();
        for (t, losses) in [("t1", [0.1, 0.2, 0.3]), ("t2", [0.5, 0.4, 0.3])] {
            let records: Vec<Record> = vocab().iter().zip(losses).enumerate().map(|(i, (a, l))| rec(i, a, l)).collect();
            let meta = TaskMeta {
                task_id: t.into(),
                dataset_features: vec![if t == "t1" { 1.0 } else { 2.0 }, 0.0],
                arm: None,
            };
            MetaStore::ingest(dir.path(), &meta, &records).unwrap();
        }
        let store = MetaStore::load(dir.path()).unwrap();
        assert_eq!(store.len(), 2);
        let (triples, warnings) = rank_triples(&store, "algo", &vocab()).unwrap();
        assert_eq!(triples.len(), 6);
        assert!(warnings.is_empty());
        let knn = arm_encoding(&vocab(), "knn").unwrap();
        assert!(triples.iter().filter(|t| t.dataset[0] == 1.0).all(|t| t.worse != knn));
    }

    #[test]
    fn single_arm_task_warns() {
        let store = MetaStore::new(vec![MetaTask {
            task_id: "solo".into(),
            dataset_features: vec![0.0],
            arm: Some("tree".into()),
            history: vec![(Configuration::new(), 0.2)],
        }]);
        let (triples, warnings) = rank_triples(&store, "algo", &vocab()).unwrap();
        assert!(triples.is_empty());
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn missing_store_is_empty_and_bad_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(MetaStore::load(&dir.path().join("nope")).unwrap().is_empty());
        let meta = TaskMeta {
            task_id: "../escape".into(),
            dataset_features: vec![],
            arm: None,
        };
        assert!(MetaStore::ingest(dir.path(), &meta, &[rec(0, "knn", 1.0)]).is_err());
    }
}
