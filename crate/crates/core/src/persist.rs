//! JSONL run histories and run summaries.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::Record;
use crate::objective::{Observation, Status};
use crate::space::Configuration;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// One line of a history file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryLine {
    pub iter: usize,
    pub block_path: Vec<String>,
    pub config: Configuration,
    pub loss: Option<f64>,
    pub reward: Option<f64>,
    pub cost_s: f64,
    pub fidelity: f64,
    pub status: Status,
}

impl From<&Record> for HistoryLine {
    fn from(r: &Record) -> Self {
        let o = &r.observation;
        Self {
            iter: r.iter,
            block_path: r.block_path.clone(),
            config: o.config.clone(),
            loss: o.loss,
            reward: o.reward(),
            cost_s: o.cost,
            fidelity: o.fidelity,
            status: o.status,
        }
    }
}

impl HistoryLine {
    /// The record this line describes. Wall-clock time is not persisted and comes back as 0.
    pub fn to_record(&self) -> Record {
        Record {
            iter: self.iter,
            block_path: self.block_path.clone(),
            observation: Observation {
                config: self.config.clone(),
                loss: self.loss,
                cost: self.cost_s,
                fidelity: self.fidelity,
                status: self.status,
                wall_time: 0.0,
            },
        }
    }
}

pub fn write_history<W: Write>(mut out: W, records: &[Record]) -> std::io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, &HistoryLine::from(r))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn history_to_string(records: &[Record]) -> String {
    let mut buf = Vec::new();
    write_history(&mut buf, records).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

/// Parses a history file; blank lines are skipped.
pub fn read_history<R: BufRead>(input: R) -> Result<Vec<HistoryLine>, PersistError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: HistoryLine = serde_json::from_str(&line).map_err(|e| PersistError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if parsed.loss.is_some() != (parsed.status == Status::Ok) {
            return Err(PersistError::Parse {
                line: i + 1,
                message: "loss must be present exactly when status is ok".into(),
            });
        }
        out.push(parsed);
    }
    Ok(out)
}

/// Final record of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub best_config: Configuration,
    pub best_loss: f64,
    pub evaluations: usize,
    pub wall_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<serde_json::Value>,
}
