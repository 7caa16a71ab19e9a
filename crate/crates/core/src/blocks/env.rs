use web_time::Instant;

use serde::{Deserialize, Serialize};

use super::BlockError;
use crate::objective::{Objective, Observation, Status};
use crate::space::Configuration;

/// Total optimization budget of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Budget {
    Evaluations(usize),
    Seconds(f64),
}

impl Budget {
    pub fn is_positive(&self) -> bool {
        match *self {
            Budget::Evaluations(n) => n > 0,
            Budget::Seconds(s) => s > 0.0 && s.is_finite(),
        }
    }
}

/// One evaluation in the flattened run history.
#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub iter: usize,
    /// Labels from the root block down to the evaluating leaf.
    pub block_path: Vec<String>,
    pub observation: Observation,
}

pub(crate) fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Shared evaluation context passed down the block tree: the objective,
/// the budget, and the flattened history.
pub struct Evaluator<'a> {
    objective: &'a dyn Objective,
    budget: Budget,
    seed: u64,
    fidelity: f64,
    start: Instant,
    records: Vec<Record>,
}

impl<'a> Evaluator<'a> {
    pub fn new(objective: &'a dyn Objective, budget: Budget, seed: u64) -> Self {
        Self {
            objective,
            budget,
            seed,
            fidelity: 1.0,
            start: Instant::now(),
            records: Vec::new(),
        }
    }

    pub fn with_fidelity(mut self, fidelity: f64) -> Self {
        self.fidelity = fidelity;
        self
    }

    pub fn objective(&self) -> &'a dyn Objective {
        self.objective
    }

    pub fn budget(&self) -> Budget {
        self.budget
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    pub fn evaluations(&self) -> usize {
        self.records.len()
    }

    pub fn elapsed(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }

    /// Budget units spent so far (evaluations or seconds).
    pub fn consumed(&self) -> f64 {
        match self.budget {
            Budget::Evaluations(_) => self.records.len() as f64,
            Budget::Seconds(_) => self.elapsed(),
        }
    }

    pub fn remaining(&self) -> f64 {
        match self.budget {
            Budget::Evaluations(n) => n.saturating_sub(self.records.len()) as f64,
            Budget::Seconds(s) => (s - self.elapsed()).max(0.0),
        }
    }

    pub fn is_exhausted(&self) -> bool {
        self.remaining() <= 0.0
    }

    /// Largest attainable reward: the negated loss floor, or +∞ when unknown.
    pub fn reward_ceiling(&self) -> f64 {
        self.objective.loss_floor().map_or(f64::INFINITY, |f| -f)
    }

    /// Evaluates the full assignment `assignment` (inactive variables dropped,
    /// missing active ones defaulted) and appends it to the history.
    pub fn evaluate(&mut self, assignment: &Configuration, path: &[String]) -> Result<&Record, BlockError> {
        if self.is_exhausted() {
            return Err(BlockError::Exhausted);
        }
        let config = self.objective.space().normalize(assignment);
        let iter = self.records.len();
        let seed = splitmix(self.seed ^ splitmix(iter as u64));
        let began = Instant::now();
        let outcome = self.objective.evaluate(&config, self.fidelity, seed);
        let measured = began.elapsed().as_secs_f64();
        let cost = self.objective.cost_estimate(&config).unwrap_or(measured);
        let (loss, status) = match outcome {
            Ok(loss) if loss.is_finite() => (Some(loss), Status::Ok),
            Ok(_) => (None, Status::Failed),
            Err(failure) => (None, failure.status),
        };
        self.records.push(Record {
            iter,
            block_path: path.to_vec(),
            observation: Observation {
                config,
                loss,
                cost,
                fidelity: self.fidelity,
                status,
                wall_time: self.elapsed(),
            },
        });
        Ok(self.records.last().expect("just pushed"))
    }

    /// Index of the best ok record (earliest on ties).
    pub fn best_record(&self) -> Option<&Record> {
        let mut best: Option<&Record> = None;
        for r in &self.records {
            if let Some(l) = r.observation.loss {
                if best.is_none_or(|b| l < b.observation.loss.expect("best is ok")) {
                    best = Some(r);
                }
            }
        }
        best
    }
}
