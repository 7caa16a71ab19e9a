//! Greedy ensemble selection over the best configurations found by a run.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blocks::Record;
use crate::objective::{score, Metric, PipelineObjective, Predictions};
use crate::space::Configuration;

/// Default number of greedy selection rounds.
pub const DEFAULT_ENSEMBLE_SIZE: usize = 50;
/// Default number of configurations kept per algorithm.
pub const DEFAULT_N_TOP: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("predictions have {got} rows, the validation index has {expected}")]
    Misaligned { expected: usize, got: usize },
    #[error("{0:?} predictions do not fit the {1:?} metric")]
    MetricMismatch(&'static str, Metric),
    #[error("the model pool is empty")]
    EmptyPool,
    #[error("ensemble size must be at least 1")]
    ZeroSize,
    #[error("missing predictions for entry {0}")]
    MissingPredictions(usize),
    #[error("{0}")]
    Scoring(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub algorithm: String,
    pub config: Configuration,
    pub predictions: Predictions,
    /// Validation metric value (balanced accuracy or MSE).
    pub score: f64,
}

/// The best configurations per algorithm with their validation predictions.
#[derive(Clone, Debug)]
pub struct ModelPool {
    metric: Metric,
    n_top: usize,
    rows: Option<usize>,
    entries: Vec<PoolEntry>,
}

impl ModelPool {
    pub fn new(metric: Metric, n_top: usize) -> Self {
        Self {
            metric,
            n_top: n_top.max(1),
            rows: None,
            entries: Vec::new(),
        }
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn check_kind(&self, p: &Predictions) -> Result<(), EnsembleError> {
        match (p, self.metric) {
            (Predictions::Probabilities(_), Metric::BalancedAccuracy) | (Predictions::Values(_), Metric::Mse) => Ok(()),
            (Predictions::Probabilities(_), m) => Err(EnsembleError::MetricMismatch("probability", m)),
            (Predictions::Values(_), m) => Err(EnsembleError::MetricMismatch("value", m)),
        }
    }

    /// Inserts an entry. A full algorithm slot evicts its worst entry only for a better score;
    /// a configuration already present keeps one entry with the better score.
    pub fn record(
        &mut self,
        algorithm: &str,
        config: Configuration,
        predictions: Predictions,
        score: f64,
    ) -> Result<(), EnsembleError> {
        self.check_kind(&predictions)?;
        if let Some(rows) = self.rows {
            if predictions.len() != rows {
                return Err(EnsembleError::Misaligned {
                    expected: rows,
                    got: predictions.len(),
                });
            }
        }
        self.rows = Some(predictions.len());
        let loss = |s: f64| self.metric.loss(s);
        if let Some(e) = self.entries.iter_mut().find(|e| e.config == config) {
            if loss(score) < loss(e.score) {
                e.score = score;
                e.predictions = predictions;
            }
            return Ok(());
        }
        let entry = PoolEntry {
            algorithm: algorithm.to_string(),
            config,
            predictions,
            score,
        };
        let same: Vec<usize> = (0..self.entries.len()).filter(|&i| self.entries[i].algorithm == algorithm).collect();
        if same.len() < self.n_top {
            self.entries.push(entry);
            return Ok(());
        }
        let worst = same
            .into_iter()
            .max_by(|&a, &b| loss(self.entries[a].score).total_cmp(&loss(self.entries[b].score)))
            .expect("slot is full");
        if loss(score) < loss(self.entries[worst].score) {
            self.entries.remove(worst);
            self.entries.push(entry);
        }
        Ok(())
    }
}

/// Selection counts per pool entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleWeights {
    pub counts: Vec<usize>,
    pub size: usize,
}

fn accumulate(sum: &mut Predictions, p: &Predictions, weight: f64) {
    match (sum, p) {
        (Predictions::Probabilities(s), Predictions::Probabilities(q)) => {
            for (row, qrow) in s.iter_mut().zip(q) {
                if row.len() < qrow.len() {
                    row.resize(qrow.len(), 0.0);
                }
                for (a, b) in row.iter_mut().zip(qrow) {
                    *a += weight * b;
                }
            }
        }
        (Predictions::Values(s), Predictions::Values(q)) => {
            for (a, b) in s.iter_mut().zip(q) {
                *a += weight * b;
            }
        }
        _ => unreachable!("pool holds one prediction kind"),
    }
}

fn zeros_like(p: &Predictions) -> Predictions {
    match p {
        Predictions::Probabilities(rows) => Predictions::Probabilities(rows.iter().map(|r| vec![0.0; r.len()]).collect()),
        Predictions::Values(v) => Predictions::Values(vec![0.0; v.len()]),
    }
}

fn scaled(p: &Predictions, factor: f64) -> Predictions {
    let mut out = zeros_like(p);
    accumulate(&mut out, p, factor);
    out
}

fn loss_of(metric: Metric, p: &Predictions, labels: &[f64]) -> Result<f64, EnsembleError> {
    score(metric, &p.point_predictions(), labels)
        .map(|s| metric.loss(s))
        .map_err(|e| EnsembleError::Scoring(e.to_string()))
}

/// Greedy forward selection with replacement for `size` rounds, returning the
/// best prefix seen (the longest one on ties).
pub fn ensemble_select(pool: &ModelPool, size: usize, labels: &[f64]) -> Result<EnsembleWeights, EnsembleError> {
    if pool.is_empty() {
        return Err(EnsembleError::EmptyPool);
    }
    if size == 0 {
        return Err(EnsembleError::ZeroSize);
    }
    let rows = pool.entries[0].predictions.len();
    if labels.len() != rows {
        return Err(EnsembleError::Misaligned {
            expected: rows,
            got: labels.len(),
        });
    }
    let metric = pool.metric;
    let mut sum = zeros_like(&pool.entries[0].predictions);
    let mut counts = vec![0usize; pool.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    for round in 1..=size {
        let mut pick: Option<(usize, f64)> = None;
        for (i, e) in pool.entries.iter().enumerate() {
            let mut trial = sum.clone();
            accumulate(&mut trial, &e.predictions, 1.0);
            let l = loss_of(metric, &scaled(&trial, 1.0 / round as f64), labels)?;
            if pick.is_none_or(|(_, b)| l < b) {
                pick = Some((i, l));
            }
        }
        let (i, l) = pick.expect("pool is non-empty");
        accumulate(&mut sum, &pool.entries[i].predictions, 1.0);
        counts[i] += 1;
        if best.as_ref().is_none_or(|(b, _)| l <= *b) {
            best = Some((l, counts.clone()));
        }
    }
    let (_, counts) = best.expect("at least one round");
    let size = counts.iter().sum();
    Ok(EnsembleWeights { counts, size })
}

/// Count-weighted average of per-entry predictions (entries with count 0 may be absent).
pub fn ensemble_predict(weights: &EnsembleWeights, predictions: &[Option<Predictions>]) -> Result<Predictions, EnsembleError> {
    if weights.size == 0 {
        return Err(EnsembleError::ZeroSize);
    }
    let mut sum: Option<Predictions> = None;
    let mut rows = None;
    for (i, &c) in weights.counts.iter().enumerate() {
        if c == 0 {
            continue;
        }
        let p = predictions
            .get(i)
            .and_then(Option::as_ref)
            .ok_or(EnsembleError::MissingPredictions(i))?;
        if *rows.get_or_insert(p.len()) != p.len() {
            return Err(EnsembleError::Misaligned {
                expected: rows.unwrap_or_default(),
                got: p.len(),
            });
        }
        let s = sum.get_or_insert_with(|| zeros_like(p));
        if std::mem::discriminant(s) != std::mem::discriminant(p) {
            return Err(EnsembleError::MetricMismatch("mixed", Metric::Mse));
        }
        accumulate(s, p, c as f64 / weights.size as f64);
    }
    sum.ok_or(EnsembleError::EmptyPool)
}

/// One selected member of a built ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub algorithm: String,
    pub config: Configuration,
    pub count: usize,
}

/// Result of building an ensemble after a pipeline run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub size: usize,
    pub n_top: usize,
    pub members: Vec<EnsembleMember>,
    pub validation_score: f64,
    pub best_single_validation_score: f64,
    pub test_score: f64,
}

/// Pools the `n_top` best configurations per algorithm from `history`,
/// selects an ensemble on the validation split and scores it on the test split.
pub fn build_ensemble(
    objective: &PipelineObjective,
    history: &[Record],
    size: usize,
    n_top: usize,
) -> Result<EnsembleReport, EnsembleError> {
    let metric = objective.metric();
    let algo_var = crate::objective::Objective::space(objective)
        .algorithm_variable()
        .unwrap_or("algo")
        .to_string();
    let mut ok: Vec<&Record> = history.iter().filter(|r| r.observation.loss.is_some()).collect();
    ok.sort_by(|a, b| {
        a.observation
            .loss
            .expect("ok")
            .total_cmp(&b.observation.loss.expect("ok"))
            .then(a.iter.cmp(&b.iter))
    });
    let mut pool = ModelPool::new(metric, n_top);
    let mut taken: Vec<(String, usize)> = Vec::new();
    for r in ok {
        let algo = r
            .observation
            .config
            .get(&algo_var)
            .map(|v| v.to_string())
            .unwrap_or_default();
        let slot = match taken.iter_mut().find(|t| t.0 == algo) {
            Some(t) => t,
            None => {
                taken.push((algo.clone(), 0));
                taken.last_mut().expect("just pushed")
            }
        };
        if slot.1 >= n_top || pool.entries.iter().any(|e| e.config == r.observation.config) {
            continue;
        }
        let Ok(preds) = objective.validation_predictions(&r.observation.config) else {
            continue;
        };
        slot.1 += 1;
        let value = score(metric, &preds.point_predictions(), objective.valid_targets())
            .map_err(|e| EnsembleError::Scoring(e.to_string()))?;
        pool.record(&algo, r.observation.config.clone(), preds, value)?;
    }
    let weights = ensemble_select(&pool, size, objective.valid_targets())?;
    let valid: Vec<Option<Predictions>> = pool.entries.iter().map(|e| Some(e.predictions.clone())).collect();
    let valid_pred = ensemble_predict(&weights, &valid)?;
    let validation_score = score(metric, &valid_pred.point_predictions(), objective.valid_targets())
        .map_err(|e| EnsembleError::Scoring(e.to_string()))?;
    let best_single = pool
        .entries
        .iter()
        .map(|e| e.score)
        .min_by(|a, b| metric.loss(*a).total_cmp(&metric.loss(*b)))
        .expect("pool is non-empty");
    let mut test = Vec::with_capacity(pool.len());
    for (e, &c) in pool.entries.iter().zip(&weights.counts) {
        test.push(if c > 0 {
            Some(
                objective
                    .test_predictions(&e.config)
                    .map_err(|f| EnsembleError::Scoring(f.message))?,
            )
        } else {
            None
        });
    }
    let test_pred = ensemble_predict(&weights, &test)?;
    let test_score = score(metric, &test_pred.point_predictions(), objective.test_targets())
        .map_err(|e| EnsembleError::Scoring(e.to_string()))?;
    Ok(EnsembleReport {
        size: weights.size,
        n_top,
        members: pool
            .entries
            .iter()
            .zip(&weights.counts)
            .filter(|(_, &c)| c > 0)
            .map(|(e, &c)| EnsembleMember {
                algorithm: e.algorithm.clone(),
                config: e.config.clone(),
                count: c,
            })
            .collect(),
        validation_score,
        best_single_validation_score: best_single,
        test_score,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::balanced_accuracy;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn probs(rows: &[[f64; 2]]) -> Predictions {
        Predictions::Probabilities(rows.iter().map(|r| r.to_vec()).collect())
    }

    fn config(i: i64) -> Configuration {
        let mut c = Configuration::new();
        c.insert("id", i);
        c
    }

    #[test]
    fn eviction_keeps_the_top_scores() {
        let mut pool = ModelPool::new(Metric::BalancedAccuracy, 3);
        for (i, s) in [0.7, 0.8, 0.6, 0.9].into_iter().enumerate() {
            pool.record("knn", config(i as i64), probs(&[[0.5, 0.5]]), s).unwrap();
        }
        let mut scores: Vec<f64> = pool.entries().iter().map(|e| e.score).collect();
        scores.sort_by(f64::total_cmp);
        assert_eq!(scores, [0.7, 0.8, 0.9]);
        pool.record("knn", config(1), probs(&[[0.5, 0.5]]), 0.8).unwrap();
        assert_eq!(pool.len(), 3);
        assert!(matches!(
            pool.record("tree", config(9), probs(&[[0.5, 0.5], [0.5, 0.5]]), 0.8),
            Err(EnsembleError::Misaligned { .. })
        ));
        assert!(matches!(
            pool.record("tree", config(9), Predictions::Values(vec![1.0]), 0.8),
            Err(EnsembleError::MetricMismatch(..))
        ));
    }

    #[test]
    fn single_entry_fills_the_ensemble() {
        let mut pool = ModelPool::new(Metric::BalancedAccuracy, 3);
        pool.record("knn", config(0), probs(&[[0.9, 0.1], [0.2, 0.8]]), 1.0).unwrap();
        let w = ensemble_select(&pool, DEFAULT_ENSEMBLE_SIZE, &[0.0, 1.0]).unwrap();
        assert_eq!(w.counts, [50]);
        assert_eq!(w.size, 50);
    }

    #[test]
    fn complementary_classifiers_improve() {
        // 4 rows, labels 0,0,1,1; each model is confidently right on two rows and mildly wrong on the others
        let labels = [0.0, 0.0, 1.0, 1.0];
        let a = probs(&[[0.9, 0.1], [0.4, 0.6], [0.1, 0.9], [0.6, 0.4]]);
        let b = probs(&[[0.4, 0.6], [0.9, 0.1], [0.6, 0.4], [0.1, 0.9]]);
        let acc = |p: &Predictions| {
            let pred: Vec<usize> = p.point_predictions().iter().map(|v| *v as usize).collect();
            balanced_accuracy(&pred, &[0, 0, 1, 1]).unwrap()
        };
        assert_eq!(acc(&a), 0.5);
        assert_eq!(acc(&b), 0.5);
        let mut pool = ModelPool::new(Metric::BalancedAccuracy, 3);
        pool.record("knn", config(0), a, 0.5).unwrap();
        pool.record("tree", config(1), b, 0.5).unwrap();
        let w = ensemble_select(&pool, 50, &labels).unwrap();
        let preds: Vec<Option<Predictions>> = pool.entries().iter().map(|e| Some(e.predictions.clone())).collect();
        let ens = ensemble_predict(&w, &preds).unwrap();
        assert!(acc(&ens) > 0.5);
    }

    #[test]
    fn never_worse_than_best_single() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let rows = rng.random_range(1..12);
            let labels: Vec<f64> = (0..rows).map(|_| rng.random_range(0..3) as f64).collect();
            let mut pool = ModelPool::new(Metric::BalancedAccuracy, 2);
            for i in 0..rng.random_range(1..6) {
                let p: Vec<Vec<f64>> = (0..rows).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
                let pred = Predictions::Probabilities(p);
                let s = score(Metric::BalancedAccuracy, &pred.point_predictions(), &labels).unwrap();
                pool.record(["a", "b", "c"][i % 3], config(i as i64), pred, s).unwrap();
            }
            let w = ensemble_select(&pool, 10, &labels).unwrap();
            assert_eq!(w.counts.iter().sum::<usize>(), w.size);
            let preds: Vec<Option<Predictions>> = pool.entries().iter().map(|e| Some(e.predictions.clone())).collect();
            let ens = ensemble_predict(&w, &preds).unwrap();
            let s = score(Metric::BalancedAccuracy, &ens.point_predictions(), &labels).unwrap();
            let best = pool.entries().iter().map(|e| e.score).fold(f64::NEG_INFINITY, f64::max);
            assert!(s >= best - 1e-12);
        }
    }

    #[test]
    fn prediction_averages_and_is_order_invariant() {
        let p = probs(&[[0.8, 0.2], [0.3, 0.7]]);
        let q = probs(&[[0.2, 0.8], [0.5, 0.5]]);
        let w = EnsembleWeights {
            counts: vec![1, 1],
            size: 2,
        };
        let avg = ensemble_predict(&w, &[Some(p.clone()), Some(q.clone())]).unwrap();
        assert_eq!(avg, probs(&[[0.5, 0.5], [0.4, 0.6]]));
        // ties go to the lowest class index
        assert_eq!(avg.point_predictions()[0], 0.0);
        let w2 = EnsembleWeights {
            counts: vec![3, 1],
            size: 4,
        };
        let a = ensemble_predict(&w2, &[Some(p.clone()), Some(q.clone())]).unwrap();
        let w3 = EnsembleWeights {
            counts: vec![1, 3],
            size: 4,
        };
        let b = ensemble_predict(&w3, &[Some(q), Some(p.clone())]).unwrap();
        let (Predictions::Probabilities(a), Predictions::Probabilities(b)) = (a, b) else { unreachable!() };
        for (ra, rb) in a.iter().zip(&b) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
        let single = EnsembleWeights { counts: vec![2], size: 2 };
        assert_eq!(ensemble_predict(&single, &[Some(p.clone())]).unwrap(), p);
        assert!(matches!(
            ensemble_predict(&w, &[Some(probs(&[[1.0, 0.0]]))]),
            Err(EnsembleError::MissingPredictions(1))
        ));
    }
}
