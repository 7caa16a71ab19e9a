//! Built-in ML-pipeline objective: scaler → feature selector → learner.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dataset::{split_train_valid_test, Dataset, Split, TaskKind};
use super::learners::{fit_predict, Learner, PipelineSettings, Predictions, Scaler, TrainTarget};
use super::metrics::{score, Metric};
use super::{EvalFailure, Objective, ObjectiveError};
use crate::space::{Configuration, SearchSpace};

/// The bundled `pipeline_small` space document.
pub const PIPELINE_SPACE_JSON: &str = include_str!("../../data/pipeline_small.json");

pub fn pipeline_space() -> SearchSpace {
    SearchSpace::from_json(PIPELINE_SPACE_JSON).expect("bundled pipeline space is valid")
}

struct Prepared {
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl Prepared {
    fn new(ds: &Dataset) -> Self {
        Self {
            x: ds.design_matrix(),
            y: ds.target_values(),
            labels: ds.class_labels().map(<[usize]>::to_vec),
        }
    }
}

/// Trains the configured pipeline on the training split and scores the validation split.
pub struct PipelineObjective {
    name: String,
    space: SearchSpace,
    metric: Metric,
    n_classes: usize,
    split: Split,
    train: Prepared,
    valid: Prepared,
    test: Prepared,
    /// Fixed shuffle of training rows; fidelity f trains on its leading fraction.
    fidelity_order: Vec<usize>,
}

impl PipelineObjective {
    pub fn new(name: &str, dataset: &Dataset, metric: Metric, seed: u64) -> Result<Self, ObjectiveError> {
        let task = dataset.task_kind();
        let compatible = matches!(
            (metric, task),
            (Metric::BalancedAccuracy, TaskKind::Classification) | (Metric::Mse, TaskKind::Regression)
        );
        if !compatible {
            return Err(ObjectiveError::MetricMismatch { metric, task });
        }
        let split = split_train_valid_test(dataset, seed)?;
        let mut fidelity_order: Vec<usize> = (0..split.train.n_rows()).collect();
        fidelity_order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)));
        Ok(Self {
            name: name.to_string(),
            space: pipeline_space(),
            metric,
            n_classes: dataset.n_classes(),
            train: Prepared::new(&split.train),
            valid: Prepared::new(&split.valid),
            test: Prepared::new(&split.test),
            split,
            fidelity_order,
        })
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn split(&self) -> &Split {
        &self.split
    }

    /// Validation targets (class indices for classification).
    pub fn valid_targets(&self) -> &[f64] {
        &self.valid.y
    }

    pub fn test_targets(&self) -> &[f64] {
        &self.test.y
    }

    fn settings(config: &Configuration) -> Result<PipelineSettings, EvalFailure> {
        let cat = |name: &str| {
            config
                .get(name)
                .and_then(|v| v.as_str())
                .ok_or_else(|| EvalFailure::failed(format!("missing `{name}`")))
        };
        let num = |name: &str| {
            config
                .get(name)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| EvalFailure::failed(format!("missing `{name}`")))
        };
        let scaler = match cat("scaler")? {
            "none" => Scaler::None,
            "standardize" => Scaler::Standardize,
            "minmax" => Scaler::MinMax,
            other => return Err(EvalFailure::failed(format!("unknown scaler `{other}`"))),
        };
        let keep_fraction = match cat("feature_selector")? {
            "none" => None,
            "variance_top_p" => Some(num("selector.p")?),
            other => return Err(EvalFailure::failed(format!("unknown selector `{other}`"))),
        };
        let learner = match cat("algo")? {
            "knn" => Learner::Knn {
                k: num("knn.k")? as usize,
                distance_weighted: cat("knn.weighting")? == "distance",
                manhattan: cat("knn.metric")? == "manhattan",
            },
            "tree" => Learner::Tree {
                max_depth: num("tree.max_depth")? as usize,
                min_split: num("tree.min_split")? as usize,
                min_leaf: num("tree.min_leaf")? as usize,
            },
            "linear" => Learner::Linear {
                reg_strength: num("linear.reg_strength")?,
            },
            other => return Err(EvalFailure::failed(format!("unknown algorithm `{other}`"))),
        };
        Ok(PipelineSettings {
            scaler,
            keep_fraction,
            learner,
        })
    }

    fn fit(&self, config: &Configuration, fidelity: f64, sets: &[&Prepared]) -> Result<Vec<Predictions>, EvalFailure> {
        if !(fidelity > 0.0 && fidelity <= 1.0) {
            return Err(EvalFailure::failed(format!("fidelity {fidelity} not in (0, 1]")));
        }
        let settings = Self::settings(config)?;
        let n = ((fidelity * self.fidelity_order.len() as f64).ceil() as usize).max(1);
        let rows: Vec<usize> = self.fidelity_order[..n].to_vec();
        let x: Vec<Vec<f64>> = rows.iter().map(|&i| self.train.x[i].clone()).collect();
        let labels: Vec<usize>;
        let values: Vec<f64>;
        let target = match &self.train.labels {
            Some(all) => {
                labels = rows.iter().map(|&i| all[i]).collect();
                TrainTarget::Classes {
                    labels: &labels,
                    n_classes: self.n_classes,
                }
            }
            None => {
                values = rows.iter().map(|&i| self.train.y[i]).collect();
                TrainTarget::Values(&values)
            }
        };
        let eval_sets: Vec<&[Vec<f64>]> = sets.iter().map(|p| p.x.as_slice()).collect();
        fit_predict(&settings, &x, target, &eval_sets).map_err(EvalFailure::failed)
    }

    /// Validation-set predictions of the pipeline trained at full fidelity.
    pub fn validation_predictions(&self, config: &Configuration) -> Result<Predictions, EvalFailure> {
        Ok(self.fit(config, 1.0, &[&self.valid])?.remove(0))
    }

    /// Held-out test predictions of the pipeline trained at full fidelity.
    pub fn test_predictions(&self, config: &Configuration) -> Result<Predictions, EvalFailure> {
        Ok(self.fit(config, 1.0, &[&self.test])?.remove(0))
    }

    /// Metric value (balanced accuracy or MSE) on the held-out test split.
    pub fn test_score(&self, config: &Configuration) -> Result<f64, EvalFailure> {
        let preds = self.test_predictions(config)?;
        score(self.metric, &preds.point_predictions(), &self.test.y).map_err(|e| EvalFailure::failed(e.to_string()))
    }
}

impl Objective for PipelineObjective {
    fn name(&self) -> &str {
        &self.name
    }

    fn space(&self) -> &SearchSpace {
        &self.space
    }

    fn evaluate(&self, config: &Configuration, fidelity: f64, _seed: u64) -> Result<f64, EvalFailure> {
        let preds = self.fit(config, fidelity, &[&self.valid])?.remove(0);
        let value = score(self.metric, &preds.point_predictions(), &self.valid.y)
            .map_err(|e| EvalFailure::failed(e.to_string()))?;
        let loss = self.metric.loss(value);
        if loss.is_finite() {
            Ok(loss)
        } else {
            Err(EvalFailure::failed("non-finite validation loss"))
        }
    }

    /// Rough operation count of training plus validation inference, scaled to seconds.
    fn cost_estimate(&self, config: &Configuration) -> Option<f64> {
        let n = self.train.x.len() as f64;
        let d = self.train.x.first().map_or(1, Vec::len) as f64;
        let m = self.valid.x.len() as f64;
        let ops = match Self::settings(config).ok()?.learner {
            Learner::Knn { .. } => n * m * d,
            Learner::Tree { max_depth, .. } => n * n.log2().max(1.0) * d * max_depth as f64,
            Learner::Linear { .. } => 500.0 * n * d * self.n_classes.max(1) as f64,
        };
        Some(ops * 1e-9)
    }

    fn loss_floor(&self) -> Option<f64> {
        Some(self.metric.loss_floor())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_path(name: &str) -> String {
        format!("{}/data/{name}", env!("CARGO_MANIFEST_DIR"))
    }

    #[test]
    fn bundled_space_has_eleven_variables() {
        let space = pipeline_space();
        assert_eq!(space.len(), 11);
        assert_eq!(space.algorithm_variable(), Some("algo"));
        let p = space.variable("selector.p").unwrap();
        // zero-feature selection is unrepresentable
        assert!(matches!(p.domain, crate::space::Domain::Real { lo, .. } if lo >= 0.1));
    }

    #[test]
    fn moons_fixture_shape() {
        let ds = Dataset::load_csv(data_path("toy_moons.csv")).unwrap();
        assert_eq!(ds.n_rows(), 400);
        assert_eq!(ds.n_columns(), 2);
        assert_eq!(ds.task_kind(), TaskKind::Classification);
        assert_eq!(ds.n_classes(), 2);
    }

    #[test]
    fn logistic_separates_the_separable_fixture() {
        let ds = Dataset::load_csv(data_path("toy_separable.csv")).unwrap();
        let obj = PipelineObjective::new("sep", &ds, Metric::BalancedAccuracy, 0).unwrap();
        let mut c = Configuration::new();
        c.insert("scaler", "none");
        c.insert("feature_selector", "none");
        c.insert("algo", "linear");
        c.insert("linear.reg_strength", 1.0);
        let loss = obj.evaluate(&c, 1.0, 0).unwrap();
        assert!(loss <= 0.05, "{loss}");
        assert_eq!(loss, obj.evaluate(&c, 1.0, 0).unwrap());
    }

    #[test]
    fn every_default_arm_evaluates() {
        let ds = Dataset::load_csv(data_path("toy_moons.csv")).unwrap();
        let obj = PipelineObjective::new("moons", &ds, Metric::BalancedAccuracy, 3).unwrap();
        for algo in ["knn", "tree", "linear"] {
            let mut c = Configuration::new();
            c.insert("algo", algo);
            c.insert("feature_selector", "variance_top_p");
            let c = obj.space().normalize(&c);
            let full = obj.evaluate(&c, 1.0, 0).unwrap();
            let low = obj.evaluate(&c, 0.3, 0).unwrap();
            assert!((0.0..=1.0).contains(&full) && (0.0..=1.0).contains(&low));
            assert!(obj.cost_estimate(&c).unwrap() > 0.0);
        }
    }

    #[test]
    fn metric_must_match_task() {
        let ds = Dataset::load_csv(data_path("toy_moons.csv")).unwrap();
        assert!(matches!(
            PipelineObjective::new("m", &ds, Metric::Mse, 0),
            Err(ObjectiveError::MetricMismatch { .. })
        ));
    }
}
