use serde::{Deserialize, Serialize};

use super::ObjectiveError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    BalancedAccuracy,
    Mse,
}

impl Metric {
    /// Converts a metric value into a loss to minimize.
    pub fn loss(self, value: f64) -> f64 {
        match self {
            Metric::BalancedAccuracy => 1.0 - value,
            Metric::Mse => value,
        }
    }

    /// Smallest achievable loss, when the metric has one.
    pub fn loss_floor(self) -> f64 {
        0.0
    }
}

impl std::str::FromStr for Metric {
    type Err = ObjectiveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balanced_accuracy" => Ok(Metric::BalancedAccuracy),
            "mse" => Ok(Metric::Mse),
            other => Err(ObjectiveError::InvalidParams(format!("unknown metric `{other}`"))),
        }
    }
}

/// Mean of per-class accuracies over classes present in `labels`.
pub fn balanced_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, ObjectiveError> {
    check_lengths(predictions.len(), labels.len())?;
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        totals[y] += 1;
        if p == y {
            hits[y] += 1;
        }
    }
    let present: Vec<f64> = hits
        .iter()
        .zip(&totals)
        .filter(|(_, &t)| t > 0)
        .map(|(&h, &t)| h as f64 / t as f64)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64, ObjectiveError> {
    check_lengths(predictions.len(), targets.len())?;
    Ok(predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / targets.len() as f64)
}

/// Scores label predictions against the ground truth with `metric`.
///
/// Labels are class indices for balanced accuracy and real targets for MSE.
pub fn score(metric: Metric, predictions: &[f64], labels: &[f64]) -> Result<f64, ObjectiveError> {
    match metric {
        Metric::Mse => mse(predictions, labels),
        Metric::BalancedAccuracy => {
            let to_class = |v: &f64| -> Result<usize, ObjectiveError> {
                if *v >= 0.0 && v.fract() == 0.0 {
                    Ok(*v as usize)
                } else {
                    Err(ObjectiveError::InvalidParams(format!("{v} is not a class index")))
                }
            };
            let p = predictions.iter().map(to_class).collect::<Result<Vec<_>, _>>()?;
            let y = labels.iter().map(to_class).collect::<Result<Vec<_>, _>>()?;
            balanced_accuracy(&p, &y)
        }
    }
}

fn check_lengths(a: usize, b: usize) -> Result<(), ObjectiveError> {
    if a == 0 || b == 0 {
        return Err(ObjectiveError::EmptyInput);
    }
    if a != b {
        return Err(ObjectiveError::LengthMismatch(a, b));
    }
    Ok(())
}
