//! Gaussian-process surrogate, expected improvement, and candidate suggestion.

mod gp;

use rand::{Rng, RngCore};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::space::{Configuration, SearchSpace};

pub use gp::GpModel;

/// Random candidates drawn per suggestion.
pub const RANDOM_CANDIDATES: usize = 1000;
/// Incumbents whose neighborhoods are searched.
pub const LOCAL_INCUMBENTS: usize = 5;
/// Neighbors drawn around each incumbent.
pub const NEIGHBORS_PER_INCUMBENT: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("no training points")]
    NoData,
    #[error("input width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("non-finite training input or target")]
    NonFinite,
    #[error("kernel matrix factorization failed after jitter escalation")]
    Factorization,
}

/// Predictive distribution of the loss at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    /// Always ≥ 0.
    pub variance: f64,
}

/// Anything that yields a predictive mean and variance for an encoded input.
pub trait Surrogate: Send + Sync {
    fn predict(&self, x: &[f64]) -> Prediction;
}

/// Builds a surrogate from encoded inputs and losses; joint blocks refit through this.
pub trait SurrogateFactory: Send + Sync {
    fn fit(&self, inputs: &[Vec<f64>], targets: &[f64], rng: &mut dyn RngCore) -> Result<Box<dyn Surrogate>, FitError>;
}

/// Plain GP regression with the given noise floor.
#[derive(Clone, Copy, Debug, Default)]
pub struct GpFactory {
    pub noise_floor: f64,
}

impl SurrogateFactory for GpFactory {
    fn fit(&self, inputs: &[Vec<f64>], targets: &[f64], _rng: &mut dyn RngCore) -> Result<Box<dyn Surrogate>, FitError> {
        Ok(Box::new(GpModel::fit(inputs, targets, self.noise_floor)?))
    }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Expected improvement below `best_loss` under a Gaussian predictive distribution.
pub fn expected_improvement(pred: &Prediction, best_loss: f64) -> f64 {
    let sigma = pred.variance.max(0.0).sqrt();
    if sigma < 1e-12 {
        return (best_loss - pred.mean).max(0.0);
    }
    let gamma = (best_loss - pred.mean) / sigma;
    (sigma * (gamma * std_normal_cdf(gamma) + std_normal_pdf(gamma))).max(0.0)
}

/// Candidate pool: random samples followed by neighbors of the best observed configurations.
pub fn candidates<R: Rng + ?Sized>(
    space: &SearchSpace,
    history: &[(Configuration, f64)],
    rng: &mut R,
) -> Vec<Configuration> {
    let mut pool = space.sample(rng, RANDOM_CANDIDATES);
    let mut ranked: Vec<&(Configuration, f64)> = history.iter().collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1));
    for (config, _) in ranked.into_iter().take(LOCAL_INCUMBENTS) {
        pool.extend(space.neighbors(config, rng, NEIGHBORS_PER_INCUMBENT));
    }
    pool
}

/// The EI-maximizing candidate not already present in `history` (earliest index on ties).
///
/// `history` holds `(configuration, loss)` pairs the surrogate was fitted on.
pub fn suggest<R: Rng + ?Sized>(
    space: &SearchSpace,
    model: &dyn Surrogate,
    history: &[(Configuration, f64)],
    rng: &mut R,
) -> Configuration {
    let best_loss = history.iter().map(|(_, l)| *l).fold(f64::INFINITY, f64::min);
    suggest_with(space, model, history, best_loss, &|c| space.encode(c), rng)
}

/// [`suggest`] with an explicit incumbent loss and candidate encoding, for
/// surrogates whose inputs extend beyond `space`.
pub fn suggest_with<R: Rng + ?Sized>(
    space: &SearchSpace,
    model: &dyn Surrogate,
    history: &[(Configuration, f64)],
    best_loss: f64,
    encode: &dyn Fn(&Configuration) -> Vec<f64>,
    rng: &mut R,
) -> Configuration {
    let pool = candidates(space, history, rng);
    let mut chosen: Option<(usize, f64)> = None;
    for (i, c) in pool.iter().enumerate() {
        if history.iter().any(|(h, _)| h == c) {
            continue;
        }
        let ei = if best_loss.is_finite() {
            expected_improvement(&model.predict(&encode(c)), best_loss)
        } else {
            0.0
        };
        if chosen.is_none_or(|(_, b)| ei > b) {
            chosen = Some((i, ei));
        }
    }
    match chosen {
        Some((i, _)) => pool[i].clone(),
        None => space.sample_one(rng),
    }
}
