use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::{misranked_pairs, MetaError, MetaStore};
use crate::blocks::Block;
use crate::surrogate::{FitError, GpModel, Prediction, Surrogate, SurrogateFactory};

/// Monte-Carlo rounds used to estimate ensemble weights.
pub const DEFAULT_RGPE_SAMPLES: usize = 100;

/// Weighted mixture of prior-task GPs and the target GP (last).
pub struct RgpeEnsemble {
    bases: Arc<Vec<GpModel>>,
    target: GpModel,
    weights: Vec<f64>,
}

impl RgpeEnsemble {
    /// `weights` has one entry per base model followed by the target's.
    pub fn new(bases: Arc<Vec<GpModel>>, target: GpModel, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), bases.len() + 1, "one weight per model");
        Self { bases, target, weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Mixture prediction: Σ wᵢμᵢ and Σ wᵢσᵢ².
pub fn rgpe_predict(components: &[Prediction], weights: &[f64]) -> Prediction {
    let mut mean = 0.0;
    let mut variance = 0.0;
    for (p, &w) in components.iter().zip(weights) {
        if w > 0.0 {
            mean += w * p.mean;
            variance += w * p.variance;
        }
    }
    Prediction { mean, variance }
}

impl Surrogate for RgpeEnsemble {
    fn predict(&self, x: &[f64]) -> Prediction {
        let mut parts: Vec<Prediction> = self.bases.iter().map(|m| Surrogate::predict(m, x)).collect();
        parts.push(Surrogate::predict(&self.target, x));
        rgpe_predict(&parts, &self.weights)
    }
}

fn lower_factor(cov: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = cov.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let mut jitter = 0.0;
    while jitter <= 1e-2 * scale {
        let mut m = cov.clone();
        for i in 0..m.nrows() {
            m[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(m) {
            return Some(c.l());
        }
        jitter = if jitter == 0.0 { 1e-10 * scale } else { jitter * 10.0 };
    }
    None
}

/// Probability, estimated over `samples` posterior draws, that each model
/// (bases first, then the target) misranks the fewest target pairs.
///
/// Base models are sampled jointly at the target inputs; the target model is
/// sampled from its leave-one-out predictive marginals.
pub fn rgpe_weights(
    bases: &[GpModel],
    target: &GpModel,
    inputs: &[Vec<f64>],
    losses: &[f64],
    samples: usize,
    rng: &mut dyn RngCore,
) -> Result<Vec<f64>, MetaError> {
    if losses.len() < 3 {
        return Err(MetaError::TooFewPoints {
            needed: 3,
            got: losses.len(),
        });
    }
    let samples = samples.max(1);
    let n = losses.len();
    let mut draws: Vec<(Vec<f64>, Option<DMatrix<f64>>, Vec<f64>)> = Vec::with_capacity(bases.len());
    for m in bases {
        let (means, cov) = m.predict_joint(inputs)?;
        let diag_sd: Vec<f64> = (0..n).map(|i| cov[(i, i)].max(0.0).sqrt()).collect();
        draws.push((means, lower_factor(&cov), diag_sd));
    }
    let loo = target.loo_predictions();
    let mut wins = vec![0usize; bases.len() + 1];
    let mut z = vec![0.0; n];
    let mut sample = vec![0.0; n];
    for _ in 0..samples {
        let mut losses_per_model = Vec::with_capacity(bases.len() + 1);
        for (means, factor, sd) in &draws {
            for v in z.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
            for i in 0..n {
                sample[i] = means[i]
                    + match factor {
                        Some(l) => (0..=i).map(|j| l[(i, j)] * z[j]).sum::<f64>(),
                        None => sd[i] * z[i],
                    };
            }
            losses_per_model.push(misranked_pairs(&sample, losses));
        }
        for (i, p) in loo.iter().enumerate() {
            let e: f64 = rng.sample(StandardNormal);
            sample[i] = p.mean + p.variance.sqrt() * e;
        }
        losses_per_model.push(misranked_pairs(&sample, losses));
        let best = *losses_per_model.iter().min().expect("at least the target");
        let tied: Vec<usize> = (0..losses_per_model.len()).filter(|&i| losses_per_model[i] == best).collect();
        wins[tied[rng.random_range(0..tied.len())]] += 1;
    }
    Ok(wins.into_iter().map(|w| w as f64 / samples as f64).collect())
}

/// Joint-block surrogate factory producing [`RgpeEnsemble`]s over fixed prior-task models.
///
/// Weights are re-estimated on every fit once the target has 3 observations;
/// before that every model gets the same weight.
pub struct RgpeFactory {
    bases: Arc<Vec<GpModel>>,
    samples: usize,
    noise_floor: f64,
}

impl RgpeFactory {
    pub fn new(bases: Vec<GpModel>, samples: usize, noise_floor: f64) -> Self {
        Self {
            bases: Arc::new(bases),
            samples,
            noise_floor,
        }
    }

    pub fn base_count(&self) -> usize {
        self.bases.len()
    }

    pub fn fit_ensemble(
        &self,
        inputs: &[Vec<f64>],
        targets: &[f64],
        rng: &mut dyn RngCore,
    ) -> Result<RgpeEnsemble, FitError> {
        let target = GpModel::fit(inputs, targets, self.noise_floor)?;
        let k = self.bases.len() + 1;
        let weights = if targets.len() >= 3 {
            match rgpe_weights(&self.bases, &target, inputs, targets, self.samples, rng) {
                Ok(w) => w,
                Err(MetaError::Fit(e)) => return Err(e),
                Err(_) => vec![1.0 / k as f64; k],
            }
        } else {
            vec![1.0 / k as f64; k]
        };
        Ok(RgpeEnsemble::new(self.bases.clone(), target, weights))
    }
}

impl SurrogateFactory for RgpeFactory {
    fn fit(&self, inputs: &[Vec<f64>], targets: &[f64], rng: &mut dyn RngCore) -> Result<Box<dyn Surrogate>, FitError> {
        Ok(Box::new(self.fit_ensemble(inputs, targets, rng)?))
    }
}

/// Replaces the surrogate of a joint block over the full space with an RGPE
/// ensemble built from `store`. Returns false (vanilla behavior) when the
/// store is empty.
pub fn attach_rgpe(block: &mut Block, store: &MetaStore, samples: usize, noise_floor: f64) -> Result<bool, MetaError> {
    if store.is_empty() {
        return Ok(false);
    }
    if block.kind_name() != "joint" || !block.context().is_empty() {
        return Err(MetaError::Attach(
            "RGPE needs a joint block over the whole search space (plan J)".into(),
        ));
    }
    let space = block.space().clone();
    let mut bases = Vec::new();
    for task in store.tasks() {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (config, loss) in &task.history {
            space
                .validate_configuration(config)
                .map_err(|e| MetaError::Attach(format!("task `{}` does not match the space: {e}", task.task_id)))?;
            xs.push(space.encode(config));
            ys.push(*loss);
        }
        if !xs.is_empty() {
            bases.push(GpModel::fit(&xs, &ys, noise_floor)?);
        }
    }
    if bases.is_empty() {
        return Ok(false);
    }
    block
        .set_surrogate(Arc::new(RgpeFactory::new(bases, samples, noise_floor)))
        .map_err(|e| MetaError::Attach(e.to_string()))?;
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn f(x: &[f64]) -> f64 {
        (x[0] - 0.3).powi(2) + (x[1] - 0.7).powi(2)
    }

    fn grid(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
        (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect()
    }

    #[test]
    fn mixture_examples() {
        let p = |mean, variance| Prediction { mean, variance };
        let parts = [p(1.0, 1.0), p(3.0, 1.0)];
        assert_eq!(rgpe_predict(&parts, &[0.5, 0.5]), p(2.0, 1.0));
        assert_eq!(rgpe_predict(&parts, &[1.0, 0.0]), parts[0]);
    }

    #[test]
    fn identical_task_dominates_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let prior_x = grid(40, &mut rng);
        let prior_y: Vec<f64> = prior_x.iter().map(|x| f(x)).collect();
        let identical = GpModel::fit(&prior_x, &prior_y, 1e-6).unwrap();
        let noise_y: Vec<f64> = prior_x.iter().map(|_| rng.random::<f64>()).collect();
        let unrelated = GpModel::fit(&prior_x, &noise_y, 1e-6).unwrap();
        let tx = grid(10, &mut rng);
        let ty: Vec<f64> = tx.iter().map(|x| f(x)).collect();
        let target = GpModel::fit(&tx, &ty, 1e-6).unwrap();
        let w = rgpe_weights(&[identical, unrelated], &target, &tx, &ty, 100, &mut rng).unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[0] >= 0.6, "{w:?}");
    }

    #[test]
    fn no_bases_gives_target_all_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let tx = grid(5, &mut rng);
        let ty: Vec<f64> = tx.iter().map(|x| f(x)).collect();
        let target = GpModel::fit(&tx, &ty, 1e-6).unwrap();
        assert_eq!(rgpe_weights(&[], &target, &tx, &ty, 20, &mut rng).unwrap(), vec![1.0]);
        assert!(matches!(
            rgpe_weights(&[], &target, &tx[..2], &ty[..2], 20, &mut rng),
            Err(MetaError::TooFewPoints { .. })
        ));
    }
}
