use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{FitError, Prediction, Surrogate};

const LENGTHSCALES: [f64; 6] = [0.05, 0.1, 0.2, 0.5, 1.0, 2.0];
const SIGNAL_VARIANCES: [f64; 3] = [0.25, 1.0, 4.0];
const MIN_NOISE: f64 = 1e-6;
const MAX_JITTER: f64 = 1e-4;

/// Exact GP regression with an isotropic squared-exponential kernel.
///
/// Targets are standardized internally; predictions are returned on the
/// original scale.
#[derive(Clone, Debug)]
pub struct GpModel {
    inputs: Vec<Vec<f64>>,
    /// Standardized targets.
    targets: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    /// (K + σ²I)⁻¹ y
    alpha: DVector<f64>,
    lengthscale: f64,
    signal_variance: f64,
    noise_variance: f64,
    y_mean: f64,
    y_scale: f64,
    log_marginal_likelihood: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kernel(a: &[f64], b: &[f64], lengthscale: f64, signal_variance: f64) -> f64 {
    signal_variance * (-sq_dist(a, b) / (2.0 * lengthscale * lengthscale)).exp()
}

/// Factorizes `gram`, escalating diagonal jitter up to [`MAX_JITTER`].
fn factorize(gram: &DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(gram.clone()) {
        return Some(c);
    }
    let n = gram.nrows();
    let mut jitter = 1e-10;
    while jitter <= MAX_JITTER * (1.0 + 1e-9) {
        let mut g = gram.clone();
        for i in 0..n {
            g[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(g) {
            return Some(c);
        }
        jitter *= 10.0;
    }
    None
}

impl GpModel {
    /// Fits a GP, choosing (lengthscale, signal variance) on a fixed grid by
    /// exact log marginal likelihood; noise variance is `max(noise_floor, 1e-6)`.
    pub fn fit(inputs: &[Vec<f64>], targets: &[f64], noise_floor: f64) -> Result<Self, FitError> {
        let n = inputs.len();
        if n == 0 {
            return Err(FitError::NoData);
        }
        if targets.len() != n {
            return Err(FitError::WidthMismatch {
                expected: n,
                got: targets.len(),
            });
        }
        let width = inputs[0].len();
        if let Some(bad) = inputs.iter().find(|x| x.len() != width) {
            return Err(FitError::WidthMismatch {
                expected: width,
                got: bad.len(),
            });
        }
        if inputs.iter().flatten().chain(targets).any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite);
        }
        let y_mean = targets.iter().sum::<f64>() / n as f64;
        let var = targets.iter().map(|t| (t - y_mean).powi(2)).sum::<f64>() / n as f64;
        let y_scale = if var.sqrt() < 1e-12 { 1.0 } else { var.sqrt() };
        let y = DVector::from_iterator(n, targets.iter().map(|t| (t - y_mean) / y_scale));
        let noise_variance = noise_floor.max(MIN_NOISE);
        let dists = DMatrix::from_fn(n, n, |i, j| sq_dist(&inputs[i], &inputs[j]));

        let mut best: Option<GpModel> = None;
        for &lengthscale in &LENGTHSCALES {
            for &signal_variance in &SIGNAL_VARIANCES {
                let mut gram = dists.map(|d| signal_variance * (-d / (2.0 * lengthscale * lengthscale)).exp());
                for i in 0..n {
                    gram[(i, i)] += noise_variance;
                }
                let Some(chol) = factorize(&gram) else { continue };
                let alpha = chol.solve(&y);
                let log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
                let lml = -0.5 * y.dot(&alpha) - log_det - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
                if best.as_ref().is_none_or(|b| lml > b.log_marginal_likelihood) {
                    best = Some(GpModel {
                        inputs: inputs.to_vec(),
                        targets: y.clone(),
                        chol,
                        alpha,
                        lengthscale,
                        signal_variance,
                        noise_variance,
                        y_mean,
                        y_scale,
                        log_marginal_likelihood: lml,
                    });
                }
            }
        }
        best.ok_or(FitError::Factorization)
    }

    pub fn width(&self) -> usize {
        self.inputs[0].len()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.len()
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Prior signal variance on the original target scale.
    pub fn prior_variance(&self) -> f64 {
        self.signal_variance * self.y_scale * self.y_scale
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    fn cross(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.inputs.len(),
            self.inputs.iter().map(|xi| kernel(x, xi, self.lengthscale, self.signal_variance)),
        )
    }

    fn check_width(&self, x: &[f64]) -> Result<(), FitError> {
        if x.len() != self.width() {
            return Err(FitError::WidthMismatch {
                expected: self.width(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Posterior mean and latent-function variance at `x`.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction, FitError> {
        self.check_width(x)?;
        let k = self.cross(x);
        let mean = k.dot(&self.alpha);
        let v = self.chol.l_dirty().solve_lower_triangular(&k).expect("triangular factor is invertible");
        let var = (self.signal_variance - v.dot(&v)).max(0.0);
        Ok(Prediction {
            mean: self.y_mean + self.y_scale * mean,
            variance: var * self.y_scale * self.y_scale,
        })
    }

    /// Joint posterior over several points: means and latent covariance.
    pub fn predict_joint(&self, xs: &[Vec<f64>]) -> Result<(Vec<f64>, DMatrix<f64>), FitError> {
        for x in xs {
            self.check_width(x)?;
        }
        let m = xs.len();
        let kx = DMatrix::from_fn(self.inputs.len(), m, |i, j| {
            kernel(&self.inputs[i], &xs[j], self.lengthscale, self.signal_variance)
        });
        let means = (kx.transpose() * &self.alpha).map(|v| self.y_mean + self.y_scale * v);
        let v = self.chol.l_dirty().solve_lower_triangular(&kx).expect("triangular factor is invertible");
        let prior = DMatrix::from_fn(m, m, |i, j| kernel(&xs[i], &xs[j], self.lengthscale, self.signal_variance));
        let s2 = self.y_scale * self.y_scale;
        let cov = (prior - v.transpose() * v).map(|c| c * s2);
        Ok((means.iter().copied().collect(), cov))
    }

    /// Leave-one-out predictive means and variances at the training points.
    pub fn loo_predictions(&self) -> Vec<Prediction> {
        let n = self.inputs.len();
        let inv = self.chol.inverse();
        (0..n)
            .map(|i| {
                let kii = inv[(i, i)];
                let mean = self.targets[i] - self.alpha[i] / kii;
                Prediction {
                    mean: self.y_mean + self.y_scale * mean,
                    variance: (1.0 / kii).max(0.0) * self.y_scale * self.y_scale,
                }
            })
            .collect()
    }
}

impl Surrogate for GpModel {
    fn predict(&self, x: &[f64]) -> Prediction {
        GpModel::predict(self, x).expect("surrogate queried with its training width")
    }
}
