use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::MetaError;

/// Dataset `dataset` prefers arm `better` over arm `worse`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTriple {
    pub dataset: Vec<f64>,
    pub better: Vec<f64>,
    pub worse: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankNetConfig {
    pub lr: f64,
    pub epochs: usize,
    pub margin_hi: f64,
    pub margin_lo: f64,
    pub hidden: usize,
}

impl Default for RankNetConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            epochs: 500,
            margin_hi: 0.9,
            margin_lo: 0.1,
            hidden: 32,
        }
    }
}

/// One-hidden-layer tanh MLP scoring a (dataset, arm) feature pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankNetModel {
    pub input_width: usize,
    pub hidden: usize,
    /// Row-major `hidden × input_width`.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
    /// Arm labels in one-hot order, when known.
    #[serde(default)]
    pub vocabulary: Vec<String>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl RankNetModel {
    /// Parameters drawn uniformly from (−0.1, 0.1).
    pub fn init<R: Rng + ?Sized>(input_width: usize, hidden: usize, rng: &mut R) -> Self {
        let mut u = |n: usize| (0..n).map(|_| rng.random_range(-0.1..0.1)).collect::<Vec<f64>>();
        let w1 = u(hidden * input_width);
        let b1 = u(hidden);
        let w2 = u(hidden);
        let b2 = u(1)[0];
        Self {
            input_width,
            hidden,
            w1,
            b1,
            w2,
            b2,
            vocabulary: Vec::new(),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    /// Flattened parameters: w1, b1, w2, b2.
    pub fn parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        p.extend(&self.w1);
        p.extend(&self.b1);
        p.extend(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_parameters(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.parameter_count(), "parameter vector length");
        let (a, rest) = p.split_at(self.w1.len());
        let (b, rest) = rest.split_at(self.b1.len());
        let (c, d) = rest.split_at(self.w2.len());
        self.w1.copy_from_slice(a);
        self.b1.copy_from_slice(b);
        self.w2.copy_from_slice(c);
        self.b2 = d[0];
    }

    fn hidden_layer(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.input_width..(h + 1) * self.input_width];
                (row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b1[h]).tanh()
            })
            .collect()
    }

    fn score_input(&self, x: &[f64]) -> f64 {
        self.hidden_layer(x).iter().zip(&self.w2).map(|(h, w)| h * w).sum::<f64>() + self.b2
    }

    /// Score of an arm on a dataset; higher is better.
    pub fn score(&self, dataset: &[f64], arm: &[f64]) -> Result<f64, MetaError> {
        let x: Vec<f64> = dataset.iter().chain(arm).copied().collect();
        if x.len() != self.input_width {
            return Err(MetaError::WidthMismatch {
                expected: self.input_width,
                got: x.len(),
            });
        }
        Ok(self.score_input(&x))
    }

    /// Adds dr/dθ · `scale` for input `x` into `grad`.
    fn accumulate_gradient(&self, x: &[f64], scale: f64, grad: &mut [f64]) {
        let h = self.hidden_layer(x);
        let (gw1, rest) = grad.split_at_mut(self.w1.len());
        let (gb1, rest) = rest.split_at_mut(self.b1.len());
        let (gw2, gb2) = rest.split_at_mut(self.w2.len());
        gb2[0] += scale;
        for k in 0..self.hidden {
            gw2[k] += scale * h[k];
            let delta = scale * self.w2[k] * (1.0 - h[k] * h[k]);
            gb1[k] += delta;
            for (i, v) in x.iter().enumerate() {
                gw1[k * self.input_width + i] += delta * v;
            }
        }
    }
}

/// One-hot encoding of `arm` over `vocabulary`.
pub fn arm_encoding(vocabulary: &[String], arm: &str) -> Option<Vec<f64>> {
    let idx = vocabulary.iter().position(|a| a == arm)?;
    Some((0..vocabulary.len()).map(|i| if i == idx { 1.0 } else { 0.0 }).collect())
}

/// Mean pairwise hinge loss over `triples` and its gradient in [`RankNetModel::parameters`] order.
pub fn ranknet_loss_and_gradient(model: &RankNetModel, triples: &[RankTriple], config: &RankNetConfig) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.parameter_count()];
    let mut loss = 0.0;
    let inv = 1.0 / triples.len().max(1) as f64;
    for t in triples {
        let xj: Vec<f64> = t.dataset.iter().chain(&t.better).copied().collect();
        let xk: Vec<f64> = t.dataset.iter().chain(&t.worse).copied().collect();
        let d = model.score_input(&xj) - model.score_input(&xk);
        let z = sigmoid(d);
        let slope = z * (1.0 - z);
        let mut dd = 0.0;
        // l₊(σ(d)) = max(0, hi − σ(d))
        if config.margin_hi - z > 0.0 {
            loss += config.margin_hi - z;
            dd -= slope;
        }
        // l₋(σ(−d)) = max(0, σ(−d) − lo)
        if (1.0 - z) - config.margin_lo > 0.0 {
            loss += (1.0 - z) - config.margin_lo;
            dd -= slope;
        }
        if dd != 0.0 {
            model.accumulate_gradient(&xj, dd * inv, &mut grad);
            model.accumulate_gradient(&xk, -dd * inv, &mut grad);
        }
    }
    (loss * inv, grad)
}

/// Full-batch gradient descent on the pairwise hinge objective.
pub fn train_ranknet(
    triples: &[RankTriple],
    config: &RankNetConfig,
    rng: &mut dyn RngCore,
) -> Result<RankNetModel, MetaError> {
    let first = triples.first().ok_or(MetaError::NoTriples)?;
    let width = first.dataset.len() + first.better.len();
    for t in triples {
        for w in [t.dataset.len() + t.better.len(), t.dataset.len() + t.worse.len()] {
            if w != width {
                return Err(MetaError::WidthMismatch { expected: width, got: w });
            }
        }
    }
    let mut model = RankNetModel::init(width, config.hidden, rng);
    let mut params = model.parameters();
    for epoch in 0..config.epochs {
        let (loss, grad) = ranknet_loss_and_gradient(&model, triples, config);
        if !loss.is_finite() {
            return Err(MetaError::NonFinite { epoch });
        }
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= config.lr * g;
        }
        model.set_parameters(&params);
    }
    Ok(model)
}

/// The `k` best-scoring arms, best first; ties keep declaration order.
pub fn select_arms(
    model: &RankNetModel,
    dataset: &[f64],
    arms: &[(String, Vec<f64>)],
    k: usize,
) -> Result<Vec<String>, MetaError> {
    let mut scored = Vec::with_capacity(arms.len());
    for (i, (name, enc)) in arms.iter().enumerate() {
        scored.push((i, model.score(dataset, enc)?, name));
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().take(k.max(1)).map(|s| s.2.clone()).collect())
}
