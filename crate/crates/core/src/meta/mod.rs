//! Transfer learning across tasks: RGPE surrogate ensembles for joint blocks,
//! a RankNet arm pre-selector for conditioning blocks, dataset meta-features,
//! and an on-disk store of prior tasks.

mod ranknet;
mod rgpe;
mod store;

use thiserror::Error;

use crate::objective::{Dataset, FeatureKind};
use crate::plan::{PlanShape, PlanSpec};
use crate::space::{Domain, SearchSpace};
use crate::surrogate::FitError;

pub use ranknet::{
    arm_encoding, ranknet_loss_and_gradient, select_arms, train_ranknet, RankNetConfig, RankNetModel, RankTriple,
};
pub use rgpe::{attach_rgpe, rgpe_predict, rgpe_weights, RgpeEnsemble, RgpeFactory, DEFAULT_RGPE_SAMPLES};
pub use store::{rank_triples, MetaStore, MetaTask, TaskMeta};

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("need at least {needed} target observations, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-finite training loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("no training triples")]
    NoTriples,
    #[error("feature width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },
    #[error("cannot attach: {0}")]
    Attach(String),
    #[error("malformed store: {0}")]
    Store(String),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Width of [`extract_dataset_features`].
pub const DATASET_FEATURES: usize = 5;

/// (log₁₀ rows, log₁₀ feature columns, class count, majority/minority ratio,
/// categorical fraction). Regression datasets report 0 classes and ratio 1.
pub fn extract_dataset_features(data: &Dataset) -> Vec<f64> {
    let cols = data.n_columns().max(1);
    let (classes, ratio) = match data.class_labels() {
        Some(labels) => {
            let mut counts = vec![0usize; data.n_classes()];
            for &l in labels {
                counts[l] += 1;
            }
            let present: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
            let max = present.iter().copied().max().unwrap_or(1);
            let min = present.iter().copied().min().unwrap_or(1);
            (data.n_classes() as f64, max as f64 / min as f64)
        }
        None => (0.0, 1.0),
    };
    let categorical = data.feature_kinds().iter().filter(|k| **k == FeatureKind::Categorical).count();
    vec![
        (data.n_rows().max(1) as f64).log10(),
        (cols as f64).log10(),
        classes,
        ratio,
        categorical as f64 / cols as f64,
    ]
}

/// Ordered pairs (j, k) on which `predicted` and `actual` disagree about `j < k`.
///
/// Counts in O(n log n): disagreements = A + B − 2·C with A, B the strictly
/// ordered pairs of each sequence and C the pairs ordered the same way by both.
pub fn misranked_pairs(predicted: &[f64], actual: &[f64]) -> usize {
    assert_eq!(predicted.len(), actual.len(), "paired sequences");
    let n = predicted.len();
    let strict = |v: &[f64]| -> usize {
        let mut s: Vec<f64> = v.to_vec();
        s.sort_by(f64::total_cmp);
        let mut tied = 0;
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j < n && s[j] == s[i] {
                j += 1;
            }
            tied += (j - i) * (j - i);
            i = j;
        }
        (n * n - tied) / 2
    };
    let a = strict(predicted);
    let b = strict(actual);

    // ranks of `actual` for a Fenwick tree
    let mut sorted_actual: Vec<f64> = actual.to_vec();
    sorted_actual.sort_by(f64::total_cmp);
    sorted_actual.dedup();
    let rank = |x: f64| sorted_actual.partition_point(|v| *v < x);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| predicted[i].total_cmp(&predicted[j]));
    let mut tree = vec![0usize; sorted_actual.len() + 1];
    let mut both = 0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && predicted[order[j]] == predicted[order[i]] {
            j += 1;
        }
        for &idx in &order[i..j] {
            // earlier groups with strictly smaller actual value
            let mut r = rank(actual[idx]);
            while r > 0 {
                both += tree[r];
                r &= r - 1;
            }
        }
        for &idx in &order[i..j] {
            let mut r = rank(actual[idx]) + 1;
            while r < tree.len() {
                tree[r] += 1;
                r += r & r.wrapping_neg();
            }
        }
        i = j;
    }
    a + b - 2 * both
}

/// Restricts the conditioning arms of `spec` to the `k` arms `model` ranks
/// highest for a dataset with meta-features `dataset_features`.
pub fn attach_ranknet(
    spec: &PlanSpec,
    space: &SearchSpace,
    model: &RankNetModel,
    dataset_features: &[f64],
    k: usize,
) -> Result<PlanSpec, MetaError> {
    if !matches!(spec.shape, PlanShape::C | PlanShape::AC | PlanShape::CA) {
        return Err(MetaError::Attach(format!("plan {} has no conditioning block", spec.label())));
    }
    let variable = spec
        .conditioning
        .as_deref()
        .or(space.algorithm_variable())
        .ok_or_else(|| MetaError::Attach("space has no algorithm variable".into()))?;
    let Some(Domain::Cat { choices }) = space.variable(variable).map(|v| &v.domain) else {
        return Err(MetaError::Attach(format!("`{variable}` is not a categorical variable")));
    };
    let candidates = spec.arms.clone().unwrap_or_else(|| choices.clone());
    let mut arms = Vec::with_capacity(candidates.len());
    for c in candidates {
        let enc = arm_encoding(&model.vocabulary, &c)
            .ok_or_else(|| MetaError::Attach(format!("arm `{c}` is not in the ranker vocabulary")))?;
        arms.push((c, enc));
    }
    let mut out = spec.clone();
    out.arms = Some(select_arms(model, dataset_features, &arms, k)?);
    Ok(out)
}

/// Misranked pairs of a surrogate's posterior means against observed losses.
pub fn ranking_loss(model: &dyn crate::surrogate::Surrogate, inputs: &[Vec<f64>], losses: &[f64]) -> usize {
    let means: Vec<f64> = inputs.iter().map(|x| model.predict(x).mean).collect();
    misranked_pairs(&means, losses)
}
