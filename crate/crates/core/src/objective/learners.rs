//! Desk-scale learners and feature-engineering stages used by the pipeline objective.

use std::cmp::Ordering;

/// Output of a fitted pipeline on a set of rows.
#[derive(Clone, Debug, PartialEq)]
pub enum Predictions {
    /// Per-row class-probability vectors.
    Probabilities(Vec<Vec<f64>>),
    /// Per-row regression values.
    Values(Vec<f64>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Probabilities(p) => p.len(),
            Predictions::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Hard predictions: argmax class index (ties to the lowest index) or the value itself.
    pub fn point_predictions(&self) -> Vec<f64> {
        match self {
            Predictions::Probabilities(p) => p.iter().map(|row| argmax(row) as f64).collect(),
            Predictions::Values(v) => v.clone(),
        }
    }
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Training targets as seen by a learner.
#[derive(Clone, Copy, Debug)]
pub enum TrainTarget<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaler {
    None,
    Standardize,
    MinMax,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Learner {
    Knn { k: usize, distance_weighted: bool, manhattan: bool },
    Tree { max_depth: usize, min_split: usize, min_leaf: usize },
    Linear { reg_strength: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineSettings {
    pub scaler: Scaler,
    /// Fraction of highest-variance columns to keep; `None` keeps all.
    pub keep_fraction: Option<f64>,
    pub learner: Learner,
}

/// Fits the pipeline on `train` and predicts every row of each matrix in `eval_sets`.
pub fn fit_predict(
    settings: &PipelineSettings,
    train: &[Vec<f64>],
    target: TrainTarget<'_>,
    eval_sets: &[&[Vec<f64>]],
) -> Result<Vec<Predictions>, String> {
    if train.is_empty() {
        return Err("empty training set".into());
    }
    let columns = select_columns(train, settings.keep_fraction);
    if columns.is_empty() {
        return Err("feature selection left zero features".into());
    }
    let project = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
        rows.iter().map(|r| columns.iter().map(|&j| r[j]).collect()).collect()
    };
    let train_sel = project(train);
    let scaling = ColumnScaling::fit(&train_sel, settings.scaler);
    let x = scaling.apply(&train_sel);
    let evals: Vec<Vec<Vec<f64>>> = eval_sets.iter().map(|s| scaling.apply(&project(s))).collect();
    let model = Model::fit(&settings.learner, &x, target)?;
    Ok(evals.iter().map(|rows| model.predict(rows)).collect())
}

/// Indices of the top ⌈p·d⌉ columns by training variance, in column order.
fn select_columns(train: &[Vec<f64>], keep_fraction: Option<f64>) -> Vec<usize> {
    let d = train[0].len();
    let Some(p) = keep_fraction else {
        return (0..d).collect();
    };
    let keep = ((p * d as f64).ceil() as usize).min(d);
    let var: Vec<f64> = (0..d).map(|j| column_stats(train, j).1).collect();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| var[b].partial_cmp(&var[a]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut kept = order[..keep].to_vec();
    kept.sort_unstable();
    kept
}

fn column_stats(rows: &[Vec<f64>], j: usize) -> (f64, f64) {
    let n = rows.len() as f64;
    let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n;
    let var = rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

struct ColumnScaling {
    offset: Vec<f64>,
    scale: Vec<f64>,
}

impl ColumnScaling {
    fn fit(rows: &[Vec<f64>], scaler: Scaler) -> Self {
        let d = rows[0].len();
        let mut offset = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for j in 0..d {
            match scaler {
                Scaler::None => {}
                Scaler::Standardize => {
                    let (m, v) = column_stats(rows, j);
                    offset[j] = m;
                    scale[j] = if v > 1e-24 { v.sqrt() } else { 1.0 };
                }
                Scaler::MinMax => {
                    let lo = rows.iter().map(|r| r[j]).fold(f64::INFINITY, f64::min);
                    let hi = rows.iter().map(|r| r[j]).fold(f64::NEG_INFINITY, f64::max);
                    offset[j] = lo;
                    scale[j] = if hi - lo > 1e-12 { hi - lo } else { 1.0 };
                }
            }
        }
        Self { offset, scale }
    }

    fn apply(&self, rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
        rows.iter()
            .map(|r| r.iter().enumerate().map(|(j, x)| (x - self.offset[j]) / self.scale[j]).collect())
            .collect()
    }
}

enum Model {
    Knn {
        k: usize,
        distance_weighted: bool,
        manhattan: bool,
        x: Vec<Vec<f64>>,
        target: OwnedTarget,
    },
    Tree {
        root: TreeNode,
        n_classes: Option<usize>,
    },
    Linear(LinearModel),
}

#[derive(Clone)]
enum OwnedTarget {
    Classes { labels: Vec<usize>, n_classes: usize },
    Values(Vec<f64>),
}

impl From<TrainTarget<'_>> for OwnedTarget {
    fn from(t: TrainTarget<'_>) -> Self {
        match t {
            TrainTarget::Classes { labels, n_classes } => OwnedTarget::Classes {
                labels: labels.to_vec(),
                n_classes,
            },
            TrainTarget::Values(v) => OwnedTarget::Values(v.to_vec()),
        }
    }
}

impl Model {
    fn fit(learner: &Learner, x: &[Vec<f64>], target: TrainTarget<'_>) -> Result<Self, String> {
        Ok(match *learner {
            Learner::Knn {
                k,
                distance_weighted,
                manhattan,
            } => Model::Knn {
                k: k.clamp(1, x.len()),
                distance_weighted,
                manhattan,
                x: x.to_vec(),
                target: target.into(),
            },
            Learner::Tree {
                max_depth,
                min_split,
                min_leaf,
            } => {
                let idx: Vec<usize> = (0..x.len()).collect();
                let params = TreeParams {
                    max_depth,
                    min_split: min_split.max(2),
                    min_leaf: min_leaf.max(1),
                };
                let n_classes = match target {
                    TrainTarget::Classes { n_classes, .. } => Some(n_classes),
                    TrainTarget::Values(_) => None,
                };
                Model::Tree {
                    root: grow(x, target, &idx, 0, &params),
                    n_classes,
                }
            }
            Learner::Linear { reg_strength } => Model::Linear(LinearModel::fit(x, target, reg_strength)?),
        })
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Predictions {
        match self {
            Model::Knn {
                k,
                distance_weighted,
                manhattan,
                x,
                target,
            } => knn_predict(rows, x, target, *k, *distance_weighted, *manhattan),
            Model::Tree { root, n_classes } => match n_classes {
                Some(_) => Predictions::Probabilities(rows.iter().map(|r| root.leaf(r).to_vec()).collect()),
                None => Predictions::Values(rows.iter().map(|r| root.leaf(r)[0]).collect()),
            },
            Model::Linear(m) => m.predict(rows),
        }
    }
}

fn knn_predict(
    rows: &[Vec<f64>],
    x: &[Vec<f64>],
    target: &OwnedTarget,
    k: usize,
    distance_weighted: bool,
    manhattan: bool,
) -> Predictions {
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        if manhattan {
            a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum()
        } else {
            a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
        }
    };
    let neighbours = |row: &[f64]| -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = x.iter().enumerate().map(|(i, t)| (i, dist(row, t))).collect();
        d.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
        d.truncate(k);
        // exact matches dominate distance weighting
        if distance_weighted && d.iter().any(|(_, dd)| *dd == 0.0) {
            d.retain(|(_, dd)| *dd == 0.0);
        }
        d
    };
    let weight = |dd: f64| if distance_weighted && dd > 0.0 { 1.0 / dd } else { 1.0 };
    match target {
        OwnedTarget::Classes { labels, n_classes } => Predictions::Probabilities(
            rows.iter()
                .map(|row| {
                    let mut p = vec![0.0; *n_classes];
                    let nb = neighbours(row);
                    for (i, dd) in &nb {
                        p[labels[*i]] += weight(*dd);
                    }
                    let total: f64 = p.iter().sum();
                    p.iter_mut().for_each(|v| *v /= total);
                    p
                })
                .collect(),
        ),
        OwnedTarget::Values(y) => Predictions::Values(
            rows.iter()
                .map(|row| {
                    let nb = neighbours(row);
                    let (s, w) = nb
                        .iter()
                        .fold((0.0, 0.0), |(s, w), (i, dd)| (s + weight(*dd) * y[*i], w + weight(*dd)));
                    s / w
                })
                .collect(),
        ),
    }
}

struct TreeParams {
    max_depth: usize,
    min_split: usize,
    min_leaf: usize,
}

enum TreeNode {
    Leaf(Vec<f64>),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    fn leaf(&self, row: &[f64]) -> &[f64] {
        match self {
            TreeNode::Leaf(v) => v,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.leaf(row)
                } else {
                    right.leaf(row)
                }
            }
        }
    }
}

fn leaf_value(target: TrainTarget<'_>, idx: &[usize]) -> Vec<f64> {
    match target {
        TrainTarget::Classes { labels, n_classes } => {
            let mut p = vec![0.0; n_classes];
            for &i in idx {
                p[labels[i]] += 1.0;
            }
            p.iter_mut().for_each(|v| *v /= idx.len() as f64);
            p
        }
        TrainTarget::Values(y) => vec![idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64],
    }
}

/// Weighted impurity accumulator: Gini for classes, sum of squared deviations for values.
#[derive(Clone)]
enum Impurity {
    Gini { counts: Vec<f64>, n: f64 },
    Sse { sum: f64, sq: f64, n: f64 },
}

impl Impurity {
    fn empty(target: TrainTarget<'_>) -> Self {
        match target {
            TrainTarget::Classes { n_classes, .. } => Impurity::Gini {
                counts: vec![0.0; n_classes],
                n: 0.0,
            },
            TrainTarget::Values(_) => Impurity::Sse { sum: 0.0, sq: 0.0, n: 0.0 },
        }
    }

    fn add(&mut self, target: TrainTarget<'_>, i: usize, sign: f64) {
        match (self, target) {
            (Impurity::Gini { counts, n }, TrainTarget::Classes { labels, .. }) => {
                counts[labels[i]] += sign;
                *n += sign;
            }
            (Impurity::Sse { sum, sq, n }, TrainTarget::Values(y)) => {
                *sum += sign * y[i];
                *sq += sign * y[i] * y[i];
                *n += sign;
            }
            _ => unreachable!("accumulator matches target kind"),
        }
    }

    /// Total (count-weighted) impurity.
    fn total(&self) -> f64 {
        match self {
            Impurity::Gini { counts, n } => {
                if *n <= 0.0 {
                    0.0
                } else {
                    n - counts.iter().map(|c| c * c).sum::<f64>() / n
                }
            }
            Impurity::Sse { sum, sq, n } => {
                if *n <= 0.0 {
                    0.0
                } else {
                    (sq - sum * sum / n).max(0.0)
                }
            }
        }
    }
}

fn grow(x: &[Vec<f64>], target: TrainTarget<'_>, idx: &[usize], depth: usize, p: &TreeParams) -> TreeNode {
    let mut parent = Impurity::empty(target);
    for &i in idx {
        parent.add(target, i, 1.0);
    }
    let parent_impurity = parent.total();
    if depth >= p.max_depth || idx.len() < p.min_split || parent_impurity <= 1e-12 {
        return TreeNode::Leaf(leaf_value(target, idx));
    }
    let d = x[0].len();
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..d {
        let mut order = idx.to_vec();
        order.sort_by(|&a, &b| x[a][j].partial_cmp(&x[b][j]).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
        let mut left = Impurity::empty(target);
        let mut right = parent.clone();
        for s in 0..order.len() - 1 {
            left.add(target, order[s], 1.0);
            right.add(target, order[s], -1.0);
            let (lo, hi) = (x[order[s]][j], x[order[s + 1]][j]);
            if lo == hi || s + 1 < p.min_leaf || order.len() - s - 1 < p.min_leaf {
                continue;
            }
            let score = left.total() + right.total();
            if best.is_none_or(|(b, _, _)| score < b - 1e-12) {
                best = Some((score, j, 0.5 * (lo + hi)));
            }
        }
    }
    match best {
        Some((score, feature, threshold)) if score < parent_impurity - 1e-12 => {
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][feature] <= threshold);
            TreeNode::Split {
                feature,
                threshold,
                left: Box::new(grow(x, target, &l, depth + 1, p)),
                right: Box::new(grow(x, target, &r, depth + 1, p)),
            }
        }
        _ => TreeNode::Leaf(leaf_value(target, idx)),
    }
}

const LINEAR_ITERATIONS: usize = 500;

/// Softmax (classification) or ridge (regression) model trained by full-batch
/// gradient descent on internally standardized inputs.
struct LinearModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    /// One weight row per output (classes, or a single regression output); last entry is the bias.
    weights: Vec<Vec<f64>>,
    y_mean: f64,
    y_scale: f64,
    classification: bool,
}

impl LinearModel {
    fn fit(x: &[Vec<f64>], target: TrainTarget<'_>, reg: f64) -> Result<Self, String> {
        let n = x.len() as f64;
        let d = x[0].len();
        let (mean, scale): (Vec<f64>, Vec<f64>) = (0..d)
            .map(|j| {
                let (m, v) = column_stats(x, j);
                (m, if v > 1e-24 { v.sqrt() } else { 1.0 })
            })
            .unzip();
        let z: Vec<Vec<f64>> = x
            .iter()
            .map(|r| r.iter().enumerate().map(|(j, v)| (v - mean[j]) / scale[j]).collect())
            .collect();
        let lambda = reg / n;
        match target {
            TrainTarget::Classes { labels, n_classes } => {
                let lr = 1.0 / (0.5 * (d as f64 + 1.0) + lambda);
                let mut w = vec![vec![0.0; d + 1]; n_classes];
                for _ in 0..LINEAR_ITERATIONS {
                    let mut grad = vec![vec![0.0; d + 1]; n_classes];
                    for (row, &y) in z.iter().zip(labels) {
                        let p = softmax(&w, row);
                        for c in 0..n_classes {
                            let g = p[c] - if c == y { 1.0 } else { 0.0 };
                            for j in 0..d {
                                grad[c][j] += g * row[j];
                            }
                            grad[c][d] += g;
                        }
                    }
                    for c in 0..n_classes {
                        for j in 0..=d {
                            let penalty = if j < d { lambda * w[c][j] } else { 0.0 };
                            w[c][j] -= lr * (grad[c][j] / n + penalty);
                        }
                    }
                }
                if w.iter().flatten().any(|v| !v.is_finite()) {
                    return Err("logistic regression diverged".into());
                }
                Ok(Self {
                    mean,
                    scale,
                    weights: w,
                    y_mean: 0.0,
                    y_scale: 1.0,
                    classification: true,
                })
            }
            TrainTarget::Values(y) => {
                let y_mean = y.iter().sum::<f64>() / n;
                let y_var = y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / n;
                let y_scale = if y_var > 1e-24 { y_var.sqrt() } else { 1.0 };
                let t: Vec<f64> = y.iter().map(|v| (v - y_mean) / y_scale).collect();
                let lr = 1.0 / (d as f64 + 1.0 + lambda);
                let mut w = vec![0.0; d + 1];
                for _ in 0..LINEAR_ITERATIONS {
                    let mut grad = vec![0.0; d + 1];
                    for (row, ti) in z.iter().zip(&t) {
                        let r = dot(&w, row) - ti;
                        for j in 0..d {
                            grad[j] += r * row[j];
                        }
                        grad[d] += r;
                    }
                    for j in 0..=d {
                        let penalty = if j < d { lambda * w[j] } else { 0.0 };
                        w[j] -= lr * (grad[j] / n + penalty);
                    }
                }
                if w.iter().any(|v| !v.is_finite()) {
                    return Err("ridge regression diverged".into());
                }
                Ok(Self {
                    mean,
                    scale,
                    weights: vec![w],
                    y_mean,
                    y_scale,
                    classification: false,
                })
            }
        }
    }

    fn predict(&self, rows: &[Vec<f64>]) -> Predictions {
        let standardized = rows.iter().map(|r| -> Vec<f64> {
            r.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.scale[j]).collect()
        });
        if self.classification {
            Predictions::Probabilities(standardized.map(|z| softmax(&self.weights, &z)).collect())
        } else {
            Predictions::Values(
                standardized
                    .map(|z| dot(&self.weights[0], &z) * self.y_scale + self.y_mean)
                    .collect(),
            )
        }
    }
}

/// `w · (x, 1)`; `w` carries the bias as its last entry.
fn dot(w: &[f64], x: &[f64]) -> f64 {
    w[..x.len()].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[x.len()]
}

fn softmax(w: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    let logits: Vec<f64> = w.iter().map(|wc| dot(wc, x)).collect();
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let t = i as f64 / 40.0;
            x.push(vec![-2.0 + t, 1.0 - t]);
            y.push(0);
            x.push(vec![2.0 - t, -1.0 + t]);
            y.push(1);
        }
        (x, y)
    }

    fn accuracy(p: &Predictions, y: &[usize]) -> f64 {
        let hard = p.point_predictions();
        hard.iter().zip(y).filter(|(a, b)| **a as usize == **b).count() as f64 / y.len() as f64
    }

    #[test]
    fn every_learner_separates_blobs() {
        let (x, y) = blobs();
        let target = TrainTarget::Classes { labels: &y, n_classes: 2 };
        for learner in [
            Learner::Knn {
                k: 5,
                distance_weighted: false,
                manhattan: false,
            },
            Learner::Tree {
                max_depth: 4,
                min_split: 2,
                min_leaf: 1,
            },
            Learner::Linear { reg_strength: 1.0 },
        ] {
            for scaler in [Scaler::None, Scaler::Standardize, Scaler::MinMax] {
                let settings = PipelineSettings {
                    scaler,
                    keep_fraction: None,
                    learner,
                };
                let p = fit_predict(&settings, &x, target, &[&x]).unwrap();
                assert_eq!(accuracy(&p[0], &y), 1.0, "{learner:?} {scaler:?}");
            }
        }
    }

    #[test]
    fn ridge_recovers_a_line() {
        let x: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64 / 10.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - 1.0).collect();
        let settings = PipelineSettings {
            scaler: Scaler::None,
            keep_fraction: None,
            learner: Learner::Linear { reg_strength: 1e-4 },
        };
        let p = fit_predict(&settings, &x, TrainTarget::Values(&y), &[&x]).unwrap();
        let Predictions::Values(v) = &p[0] else { panic!() };
        for (a, b) in v.iter().zip(&y) {
            assert!((a - b).abs() < 1e-2, "{a} vs {b}");
        }
    }

    #[test]
    fn variance_selection_keeps_top_columns() {
        let x = vec![vec![0.0, 5.0, 1.0], vec![1.0, -5.0, 1.0], vec![2.0, 5.0, 1.0]];
        assert_eq!(select_columns(&x, Some(0.34)), vec![0, 1]);
        assert_eq!(select_columns(&x, Some(0.1)), vec![1]);
        assert_eq!(select_columns(&x, None), vec![0, 1, 2]);
    }

    #[test]
    fn tree_regression_fits_step() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 1.0 } else { 5.0 }).collect();
        let settings = PipelineSettings {
            scaler: Scaler::None,
            keep_fraction: None,
            learner: Learner::Tree {
                max_depth: 2,
                min_split: 2,
                min_leaf: 1,
            },
        };
        let p = fit_predict(&settings, &x, TrainTarget::Values(&y), &[&x]).unwrap();
        assert_eq!(p[0], Predictions::Values(y));
    }

    #[test]
    fn distance_weighted_knn_interpolates_training_points() {
        let (x, y) = blobs();
        let settings = PipelineSettings {
            scaler: Scaler::None,
            keep_fraction: None,
            learner: Learner::Knn {
                k: 25,
                distance_weighted: true,
                manhattan: true,
            },
        };
        let p = fit_predict(&settings, &x, TrainTarget::Classes { labels: &y, n_classes: 2 }, &[&x]).unwrap();
        assert_eq!(accuracy(&p[0], &y), 1.0);
    }
}
