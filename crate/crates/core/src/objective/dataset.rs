//! Tabular datasets: CSV ingestion, splitting and subsampling.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ObjectiveError;

/// Label columns with at most this many distinct integer values are treated as classes.
const MAX_INTEGER_CLASSES: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    Continuous,
    Discrete,
    Categorical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Classification,
    Regression,
}

#[derive(Clone, Debug, PartialEq)]
enum Column {
    Numeric(Vec<f64>),
    Categorical { levels: Vec<String>, codes: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Classes { names: Vec<String>, labels: Vec<usize> },
    Values(Vec<f64>),
}

impl Target {
    fn len(&self) -> usize {
        match self {
            Target::Classes { labels, .. } => labels.len(),
            Target::Values(v) => v.len(),
        }
    }

    fn subset(&self, idx: &[usize]) -> Target {
        match self {
            Target::Classes { names, labels } => Target::Classes {
                names: names.clone(),
                labels: idx.iter().map(|&i| labels[i]).collect(),
            },
            Target::Values(v) => Target::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    feature_kinds: Vec<FeatureKind>,
    columns: Vec<Column>,
    target: Target,
}

impl Dataset {
    /// Builds an all-numeric dataset from a row-major feature matrix.
    pub fn from_matrix(rows: &[Vec<f64>], target: Target) -> Result<Self, ObjectiveError> {
        let n = rows.len();
        if n == 0 {
            return Err(ObjectiveError::EmptyDataset);
        }
        if target.len() != n {
            return Err(ObjectiveError::LengthMismatch(n, target.len()));
        }
        let d = rows[0].len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(ObjectiveError::InvalidParams("ragged feature matrix".into()));
        }
        let columns: Vec<Column> = (0..d).map(|j| Column::Numeric(rows.iter().map(|r| r[j]).collect())).collect();
        let feature_kinds = columns.iter().map(numeric_kind).collect();
        Ok(Self {
            feature_names: (0..d).map(|j| format!("x{j}")).collect(),
            feature_kinds,
            columns,
            target,
        })
    }

    /// Loads a CSV file with a header row; the last column is the label.
    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, ObjectiveError> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| ObjectiveError::Io(format!("{}: {e}", path.display())))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| ObjectiveError::Io(format!("{}: {e}", path.display())))?
            .iter()
            .map(|s| s.trim().to_string())
            .collect();
        if header.len() < 2 {
            return Err(ObjectiveError::SingleColumn);
        }
        let mut raw: Vec<Vec<String>> = vec![Vec::new(); header.len()];
        for record in reader.records() {
            let record = record.map_err(|e| ObjectiveError::Io(format!("{}: {e}", path.display())))?;
            if record.len() != header.len() {
                return Err(ObjectiveError::Io(format!("{}: ragged row", path.display())));
            }
            // rows without a label carry no information
            if is_missing(record.get(header.len() - 1).unwrap_or("")) {
                continue;
            }
            for (j, field) in record.iter().enumerate() {
                raw[j].push(field.trim().to_string());
            }
        }
        if raw[0].is_empty() {
            return Err(ObjectiveError::EmptyDataset);
        }
        let label_raw = raw.pop().expect("at least two columns");
        let target = parse_target(&label_raw);
        let columns: Vec<Column> = raw.iter().map(|c| parse_column(c)).collect();
        let feature_kinds = columns
            .iter()
            .map(|c| match c {
                Column::Numeric(_) => numeric_kind(c),
                Column::Categorical { .. } => FeatureKind::Categorical,
            })
            .collect();
        Ok(Self {
            feature_names: header[..header.len() - 1].to_vec(),
            feature_kinds,
            columns,
            target,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    /// Number of raw feature columns (before one-hot expansion).
    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_kinds(&self) -> &[FeatureKind] {
        &self.feature_kinds
    }

    pub fn target(&self) -> &Target {
        &self.target
    }

    pub fn task_kind(&self) -> TaskKind {
        match self.target {
            Target::Classes { .. } => TaskKind::Classification,
            Target::Values(_) => TaskKind::Regression,
        }
    }

    pub fn n_classes(&self) -> usize {
        match &self.target {
            Target::Classes { names, .. } => names.len(),
            Target::Values(_) => 0,
        }
    }

    /// Class labels, if this is a classification dataset.
    pub fn class_labels(&self) -> Option<&[usize]> {
        match &self.target {
            Target::Classes { labels, .. } => Some(labels),
            Target::Values(_) => None,
        }
    }

    /// Target as reals: class indices for classification.
    pub fn target_values(&self) -> Vec<f64> {
        match &self.target {
            Target::Classes { labels, .. } => labels.iter().map(|&l| l as f64).collect(),
            Target::Values(v) => v.clone(),
        }
    }

    /// Row-major numeric matrix with categorical columns one-hot expanded.
    pub fn design_matrix(&self) -> Vec<Vec<f64>> {
        let n = self.n_rows();
        let mut rows = vec![Vec::new(); n];
        for col in &self.columns {
            match col {
                Column::Numeric(v) => rows.iter_mut().zip(v).for_each(|(r, x)| r.push(*x)),
                Column::Categorical { levels, codes } => {
                    for (r, &c) in rows.iter_mut().zip(codes) {
                        r.extend((0..levels.len()).map(|l| if l == c { 1.0 } else { 0.0 }));
                    }
                }
            }
        }
        rows
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                Column::Numeric(v) => Column::Numeric(idx.iter().map(|&i| v[i]).collect()),
                Column::Categorical { levels, codes } => Column::Categorical {
                    levels: levels.clone(),
                    codes: idx.iter().map(|&i| codes[i]).collect(),
                },
            })
            .collect();
        Dataset {
            feature_names: self.feature_names.clone(),
            feature_kinds: self.feature_kinds.clone(),
            columns,
            target: self.target.subset(idx),
        }
    }

    /// Row indices grouped by class (one group for regression), each group in row order.
    fn groups(&self) -> Vec<Vec<usize>> {
        match &self.target {
            Target::Classes { names, labels } => {
                let mut g = vec![Vec::new(); names.len()];
                for (i, &l) in labels.iter().enumerate() {
                    g[l].push(i);
                }
                g.retain(|v| !v.is_empty());
                g
            }
            Target::Values(v) => vec![(0..v.len()).collect()],
        }
    }
}

fn is_missing(s: &str) -> bool {
    matches!(s.trim(), "" | "?" | "NA" | "NaN" | "nan" | "null")
}

fn numeric_kind(col: &Column) -> FeatureKind {
    match col {
        Column::Numeric(v) if v.iter().all(|x| x.fract() == 0.0) => FeatureKind::Discrete,
        Column::Numeric(_) => FeatureKind::Continuous,
        Column::Categorical { .. } => FeatureKind::Categorical,
    }
}

fn parse_column(raw: &[String]) -> Column {
    let parsed: Vec<Option<f64>> = raw
        .iter()
        .map(|s| if is_missing(s) { None } else { s.parse::<f64>().ok().filter(|v| v.is_finite()) })
        .collect();
    let numeric = raw.iter().zip(&parsed).all(|(s, p)| is_missing(s) || p.is_some());
    if numeric && parsed.iter().any(Option::is_some) {
        let present: Vec<f64> = parsed.iter().flatten().copied().collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        return Column::Numeric(parsed.iter().map(|p| p.unwrap_or(mean)).collect());
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for s in raw.iter().filter(|s| !is_missing(s)) {
        *counts.entry(s.as_str()).or_default() += 1;
    }
    // mode, ties to the lexicographically first level
    let mode = counts
        .iter()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        .map(|(s, _)| s.to_string())
        .unwrap_or_else(|| "missing".to_string());
    let filled: Vec<String> = raw.iter().map(|s| if is_missing(s) { mode.clone() } else { s.clone() }).collect();
    let mut levels: Vec<String> = filled.clone();
    levels.sort();
    levels.dedup();
    let codes = filled
        .iter()
        .map(|s| levels.binary_search(s).expect("level present"))
        .collect();
    Column::Categorical { levels, codes }
}

fn parse_target(raw: &[String]) -> Target {
    let parsed: Option<Vec<f64>> = raw.iter().map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite())).collect();
    match parsed {
        Some(values) => {
            let integral = values.iter().all(|v| v.fract() == 0.0);
            let mut distinct = values.clone();
            distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            distinct.dedup();
            if integral && distinct.len() <= MAX_INTEGER_CLASSES {
                let names: Vec<String> = distinct.iter().map(|v| format!("{v}")).collect();
                let labels = values
                    .iter()
                    .map(|v| distinct.iter().position(|d| d == v).expect("present"))
                    .collect();
                Target::Classes { names, labels }
            } else {
                Target::Values(values)
            }
        }
        None => {
            let mut names: Vec<String> = raw.to_vec();
            names.sort();
            names.dedup();
            let labels = raw.iter().map(|s| names.binary_search(s).expect("present")).collect();
            Target::Classes { names, labels }
        }
    }
}

/// Outer 4/5 search and 1/5 test partition, with the search part split 3/4 train, 1/4 validation.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// False when some class was too small to stratify and a plain shuffle was used.
    pub stratified: bool,
}

/// Minimum per-class count for a stratified three-way split.
const MIN_STRATIFY_COUNT: usize = 3;

pub fn split_train_valid_test(data: &Dataset, seed: u64) -> Result<Split, ObjectiveError> {
    let n = data.n_rows();
    if n < 10 {
        return Err(ObjectiveError::TooFewRows { needed: 10, got: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = data.groups();
    let stratified = groups.iter().all(|g| g.len() >= MIN_STRATIFY_COUNT);
    if !stratified {
        groups = vec![(0..n).collect()];
    }
    for g in groups.iter_mut() {
        g.shuffle(&mut rng);
    }
    let n_search = (n * 4).div_ceil(5).min(n - 1);
    let (search, test) = take_proportional(&groups, n_search);
    let n_train = (n_search * 3).div_ceil(4).min(n_search - 1);
    let (train, valid) = take_proportional(&search, n_train);
    let flat = |g: Vec<Vec<usize>>| {
        let mut v: Vec<usize> = g.into_iter().flatten().collect();
        v.sort_unstable();
        v
    };
    Ok(Split {
        train: data.subset(&flat(train)),
        valid: data.subset(&flat(valid)),
        test: data.subset(&flat(test)),
        stratified,
    })
}

/// Stratified (classification) or uniform (regression) subset of ⌈fraction·n⌉ rows.
pub fn subsample(data: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, ObjectiveError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ObjectiveError::InvalidParams(format!("fraction {fraction} not in (0, 1]")));
    }
    let n = data.n_rows();
    let m = (fraction * n as f64).ceil() as usize;
    if m < 2 {
        return Err(ObjectiveError::TooFewRows { needed: 2, got: m });
    }
    if m >= n {
        return Ok(data.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut groups = data.groups();
    for g in groups.iter_mut() {
        g.shuffle(&mut rng);
    }
    let (taken, _) = take_proportional(&groups, m);
    let mut idx: Vec<usize> = taken.into_iter().flatten().collect();
    idx.sort_unstable();
    Ok(data.subset(&idx))
}

/// Takes `total` items across groups in proportion to group sizes (largest remainder),
/// returning the taken prefixes and the remaining suffixes.
fn take_proportional(groups: &[Vec<usize>], total: usize) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    let n: usize = groups.iter().map(Vec::len).sum();
    let quotas: Vec<f64> = groups.iter().map(|g| total as f64 * g.len() as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).expect("finite").then(a.cmp(&b))
    });
    for &g in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if alloc[g] < groups[g].len() {
            alloc[g] += 1;
            left -= 1;
        }
    }
    groups
        .iter()
        .zip(&alloc)
        .map(|(g, &a)| (g[..a].to_vec(), g[a..].to_vec()))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn binary(n_pos: usize, n_neg: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..n_pos + n_neg).map(|i| vec![i as f64]).collect();
        let labels = (0..n_pos + n_neg).map(|i| usize::from(i >= n_pos)).collect();
        Dataset::from_matrix(
            &rows,
            Target::Classes {
                names: vec!["a".into(), "b".into()],
                labels,
            },
        )
        .unwrap()
    }

    fn count(ds: &Dataset, class: usize) -> usize {
        ds.class_labels().unwrap().iter().filter(|&&l| l == class).count()
    }

    #[test]
    fn loads_classification_csv() {
        let f = write_csv("a,b,label\n1.0,x,yes\n2.0,y,no\n3.0,x,yes\n");
        let ds = Dataset::load_csv(f.path()).unwrap();
        assert_eq!(ds.task_kind(), TaskKind::Classification);
        assert_eq!(ds.n_columns(), 2);
        assert_eq!(ds.n_classes(), 2);
        assert_eq!(ds.feature_kinds(), &[FeatureKind::Discrete, FeatureKind::Categorical]);
        assert_eq!(ds.design_matrix()[1], vec![2.0, 0.0, 1.0]);
    }

    #[test]
    fn imputes_missing_numeric_by_mean() {
        let f = write_csv("a,y\n1.0,0.5\n,1.5\n3.0,2.5\n");
        let ds = Dataset::load_csv(f.path()).unwrap();
        assert_eq!(ds.task_kind(), TaskKind::Regression);
        let col: Vec<f64> = ds.design_matrix().iter().map(|r| r[0]).collect();
        assert_eq!(col, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn imputes_missing_categorical_by_mode() {
        let f = write_csv("c,y\nred,1\n,0\nred,1\nblue,0\n");
        let ds = Dataset::load_csv(f.path()).unwrap();
        // levels sorted: blue, red; the missing row takes `red`
        assert_eq!(ds.design_matrix()[1], vec![0.0, 1.0]);
    }

    #[test]
    fn integer_labels_with_many_values_are_regression() {
        let mut s = String::from("x,y\n");
        for i in 0..30 {
            s.push_str(&format!("{i},{i}\n"));
        }
        let ds = Dataset::load_csv(write_csv(&s).path()).unwrap();
        assert_eq!(ds.task_kind(), TaskKind::Regression);
    }

    #[test]
    fn load_errors() {
        assert!(matches!(Dataset::load_csv("/no/such/file.csv"), Err(ObjectiveError::Io(_))));
        assert_eq!(Dataset::load_csv(write_csv("a\n1\n").path()), Err(ObjectiveError::SingleColumn));
        assert_eq!(Dataset::load_csv(write_csv("a,b\n").path()), Err(ObjectiveError::EmptyDataset));
    }

    #[test]
    fn split_sizes_and_determinism() {
        let ds = binary(50, 50);
        let s = split_train_valid_test(&ds, 4).unwrap();
        assert_eq!((s.train.n_rows(), s.valid.n_rows(), s.test.n_rows()), (60, 20, 20));
        assert!(s.stratified);
        for part in [&s.train, &s.valid, &s.test] {
            let a = count(part, 0) as i64;
            let b = count(part, 1) as i64;
            assert!((a - b).abs() <= 1, "{a} vs {b}");
        }
        let t = split_train_valid_test(&ds, 4).unwrap();
        assert_eq!(s.train, t.train);
        assert_eq!(s.test, t.test);
    }

    #[test]
    fn split_falls_back_when_classes_are_tiny() {
        let s = split_train_valid_test(&binary(18, 2), 1).unwrap();
        assert!(!s.stratified);
        assert_eq!(s.train.n_rows() + s.valid.n_rows() + s.test.n_rows(), 20);
        assert!(split_train_valid_test(&binary(5, 4), 1).is_err());
    }

    #[test]
    fn subsample_examples() {
        let ds = binary(70, 30);
        assert_eq!(subsample(&ds, 1.0, 0).unwrap(), ds);
        let half = subsample(&ds, 0.5, 0).unwrap();
        assert_eq!(half.n_rows(), 50);
        assert!((count(&half, 0) as i64 - 35).abs() <= 1);
        assert!(subsample(&binary(1, 1), 0.5, 0).is_err());
        assert!(subsample(&ds, 0.0, 0).is_err());
    }
}
