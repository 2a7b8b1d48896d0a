//! Dataset ingestion, normalization, splitting, and batch iteration.
//!
//! Regression data arrives as comma-separated numeric CSV with the target
//! column(s) named by a schema; classification data as big-endian IDX
//! image/label pairs. Datasets are immutable after load and safe to share
//! across parallel repetition runs.

mod config;
mod csv_load;
mod idx;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::RngStream;

pub use config::{resolve_dataset_config, DatasetConfig, Overrides};
pub use csv_load::{load_csv, CsvSchema};
pub use idx::load_idx;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Regression,
    Classification,
}

/// Target storage for a loaded dataset.
#[derive(Clone, Debug)]
pub enum Targets<F> {
    /// Row-major `n × out_dim` values.
    Values { values: Vec<F>, out_dim: usize },
    /// One class label per row.
    Labels { labels: Vec<usize>, n_classes: usize },
}

impl<F: Real> Targets<F> {
    pub fn len(&self) -> usize {
        match self {
            Targets::Values { values, out_dim } => values.len() / out_dim,
            Targets::Labels { labels, .. } => labels.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn out_dim(&self) -> usize {
        match self {
            Targets::Values { out_dim, .. } => *out_dim,
            Targets::Labels { n_classes, .. } => *n_classes,
        }
    }

    pub fn task(&self) -> TaskKind {
        match self {
            Targets::Values { .. } => TaskKind::Regression,
            Targets::Labels { .. } => TaskKind::Classification,
        }
    }
}

/// An `n × d` feature matrix with targets.
#[derive(Clone, Debug)]
pub struct Dataset<F> {
    pub name: String,
    pub n: usize,
    pub d: usize,
    /// Row-major `n × d`.
    pub x: Vec<F>,
    pub y: Targets<F>,
}

impl<F: Real> Dataset<F> {
    pub fn new(name: impl Into<String>, d: usize, x: Vec<F>, y: Targets<F>) -> Result<Self> {
        if d == 0 {
            return Err(Error::contract("dataset needs at least one feature".into()));
        }
        if x.len() % d != 0 {
            return Err(Error::contract(format!(
                "feature buffer length {} is not a multiple of d={d}",
                x.len()
            )));
        }
        let n = x.len() / d;
        if y.len() != n {
            return Err(Error::contract(format!(
                "row counts differ: {} feature rows vs {} target rows",
                n,
                y.len()
            )));
        }
        Ok(Dataset {
            name: name.into(),
            n,
            d,
            x,
            y,
        })
    }

    pub fn task(&self) -> TaskKind {
        self.y.task()
    }
}

// ── splitting ───────────────────────────────────────────────────────

/// Disjoint train/test index sets covering all rows.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Random 90/10 split: permute rows by seed, take the last
/// `round(0.10·n)` (half-up) as the test set.
pub fn split_90_10(n: usize, seed: u64) -> Result<Split> {
    if n < 10 {
        return Err(Error::contract(format!(
            "need at least 10 rows to split 90/10, got {n}"
        )));
    }
    let n_test = (n + 5) / 10; // round-half-up of n/10, in integers
    let mut order: Vec<usize> = (0..n).collect();
    let mut stream = RngStream::seed_from(seed);
    stream.shuffle(&mut order);
    let test = order.split_off(n - n_test);
    Ok(Split {
        train: order,
        test,
        seed,
    })
}

// ── normalization ───────────────────────────────────────────────────

/// Per-column affine statistics computed on the training split only.
/// Constant columns get a standard deviation clamped to 1 so they map to
/// zeros instead of dividing by zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: Vec<f64>,
    pub y_std: Vec<f64>,
}

fn column_stats<F: Real>(data: &[F], cols: usize, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; cols];
    let mut std = vec![0.0; cols];
    let n = rows.len() as f64;
    for &r in rows {
        for c in 0..cols {
            mean[c] += data[r * cols + c].to_f64();
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    for &r in rows {
        for c in 0..cols {
            let dv = data[r * cols + c].to_f64() - mean[c];
            std[c] += dv * dv;
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
        if *s < 1e-12 {
            *s = 1.0;
        }
    }
    (mean, std)
}

fn apply_norm<F: Real>(data: &mut [F], cols: usize, mean: &[f64], std: &[f64]) {
    for row in data.chunks_exact_mut(cols) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = F::from_f64((v.to_f64() - mean[c]) / std[c]);
        }
    }
}

/// Standardize features (and regression targets) using statistics from the
/// training rows only; test rows are transformed with the same statistics.
/// Classification targets are left untouched and no stats are returned for
/// them beyond the feature columns.
pub fn normalize<F: Real>(ds: &Dataset<F>, split: &Split) -> Result<(Dataset<F>, Option<NormStats>)> {
    let (x_mean, x_std) = column_stats(&ds.x, ds.d, &split.train);
    let mut x = ds.x.clone();
    apply_norm(&mut x, ds.d, &x_mean, &x_std);
    match &ds.y {
        Targets::Values { values, out_dim } => {
            let (y_mean, y_std) = column_stats(values, *out_dim, &split.train);
            let mut v = values.clone();
            apply_norm(&mut v, *out_dim, &y_mean, &y_std);
            let stats = NormStats {
                x_mean,
                x_std,
                y_mean,
                y_std,
            };
            let out = Dataset::new(
                ds.name.clone(),
                ds.d,
                x,
                Targets::Values {
                    values: v,
                    out_dim: *out_dim,
                },
            )?;
            Ok((out, Some(stats)))
        }
        Targets::Labels { .. } => {
            let out = Dataset::new(ds.name.clone(), ds.d, x, ds.y.clone())?;
            Ok((out, None))
        }
    }
}

/// Map normalized target values back to the original scale.
pub fn denormalize_targets<F: Real>(values: &[F], stats: &NormStats) -> Vec<F> {
    let out_dim = stats.y_mean.len();
    values
        .chunks_exact(out_dim)
        .flat_map(|row| {
            row.iter()
                .enumerate()
                .map(|(c, v)| F::from_f64(v.to_f64() * stats.y_std[c] + stats.y_mean[c]))
        })
        .collect()
}

// ── batching ────────────────────────────────────────────────────────

/// The protocol's batch-size rule: regression uses 1 below 5000 rows and
/// 512 above; classification uses 256.
pub fn default_batch_size(n_train: usize, task: TaskKind) -> usize {
    match task {
        TaskKind::Regression => {
            if n_train <= 5000 {
                1
            } else {
                512
            }
        }
        TaskKind::Classification => 256,
    }
}

/// Shuffled minibatches of positions `0..n`; the final partial batch is
/// kept. Each position appears exactly once per pass.
pub struct BatchIter {
    order: Vec<usize>,
    batch: usize,
    pos: usize,
}

impl BatchIter {
    pub fn new(n: usize, batch: usize, stream: &mut RngStream) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        stream.shuffle(&mut order);
        BatchIter {
            order,
            batch: batch.max(1),
            pos: 0,
        }
    }

    pub fn batch_count(&self) -> usize {
        self.order.len().div_ceil(self.batch)
    }
}

impl Iterator for BatchIter {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch).min(self.order.len());
        let out = self.order[self.pos..end].to_vec();
        self.pos = end;
        Some(out)
    }
}

/// Copy the given rows of a row-major matrix into a dense batch buffer.
pub fn gather_rows<F: Real>(data: &[F], cols: usize, rows: &[usize]) -> Vec<F> {
    let mut out = Vec::with_capacity(rows.len() * cols);
    for &r in rows {
        out.extend_from_slice(&data[r * cols..(r + 1) * cols]);
    }
    out
}

// ── prepared training data ──────────────────────────────────────────

#[derive(Clone, Debug)]
pub enum PreparedTargets<F> {
    Values(Vec<F>),
    Labels(Vec<usize>),
}

/// Normalized train/test arrays ready for a training run.
#[derive(Clone, Debug)]
pub struct Prepared<F> {
    pub name: String,
    pub task: TaskKind,
    pub d: usize,
    pub out_dim: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_x: Vec<F>,
    pub train_y: PreparedTargets<F>,
    pub test_x: Vec<F>,
    pub test_y: PreparedTargets<F>,
    pub stats: Option<NormStats>,
}

fn gather_targets<F: Real>(y: &Targets<F>, rows: &[usize]) -> PreparedTargets<F> {
    match y {
        Targets::Values { values, out_dim } => {
            PreparedTargets::Values(gather_rows(values, *out_dim, rows))
        }
        Targets::Labels { labels, .. } => {
            PreparedTargets::Labels(rows.iter().map(|&r| labels[r]).collect())
        }
    }
}

/// Split a regression dataset 90/10 by seed and standardize it.
pub fn prepare_regression<F: Real>(ds: &Dataset<F>, seed: u64) -> Result<(Prepared<F>, Split)> {
    if ds.task() != TaskKind::Regression {
        return Err(Error::contract(format!(
            "{} is not a regression dataset",
            ds.name
        )));
    }
    let split = split_90_10(ds.n, seed)?;
    let (norm, stats) = normalize(ds, &split)?;
    let prepared = Prepared {
        name: ds.name.clone(),
        task: TaskKind::Regression,
        d: ds.d,
        out_dim: ds.y.out_dim(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        train_x: gather_rows(&norm.x, ds.d, &split.train),
        train_y: gather_targets(&norm.y, &split.train),
        test_x: gather_rows(&norm.x, ds.d, &split.test),
        test_y: gather_targets(&norm.y, &split.test),
        stats,
    };
    Ok((prepared, split))
}

/// Pair a fixed train/test classification dataset, optionally restricting
/// training to a seeded random subset of the given size. Features are
/// used as loaded (IDX pixels are already scaled to [0, 1]).
pub fn prepare_classification<F: Real>(
    train: &Dataset<F>,
    test: &Dataset<F>,
    subset: Option<usize>,
    seed: u64,
) -> Result<Prepared<F>> {
    if train.task() != TaskKind::Classification || test.task() != TaskKind::Classification {
        return Err(Error::contract("expected classification datasets".into()));
    }
    if train.d != test.d {
        return Err(Error::contract(format!(
            "train/test feature dims differ: {} vs {}",
            train.d, test.d
        )));
    }
    let mut rows: Vec<usize> = (0..train.n).collect();
    if let Some(k) = subset {
        if k == 0 || k > train.n {
            return Err(Error::contract(format!(
                "training subset {k} out of range for {} rows",
                train.n
            )));
        }
        let mut stream = RngStream::seed_from(seed);
        stream.shuffle(&mut rows);
        rows.truncate(k);
        rows.sort_unstable();
    }
    let all_test: Vec<usize> = (0..test.n).collect();
    Ok(Prepared {
        name: train.name.clone(),
        task: TaskKind::Classification,
        d: train.d,
        out_dim: train.y.out_dim(),
        n_train: rows.len(),
        n_test: test.n,
        train_x: gather_rows(&train.x, train.d, &rows),
        train_y: gather_targets(&train.y, &rows),
        test_x: test.x.clone(),
        test_y: gather_targets(&test.y, &all_test),
        stats: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_regression(n: usize, d: usize) -> Dataset<f64> {
        let mut stream = RngStream::seed_from(100);
        let mut x = vec![0.0; n * d];
        stream.fill_normal(&mut x);
        let values: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Dataset::new(
            "toy",
            d,
            x,
            Targets::Values {
                values,
                out_dim: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn split_sizes_use_round_half_up() {
        assert_eq!(split_90_10(506, 0).unwrap().test.len(), 51);
        assert_eq!(split_90_10(506, 0).unwrap().train.len(), 455);
        assert_eq!(split_90_10(308, 0).unwrap().test.len(), 31);
        assert_eq!(split_90_10(1030, 0).unwrap().test.len(), 103);
    }

    #[test]
    fn split_rejects_tiny_datasets() {
        assert!(split_90_10(9, 0).is_err());
        assert!(split_90_10(10, 0).is_ok());
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let a = split_90_10(100, 7).unwrap();
        let b = split_90_10(100, 7).unwrap();
        let c = split_90_10(100, 8).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.test, c.test);
    }

    #[test]
    fn default_batch_sizes_follow_the_rule() {
        assert_eq!(default_batch_size(8192, TaskKind::Regression), 512);
        assert_eq!(default_batch_size(506, TaskKind::Regression), 1);
        assert_eq!(default_batch_size(5000, TaskKind::Regression), 1);
        assert_eq!(default_batch_size(5001, TaskKind::Regression), 512);
        assert_eq!(default_batch_size(60_000, TaskKind::Classification), 256);
    }

    #[test]
    fn batch_iter_keeps_the_partial_tail() {
        let mut stream = RngStream::seed_from(1);
        let sizes: Vec<usize> = BatchIter::new(1030, 512, &mut stream)
            .map(|b| b.len())
            .collect();
        assert_eq!(sizes, vec![512, 512, 6]);
    }

    #[test]
    fn normalize_centers_training_columns() {
        let ds = toy_regression(100, 3);
        let split = split_90_10(100, 3).unwrap();
        let (norm, stats) = normalize(&ds, &split).unwrap();
        let stats = stats.unwrap();
        for c in 0..3 {
            let mean: f64 = split
                .train
                .iter()
                .map(|&r| norm.x[r * 3 + c])
                .sum::<f64>()
                / split.train.len() as f64;
            assert!(mean.abs() < 1e-10, "column {c} mean {mean}");
        }
        // affine round trip on targets
        if let Targets::Values { values, .. } = &norm.y {
            let back = denormalize_targets(values, &stats);
            if let Targets::Values { values: orig, .. } = &ds.y {
                for (a, b) in back.iter().zip(orig) {
                    assert!((a - b).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn constant_columns_are_clamped_to_unit_std() {
        let n = 20;
        let mut x = Vec::new();
        for i in 0..n {
            x.push(5.0); // constant column
            x.push(i as f64);
        }
        let ds = Dataset::new(
            "const",
            2,
            x,
            Targets::Values {
                values: vec![1.0; n],
                out_dim: 1,
            },
        )
        .unwrap();
        let split = split_90_10(n, 0).unwrap();
        let (norm, stats) = normalize(&ds, &split).unwrap();
        let stats = stats.unwrap();
        assert_eq!(stats.x_std[0], 1.0);
        for r in 0..n {
            assert_eq!(norm.x[r * 2], 0.0);
        }
        // constant target column too
        assert_eq!(stats.y_std[0], 1.0);
    }

    #[test]
    fn normalization_never_reads_test_rows() {
        let ds = toy_regression(50, 2);
        let split = split_90_10(50, 9).unwrap();
        let (_, clean) = normalize(&ds, &split).unwrap();
        let mut poisoned = ds.clone();
        for &r in &split.test {
            for c in 0..2 {
                poisoned.x[r * 2 + c] = 1e9;
            }
            if let Targets::Values { values, .. } = &mut poisoned.y {
                values[r] = -1e9;
            }
        }
        let (_, dirty) = normalize(&poisoned, &split).unwrap();
        assert_eq!(clean, dirty);
    }

    #[test]
    fn prepare_regression_shapes() {
        let ds = toy_regression(40, 3);
        let (prep, split) = prepare_regression(&ds, 5).unwrap();
        assert_eq!(prep.n_train, 36);
        assert_eq!(prep.n_test, 4);
        assert_eq!(prep.train_x.len(), 36 * 3);
        assert_eq!(split.train.len() + split.test.len(), 40);
    }

    #[test]
    fn classification_subset_is_seeded_and_sized() {
        let n = 30;
        let x = vec![0.5; n * 4];
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ds = Dataset::new(
            "cls",
            4,
            x,
            Targets::Labels {
                labels,
                n_classes: 3,
            },
        )
        .unwrap();
        let prep = prepare_classification(&ds, &ds, Some(10), 7).unwrap();
        assert_eq!(prep.n_train, 10);
        assert_eq!(prep.n_test, 30);
        let prep2 = prepare_classification(&ds, &ds, Some(10), 7).unwrap();
        if let (PreparedTargets::Labels(a), PreparedTargets::Labels(b)) =
            (&prep.train_y, &prep2.train_y)
        {
            assert_eq!(a, b);
        }
        assert!(prepare_classification(&ds, &ds, Some(0), 7).is_err());
        assert!(prepare_classification(&ds, &ds, Some(31), 7).is_err());
    }
}
