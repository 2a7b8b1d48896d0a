use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::RunRecord;

use super::metrics::tail_mean;

/// A benchmark-table cell: mean ± standard error of per-run tail metrics.
///
/// The standard error is the sample standard deviation across runs
/// (`R−1` divisor) divided by `√R`; it is absent for single runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub dataset: String,
    pub n: usize,
    pub d: usize,
    pub method: String,
    pub mean_rmse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_err: Option<f64>,
    pub runs: usize,
    pub epochs: usize,
    pub per_run_tail: Vec<f64>,
}

/// Tail-mean each run's test-metric series over its last `k` epochs, then
/// average across runs. `n` and `d` are the source dataset's row/feature
/// counts, carried through for the results table.
pub fn aggregate(runs: &[RunRecord], k: usize, n: usize, d: usize) -> Result<Aggregate> {
    let first = runs
        .first()
        .ok_or_else(|| Error::contract("aggregate needs at least one run".into()))?;
    if runs
        .iter()
        .any(|r| r.dataset != first.dataset || r.method != first.method)
    {
        return Err(Error::contract(
            "aggregate: runs mix datasets or methods".into(),
        ));
    }
    let per_run_tail: Vec<f64> = runs
        .iter()
        .map(|r| tail_mean(&r.test_metric, k))
        .collect::<Result<_>>()?;
    let r_count = per_run_tail.len() as f64;
    let mean = per_run_tail.iter().sum::<f64>() / r_count;
    let std_err = if per_run_tail.len() > 1 {
        let var = per_run_tail
            .iter()
            .map(|t| (t - mean).powi(2))
            .sum::<f64>()
            / (r_count - 1.0);
        Some(var.sqrt() / r_count.sqrt())
    } else {
        None
    };
    Ok(Aggregate {
        dataset: first.dataset.clone(),
        n,
        d,
        method: first.method.as_str().to_string(),
        mean_rmse: mean,
        std_err,
        runs: runs.len(),
        epochs: first.epochs,
        per_run_tail,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::TaskKind;
    use crate::training::{Method, SampleMode};
    use approx::assert_relative_eq;

    pub(crate) fn fake_run(metric: Vec<f64>, seed: u64) -> RunRecord {
        RunRecord {
            dataset: "toy".into(),
            task: TaskKind::Regression,
            method: Method::Hyper,
            seed,
            epochs: metric.len(),
            sample_mode: SampleMode::PerExample,
            weight_std: vec![0.0; metric.len()],
            weight_std_spread: vec![0.0; metric.len()],
            train_loss: vec![0.0; metric.len()],
            test_metric: metric,
            params_digest: 0,
            config_snapshot: String::new(),
            wall_time_secs: 0.0,
        }
    }

    #[test]
    fn identical_runs_have_zero_standard_error() {
        let runs: Vec<RunRecord> = (0..20).map(|i| fake_run(vec![2.0; 30], i)).collect();
        let agg = aggregate(&runs, 20, 100, 5).unwrap();
        assert_eq!(agg.mean_rmse, 2.0);
        assert_eq!(agg.std_err, Some(0.0));
        assert_eq!(agg.runs, 20);
    }

    #[test]
    fn two_run_aggregate_matches_hand_formula() {
        let runs = vec![fake_run(vec![1.0; 20], 0), fake_run(vec![2.0; 20], 1)];
        let agg = aggregate(&runs, 20, 10, 2).unwrap();
        assert_relative_eq!(agg.mean_rmse, 1.5, epsilon = 1e-12);
        // sample std = 0.7071…, standard error = std/√2 = 0.5
        assert_relative_eq!(agg.std_err.unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn single_run_has_no_standard_error() {
        let agg = aggregate(&[fake_run(vec![3.0; 20], 0)], 20, 10, 2).unwrap();
        assert_eq!(agg.std_err, None);
    }

    #[test]
    fn aggregate_is_permutation_invariant() {
        let mut runs: Vec<RunRecord> = (0..6)
            .map(|i| fake_run(vec![1.0 + i as f64; 25], i as u64))
            .collect();
        let a = aggregate(&runs, 20, 10, 2).unwrap();
        runs.reverse();
        let b = aggregate(&runs, 20, 10, 2).unwrap();
        assert_eq!(a.mean_rmse, b.mean_rmse);
        assert_eq!(a.std_err, b.std_err);
    }

    #[test]
    fn short_series_is_rejected() {
        let runs = vec![fake_run(vec![1.0; 19], 0)];
        assert!(aggregate(&runs, 20, 10, 2).is_err());
        assert!(aggregate(&[], 20, 10, 2).is_err());
    }
}
