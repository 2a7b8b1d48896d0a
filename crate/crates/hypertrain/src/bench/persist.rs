use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::training::RunRecord;

use super::aggregate::Aggregate;

/// `results/<dataset>/<method>-seed<seed>.csv`
pub fn run_csv_path(out_dir: &Path, record: &RunRecord) -> PathBuf {
    out_dir
        .join(&record.dataset)
        .join(format!("{}-seed{}.csv", record.method, record.seed))
}

fn metric_column(task: TaskKind) -> &'static str {
    match task {
        TaskKind::Regression => "test_rmse",
        TaskKind::Classification => "test_error",
    }
}

/// Write one repetition's per-epoch series.
///
/// Header is `epoch,test_rmse,weight_std` for regression (`test_error`
/// for classification); epochs are 1-based.
pub fn persist_run(record: &RunRecord, out_dir: &Path) -> Result<PathBuf> {
    let path = run_csv_path(out_dir, record);
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    out.push_str(&format!("epoch,{},weight_std\n", metric_column(record.task)));
    for e in 0..record.epochs {
        out.push_str(&format!(
            "{},{},{}\n",
            e + 1,
            record.test_metric[e],
            record.weight_std[e]
        ));
    }
    fs::write(&path, out)?;
    Ok(path)
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct AggregateFile {
    #[serde(skip_serializing_if = "Option::is_none")]
    hyper: Option<Aggregate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    baseline: Option<Aggregate>,
}

/// Write `results/<dataset>/aggregate.txt` — one file per dataset holding
/// a section per method.
pub fn persist_aggregates(aggs: &[Aggregate], out_dir: &Path) -> Result<PathBuf> {
    let first = aggs
        .first()
        .ok_or_else(|| Error::contract("no aggregates to persist".into()))?;
    if aggs.iter().any(|a| a.dataset != first.dataset) {
        return Err(Error::contract(
            "aggregates for one file must share a dataset".into(),
        ));
    }
    let mut file = AggregateFile::default();
    for a in aggs {
        match a.method.as_str() {
            "hyper" => file.hyper = Some(a.clone()),
            "baseline" => file.baseline = Some(a.clone()),
            other => {
                return Err(Error::contract(format!("unknown method {other:?}")));
            }
        }
    }
    let dir = out_dir.join(&first.dataset);
    fs::create_dir_all(&dir)?;
    let path = dir.join("aggregate.txt");
    let text = toml::to_string(&file)
        .map_err(|e| Error::config(format!("cannot serialize aggregate: {e}")))?;
    fs::write(&path, text)?;
    Ok(path)
}

/// Reload one method's section from an aggregate file.
pub fn load_aggregate(path: &Path, method: &str) -> Result<Aggregate> {
    let text = fs::read_to_string(path)?;
    let file: AggregateFile = toml::from_str(&text)
        .map_err(|e| Error::config(format!("cannot parse {}: {e}", path.display())))?;
    let agg = match method {
        "hyper" => file.hyper,
        "baseline" => file.baseline,
        other => return Err(Error::contract(format!("unknown method {other:?}"))),
    };
    agg.ok_or_else(|| {
        Error::config(format!(
            "{} has no `{method}` section",
            path.display()
        ))
    })
}

/// Emit plot-ready per-epoch curves averaged across repetitions:
/// the dispersion statistic with two ±3σ bands (across repetitions, and
/// from the across-dimensions spread) plus the mean test metric.
pub fn emit_plot_data(records: &[RunRecord], out_dir: &Path) -> Result<PathBuf> {
    let first = records
        .first()
        .ok_or_else(|| Error::contract("no records to plot".into()))?;
    if records
        .iter()
        .any(|r| r.dataset != first.dataset || r.method != first.method)
    {
        return Err(Error::contract(
            "plot data needs records from one dataset and method".into(),
        ));
    }
    let epochs = records.iter().map(|r| r.epochs).min().unwrap_or(0);
    let r_count = records.len() as f64;
    let dir = out_dir.join(&first.dataset);
    fs::create_dir_all(&dir)?;
    let path = dir.join(format!("plot_{}.csv", first.method));
    let mut f = fs::File::create(&path)?;
    writeln!(
        f,
        "epoch,mean_weight_std,reps_band_lo,reps_band_hi,dims_band_lo,dims_band_hi,mean_{}",
        metric_column(first.task)
    )?;
    for e in 0..epochs {
        let stds: Vec<f64> = records.iter().map(|r| r.weight_std[e]).collect();
        let mean_std = stds.iter().sum::<f64>() / r_count;
        let reps_sigma = if records.len() > 1 {
            (stds.iter().map(|s| (s - mean_std).powi(2)).sum::<f64>() / (r_count - 1.0)).sqrt()
        } else {
            0.0
        };
        let dims_sigma =
            records.iter().map(|r| r.weight_std_spread[e]).sum::<f64>() / r_count;
        let mean_metric = records.iter().map(|r| r.test_metric[e]).sum::<f64>() / r_count;
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            e + 1,
            mean_std,
            mean_std - 3.0 * reps_sigma,
            mean_std + 3.0 * reps_sigma,
            mean_std - 3.0 * dims_sigma,
            mean_std + 3.0 * dims_sigma,
            mean_metric
        )?;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::aggregate::aggregate;
    use crate::data::TaskKind;
    use crate::training::{Method, RunRecord, SampleMode};

    fn record(seed: u64) -> RunRecord {
        RunRecord {
            dataset: "toy".into(),
            task: TaskKind::Regression,
            method: Method::Hyper,
            seed,
            epochs: 25,
            sample_mode: SampleMode::PerBatch,
            test_metric: (0..25).map(|e| 1.0 / (e + 1) as f64).collect(),
            weight_std: (0..25).map(|e| 0.5 / (e + 1) as f64).collect(),
            weight_std_spread: vec![0.01; 25],
            train_loss: vec![0.1; 25],
            params_digest: 42,
            config_snapshot: "epochs = 25".into(),
            wall_time_secs: 1.0,
        }
    }

    #[test]
    fn run_csv_has_the_fixed_header_and_length() {
        let dir = tempfile::tempdir().unwrap();
        let path = persist_run(&record(7), dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "epoch,test_rmse,weight_std");
        assert_eq!(text.lines().count(), 26);
        assert!(path.ends_with("toy/hyper-seed7.csv"));
        let first_data = text.lines().nth(1).unwrap();
        assert!(first_data.starts_with("1,1,"));
    }

    #[test]
    fn aggregate_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let runs = vec![record(0), record(1)];
        let agg = aggregate(&runs, 20, 308, 6).unwrap();
        let path = persist_aggregates(std::slice::from_ref(&agg), dir.path()).unwrap();
        let loaded = load_aggregate(&path, "hyper").unwrap();
        assert_eq!(agg, loaded);
        assert!(load_aggregate(&path, "baseline").is_err());
    }

    #[test]
    fn plot_data_covers_all_epochs() {
        let dir = tempfile::tempdir().unwrap();
        let path = emit_plot_data(&[record(0), record(1)], dir.path()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 26);
        assert!(text.starts_with("epoch,mean_weight_std,"));
    }
}
