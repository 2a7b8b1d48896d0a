use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

use super::{load_csv, load_idx, CsvSchema, Dataset, TaskKind};

/// Command-line-equivalent knobs; any of these may live in a dataset
/// config file under `[overrides]`, and flags win over file values.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub epochs: Option<usize>,
    pub batch: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub reps: Option<usize>,
    pub sample_mode: Option<String>,
    pub predict_samples: Option<usize>,
    pub jobs: Option<usize>,
}

impl Overrides {
    /// Layer `flags` on top of `self` (flag values win).
    pub fn merged_with(&self, flags: &Overrides) -> Overrides {
        Overrides {
            epochs: flags.epochs.or(self.epochs),
            batch: flags.batch.or(self.batch),
            lr: flags.lr.or(self.lr),
            seed: flags.seed.or(self.seed),
            reps: flags.reps.or(self.reps),
            sample_mode: flags.sample_mode.clone().or_else(|| self.sample_mode.clone()),
            predict_samples: flags.predict_samples.or(self.predict_samples),
            jobs: flags.jobs.or(self.jobs),
        }
    }
}

/// One benchmark dataset: where its files live (relative to the data
/// root), how to parse them, and its protocol knobs.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub task: TaskKind,

    // regression: one CSV
    pub path: Option<String>,
    #[serde(default)]
    pub target_cols: Vec<usize>,
    #[serde(default)]
    pub has_header: bool,
    pub delimiter: Option<String>,

    // classification: IDX image/label pairs
    pub train_images: Option<String>,
    pub train_labels: Option<String>,
    pub test_images: Option<String>,
    pub test_labels: Option<String>,
    /// Optional seeded subset of the training rows (smoke runs).
    pub train_subset: Option<usize>,

    // main network architecture
    #[serde(default = "default_hidden_units")]
    pub hidden_units: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,

    // generator architecture
    pub noise_dim: Option<usize>,
    pub hyper_hidden: Option<Vec<usize>>,
    pub dropout_keep: Option<f64>,
    pub noise_kind: Option<String>,

    // protocol knobs
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,

    #[serde(default)]
    pub overrides: Overrides,
}

fn default_hidden_units() -> usize {
    50
}

fn default_hidden_layers() -> usize {
    1
}

impl DatasetConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: DatasetConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("dataset config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read dataset config {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        match self.task {
            TaskKind::Regression => {
                if self.path.is_none() {
                    return Err(Error::config(format!(
                        "regression dataset {} needs a `path`",
                        self.name
                    )));
                }
                if self.target_cols.is_empty() {
                    return Err(Error::config(format!(
                        "regression dataset {} needs `target_cols`",
                        self.name
                    )));
                }
            }
            TaskKind::Classification => {
                let all = self.train_images.is_some()
                    && self.train_labels.is_some()
                    && self.test_images.is_some()
                    && self.test_labels.is_some();
                if !all {
                    return Err(Error::config(format!(
                        "classification dataset {} needs train/test image and label paths",
                        self.name
                    )));
                }
            }
        }
        if self.hidden_units == 0 || self.hidden_layers == 0 {
            return Err(Error::config(format!(
                "dataset {}: hidden_units and hidden_layers must be positive",
                self.name
            )));
        }
        Ok(())
    }

    fn delimiter_byte(&self) -> Result<u8> {
        match &self.delimiter {
            None => Ok(b','),
            Some(s) if s.len() == 1 => Ok(s.as_bytes()[0]),
            Some(s) => Err(Error::config(format!(
                "delimiter must be a single character, got {s:?}"
            ))),
        }
    }

    fn resolve_file(&self, data_root: &Path, rel: &str) -> Result<PathBuf> {
        let p = data_root.join(rel);
        if !p.exists() {
            return Err(Error::config(format!(
                "dataset file not found: {} (expected under data root {})",
                p.display(),
                data_root.display()
            )));
        }
        Ok(p)
    }

    /// Load the regression CSV named by this config.
    pub fn load_regression<F: Real>(&self, data_root: &Path) -> Result<Dataset<F>> {
        if self.task != TaskKind::Regression {
            return Err(Error::config(format!("{} is not a regression dataset", self.name)));
        }
        let rel = self.path.as_deref().unwrap();
        let path = self.resolve_file(data_root, rel)?;
        let schema = CsvSchema {
            target_cols: self.target_cols.clone(),
            has_header: self.has_header,
            delimiter: self.delimiter_byte()?,
        };
        load_csv(path, &schema, &self.name)
    }

    /// Load the classification train/test IDX pairs named by this config.
    pub fn load_classification<F: Real>(
        &self,
        data_root: &Path,
    ) -> Result<(Dataset<F>, Dataset<F>)> {
        if self.task != TaskKind::Classification {
            return Err(Error::config(format!(
                "{} is not a classification dataset",
                self.name
            )));
        }
        let train = load_idx(
            self.resolve_file(data_root, self.train_images.as_deref().unwrap())?,
            self.resolve_file(data_root, self.train_labels.as_deref().unwrap())?,
            &format!("{}-train", self.name),
        )?;
        let test = load_idx(
            self.resolve_file(data_root, self.test_images.as_deref().unwrap())?,
            self.resolve_file(data_root, self.test_labels.as_deref().unwrap())?,
            &format!("{}-test", self.name),
        )?;
        Ok((train, test))
    }
}

/// Find a dataset config: a literal path, `configs/<name>.toml` under the
/// current directory, or `<data_root>/configs/<name>.toml`.
pub fn resolve_dataset_config(spec: &str, data_root: &Path) -> Result<DatasetConfig> {
    let literal = Path::new(spec);
    if literal.is_file() {
        return DatasetConfig::load(literal);
    }
    let candidates = [
        PathBuf::from("configs").join(format!("{spec}.toml")),
        data_root.join("configs").join(format!("{spec}.toml")),
    ];
    for c in &candidates {
        if c.is_file() {
            return DatasetConfig::load(c);
        }
    }
    Err(Error::config(format!(
        "no dataset config for {spec:?}: tried the literal path and {}",
        candidates
            .iter()
            .map(|c| c.display().to_string())
            .collect::<Vec<_>>()
            .join(", ")
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_regression_config() {
        let cfg = DatasetConfig::from_toml_str(
            r#"
            name = "yacht"
            task = "regression"
            path = "yacht.csv"
            target_cols = [6]
            hidden_units = 50

            [overrides]
            lr = 0.001
            "#,
        )
        .unwrap();
        assert_eq!(cfg.name, "yacht");
        assert_eq!(cfg.task, TaskKind::Regression);
        assert_eq!(cfg.overrides.lr, Some(0.001));
        assert_eq!(cfg.hidden_layers, 1);
    }

    #[test]
    fn regression_config_requires_path_and_targets() {
        let err = DatasetConfig::from_toml_str(
            r#"
            name = "x"
            task = "regression"
            "#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let err = DatasetConfig::from_toml_str(
            r#"
            name = "x"
            task = "regression"
            path = "x.csv"
            target_cols = [0]
            batchsize = 3
            "#,
        );
        assert!(err.is_err());
    }

    #[test]
    fn overrides_merge_with_flag_priority() {
        let file = Overrides {
            epochs: Some(100),
            lr: Some(0.01),
            ..Default::default()
        };
        let flags = Overrides {
            epochs: Some(5),
            seed: Some(3),
            ..Default::default()
        };
        let merged = file.merged_with(&flags);
        assert_eq!(merged.epochs, Some(5));
        assert_eq!(merged.lr, Some(0.01));
        assert_eq!(merged.seed, Some(3));
    }
}
