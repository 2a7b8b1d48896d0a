use serde::{Deserialize, Serialize};

use crate::data::TaskKind;
use crate::real::Real;

use super::SampleMode;

/// Which trainer produced a run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Weights sampled from the trained generator.
    Hyper,
    /// Plain point-weight training of the same main network.
    Baseline,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Hyper => "hyper",
            Method::Baseline => "baseline",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything one repetition produced.
///
/// All per-epoch series have length `epochs` (the number of epochs that
/// actually ran — shorter than configured only when early stopping was
/// enabled). `test_metric` is original-scale RMSE for regression and test
/// error percent for classification. `weight_std` is the dispersion
/// statistic: the mean over weight dimensions of the per-dimension
/// standard deviation across 10 sampled weight vectors; `weight_std_spread`
/// is the standard deviation of those per-dimension values across
/// dimensions (zero for baseline runs, which have no weight distribution).
/// `wall_time_secs` is the only field two identically-seeded runs may
/// disagree on.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub dataset: String,
    pub task: TaskKind,
    pub method: Method,
    pub seed: u64,
    pub epochs: usize,
    pub sample_mode: SampleMode,
    pub test_metric: Vec<f64>,
    pub weight_std: Vec<f64>,
    pub weight_std_spread: Vec<f64>,
    pub train_loss: Vec<f64>,
    pub params_digest: u64,
    pub config_snapshot: String,
    pub wall_time_secs: f64,
}

impl RunRecord {
    /// Equality of everything deterministic (ignores wall time).
    pub fn same_outcome(&self, other: &RunRecord) -> bool {
        self.dataset == other.dataset
            && self.task == other.task
            && self.method == other.method
            && self.seed == other.seed
            && self.epochs == other.epochs
            && self.sample_mode == other.sample_mode
            && self.test_metric == other.test_metric
            && self.weight_std == other.weight_std
            && self.weight_std_spread == other.weight_std_spread
            && self.train_loss == other.train_loss
            && self.params_digest == other.params_digest
            && self.config_snapshot == other.config_snapshot
    }
}

/// FNV-1a over the bit patterns of the parameter vector.
pub fn params_digest<F: Real>(params: &[F]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for byte in p.to_f64().to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}
