use crate::error::{Error, Result};
use crate::models::{sample_weight_vectors, HyperNetSpec};
use crate::real::Real;
use crate::rng::RngStream;

/// The weight-dispersion statistic and its spread across dimensions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionStat {
    /// Mean over weight dimensions of the per-dimension sample standard
    /// deviation across the drawn weight vectors.
    pub mean_std: f64,
    /// Standard deviation of those per-dimension values across dimensions
    /// (one of the two band interpretations emitted for plotting).
    pub spread: f64,
}

/// Dispersion of the implicit weight distribution: draw `n_samples` weight
/// vectors in eval mode (dropout off, so the statistic reflects the
/// distribution itself), take the per-dimension standard deviation
/// (`n−1` divisor), and average over dimensions.
pub fn weight_diffusion<F: Real>(
    spec: &HyperNetSpec,
    theta: &[F],
    n_samples: usize,
    stream: &mut RngStream,
) -> Result<f64> {
    Ok(weight_diffusion_detail(spec, theta, n_samples, stream)?.mean_std)
}

pub fn weight_diffusion_detail<F: Real>(
    spec: &HyperNetSpec,
    theta: &[F],
    n_samples: usize,
    stream: &mut RngStream,
) -> Result<DiffusionStat> {
    if n_samples < 2 {
        return Err(Error::contract(format!(
            "weight diffusion needs at least 2 samples, got {n_samples}"
        )));
    }
    let draws = sample_weight_vectors(spec, theta, n_samples, stream)?;
    let dims = spec.output_dim;
    let n = n_samples as f64;
    let mut stds = Vec::with_capacity(dims);
    for c in 0..dims {
        let mean = draws.iter().map(|d| d[c].to_f64()).sum::<f64>() / n;
        let var = draws
            .iter()
            .map(|d| (d[c].to_f64() - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        stds.push(var.sqrt());
    }
    let mean_std = stds.iter().sum::<f64>() / dims as f64;
    let spread = if dims > 1 {
        (stds.iter().map(|s| (s - mean_std).powi(2)).sum::<f64>() / (dims as f64 - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(DiffusionStat { mean_std, spread })
}
