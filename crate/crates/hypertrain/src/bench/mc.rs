use crate::error::{Error, Result};
use crate::models::{sample_weight_vectors, HyperNetSpec, MainNetSpec};
use crate::real::Real;
use crate::rng::RngStream;
use crate::training::plain_forward;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log Σ exp(x_i)` with the usual max-shift stabilization.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Joint log-likelihood of a regression dataset under fixed weights,
/// with a unit-variance Gaussian observation model per output dimension:
/// `Σ_n (−½‖yⁿ − f(xⁿ;w)‖² − (out/2)·ln 2π)`.
pub fn dataset_log_likelihood<F: Real>(
    main: &MainNetSpec,
    w: &[F],
    x: &[F],
    y: &[F],
    n: usize,
) -> Result<f64> {
    let out_dim = main.output_dim();
    if y.len() != n * out_dim {
        return Err(Error::contract(format!(
            "target length {} does not match {n}×{out_dim}",
            y.len()
        )));
    }
    let preds = plain_forward(main, w, x, n)?;
    let sq: f64 = preds
        .iter()
        .zip(y)
        .map(|(&p, &t)| (p.to_f64() - t.to_f64()).powi(2))
        .sum();
    Ok(-0.5 * sq - (n * out_dim) as f64 / 2.0 * LN_2PI)
}

/// Monte Carlo estimate of the log marginal conditional likelihood:
/// `log[(1/S) Σ_s exp(Σ_n log p(yⁿ|xⁿ, w_s))]` with `w_s` drawn from the
/// generator in eval mode. Diagnostic only.
#[allow(clippy::too_many_arguments)]
pub fn mc_marginal_likelihood<F: Real>(
    main: &MainNetSpec,
    hyper: &HyperNetSpec,
    theta: &[F],
    x: &[F],
    y: &[F],
    n: usize,
    s: usize,
    stream: &mut RngStream,
) -> Result<f64> {
    if s < 1 {
        return Err(Error::contract(format!(
            "marginal-likelihood sample count S must be ≥ 1, got {s}"
        )));
    }
    let draws = sample_weight_vectors(hyper, theta, s, stream)?;
    let mut logs = Vec::with_capacity(s);
    for w in &draws {
        logs.push(dataset_log_likelihood(main, w, x, y, n)?);
    }
    Ok(log_sum_exp(&logs) - (s as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{init_delta_hyper_params, NoiseKind, OutputHead};
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_is_stable_and_order_free() {
        let xs = [-1000.0, -1001.0, -999.5];
        let a = log_sum_exp(&xs);
        assert!(a.is_finite());
        let mut shuffled = xs;
        shuffled.reverse();
        assert_relative_eq!(a, log_sum_exp(&shuffled), epsilon = 1e-12);
        // scalar case reduces to the identity
        assert_relative_eq!(log_sum_exp(&[3.25]), 3.25, epsilon = 1e-12);
    }

    #[test]
    fn single_sample_delta_reduces_to_joint_log_likelihood() {
        let main = MainNetSpec::new(vec![1, 2, 1], OutputHead::Regression).unwrap();
        let hyper = HyperNetSpec {
            noise_dim: 1,
            noise_kind: NoiseKind::Zero,
            hidden_sizes: vec![],
            output_dim: main.weight_count(),
            dropout_keep: 1.0,
            input_scale_init: 1.0,
        };
        let w0: Vec<f64> = vec![0.5, -0.2, 0.1, 0.0, 0.3, 0.7, 0.2];
        let theta = init_delta_hyper_params(&hyper, &w0).unwrap();
        let x = [0.0, 1.0, -1.0];
        let y = [1.0, 0.5, 0.25];
        let direct = dataset_log_likelihood(&main, &w0, &x, &y, 3).unwrap();
        let mut stream = RngStream::seed_from(1);
        let mc =
            mc_marginal_likelihood(&main, &hyper, &theta, &x, &y, 3, 1, &mut stream).unwrap();
        assert_relative_eq!(mc, direct, epsilon = 1e-12);
    }

    #[test]
    fn estimator_variance_shrinks_with_more_samples() {
        // var of the estimate at S=100 must sit below var at S=1
        let main = MainNetSpec::new(vec![1, 2, 1], OutputHead::Regression).unwrap();
        let mut hyper = HyperNetSpec::new(1, vec![], main.weight_count()).unwrap();
        hyper.dropout_keep = 1.0;
        let layout = hyper.layout();
        let mut theta = vec![0.0_f64; layout.total()];
        // small spread around a reasonable point
        let w0 = [0.5, -0.2, 0.1, 0.0, 0.3, 0.7, 0.2];
        theta[layout.segment("b0").unwrap().range()].copy_from_slice(&w0);
        for v in &mut theta[layout.segment("w0").unwrap().range()] {
            *v = 0.2;
        }
        theta[layout.segment(crate::models::INPUT_SCALE).unwrap().start] =
            crate::real::inv_softplus(1.0);
        let x = [0.0, 1.0, -1.0];
        let y = [1.0, 0.5, 0.25];
        let mut stream = RngStream::seed_from(42);
        let mut var_of = |s: usize| {
            let vals: Vec<f64> = (0..200)
                .map(|_| {
                    mc_marginal_likelihood(&main, &hyper, &theta, &x, &y, 3, s, &mut stream)
                        .unwrap()
                })
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() as f64 - 1.0)
        };
        let v1 = var_of(1);
        let v100 = var_of(100);
        assert!(
            v100 < v1,
            "variance at S=100 ({v100}) should be below S=1 ({v1})"
        );
    }
}
