use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::real::Real;

/// Root-mean-square error.
///
/// With `stats`, inputs are taken to be in normalized target space and
/// residuals are rescaled per column by the training-split target standard
/// deviation, yielding original-scale RMSE (the per-column means cancel in
/// the residual, so for one output this is exactly `normalized RMSE · σ_y`).
pub fn rmse<F: Real>(
    pred: &[F],
    truth: &[F],
    out_dim: usize,
    stats: Option<&NormStats>,
) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "rmse needs equal nonempty inputs, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    if out_dim == 0 || pred.len() % out_dim != 0 {
        return Err(Error::contract(format!(
            "rmse: input length {} is not a multiple of out_dim {out_dim}",
            pred.len()
        )));
    }
    if let Some(s) = stats {
        if s.y_std.len() != out_dim {
            return Err(Error::contract(format!(
                "rmse: stats cover {} target columns, expected {out_dim}",
                s.y_std.len()
            )));
        }
    }
    let mut total = 0.0f64;
    for (i, (&p, &t)) in pred.iter().zip(truth).enumerate() {
        let mut r = p.to_f64() - t.to_f64();
        if let Some(s) = stats {
            r *= s.y_std[i % out_dim];
        }
        total += r * r;
    }
    Ok((total / pred.len() as f64).sqrt())
}

/// Percent of mismatched labels.
pub fn classification_error(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.is_empty() || pred.len() != truth.len() {
        return Err(Error::contract(format!(
            "classification_error needs equal nonempty inputs, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let wrong = pred.iter().zip(truth).filter(|(a, b)| a != b).count();
    Ok(100.0 * wrong as f64 / pred.len() as f64)
}

/// Mean of the last `k` entries.
pub fn tail_mean(series: &[f64], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::contract("tail_mean needs k ≥ 1".into()));
    }
    if series.len() < k {
        return Err(Error::contract(format!(
            "tail_mean needs at least {k} entries, got {}",
            series.len()
        )));
    }
    Ok(series[series.len() - k..].iter().sum::<f64>() / k as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn perfect_predictions_have_zero_rmse() {
        let v = [1.0_f64, 2.0, 3.0];
        assert_eq!(rmse(&v, &v, 1, None).unwrap(), 0.0);
    }

    #[test]
    fn constant_predictor_at_mean_gives_population_std() {
        let truth = [1.0_f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let mean = truth.iter().sum::<f64>() / truth.len() as f64;
        let pred = [mean; 6];
        let expected = (truth.iter().map(|t| (t - mean).powi(2)).sum::<f64>()
            / truth.len() as f64)
            .sqrt();
        assert_relative_eq!(rmse(&pred, &truth, 1, None).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn normalized_rmse_scales_by_target_std() {
        let stats = NormStats {
            x_mean: vec![],
            x_std: vec![],
            y_mean: vec![10.0],
            y_std: vec![2.5],
        };
        let pred = [0.0_f64, 1.0, 2.0];
        let truth = [0.5_f64, 0.5, 2.5];
        let raw = rmse(&pred, &truth, 1, None).unwrap();
        let scaled = rmse(&pred, &truth, 1, Some(&stats)).unwrap();
        assert_relative_eq!(scaled, raw * 2.5, epsilon = 1e-12);
    }

    #[test]
    fn empty_inputs_are_rejected() {
        assert!(rmse::<f64>(&[], &[], 1, None).is_err());
        assert!(classification_error(&[], &[]).is_err());
    }

    #[test]
    fn classification_error_examples() {
        assert_eq!(classification_error(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        let mut pred = vec![0usize; 10_000];
        let truth = vec![0usize; 10_000];
        for p in pred.iter_mut().take(126) {
            *p = 1;
        }
        assert_relative_eq!(
            classification_error(&pred, &truth).unwrap(),
            1.26,
            epsilon = 1e-12
        );
        for p in pred.iter_mut().take(143) {
            *p = 1;
        }
        assert_relative_eq!(
            classification_error(&pred, &truth).unwrap(),
            1.43,
            epsilon = 1e-12
        );
    }

    #[test]
    fn tail_mean_examples() {
        let constant = vec![3.5; 40];
        assert_eq!(tail_mean(&constant, 20).unwrap(), 3.5);

        let mut series = vec![9.0; 5];
        series.extend(vec![1.0; 10]);
        series.extend(vec![2.0; 10]);
        assert_relative_eq!(tail_mean(&series, 20).unwrap(), 1.5, epsilon = 1e-12);

        let short = vec![1.0; 19];
        assert!(tail_mean(&short, 20).is_err());
    }
}
