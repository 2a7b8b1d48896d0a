use crate::error::{Error, Result};
use crate::real::Real;

/// Compare a reverse-mode gradient against central finite differences.
///
/// `value` evaluates the scalar objective at a flat parameter vector;
/// `grad` returns the tape gradient at the same point. Both closures must
/// be deterministic — freeze every random stream they consume. Returns the
/// maximum over coordinates of `|g_ad - g_fd| / max(1, |g_ad|, |g_fd|)`.
pub fn finite_diff_check<F, V, G>(value: V, grad: G, point: &[F], step: f64) -> Result<f64>
where
    F: Real,
    V: Fn(&[F]) -> Result<F>,
    G: Fn(&[F]) -> Result<Vec<F>>,
{
    if !(step > 0.0) {
        return Err(Error::OracleInvalid(format!(
            "finite-difference step must be positive, got {step}"
        )));
    }
    let v1 = value(point)?;
    let v2 = value(point)?;
    if v1.to_f64().to_bits() != v2.to_f64().to_bits() {
        return Err(Error::OracleInvalid(
            "objective is non-deterministic: two evaluations at the same point differ".into(),
        ));
    }
    let g_ad = grad(point)?;
    if g_ad.len() != point.len() {
        return Err(Error::contract(format!(
            "gradient length {} does not match parameter count {}",
            g_ad.len(),
            point.len()
        )));
    }
    let h = F::from_f64(step);
    let mut work = point.to_vec();
    let mut max_rel = 0.0_f64;
    for i in 0..point.len() {
        let orig = work[i];
        work[i] = orig + h;
        let plus = value(&work)?.to_f64();
        work[i] = orig - h;
        let minus = value(&work)?.to_f64();
        work[i] = orig;
        let fd = (plus - minus) / (2.0 * step);
        let ad = g_ad[i].to_f64();
        let rel = (ad - fd).abs() / 1.0_f64.max(ad.abs()).max(fd.abs());
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}
