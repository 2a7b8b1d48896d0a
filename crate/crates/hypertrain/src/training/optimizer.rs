use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// Gradient-descent scheme for the flat parameter vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
    Sgd {
        lr: f64,
    },
}

impl OptimizerKind {
    /// Adam with the standard moment constants.
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { lr, .. } => lr,
            OptimizerKind::Sgd { lr } => lr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.lr() < 0.0 {
            return Err(Error::contract(format!(
                "learning rate must be non-negative, got {}",
                self.lr()
            )));
        }
        if let OptimizerKind::Adam { beta1, beta2, eps, .. } = *self {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || eps <= 0.0 {
                return Err(Error::contract(format!(
                    "invalid Adam constants: beta1={beta1} beta2={beta2} eps={eps}"
                )));
            }
        }
        Ok(())
    }
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::adam(1e-3)
    }
}

/// Per-parameter moment accumulators and the step counter.
#[derive(Clone, Debug)]
pub struct OptimizerState<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: u64,
}

impl<F: Real> OptimizerState<F> {
    pub fn new(kind: &OptimizerKind, n: usize) -> Self {
        match kind {
            OptimizerKind::Adam { .. } => OptimizerState {
                m: vec![F::zero(); n],
                v: vec![F::zero(); n],
                t: 0,
            },
            OptimizerKind::Sgd { .. } => OptimizerState {
                m: Vec::new(),
                v: Vec::new(),
                t: 0,
            },
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One in-place update. Standard bias-corrected Adam, or `p ← p − lr·g`.
pub fn optimizer_step<F: Real>(
    params: &mut [F],
    grads: &[F],
    state: &mut OptimizerState<F>,
    kind: &OptimizerKind,
    strict: bool,
) -> Result<()> {
    if grads.len() != params.len() {
        return Err(Error::contract(format!(
            "gradient length {} does not mirror parameter length {}",
            grads.len(),
            params.len()
        )));
    }
    if strict && grads.iter().any(|g| !g.is_finite()) {
        return Err(Error::numeric("non-finite gradient in optimizer step".into()));
    }
    state.t += 1;
    match *kind {
        OptimizerKind::Sgd { lr } => {
            let lr = F::from_f64(lr);
            for (p, &g) in params.iter_mut().zip(grads) {
                *p = *p - lr * g;
            }
        }
        OptimizerKind::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            debug_assert_eq!(state.m.len(), params.len());
            let t = state.t as f64;
            let bc1 = F::from_f64(1.0 - beta1.powf(t));
            let bc2 = F::from_f64(1.0 - beta2.powf(t));
            let (b1, b2) = (F::from_f64(beta1), F::from_f64(beta2));
            let one = F::one();
            let lr = F::from_f64(lr);
            let eps = F::from_f64(eps);
            for i in 0..params.len() {
                let g = grads[i];
                state.m[i] = b1 * state.m[i] + (one - b1) * g;
                state.v[i] = b2 * state.v[i] + (one - b2) * g * g;
                let m_hat = state.m[i] / bc1;
                let v_hat = state.v[i] / bc2;
                params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        for kind in [OptimizerKind::adam(0.0), OptimizerKind::Sgd { lr: 0.0 }] {
            let mut p = vec![1.0_f64, -2.0, 0.5];
            let before = p.clone();
            let mut st = OptimizerState::new(&kind, p.len());
            optimizer_step(&mut p, &[0.3, -0.1, 2.0], &mut st, &kind, false).unwrap();
            assert_eq!(p, before);
        }
    }

    #[test]
    fn adam_first_step_has_learning_rate_magnitude() {
        // after bias correction, m̂/√v̂ = sign(g) on the first step
        let kind = OptimizerKind::adam(1e-3);
        let mut p = vec![0.0_f64, 0.0];
        let mut st = OptimizerState::new(&kind, 2);
        optimizer_step(&mut p, &[0.5, -0.25], &mut st, &kind, false).unwrap();
        assert_relative_eq!(p[0], -1e-3, max_relative = 1e-6);
        assert_relative_eq!(p[1], 1e-3, max_relative = 1e-6);
    }

    #[test]
    fn plain_sgd_arithmetic() {
        let kind = OptimizerKind::Sgd { lr: 0.1 };
        let mut p = vec![1.0_f64];
        let mut st = OptimizerState::new(&kind, 1);
        optimizer_step(&mut p, &[0.5], &mut st, &kind, false).unwrap();
        assert_relative_eq!(p[0], 0.95, epsilon = 1e-15);
    }

    #[test]
    fn strict_mode_rejects_non_finite_gradients() {
        let kind = OptimizerKind::adam(1e-3);
        let mut p = vec![1.0_f64];
        let mut st = OptimizerState::new(&kind, 1);
        let r = optimizer_step(&mut p, &[f64::NAN], &mut st, &kind, true);
        assert!(matches!(r, Err(Error::Numeric(_))));
        // non-strict lets it through (and poisons params, caller's choice)
        let mut st2 = OptimizerState::new(&kind, 1);
        assert!(optimizer_step(&mut p, &[f64::NAN], &mut st2, &kind, false).is_ok());
    }

    #[test]
    fn mismatched_lengths_are_a_contract_violation() {
        let kind = OptimizerKind::adam(1e-3);
        let mut p = vec![1.0_f64, 2.0];
        let mut st = OptimizerState::new(&kind, 2);
        assert!(matches!(
            optimizer_step(&mut p, &[0.1], &mut st, &kind, false),
            Err(Error::Contract(_))
        ));
    }
}
