use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{Parameters, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(self, learning_rate: f64) -> Self {
        Self { learning_rate, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(
                "learning_rate",
                format!("{} must be positive", self.learning_rate),
            ));
        }
        for (field, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::invalid(field, format!("{b} is outside [0, 1)")));
            }
        }
        if !(self.epsilon >= 0.0) {
            return Err(Error::invalid("epsilon", format!("{} is negative", self.epsilon)));
        }
        Ok(())
    }
}

/// First and second moments per parameter tensor plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new<P: Parameters<Scalar = T>>(params: &P) -> Self {
        let zeros: Vec<Vec<T>> = params.tensors().iter().map(|t| vec![T::zero(); t.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update:
///
/// ```text
/// m ← β₁ m + (1 − β₁) g          v ← β₂ v + (1 − β₂) g²
/// θ ← θ − lr · (m / (1 − β₁ᵗ)) / (sqrt(v / (1 − β₂ᵗ)) + ε)
/// ```
///
/// Gradients are checked for finiteness before anything is modified.
pub fn adam_step<P: Parameters>(
    params: &mut P,
    grads: &P,
    state: &mut OptimizerState<P::Scalar>,
    cfg: &AdamConfig,
) -> Result<()> {
    let g_tensors = grads.tensors();
    let shapes_ok = {
        let p_tensors = params.tensors();
        p_tensors.len() == g_tensors.len()
            && p_tensors.len() == state.m.len()
            && p_tensors
                .iter()
                .zip(&g_tensors)
                .zip(&state.m)
                .all(|((p, g), m)| p.len() == g.len() && p.len() == m.len())
    };
    if !shapes_ok {
        return Err(Error::Shape {
            context: "optimizer tensors",
            expected: params.parameter_count(),
            found: grads.parameter_count(),
        });
    }
    if let Some(i) = g_tensors.iter().position(|g| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite {
            location: format!("gradient of {}", grads.tensor_names()[i]),
        });
    }
    state.t += 1;
    let t = state.t as i32;
    let of = <P::Scalar as Real>::of;
    let (b1, b2) = (of(cfg.beta1), of(cfg.beta2));
    let (one_b1, one_b2) = (of(1.0 - cfg.beta1), of(1.0 - cfg.beta2));
    let c1 = of(1.0 / (1.0 - cfg.beta1.powi(t)));
    let c2 = of(1.0 / (1.0 - cfg.beta2.powi(t)));
    let lr = of(cfg.learning_rate);
    let eps = of(cfg.epsilon);
    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(g_tensors)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + one_b1 * gi;
            v[i] = b2 * v[i] + one_b2 * gi * gi;
            let m_hat = m[i] * c1;
            let v_hat = v[i] * c2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
