use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_config(len, AdamConfig::default())
    }

    pub fn with_config(len: usize, config: AdamConfig) -> Self {
        AdamState {
            config,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam descent step, in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len()
    {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if !(lr.is_finite() && lr >= 0.0) {
        return Err(Error::Parameter(format!(
            "learning rate must be finite and >= 0, got {lr}"
        )));
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    state.t += 1;
    let c1 = 1.0 - beta1.powi(state.t as i32);
    let c2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let mhat = state.m[i] / c1;
        let vhat = state.v[i] / c2;
        params[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_sized() {
        let mut p = [0.5];
        let mut s = AdamState::new(1);
        adam_step(&mut p, &[1.0], &mut s, 0.001).unwrap();
        // m̂ = 1, v̂ = 1, step = lr / (1 + eps)
        assert!((p[0] - (0.5 - 0.001 / (1.0 + 1e-8))).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut p = [1.0, -2.0];
        let mut s = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut s, 0.01).unwrap();
        assert_eq!(p, [1.0, -2.0]);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let run = || {
            let mut p = vec![0.1, 0.2, 0.3];
            let mut s = AdamState::new(3);
            for _ in 0..5 {
                adam_step(&mut p, &[0.3, -1.0, 2.0], &mut s, 0.01).unwrap();
            }
            p
        };
        assert_eq!(run(), run());
        let mut s = AdamState::new(2);
        assert!(matches!(
            adam_step(&mut [0.0; 3], &[0.0; 3], &mut s, 0.1),
            Err(Error::Shape(_))
        ));
    }
}
