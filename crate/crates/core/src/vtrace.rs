//! V-trace off-policy value targets.
//!
//! Inputs are per-step rewards, value estimates under the current critic,
//! and the probability of the taken action under the target policy `pi`
//! and the behavior policy `mu` that generated the data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VTraceConfig {
    pub gamma: f64,
    pub c_bar: f64,
    pub rho_bar: f64,
}

impl Default for VTraceConfig {
    fn default() -> Self {
        VTraceConfig {
            gamma: 0.99,
            c_bar: 1.0,
            rho_bar: 1.0,
        }
    }
}

impl VTraceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Parameter(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        if !(self.c_bar > 0.0 && self.rho_bar > 0.0) {
            return Err(Error::Parameter(
                "truncation levels must be positive".into(),
            ));
        }
        if self.c_bar > self.rho_bar {
            return Err(Error::Parameter(format!(
                "c_bar ({}) must not exceed rho_bar ({})",
                self.c_bar, self.rho_bar
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VTraceResult {
    /// `v_hat(s_t)` for every step.
    pub targets: Vec<f64>,
    pub rho: Vec<f64>,
    pub c: Vec<f64>,
    /// Truncated TD errors `rho_t (r_t + gamma V(s_{t+1}) - V(s_t))`.
    pub delta: Vec<f64>,
    /// `r_t + gamma v_hat(s_{t+1}) - V(s_t)`, with the bootstrap value past the end.
    pub pg_advantage: Vec<f64>,
}

/// V-trace with a single discount.
pub fn vtrace(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    target_probs: &[f64],
    behavior_probs: &[f64],
    config: &VTraceConfig,
) -> Result<VTraceResult> {
    let discounts = vec![config.gamma; rewards.len()];
    vtrace_with_discounts(
        rewards,
        values,
        bootstrap_value,
        target_probs,
        behavior_probs,
        &discounts,
        config,
    )
}

/// V-trace with per-step discounts; a zero discount cuts the return at an
/// episode boundary.
pub fn vtrace_with_discounts(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    target_probs: &[f64],
    behavior_probs: &[f64],
    discounts: &[f64],
    config: &VTraceConfig,
) -> Result<VTraceResult> {
    let n = rewards.len();
    if n == 0 {
        return Err(Error::Shape("v-trace needs at least one step".into()));
    }
    for (name, len) in [
        ("values", values.len()),
        ("target_probs", target_probs.len()),
        ("behavior_probs", behavior_probs.len()),
        ("discounts", discounts.len()),
    ] {
        if len != n {
            return Err(Error::Shape(format!(
                "{name} has length {len}, rewards has {n}"
            )));
        }
    }
    if let Some(&bad) = behavior_probs.iter().find(|&&p| !(p > 0.0)) {
        return Err(Error::Domain(format!(
            "behavior probability {bad} must be positive"
        )));
    }
    if let Some(&bad) = target_probs.iter().find(|&&p| !(p >= 0.0)) {
        return Err(Error::Domain(format!(
            "target probability {bad} must be non-negative"
        )));
    }

    let mut rho = Vec::with_capacity(n);
    let mut c = Vec::with_capacity(n);
    for (&pi, &mu) in target_probs.iter().zip(behavior_probs) {
        let ratio = (pi.ln() - mu.ln()).exp();
        rho.push(ratio.min(config.rho_bar));
        c.push(ratio.min(config.c_bar));
    }

    let next_value = |t: usize| {
        if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap_value
        }
    };
    let delta: Vec<f64> = (0..n)
        .map(|t| rho[t] * (rewards[t] + discounts[t] * next_value(t) - values[t]))
        .collect();

    // v_hat(s_t) - V(s_t) = delta_t + gamma_t c_t (v_hat(s_{t+1}) - V(s_{t+1}))
    let mut targets = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        acc = delta[t] + discounts[t] * c[t] * acc;
        targets[t] = values[t] + acc;
    }

    let pg_advantage = (0..n)
        .map(|t| {
            let next = if t + 1 < n {
                targets[t + 1]
            } else {
                bootstrap_value
            };
            rewards[t] + discounts[t] * next - values[t]
        })
        .collect();

    let result = VTraceResult {
        targets,
        rho,
        c,
        delta,
        pg_advantage,
    };
    if result
        .targets
        .iter()
        .chain(&result.delta)
        .chain(&result.pg_advantage)
        .any(|v| !v.is_finite())
    {
        return Err(Error::Numeric {
            layer: "vtrace".into(),
        });
    }
    Ok(result)
}

/// The policy whose value V-trace converges to under truncation `rho_bar`:
/// `min(rho_bar mu, pi)`, renormalized.
pub fn target_policy_pi_rho(mu: &[f64], pi: &[f64], rho_bar: f64) -> Result<Vec<f64>> {
    if mu.len() != pi.len() {
        return Err(Error::Shape(format!(
            "mu has {} actions, pi has {}",
            mu.len(),
            pi.len()
        )));
    }
    let clipped: Vec<f64> = mu
        .iter()
        .zip(pi)
        .map(|(&m, &p)| (rho_bar * m).min(p))
        .collect();
    let z: f64 = clipped.iter().sum();
    if !(z > 0.0) {
        return Err(Error::Domain("min(rho_bar mu, pi) sums to zero".into()));
    }
    Ok(clipped.into_iter().map(|x| x / z).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct evaluation of the target sum with explicit trace products.
    fn direct_target(
        x: usize,
        rewards: &[f64],
        values: &[f64],
        boot: f64,
        ratios: &[f64],
        gamma: f64,
        c_bar: f64,
        rho_bar: f64,
    ) -> f64 {
        let n = rewards.len();
        let v = |t: usize| if t < n { values[t] } else { boot };
        let mut sum = 0.0;
        for t in x..n {
            let mut prod = 1.0;
            for &r in &ratios[x..t] {
                prod *= r.min(c_bar);
            }
            let delta = ratios[t].min(rho_bar) * (rewards[t] + gamma * v(t + 1) - v(t));
            sum += gamma.powi((t - x) as i32) * prod * delta;
        }
        values[x] + sum
    }

    #[test]
    fn two_step_hand_example() {
        let (r, v, boot, gamma) = ([0.1, 0.2], [1.0, 2.0], 0.5, 0.9);
        // pi/mu = [2.0, 0.5]
        let mu = [0.25, 0.8];
        let pi = [0.5, 0.4];
        let cfg = VTraceConfig {
            gamma,
            c_bar: 1.0,
            rho_bar: 1.0,
        };
        let out = vtrace(&r, &v, boot, &pi, &mu, &cfg).unwrap();
        let oracle = direct_target(0, &r, &v, boot, &[2.0, 0.5], gamma, 1.0, 1.0);
        assert!((oracle - 1.2925).abs() < 1e-12, "oracle {oracle}");
        assert!((out.targets[0] - oracle).abs() < 1e-12);
        assert!((out.rho[0] - 1.0).abs() < 1e-12 && (out.rho[1] - 0.5).abs() < 1e-12);
        assert!((out.delta[0] - 0.9).abs() < 1e-12);
        assert!((out.delta[1] + 0.675).abs() < 1e-12);
    }

    #[test]
    fn consistent_values_need_no_correction() {
        // r_t + gamma V(s_{t+1}) = V(s_t) everywhere
        let gamma = 0.5;
        let v = [4.0, 2.0, 1.0];
        let boot = 0.5;
        let r = [
            v[0] - gamma * v[1],
            v[1] - gamma * v[2],
            v[2] - gamma * boot,
        ];
        let out = vtrace(
            &r,
            &v,
            boot,
            &[0.3, 0.9, 0.1],
            &[0.5, 0.5, 0.5],
            &VTraceConfig {
                gamma,
                c_bar: 1.0,
                rho_bar: 1.0,
            },
        )
        .unwrap();
        for (t, vt) in out.targets.iter().zip(v) {
            assert!((t - vt).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let cfg = VTraceConfig::default();
        assert!(matches!(
            vtrace(&[1.0], &[0.0], 0.0, &[0.5], &[0.0], &cfg),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            vtrace(&[1.0, 2.0], &[0.0], 0.0, &[0.5], &[0.5], &cfg),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            vtrace(&[], &[], 0.0, &[], &[], &cfg),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_discount_cuts_at_boundary() {
        let cfg = VTraceConfig {
            gamma: 0.9,
            c_bar: 1.0,
            rho_bar: 1.0,
        };
        let out = vtrace_with_discounts(
            &[1.0, 5.0],
            &[0.0, 0.0],
            100.0,
            &[1.0, 1.0],
            &[1.0, 1.0],
            &[0.0, 0.9],
            &cfg,
        )
        .unwrap();
        assert!((out.targets[0] - 1.0).abs() < 1e-12);
        assert!((out.targets[1] - 95.0).abs() < 1e-12);
    }

    #[test]
    fn c_bar_above_rho_bar_is_rejected() {
        let cfg = VTraceConfig {
            gamma: 0.9,
            c_bar: 2.0,
            rho_bar: 1.0,
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn pi_rho_three_actions() {
        let out = target_policy_pi_rho(&[0.5, 0.3, 0.2], &[0.1, 0.1, 0.8], 1.0).unwrap();
        let expected = [0.25, 0.25, 0.5];
        for (a, b) in out.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_rho_large_truncation_returns_pi() {
        let pi = [0.2, 0.5, 0.3];
        let out = target_policy_pi_rho(&[0.4, 0.4, 0.2], &pi, 100.0).unwrap();
        for (a, b) in out.iter().zip(pi) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_rho_small_truncation_follows_mu() {
        let out = target_policy_pi_rho(&[0.25; 4], &[0.7, 0.1, 0.1, 0.1], 0.01).unwrap();
        for a in out {
            assert!((a - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn pi_rho_zero_normalizer_is_domain_error() {
        assert!(matches!(
            target_policy_pi_rho(&[1.0, 0.0], &[0.0, 1.0], 1.0),
            Err(Error::Domain(_))
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn instance() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, f64, Vec<f64>, Vec<f64>, f64)> {
            (1usize..12).prop_flat_map(|n| {
                (
                    prop::collection::vec(-1.0f64..1.0, n),
                    prop::collection::vec(-5.0f64..5.0, n),
                    -5.0f64..5.0,
                    prop::collection::vec(0.01f64..1.0, n),
                    prop::collection::vec(0.01f64..1.0, n),
                    0.0f64..1.0,
                )
            })
        }

        proptest! {
            #[test]
            fn matches_direct_sum((r, v, boot, pi, mu, gamma) in instance(), c_bar in 0.1f64..1.0, extra in 0.0f64..2.0) {
                let rho_bar = c_bar + extra;
                let cfg = VTraceConfig { gamma, c_bar, rho_bar };
                let out = vtrace(&r, &v, boot, &pi, &mu, &cfg).unwrap();
                let ratios: Vec<f64> = pi.iter().zip(&mu).map(|(p, m)| p / m).collect();
                for x in 0..r.len() {
                    let d = direct_target(x, &r, &v, boot, &ratios, gamma, c_bar, rho_bar);
                    prop_assert!((out.targets[x] - d).abs() <= 1e-9 * d.abs().max(1.0));
                }
                prop_assert!(out.rho.iter().all(|&x| x <= rho_bar));
                prop_assert!(out.c.iter().all(|&x| x <= c_bar));
            }

            #[test]
            fn smaller_rho_bar_never_enlarges_delta((r, v, boot, pi, mu, gamma) in instance(), lo in 0.1f64..1.0, extra in 0.0f64..2.0) {
                let small = vtrace(&r, &v, boot, &pi, &mu, &VTraceConfig { gamma, c_bar: lo, rho_bar: lo }).unwrap();
                let large = vtrace(&r, &v, boot, &pi, &mu, &VTraceConfig { gamma, c_bar: lo, rho_bar: lo + extra }).unwrap();
                for (a, b) in small.delta.iter().zip(&large.delta) {
                    prop_assert!(a.abs() <= b.abs() + 1e-15);
                }
            }
        }
    }
}
