use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{gradients, loss_only, LossSample, LossWeights};
use super::{Activation, NetworkConfig, ParameterSet};
use crate::error::Result;

const STEP: f64 = 1e-5;
const FLOOR: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub worst_segment: String,
    pub params_checked: usize,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// Tiny configuration exercising every layer type.
pub fn tiny_config() -> NetworkConfig {
    NetworkConfig {
        input_dim: 3,
        fc_units: vec![5, 4],
        activation: Activation::Relu,
        tf_units: 1,
        heads: 2,
        head_dim: 2,
        mlp_dim: 3,
        context_window: 3,
        action_count: 3,
        gate_bias: 2.0,
    }
}

fn batch(config: &NetworkConfig, rng: &mut ChaCha8Rng) -> Vec<LossSample> {
    (0..3)
        .map(|_| {
            let len = rng.random_range(1..=config.context_window);
            let window = (0..len)
                .map(|_| {
                    (0..config.input_dim)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            let mut mask: Vec<bool> = (0..config.action_count)
                .map(|_| rng.random_bool(0.7))
                .collect();
            let action = rng.random_range(0..config.action_count);
            mask[action] = true;
            LossSample {
                window,
                mask,
                action,
                value_target: rng.random_range(-2.0..2.0),
                advantage: rng.random_range(-1.0..1.0),
                rho: rng.random_range(0.2..1.0),
                is_weight: rng.random_range(0.3..1.0),
            }
        })
        .collect()
}

/// Compares analytic gradients with central differences for every
/// parameter of a freshly initialized network.
pub fn grad_check(config: &NetworkConfig, seed: u64) -> Result<GradCheckReport> {
    grad_check_with(config, seed, |_| {})
}

/// Same as [`grad_check`], with `hook` applied to the analytic gradient
/// before comparison.
pub fn grad_check_with(
    config: &NetworkConfig,
    seed: u64,
    hook: impl Fn(&mut [f64]),
) -> Result<GradCheckReport> {
    let mut params = ParameterSet::init(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    // Larger heads and non-zero biases so every path carries signal and no
    // rectifier sits exactly on its kink.
    let layout = params.layout();
    for seg in &layout.segments {
        if seg.name.starts_with("policy")
            || seg.name.starts_with("value")
            || seg.name.ends_with(".b")
            || seg.name.ends_with(".bias")
        {
            for v in &mut params.values[seg.offset..seg.offset + seg.len] {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let samples = batch(config, &mut rng);
    let weights = LossWeights {
        a_v: 0.5,
        a_p: 1.0,
        a_e: 0.1,
    };
    let mut analytic = gradients(&params, &samples, &weights)?.grads;
    hook(&mut analytic);
    let mut worst = (0.0, 0usize);
    for i in 0..params.len() {
        let orig = params.values[i];
        params.values[i] = orig + STEP;
        let up = loss_only(&params, &samples, &weights)?.total;
        params.values[i] = orig - STEP;
        let down = loss_only(&params, &samples, &weights)?.total;
        params.values[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let denom = analytic[i].abs().max(numeric.abs()).max(FLOOR);
        let rel = (analytic[i] - numeric).abs() / denom;
        if rel > worst.0 {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst.0,
        worst_index: worst.1,
        worst_segment: layout.segment_of(worst.1).unwrap_or("?").to_string(),
        params_checked: params.len(),
    })
}
