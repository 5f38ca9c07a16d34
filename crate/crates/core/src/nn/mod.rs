//! Actor-critic network with a dense trunk, gated attention blocks over a
//! short window of recent states, and separate policy and value heads.
//!
//! All arithmetic is `f64`. Gradients are derived by hand for the handful
//! of layer types the network uses.

mod adam;
mod checkpoint;
mod gradcheck;
mod layout;
mod network;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint};
pub(crate) use checkpoint::digest64;
pub use gradcheck::{grad_check, grad_check_with, tiny_config, GradCheckReport};
pub use layout::{Layout, Segment};
pub use network::{
    entropy_of, forward, gradients, loss_only, masked_softmax, BlockMemory, ForwardOutput,
    GradientOutput, LossReport, LossSample, LossWeights,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub(crate) fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative in terms of pre-activation `x` and output `y`.
    pub(crate) fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Width of one encoded state.
    pub input_dim: usize,
    pub fc_units: Vec<usize>,
    pub activation: Activation,
    /// Number of gated attention blocks; zero disables attention entirely.
    pub tf_units: usize,
    pub heads: usize,
    pub head_dim: usize,
    pub mlp_dim: usize,
    /// Window length K.
    pub context_window: usize,
    pub action_count: usize,
    /// Initial bias pushing the update gate towards the residual path.
    pub gate_bias: f64,
}

impl NetworkConfig {
    /// Small network used for desk runs and tests.
    pub fn desk(input_dim: usize, action_count: usize) -> Self {
        NetworkConfig {
            input_dim,
            fc_units: vec![32, 32, 16],
            activation: Activation::Relu,
            tf_units: 1,
            heads: 2,
            head_dim: 8,
            mlp_dim: 16,
            context_window: 8,
            action_count,
            gate_bias: 2.0,
        }
    }

    /// Full-size network: three dense layers of 256/256/128 units, two
    /// attention blocks with four 32-wide heads and 32-wide MLPs.
    pub fn full(input_dim: usize, action_count: usize) -> Self {
        NetworkConfig {
            input_dim,
            fc_units: vec![256, 256, 128],
            activation: Activation::Relu,
            tf_units: 2,
            heads: 4,
            head_dim: 32,
            mlp_dim: 32,
            context_window: 8,
            action_count,
            gate_bias: 2.0,
        }
    }

    /// Width of the representation flowing through the attention blocks.
    pub fn model_dim(&self) -> usize {
        self.fc_units.last().copied().unwrap_or(self.input_dim)
    }

    pub fn attention_dim(&self) -> usize {
        self.heads * self.head_dim
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.action_count == 0 || self.context_window == 0 {
            return Err(Error::Parameter(
                "input_dim, action_count and context_window must be positive".into(),
            ));
        }
        if self.fc_units.iter().any(|&u| u == 0) {
            return Err(Error::Parameter("fc_units entries must be positive".into()));
        }
        if self.tf_units > 0 && (self.heads == 0 || self.head_dim == 0 || self.mlp_dim == 0) {
            return Err(Error::Parameter(
                "heads, head_dim and mlp_dim must be positive when attention is enabled".into(),
            ));
        }
        if !self.gate_bias.is_finite() {
            return Err(Error::Parameter("gate_bias must be finite".into()));
        }
        Ok(())
    }

    /// Stable 64-bit digest of the configuration.
    pub fn digest(&self) -> u64 {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let hash = Sha256::digest(&bytes);
        u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
    }
}

/// Versioned flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet {
    pub config: NetworkConfig,
    pub values: Vec<f64>,
    pub version: u64,
}

impl ParameterSet {
    /// Seeded initialization: He-uniform for rectified layers,
    /// Glorot-uniform elsewhere, heads scaled down so the initial policy is
    /// close to uniform.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; layout.total];
        for seg in &layout.segments {
            let dst = &mut values[seg.offset..seg.offset + seg.len];
            match seg.init {
                layout::Init::Zero => {}
                layout::Init::One => dst.iter_mut().for_each(|v| *v = 1.0),
                layout::Init::Const(c) => dst.iter_mut().for_each(|v| *v = c),
                layout::Init::Uniform(bound) => dst
                    .iter_mut()
                    .for_each(|v| *v = rng.random_range(-bound..=bound)),
            }
        }
        Ok(ParameterSet {
            config: config.clone(),
            values,
            version: 0,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.values.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            let layout = self.layout();
            let idx = self.values.iter().position(|v| !v.is_finite()).unwrap_or(0);
            Err(Error::Numeric {
                layer: format!("parameters ({})", layout.segment_of(idx).unwrap_or("?")),
            })
        }
    }
}
