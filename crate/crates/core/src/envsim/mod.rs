//! Deterministic edge/cloud cost model.
//!
//! Units throughout: seconds, joules, currency units, bytes, bytes/second,
//! MHz (read as Mcycles per second) and GB. Propagation delays are stored in
//! milliseconds as they appear in configuration files.

mod constraints;
mod cost;
mod critical;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use constraints::{check_constraints, ConstraintResult, FeasibilityReport};
pub use cost::{app_bounds, app_costs, task_bounds, task_costs, CostBreakdown, TaskBounds, TaskCost};
pub use critical::critical_path;

pub const JOULES_PER_KWH: f64 = 3.6e6;
pub const SECONDS_PER_HOUR: f64 = 3600.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Edge,
    Cloud,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerSpec {
    pub id: usize,
    #[serde(default)]
    pub name: String,
    pub tier: Tier,
    /// Average per-core frequency, MHz.
    pub freq: f64,
    /// GB.
    pub ram: f64,
    /// Watts while executing.
    pub exec_power: f64,
    /// Watts while transmitting.
    pub tx_power: f64,
    /// Currency per hour; cloud servers only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cloud_price: Option<f64>,
    /// Currency per kWh; edge servers only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub electricity_price: Option<f64>,
}

impl ServerSpec {
    /// Monetary cost of running a task on this server given its response
    /// time (cloud pricing) or energy (edge pricing).
    pub fn monetary(&self, response_time: f64, energy: f64) -> f64 {
        match self.tier {
            Tier::Cloud => response_time / SECONDS_PER_HOUR * self.cloud_price.unwrap_or(0.0),
            Tier::Edge => energy / JOULES_PER_KWH * self.electricity_price.unwrap_or(0.0),
        }
    }

    /// Price of the billing unit that applies to this tier.
    pub fn price(&self) -> f64 {
        match self.tier {
            Tier::Cloud => self.cloud_price.unwrap_or(0.0),
            Tier::Edge => self.electricity_price.unwrap_or(0.0),
        }
    }
}

/// Dense pairwise link properties, indexed `[from][to]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkMatrix {
    pub propagation_ms: Vec<Vec<f64>>,
    /// Bytes per second.
    pub bandwidth: Vec<Vec<f64>>,
}

impl LinkMatrix {
    /// Uniform off-diagonal links.
    pub fn uniform(n: usize, propagation_ms: f64, bandwidth: f64) -> Self {
        let fill = |v: f64| {
            (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.0 } else { v }).collect())
                .collect()
        };
        LinkMatrix {
            propagation_ms: fill(propagation_ms),
            bandwidth: fill(bandwidth),
        }
    }

    pub fn propagation_s(&self, from: usize, to: usize) -> f64 {
        self.propagation_ms[from][to] / 1000.0
    }

    pub fn bandwidth(&self, from: usize, to: usize) -> f64 {
        self.bandwidth[from][to]
    }

    /// Seconds to move `bytes` from `from` to `to`, propagation included.
    /// Zero when both ends are the same server.
    pub fn transfer_time(&self, from: usize, to: usize, bytes: f64) -> Result<f64> {
        if from == to {
            return Ok(0.0);
        }
        let b = self.bandwidth[from][to];
        if !(b > 0.0) {
            return Err(Error::Constraint {
                constraint: "C2",
                detail: format!("link {from}->{to} is used but has bandwidth {b}"),
            });
        }
        if !(bytes > 0.0) {
            return Err(Error::Constraint {
                constraint: "C2",
                detail: format!("link {from}->{to} is used with data size {bytes}"),
            });
        }
        Ok(bytes / b + self.propagation_s(from, to))
    }
}

/// Explicit per-task normalization bounds, overriding the analytic ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBounds {
    pub t_min: f64,
    pub t_max: f64,
    pub e_min: f64,
    pub e_max: f64,
    pub f_min: f64,
    pub f_max: f64,
}

impl CostBounds {
    fn validate(&self) -> Result<()> {
        for (name, lo, hi) in [
            ("t", self.t_min, self.t_max),
            ("e", self.e_min, self.e_max),
            ("f", self.f_min, self.f_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && hi > lo && lo >= 0.0) {
                return Err(Error::Validation(format!(
                    "bounds override: {name}_max must exceed {name}_min (got {lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<CostBounds>,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            w1: 0.33,
            w2: 0.33,
            w3: 0.33,
            bounds: None,
        }
    }
}

impl CostWeights {
    pub fn new(w1: f64, w2: f64, w3: f64) -> Self {
        CostWeights {
            w1,
            w2,
            w3,
            bounds: None,
        }
    }

    /// Weights rescaled to sum to exactly one.
    pub fn normalized(&self) -> [f64; 3] {
        let sum = self.w1 + self.w2 + self.w3;
        if !(sum > 0.0) {
            return [1.0 / 3.0; 3];
        }
        [self.w1 / sum, self.w2 / sum, self.w3 / sum]
    }

    fn validate(&self) -> Result<()> {
        for w in [self.w1, self.w2, self.w3] {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Validation(format!(
                    "weight {w} must be finite and non-negative"
                )));
            }
        }
        if !(self.w1 + self.w2 + self.w3 > 0.0) {
            return Err(Error::Validation("weights must not all be zero".into()));
        }
        if let Some(b) = &self.bounds {
            b.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub servers: Vec<ServerSpec>,
    pub links: LinkMatrix,
    #[serde(default)]
    pub weights: CostWeights,
}

impl EnvironmentSpec {
    pub fn new(servers: Vec<ServerSpec>, links: LinkMatrix, weights: CostWeights) -> Result<Self> {
        let env = EnvironmentSpec {
            servers,
            links,
            weights,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn len(&self) -> usize {
        self.servers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.servers.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.servers.len();
        if n == 0 {
            return Err(Error::Validation("environment has no servers".into()));
        }
        for (i, s) in self.servers.iter().enumerate() {
            if s.id != i {
                return Err(Error::Validation(format!(
                    "server ids must be contiguous: position {i} holds id {}",
                    s.id
                )));
            }
            if !(s.freq > 0.0) || !(s.ram > 0.0) {
                return Err(Error::Constraint {
                    constraint: "C3",
                    detail: format!("server {i} needs positive freq and ram"),
                });
            }
            if !(s.exec_power > 0.0) || !(s.tx_power > 0.0) {
                return Err(Error::Validation(format!(
                    "server {i} needs positive power draws"
                )));
            }
            let price = match s.tier {
                Tier::Cloud => s.cloud_price,
                Tier::Edge => s.electricity_price,
            };
            match price {
                Some(p) if p >= 0.0 && p.is_finite() => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "server {i} ({:?}) lacks a valid {} price",
                        s.tier,
                        if s.tier == Tier::Cloud {
                            "cloud"
                        } else {
                            "electricity"
                        }
                    )))
                }
            }
        }
        for (name, m) in [
            ("propagation_ms", &self.links.propagation_ms),
            ("bandwidth", &self.links.bandwidth),
        ] {
            if m.len() != n || m.iter().any(|row| row.len() != n) {
                return Err(Error::Validation(format!("links.{name} must be {n}x{n}")));
            }
            if m.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::Validation(format!(
                    "links.{name} entries must be finite and non-negative"
                )));
            }
        }
        self.weights.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let env: EnvironmentSpec = serde_json::from_str(text)?;
        env.validate()?;
        Ok(env)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&crate::error::read_text(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Three-server desk environment: a small edge board, an edge laptop and
    /// one cloud VM.
    pub fn desk() -> Self {
        let servers = vec![
            ServerSpec {
                id: 0,
                name: "edge-board".into(),
                tier: Tier::Edge,
                freq: 1200.0,
                ram: 1.0,
                exec_power: 4.0,
                tx_power: 0.8,
                cloud_price: None,
                electricity_price: Some(0.2871),
            },
            ServerSpec {
                id: 1,
                name: "edge-laptop".into(),
                tier: Tier::Edge,
                freq: 2300.0,
                ram: 2.0,
                exec_power: 25.0,
                tx_power: 1.0,
                cloud_price: None,
                electricity_price: Some(0.2871),
            },
            ServerSpec {
                id: 2,
                name: "cloud-vm".into(),
                tier: Tier::Cloud,
                freq: 3500.0,
                ram: 8.0,
                exec_power: 40.0,
                tx_power: 4.0,
                cloud_price: Some(0.5184),
                electricity_price: None,
            },
        ];
        let links = LinkMatrix {
            propagation_ms: vec![
                vec![0.0, 3.0, 10.0],
                vec![3.0, 0.0, 8.0],
                vec![10.0, 8.0, 0.0],
            ],
            bandwidth: vec![
                vec![0.0, 135.0e6, 17.0e6],
                vec![135.0e6, 0.0, 18.0e6],
                vec![17.0e6, 18.0e6, 0.0],
            ],
        };
        EnvironmentSpec {
            servers,
            links,
            weights: CostWeights::default(),
        }
    }
}

/// Task-to-server mapping for one application, indexed by task id.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment(pub Vec<usize>);

impl Assignment {
    pub fn server_of(&self, task: usize) -> usize {
        self.0[task]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_partial(&self) -> Vec<Option<usize>> {
        self.0.iter().map(|&s| Some(s)).collect()
    }
}

/// Min-max normalization clamped to `[0, 1]`. A degenerate range (the
/// quantity cannot vary) normalizes to 0.
pub fn normalize(value: f64, lo: f64, hi: f64) -> f64 {
    let span = hi - lo;
    if !(span > 1e-12 * hi.abs().max(1e-300)) {
        return 0.0;
    }
    ((value - lo) / span).clamp(0.0, 1.0)
}
