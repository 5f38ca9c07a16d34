//! Proportional prioritized experience replay.
//!
//! Entries are drawn with probability `m^alpha / sum_i m_i^alpha` and carry
//! importance weights `(N P(x))^-beta`, normalized by the largest weight in
//! the drawn batch.

mod sum_tree;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use sum_tree::SumTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerConfig {
    pub alpha: f64,
    pub beta0: f64,
    pub epsilon: f64,
    pub capacity: usize,
}

impl Default for PerConfig {
    fn default() -> Self {
        PerConfig {
            alpha: 0.6,
            beta0: 0.4,
            epsilon: 1e-6,
            capacity: 1024,
        }
    }
}

impl PerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Parameter(format!(
                "alpha {} must be >= 0",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.beta0) {
            return Err(Error::Parameter(format!(
                "beta0 {} outside [0, 1]",
                self.beta0
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Parameter("epsilon must be positive".into()));
        }
        if self.capacity == 0 {
            return Err(Error::Parameter("capacity must be positive".into()));
        }
        Ok(())
    }
}

/// Linear anneal of the importance exponent from `beta0` to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSchedule {
    pub beta0: f64,
    pub total_iterations: usize,
}

impl BetaSchedule {
    pub fn at(&self, iteration: usize) -> f64 {
        if self.total_iterations <= 1 {
            return 1.0;
        }
        let frac = (iteration as f64 / (self.total_iterations - 1) as f64).min(1.0);
        (self.beta0 + (1.0 - self.beta0) * frac).min(1.0)
    }
}

/// Stable handle on a buffer slot; goes stale once the slot is overwritten.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleIndex {
    pub slot: usize,
    pub seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateOutcome {
    Applied,
    /// The slot was evicted since the index was handed out.
    Stale,
}

#[derive(Debug)]
pub struct Sampled<'a, T> {
    pub index: SampleIndex,
    pub item: &'a T,
    pub probability: f64,
    pub weight: f64,
}

#[derive(Debug, Clone)]
struct Entry<T> {
    item: T,
    priority: f64,
    seq: u64,
}

/// Fixed-capacity FIFO buffer with proportional sampling.
#[derive(Debug, Clone)]
pub struct PrioritizedBuffer<T> {
    epsilon: f64,
    capacity: usize,
    alpha: f64,
    slots: Vec<Option<Entry<T>>>,
    cursor: usize,
    len: usize,
    next_seq: u64,
    tree: SumTree,
}

impl<T> PrioritizedBuffer<T> {
    pub fn new(config: &PerConfig) -> Result<Self> {
        config.validate()?;
        Ok(PrioritizedBuffer {
            epsilon: config.epsilon,
            capacity: config.capacity,
            alpha: config.alpha,
            slots: (0..config.capacity).map(|_| None).collect(),
            cursor: 0,
            len: 0,
            next_seq: 0,
            tree: SumTree::new(config.capacity),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
        self.tree.clear();
        self.cursor = 0;
        self.len = 0;
    }

    /// Stores `item` with priority `|td_error| + epsilon`, evicting the
    /// oldest entry when full.
    pub fn push(&mut self, item: T, td_error: f64) -> SampleIndex {
        let priority = td_error.abs() + self.epsilon;
        self.insert(item, priority)
    }

    /// Stores `item` with an already computed priority, floored at epsilon.
    pub fn push_priority(&mut self, item: T, priority: f64) -> SampleIndex {
        let priority = priority.abs().max(self.epsilon);
        self.insert(item, priority)
    }

    fn insert(&mut self, item: T, priority: f64) -> SampleIndex {
        let slot = self.cursor;
        let seq = self.next_seq;
        self.next_seq += 1;
        if self.slots[slot].is_none() {
            self.len += 1;
        }
        self.slots[slot] = Some(Entry {
            item,
            priority,
            seq,
        });
        self.tree.set(slot, priority.powf(self.alpha));
        self.cursor = (self.cursor + 1) % self.capacity;
        SampleIndex { slot, seq }
    }

    fn live(&self, index: SampleIndex) -> Option<&Entry<T>> {
        self.slots
            .get(index.slot)
            .and_then(Option::as_ref)
            .filter(|e| e.seq == index.seq)
    }

    pub fn get(&self, index: SampleIndex) -> Option<&T> {
        self.live(index).map(|e| &e.item)
    }

    pub fn priority(&self, index: SampleIndex) -> Option<f64> {
        self.live(index).map(|e| e.priority)
    }

    /// Live entries, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = (SampleIndex, &T, f64)> {
        let start = if self.len < self.capacity {
            0
        } else {
            self.cursor
        };
        (0..self.capacity)
            .map(move |k| (start + k) % self.capacity)
            .filter_map(move |slot| {
                self.slots[slot]
                    .as_ref()
                    .map(|e| (SampleIndex { slot, seq: e.seq }, &e.item, e.priority))
            })
    }

    /// Sets a new priority (floored at epsilon). Stale indices are ignored.
    pub fn update_priority(&mut self, index: SampleIndex, new_priority: f64) -> UpdateOutcome {
        let epsilon = self.epsilon;
        let alpha = self.alpha;
        match self.slots.get_mut(index.slot).and_then(Option::as_mut) {
            Some(e) if e.seq == index.seq => {
                let p = if new_priority.is_finite() {
                    new_priority.abs().max(epsilon)
                } else {
                    epsilon
                };
                e.priority = p;
                self.tree.set(index.slot, p.powf(alpha));
                UpdateOutcome::Applied
            }
            _ => {
                log::debug!("ignoring priority update for stale slot {}", index.slot);
                UpdateOutcome::Stale
            }
        }
    }

    fn set_alpha(&mut self, alpha: f64) {
        if alpha == self.alpha {
            return;
        }
        self.alpha = alpha;
        for slot in 0..self.capacity {
            let v = self.slots[slot]
                .as_ref()
                .map_or(0.0, |e| e.priority.powf(alpha));
            self.tree.set(slot, v);
        }
    }

    /// Sampling probability of a live entry under the current alpha.
    pub fn probability(&self, index: SampleIndex) -> Option<f64> {
        self.live(index)
            .map(|_| self.tree.get(index.slot) / self.tree.total())
    }

    /// Draws `count` entries with replacement.
    pub fn sample<R: Rng + ?Sized>(
        &mut self,
        count: usize,
        alpha: f64,
        beta: f64,
        rng: &mut R,
    ) -> Result<Vec<Sampled<'_, T>>> {
        if self.len == 0 {
            return Err(Error::EmptyBuffer);
        }
        if !(alpha >= 0.0) {
            return Err(Error::Parameter(format!("alpha {alpha} must be >= 0")));
        }
        self.set_alpha(alpha);
        let picks = self.draw_slots(count, rng);
        Ok(self.weigh(picks, beta))
    }

    pub(crate) fn draw_slots<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        let total = self.tree.total();
        (0..count)
            .map(|_| self.tree.find(rng.random::<f64>() * total))
            .collect()
    }

    pub(crate) fn weigh(&self, picks: Vec<usize>, beta: f64) -> Vec<Sampled<'_, T>> {
        let total = self.tree.total();
        let n = self.len as f64;
        let mut out: Vec<Sampled<'_, T>> = picks
            .into_iter()
            .map(|slot| {
                let e = self.slots[slot].as_ref().expect("sampled slot is live");
                let probability = self.tree.get(slot) / total;
                Sampled {
                    index: SampleIndex { slot, seq: e.seq },
                    item: &e.item,
                    probability,
                    weight: (n * probability).powf(-beta),
                }
            })
            .collect();
        let max = out.iter().map(|s| s.weight).fold(0.0f64, f64::max);
        for s in &mut out {
            s.weight /= max;
        }
        out
    }

    /// One draw, returning the index and its importance weight before batch
    /// normalization.
    pub fn sample_one<R: Rng + ?Sized>(
        &self,
        beta: f64,
        rng: &mut R,
    ) -> Result<(SampleIndex, f64, f64)> {
        if self.len == 0 {
            return Err(Error::EmptyBuffer);
        }
        let slot = self.draw_slots(1, rng)[0];
        let e = self.slots[slot].as_ref().expect("sampled slot is live");
        let probability = self.tree.get(slot) / self.tree.total();
        let raw_weight = (self.len as f64 * probability).powf(-beta);
        Ok((SampleIndex { slot, seq: e.seq }, probability, raw_weight))
    }
}
