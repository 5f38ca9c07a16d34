use std::collections::VecDeque;
use std::sync::{Arc, Mutex, RwLock};

use crate::error::{Error, Result};
use crate::nn::ParameterSet;

/// Snapshots kept for deliberately stale reads.
pub const HISTORY: usize = 32;

/// Immutable published policy.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub version: u64,
    pub params: Arc<ParameterSet>,
    pub config_digest: u64,
}

impl PolicySnapshot {
    pub fn new(params: ParameterSet) -> Self {
        PolicySnapshot {
            version: params.version,
            config_digest: params.config.digest(),
            params: Arc::new(params),
        }
    }
}

/// Where the learner publishes and actors poll. Readers clone an `Arc`
/// under a short read lock; publishing swaps it.
#[derive(Debug)]
pub struct PolicyBoard {
    digest: u64,
    current: RwLock<Arc<PolicySnapshot>>,
    history: Mutex<VecDeque<Arc<PolicySnapshot>>>,
    log: Mutex<Vec<u64>>,
}

impl PolicyBoard {
    pub fn new(initial: PolicySnapshot) -> Self {
        let snap = Arc::new(initial);
        PolicyBoard {
            digest: snap.config_digest,
            current: RwLock::new(snap.clone()),
            history: Mutex::new(VecDeque::from([snap.clone()])),
            log: Mutex::new(vec![snap.version]),
        }
    }

    pub fn latest(&self) -> Arc<PolicySnapshot> {
        self.current.read().expect("policy lock").clone()
    }

    pub fn version(&self) -> u64 {
        self.latest().version
    }

    /// Oldest retained snapshot no more than `lag` versions behind the
    /// latest one.
    pub fn lagged(&self, lag: u64) -> Arc<PolicySnapshot> {
        let history = self.history.lock().expect("policy lock");
        let newest = history.back().expect("never empty").version;
        let floor = newest.saturating_sub(lag);
        history
            .iter()
            .find(|s| s.version >= floor)
            .expect("newest qualifies")
            .clone()
    }

    /// Versions in publication order.
    pub fn log(&self) -> Vec<u64> {
        self.log.lock().expect("policy lock").clone()
    }

    /// Publishes `snapshot`. Versions must strictly increase and the config
    /// must be the one the board was created with.
    pub fn broadcast(&self, snapshot: PolicySnapshot) -> Result<()> {
        if snapshot.config_digest != self.digest
            || snapshot.params.config.digest() != self.digest
        {
            return Err(Error::Validation(format!(
                "snapshot config {:016x} does not match learner config {:016x}",
                snapshot.config_digest, self.digest
            )));
        }
        if snapshot.params.version != snapshot.version {
            return Err(Error::Validation(format!(
                "snapshot claims version {} but parameters are at {}",
                snapshot.version, snapshot.params.version
            )));
        }
        let snap = Arc::new(snapshot);
        let mut current = self.current.write().expect("policy lock");
        if snap.version <= current.version {
            return Err(Error::Precondition(format!(
                "version {} does not advance past {}",
                snap.version, current.version
            )));
        }
        *current = snap.clone();
        let mut history = self.history.lock().expect("policy lock");
        if history.len() == HISTORY {
            history.pop_front();
        }
        history.push_back(snap.clone());
        self.log.lock().expect("policy lock").push(snap.version);
        Ok(())
    }
}

/// Publishes a snapshot to every actor polling `board`.
pub fn broadcast_policy(board: &PolicyBoard, snapshot: PolicySnapshot) -> Result<()> {
    board.broadcast(snapshot)
}
