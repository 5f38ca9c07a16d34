//! Edge/cloud scheduling of DAG applications with a distributed
//! actor-learner trainer.

pub mod agent;
pub mod envsim;
pub mod error;
pub mod eval;
pub mod mdp;
pub mod nn;
pub mod replay;
pub mod runtime;
pub mod vtrace;
pub mod workload;

pub use error::{Error, Result};
