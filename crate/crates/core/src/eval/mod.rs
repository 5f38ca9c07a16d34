//! Evaluation and analysis: baseline schedulers, emissions, speedup and
//! run reports.

mod baseline;
mod ghe;
mod report;
mod speedup;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use baseline::{baseline_schedule, BaselineKind, BaselineResult, ORACLE_MAX_SERVERS, ORACLE_MAX_TASKS};
pub use ghe::{ghe, EmissionMix, EmissionSource};
pub use report::{report, t_interval, ConfidenceInterval, ReportOptions, ReportSummary, RunReport, SCO_FILE};
pub use speedup::{first_crossing, speedup, Speedup};

use crate::agent::{schedule_workload, window_at};
use crate::envsim::{app_costs, Assignment, EnvironmentSpec};
use crate::error::Result;
use crate::mdp::{MdpConfig, SchedulingEnv, StateVector};
use crate::nn::{self, ParameterSet};
use crate::runtime::TrajectoryEnvelope;
use crate::workload::WorkloadTrace;

/// Mean application costs of a greedy pass over a workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyEvaluation {
    /// Means over applications that were placed without failure.
    pub response_time: f64,
    pub energy: f64,
    pub monetary: f64,
    /// Mean over all applications; a failed application counts as 1.
    pub weighted: f64,
    pub apps: usize,
    pub failures: usize,
}

/// Schedules every application once with the greedy policy.
pub fn evaluate_policy(
    params: &ParameterSet,
    env: &EnvironmentSpec,
    workload: &WorkloadTrace,
    mdp: MdpConfig,
) -> Result<PolicyEvaluation> {
    let mut sim = SchedulingEnv::new(env.clone(), workload.clone(), mdp)?;
    let records = schedule_workload(params, &mut sim)?;
    let (mut t, mut e, mut f, mut j) = (0.0, 0.0, 0.0, 0.0);
    let mut failures = 0;
    for rec in &records {
        if rec.failures() > 0 {
            failures += 1;
            j += 1.0;
            continue;
        }
        let assignment = Assignment(rec.placement.iter().map(|s| s.expect("placed")).collect());
        let c = app_costs(&workload.apps[rec.app], &assignment, env)?;
        t += c.response_time;
        e += c.energy;
        f += c.monetary;
        j += c.weighted;
    }
    let ok = (records.len() - failures).max(1) as f64;
    Ok(PolicyEvaluation {
        response_time: t / ok,
        energy: e / ok,
        monetary: f / ok,
        weighted: j / records.len() as f64,
        apps: records.len(),
        failures,
    })
}

/// Scheduling overhead: each sample times `steps` scheduling decisions
/// (policy inference plus envelope construction, no learning) and reports
/// the mean seconds per decision.
pub fn measure_sco(
    params: &ParameterSet,
    env: &EnvironmentSpec,
    workload: &WorkloadTrace,
    mdp: MdpConfig,
    samples: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut sim = SchedulingEnv::new(env.clone(), workload.clone(), mdp)?;
    let k = params.config.context_window;
    let mut out = Vec::with_capacity(samples);
    for _ in 0..samples {
        let mut states: Vec<StateVector> = Vec::with_capacity(steps + 1);
        let started = Instant::now();
        let mut transitions = Vec::with_capacity(steps);
        for t in 0..steps {
            let obs = sim.observe();
            states.push(obs.state.clone());
            let refs: Vec<&StateVector> = states.iter().collect();
            let mask = if obs.mask.iter().any(|&m| m) {
                obs.mask.clone()
            } else {
                vec![true; obs.mask.len()]
            };
            let fwd = nn::forward(params, &window_at(&refs, t, k), &mask)?;
            let action = crate::agent::greedy_action(&fwd.probs);
            let step = sim.step(action)?;
            transitions.push(crate::mdp::Transition {
                state: obs.state,
                mask,
                action,
                reward: step.reward,
                behavior_prob: fwd.probs[action],
                next_state: sim.observe().state,
                priority: 1.0,
                done: step.workload_done,
            });
        }
        let traj = crate::mdp::Trajectory {
            transitions,
            policy_version: params.version,
        };
        let envelope = TrajectoryEnvelope::seal(0, 0, traj)?;
        let elapsed = started.elapsed().as_secs_f64();
        std::hint::black_box(envelope);
        out.push(elapsed / steps as f64);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::NetworkConfig;

    #[test]
    fn evaluation_counts_every_app() {
        let env = EnvironmentSpec::desk();
        let w = WorkloadTrace::presets(480);
        let cfg = NetworkConfig::desk(crate::mdp::state_dim(env.len()), env.len());
        let p = ParameterSet::init(&cfg, 3).unwrap();
        let e = evaluate_policy(&p, &env, &w, MdpConfig::default()).unwrap();
        assert_eq!(e.apps, 4);
        assert!((0.0..=1.0).contains(&e.weighted));
        let again = evaluate_policy(&p, &env, &w, MdpConfig::default()).unwrap();
        assert_eq!(e, again);
        let sco = measure_sco(&p, &env, &w, MdpConfig::default(), 3, 10).unwrap();
        assert_eq!(sco.len(), 3);
        assert!(sco.iter().all(|&s| s > 0.0 && s.is_finite()));
    }
}
