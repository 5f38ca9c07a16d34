//! Actor experience generation and the learner's update step.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{AppRecord, SchedulingEnv, StateVector, Trajectory, Transition};
use crate::nn::{self, adam_step, AdamState, LossReport, LossSample, ParameterSet};
use crate::replay::{BetaSchedule, PerConfig, PrioritizedBuffer};
use crate::vtrace::{vtrace_with_discounts, VTraceConfig, VTraceResult};

pub use crate::nn::LossWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    /// Trajectory length n.
    pub n: usize,
    /// Start-index draws per trajectory, X.
    pub draws: usize,
    /// Trajectories consumed per iteration.
    pub batch: usize,
    pub lr: f64,
    /// When set, the step size falls linearly from `lr` to this value over
    /// `total_iterations` and stays there.
    #[serde(default)]
    pub lr_final: Option<f64>,
    pub vtrace: VTraceConfig,
    pub per: PerConfig,
    pub loss: LossWeights,
    /// Iterations over which the importance exponent anneals to 1 and the
    /// step size to `lr_final`.
    pub total_iterations: usize,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            n: 16,
            draws: 8,
            batch: 4,
            lr: 0.001,
            lr_final: None,
            vtrace: VTraceConfig::default(),
            per: PerConfig::default(),
            loss: LossWeights::default(),
            total_iterations: 200,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.draws == 0 || self.batch == 0 {
            return Err(Error::Parameter("n, draws and batch must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Parameter(format!("learning rate {} is invalid", self.lr)));
        }
        if let Some(f) = self.lr_final {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::Parameter(format!("final learning rate {f} is invalid")));
            }
        }
        self.vtrace.validate()?;
        self.per.validate()?;
        self.loss.validate()
    }

    pub fn gamma(&self) -> f64 {
        self.vtrace.gamma
    }
}

/// States `s_{t-K+1} ..= s_t` restricted to the given slice.
pub fn window_at(states: &[&StateVector], t: usize, k: usize) -> Vec<Vec<f64>> {
    let start = (t + 1).saturating_sub(k);
    states[start..=t].iter().map(|s| s.features.clone()).collect()
}

/// Samples from the masked policy; an all-false mask falls back to a
/// uniform draw over every action.
pub fn sample_action(probs: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = a;
            if u < acc {
                return a;
            }
        }
    }
    last
}

pub fn greedy_action(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (a, &p)| if p > best.1 { (a, p) } else { best })
        .0
}

struct Decision {
    action: usize,
    prob: f64,
    value: f64,
    mask: Vec<bool>,
}

fn decide(
    params: &ParameterSet,
    window: &[Vec<f64>],
    mask: &[bool],
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Decision> {
    if mask.iter().any(|&m| m) {
        let out = nn::forward(params, window, mask)?;
        let action = match rng {
            Some(r) => sample_action(&out.probs, r),
            None => greedy_action(&out.probs),
        };
        Ok(Decision {
            action,
            prob: out.probs[action],
            value: out.value,
            mask: mask.to_vec(),
        })
    } else {
        // nothing fits: the step fails whatever is chosen
        let all = vec![true; mask.len()];
        let out = nn::forward(params, window, &all)?;
        let n = mask.len();
        let action = match rng {
            Some(r) => r.random_range(0..n),
            None => 0,
        };
        Ok(Decision {
            action,
            prob: 1.0 / n as f64,
            value: out.value,
            mask: all,
        })
    }
}

/// Rolls out exactly `n` steps with the behavior policy `params`. Running
/// past the end of the workload wraps to its first application and marks
/// the boundary step as `done`.
pub fn actor_episode(
    sim: &mut SchedulingEnv,
    params: &ParameterSet,
    n: usize,
    gamma: f64,
    epsilon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Trajectory> {
    if n == 0 {
        return Err(Error::Parameter("trajectory length must be >= 1".into()));
    }
    let k = params.config.context_window;
    let mut states: Vec<StateVector> = vec![sim.observe().state];
    let mut steps = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n + 1);
    for t in 0..n {
        let obs = sim.observe();
        let refs: Vec<&StateVector> = states.iter().collect();
        let d = decide(params, &window_at(&refs, t, k), &obs.mask, Some(rng))?;
        let r = sim.step(d.action)?;
        values.push(d.value);
        states.push(sim.observe().state);
        steps.push((d, r.reward, r.workload_done));
    }
    let refs: Vec<&StateVector> = states.iter().collect();
    values.push(nn::forward(params, &window_at(&refs, n, k), &vec![true; sim.action_count()])?.value);
    let transitions = steps
        .into_iter()
        .enumerate()
        .map(|(t, (d, reward, done))| {
            let discount = if done { 0.0 } else { gamma };
            let td = reward + discount * values[t + 1] - values[t];
            Transition {
                state: states[t].clone(),
                mask: d.mask,
                action: d.action,
                reward,
                behavior_prob: d.prob,
                next_state: states[t + 1].clone(),
                priority: td.abs() + epsilon,
                done,
            }
        })
        .collect();
    Ok(Trajectory {
        transitions,
        policy_version: params.version,
    })
}

/// Current-policy evaluation of a trajectory.
pub struct TrajectoryEval {
    pub values: Vec<f64>,
    pub bootstrap: f64,
    pub target_probs: Vec<f64>,
    pub vtrace: VTraceResult,
}

pub fn evaluate_trajectory(
    params: &ParameterSet,
    traj: &Trajectory,
    vt: &VTraceConfig,
) -> Result<TrajectoryEval> {
    if traj.is_empty() {
        return Err(Error::Precondition("empty trajectory".into()));
    }
    let k = params.config.context_window;
    let states = traj.states();
    let n = traj.len();
    let mut values = Vec::with_capacity(n);
    let mut target_probs = Vec::with_capacity(n);
    for (t, tr) in traj.transitions.iter().enumerate() {
        let out = nn::forward(params, &window_at(&states, t, k), &tr.mask)?;
        values.push(out.value);
        target_probs.push(out.probs[tr.action]);
    }
    let all = vec![true; params.config.action_count];
    let bootstrap = nn::forward(params, &window_at(&states, n, k), &all)?.value;
    let rewards: Vec<f64> = traj.transitions.iter().map(|t| t.reward).collect();
    let behavior: Vec<f64> = traj.transitions.iter().map(|t| t.behavior_prob).collect();
    let discounts: Vec<f64> = traj
        .transitions
        .iter()
        .map(|t| if t.done { 0.0 } else { vt.gamma })
        .collect();
    // a step the current policy cannot take still needs a positive ratio
    let pi: Vec<f64> = target_probs.iter().map(|&p| p.max(f64::MIN_POSITIVE)).collect();
    let vtrace = vtrace_with_discounts(&rewards, &values, bootstrap, &pi, &behavior, &discounts, vt)?;
    Ok(TrajectoryEval {
        values,
        bootstrap,
        target_probs,
        vtrace,
    })
}

/// Loss terms for the drawn start indices plus the TD errors used to
/// refresh their priorities.
pub struct Losses {
    pub report: LossReport,
    pub samples: Vec<LossSample>,
    pub deltas: Vec<f64>,
}

pub fn build_samples(
    params: &ParameterSet,
    traj: &Trajectory,
    eval: &TrajectoryEval,
    draws: &[(usize, f64)],
) -> (Vec<LossSample>, Vec<f64>) {
    let k = params.config.context_window;
    let states = traj.states();
    draws
        .iter()
        .map(|&(x, w)| {
            let tr = &traj.transitions[x];
            let sample = LossSample {
                window: window_at(&states, x, k),
                mask: tr.mask.clone(),
                action: tr.action,
                value_target: eval.vtrace.targets[x],
                advantage: eval.vtrace.pg_advantage[x],
                rho: eval.vtrace.rho[x],
                is_weight: w,
            };
            (sample, eval.vtrace.delta[x])
        })
        .unzip()
}

/// Losses at start indices `draws` (index, IS weight) of one trajectory.
pub fn compute_losses(
    params: &ParameterSet,
    traj: &Trajectory,
    draws: &[(usize, f64)],
    weights: &LossWeights,
    vt: &VTraceConfig,
) -> Result<Losses> {
    let eval = evaluate_trajectory(params, traj, vt)?;
    let (samples, deltas) = build_samples(params, traj, &eval, draws);
    let report = nn::loss_only(params, &samples, weights)?;
    Ok(Losses {
        report,
        samples,
        deltas,
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateMetrics {
    pub iteration: usize,
    pub version: u64,
    pub trajectories: usize,
    pub mean_reward: f64,
    /// Per-sample means of the loss terms.
    pub loss_value: f64,
    pub loss_policy: f64,
    pub loss_entropy: f64,
    pub loss_total: f64,
    pub max_version_lag: u64,
}

/// Diagnostics of one trajectory's prioritized pass.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPass {
    pub drawn: Vec<usize>,
    pub deltas: Vec<f64>,
    /// Priorities after the pass, by step.
    pub priorities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateReport {
    pub metrics: UpdateMetrics,
    pub passes: Vec<TrajectoryPass>,
}

/// Single parameter owner; publishes one new version per update.
#[derive(Debug, Clone)]
pub struct Learner {
    pub params: ParameterSet,
    pub adam: AdamState,
    pub config: LearnerConfig,
    pub iteration: usize,
}

impl Learner {
    pub fn new(params: ParameterSet, config: LearnerConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(params.len());
        Ok(Learner {
            params,
            adam,
            config,
            iteration: 0,
        })
    }

    pub fn beta(&self) -> f64 {
        BetaSchedule {
            beta0: self.config.per.beta0,
            total_iterations: self.config.total_iterations,
        }
        .at(self.iteration)
    }

    pub fn lr(&self) -> f64 {
        let cfg = &self.config;
        match cfg.lr_final {
            Some(end) if cfg.total_iterations > 0 => {
                let frac = (self.iteration as f64 / cfg.total_iterations as f64).min(1.0);
                cfg.lr + (end - cfg.lr) * frac
            }
            _ => cfg.lr,
        }
    }

    /// One iteration over `batch`. On error nothing is committed.
    pub fn update(&mut self, batch: &[Trajectory], rng: &mut ChaCha8Rng) -> Result<UpdateReport> {
        if batch.is_empty() {
            return Err(Error::Precondition("learner batch is empty".into()));
        }
        let mut params = self.params.clone();
        let mut adam = self.adam.clone();
        let cfg = self.config;
        let beta = self.beta();
        let lr = self.lr();
        let mut totals = LossReport::default();
        let mut passes = Vec::with_capacity(batch.len());
        let mut reward_sum = 0.0;
        let mut steps = 0usize;
        let mut max_lag = 0;
        for traj in batch {
            if traj.is_empty() {
                return Err(Error::Precondition("empty trajectory in batch".into()));
            }
            max_lag = max_lag.max(params.version.saturating_sub(traj.policy_version));
            reward_sum += traj.transitions.iter().map(|t| t.reward).sum::<f64>();
            steps += traj.len();
            let eval = evaluate_trajectory(&params, traj, &cfg.vtrace)?;
            let per = PerConfig {
                capacity: traj.len(),
                ..cfg.per
            };
            let mut buffer: PrioritizedBuffer<usize> = PrioritizedBuffer::new(&per)?;
            let handles: Vec<_> = traj
                .transitions
                .iter()
                .enumerate()
                .map(|(t, tr)| buffer.push_priority(t, tr.priority))
                .collect();
            let mut draws = Vec::with_capacity(cfg.draws);
            for _ in 0..cfg.draws {
                let mut picked = buffer.sample(1, cfg.per.alpha, beta, rng)?;
                let s = picked.pop().expect("one draw");
                let x = *s.item;
                let raw = (traj.len() as f64 * s.probability).powf(-beta);
                buffer.update_priority(handles[x], eval.vtrace.delta[x].abs());
                draws.push((x, raw));
            }
            let max_w = draws.iter().map(|d| d.1).fold(0.0f64, f64::max);
            for d in &mut draws {
                d.1 /= max_w;
            }
            let (samples, deltas) = build_samples(&params, traj, &eval, &draws);
            let g = nn::gradients(&params, &samples, &cfg.loss)?;
            adam_step(&mut params.values, &g.grads, &mut adam, lr)?;
            params.check_finite()?;
            totals.value += g.report.value;
            totals.policy += g.report.policy;
            totals.entropy += g.report.entropy;
            totals.total += g.report.total;
            totals.samples += g.report.samples;
            passes.push(TrajectoryPass {
                drawn: draws.iter().map(|d| d.0).collect(),
                deltas,
                priorities: handles
                    .iter()
                    .map(|&h| buffer.priority(h).expect("live"))
                    .collect(),
            });
        }
        params.version += 1;
        self.params = params;
        self.adam = adam;
        let metrics = UpdateMetrics {
            iteration: self.iteration,
            version: self.params.version,
            trajectories: batch.len(),
            mean_reward: reward_sum / steps as f64,
            loss_value: totals.value / totals.samples as f64,
            loss_policy: totals.policy / totals.samples as f64,
            loss_entropy: totals.entropy / totals.samples as f64,
            loss_total: totals.total / totals.samples as f64,
            max_version_lag: max_lag,
        };
        self.iteration += 1;
        Ok(UpdateReport { metrics, passes })
    }
}

/// Schedules every application of the simulator's workload once, greedily,
/// carrying a rolling window of recent states.
pub fn schedule_workload(params: &ParameterSet, sim: &mut SchedulingEnv) -> Result<Vec<AppRecord>> {
    sim.reset();
    let k = params.config.context_window;
    let mut window: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut records = Vec::new();
    loop {
        let obs = sim.observe();
        if window.len() == k {
            window.remove(0);
        }
        window.push(obs.state.features);
        let d = decide(params, &window, &obs.mask, None)?;
        let r = sim.step(d.action)?;
        if let Some(rec) = r.completed {
            records.push(rec);
        }
        if r.workload_done {
            return Ok(records);
        }
    }
}
