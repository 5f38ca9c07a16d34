//! Actor/learner orchestration: actors roll out trajectories under the
//! latest published policy, the learner consumes them in batches and
//! publishes new snapshots.
//!
//! Production is gated by permits. The learner grants one permit per
//! trajectory it intends to consume, so every submitted envelope has a
//! consumer and a clean shutdown loses nothing.

mod envelope;
mod policy;

use std::collections::HashSet;
use std::fs::{self, File};
use std::io::BufWriter;
use std::net::{TcpListener, TcpStream};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, SyncSender};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use envelope::{envelope_id, read_frame, write_frame, TrajectoryEnvelope, MAX_FRAME};
pub use policy::{broadcast_policy, PolicyBoard, PolicySnapshot, HISTORY};

use crate::agent::{actor_episode, Learner, LearnerConfig, UpdateMetrics};
use crate::envsim::EnvironmentSpec;
use crate::error::{Error, Result};
use crate::eval::{evaluate_policy, PolicyEvaluation};
use crate::mdp::{MdpConfig, RewardMode, SchedulingEnv};
use crate::nn::{write_checkpoint, NetworkConfig, ParameterSet};
use crate::vtrace::VTraceConfig;
use crate::workload::WorkloadTrace;

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.csv";

/// How envelopes travel from actors to the learner.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransportMode {
    /// Bounded in-process FIFO.
    #[default]
    InProcess,
    /// Length-prefixed frames over loopback TCP, one connection per actor.
    Tcp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuntimeConfig {
    pub actors: usize,
    /// Capacity of the envelope queue; actors block when it is full.
    pub queue_depth: usize,
    /// Envelopes the learner waits for before updating. `None` means the
    /// learner batch size.
    pub min_batch: Option<usize>,
    /// Envelopes lagging more than this many versions are dropped and
    /// regenerated. `None` means `queue_depth + 1`.
    pub max_lag: Option<u64>,
    /// Test mode: actors act with a snapshot up to this many versions old,
    /// chosen at random per trajectory. Disables the lag guard.
    pub forced_staleness: Option<u64>,
    pub transport: TransportMode,
    /// Loopback port for the TCP transport; 0 picks a free one.
    pub port: u16,
    /// Also checkpoint every this many iterations; 0 writes only at the end.
    pub checkpoint_every: usize,
    /// Greedy evaluation every this many iterations; 0 disables it.
    pub eval_every: usize,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        RuntimeConfig {
            actors: 1,
            queue_depth: 8,
            min_batch: None,
            max_lag: None,
            forced_staleness: None,
            transport: TransportMode::InProcess,
            port: 0,
            checkpoint_every: 0,
            eval_every: 0,
        }
    }
}

/// Everything a training run needs besides the environment and workload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub seed: u64,
    pub iterations: usize,
    /// Defaults to the desk-scale network sized for the environment.
    pub network: Option<NetworkConfig>,
    pub mdp: MdpConfig,
    pub learner: LearnerConfig,
    pub runtime: RuntimeConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            seed: 0,
            iterations: 200,
            network: None,
            mdp: MdpConfig::default(),
            learner: LearnerConfig::default(),
            runtime: RuntimeConfig::default(),
        }
    }
}

impl TrainingConfig {
    /// Settings that train reliably on the desk scenario: rewards that sum
    /// to the application cost, a shorter horizon so credit stays within a
    /// few applications, and a step size annealed to zero so late stale
    /// batches cannot knock the policy off.
    pub fn desk() -> Self {
        TrainingConfig {
            mdp: MdpConfig {
                reward_mode: RewardMode::AppIncrement,
                ..MdpConfig::default()
            },
            learner: LearnerConfig {
                vtrace: VTraceConfig {
                    gamma: 0.7,
                    ..VTraceConfig::default()
                },
                lr_final: Some(0.0),
                ..LearnerConfig::default()
            },
            ..TrainingConfig::default()
        }
    }

    /// Parses a config; fields it leaves out keep their [`Self::desk`]
    /// values, at any nesting depth.
    pub fn from_json(text: &str) -> Result<Self> {
        let overrides: serde_json::Value = serde_json::from_str(text)?;
        let mut merged = serde_json::to_value(Self::desk())?;
        merge(&mut merged, overrides);
        Ok(serde_json::from_value(merged)?)
    }

    pub fn network_for(&self, env: &EnvironmentSpec) -> Result<NetworkConfig> {
        let input = crate::mdp::state_dim(env.len());
        let cfg = match &self.network {
            Some(n) => n.clone(),
            None => NetworkConfig::desk(input, env.len()),
        };
        if cfg.input_dim != input || cfg.action_count != env.len() {
            return Err(Error::Shape(format!(
                "network expects {} inputs and {} actions, environment gives {input} and {}",
                cfg.input_dim,
                cfg.action_count,
                env.len()
            )));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let rt = &self.runtime;
        if rt.actors == 0 {
            return Err(Error::Parameter("at least one actor is required".into()));
        }
        if rt.queue_depth == 0 {
            return Err(Error::Parameter("queue depth must be >= 1".into()));
        }
        if let Some(m) = rt.min_batch {
            if m == 0 || m > self.learner.batch {
                return Err(Error::Parameter(format!(
                    "min_batch {m} must be in 1..={}",
                    self.learner.batch
                )));
            }
        }
        if let Some(s) = rt.forced_staleness {
            if s as usize >= HISTORY {
                return Err(Error::Parameter(format!(
                    "forced staleness {s} exceeds retained history {}",
                    HISTORY - 1
                )));
            }
        }
        self.learner.validate()
    }
}

fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Optional extras for a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Directory for checkpoints, the config sidecar and metrics.
    pub out_dir: Option<PathBuf>,
    /// Workload for the periodic greedy evaluation.
    pub eval_workload: Option<WorkloadTrace>,
    /// Makes `actor` panic while producing its `seq`-th trajectory. Used to
    /// exercise restarts.
    pub inject_actor_panic: Option<(usize, u64)>,
}

/// One learner iteration as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: usize,
    pub version: u64,
    pub trajectories: usize,
    pub mean_reward: f64,
    pub loss_value: f64,
    pub loss_policy: f64,
    pub loss_entropy: f64,
    pub loss_total: f64,
    pub max_version_lag: u64,
    pub wall_clock_s: f64,
    pub eval_t: Option<f64>,
    pub eval_e: Option<f64>,
    pub eval_f: Option<f64>,
    pub eval_j: Option<f64>,
}

impl MetricsRow {
    fn new(m: &UpdateMetrics, wall: f64, eval: Option<&PolicyEvaluation>) -> Self {
        MetricsRow {
            iteration: m.iteration,
            version: m.version,
            trajectories: m.trajectories,
            mean_reward: m.mean_reward,
            loss_value: m.loss_value,
            loss_policy: m.loss_policy,
            loss_entropy: m.loss_entropy,
            loss_total: m.loss_total,
            max_version_lag: m.max_version_lag,
            wall_clock_s: wall,
            eval_t: eval.map(|e| e.response_time),
            eval_e: eval.map(|e| e.energy),
            eval_f: eval.map(|e| e.monetary),
            eval_j: eval.map(|e| e.weighted),
        }
    }
}

/// Envelope accounting for a finished run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RuntimeStats {
    pub submitted: usize,
    pub consumed: usize,
    pub stale_dropped: usize,
    pub duplicates: usize,
    pub corrupt: usize,
    /// Envelopes accepted into the queue but never consumed.
    pub lost: usize,
    pub actor_restarts: usize,
}

/// Audit record of one consumed envelope.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsumedEnvelope {
    pub iteration: usize,
    pub id: u64,
    pub actor: usize,
    pub policy_version: u64,
    /// Learner version when the envelope was consumed.
    pub learner_version: u64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome {
    pub params: ParameterSet,
    pub metrics: Vec<MetricsRow>,
    pub stats: RuntimeStats,
    pub consumed: Vec<ConsumedEnvelope>,
    /// Every version published, in order.
    pub broadcasts: Vec<u64>,
    pub checkpoint: Option<PathBuf>,
    pub metrics_path: Option<PathBuf>,
}

/// Trajectory production allowance shared by actors and the learner.
#[derive(Default)]
struct Permits {
    state: Mutex<(usize, bool)>,
    ready: Condvar,
}

impl Permits {
    fn grant(&self, n: usize) {
        if n > 0 {
            self.state.lock().expect("permit lock").0 += n;
            self.ready.notify_all();
        }
    }

    /// Blocks for a permit; `false` once closed.
    fn acquire(&self) -> bool {
        let mut s = self.state.lock().expect("permit lock");
        loop {
            if s.1 {
                return false;
            }
            if s.0 > 0 {
                s.0 -= 1;
                return true;
            }
            s = self.ready.wait(s).expect("permit lock");
        }
    }

    fn close(&self) {
        self.state.lock().expect("permit lock").1 = true;
        self.ready.notify_all();
    }
}

enum Delivery {
    Envelope(TrajectoryEnvelope),
    /// A frame arrived but could not be decoded; its permit is void.
    Rejected(String),
}

enum Link {
    Local(SyncSender<Delivery>),
    Wire(BufWriter<TcpStream>),
}

impl Link {
    fn send(&mut self, envelope: TrajectoryEnvelope) -> Result<()> {
        match self {
            Link::Local(tx) => tx
                .send(Delivery::Envelope(envelope))
                .map_err(|_| Error::TransportClosed),
            Link::Wire(w) => write_frame(w, &envelope),
        }
    }
}

struct Shared {
    board: PolicyBoard,
    permits: Permits,
    submitted: AtomicUsize,
    restarts: AtomicUsize,
    alive: AtomicUsize,
}

struct ActorSpec {
    id: usize,
    seed: u64,
    env: EnvironmentSpec,
    workload: WorkloadTrace,
    mdp: MdpConfig,
    n: usize,
    gamma: f64,
    epsilon: f64,
    forced_staleness: Option<u64>,
    panic_at: Option<u64>,
}

/// Seed for actor `actor` after `restarts` restarts.
fn actor_seed(seed: u64, actor: usize, restarts: u64) -> u64 {
    seed ^ 0xA5A5_0000_0000_0000 ^ ((actor as u64) << 32) ^ restarts.wrapping_mul(0x9E37_79B9)
}

fn run_actor(spec: ActorSpec, shared: Arc<Shared>, mut link: Link) {
    let fresh_sim = |restarts: u64| -> Result<(SchedulingEnv, ChaCha8Rng)> {
        let mut sim = SchedulingEnv::new(spec.env.clone(), spec.workload.clone(), spec.mdp)?;
        sim.start_app(spec.id % spec.workload.apps.len())?;
        let rng = ChaCha8Rng::seed_from_u64(actor_seed(spec.seed, spec.id, restarts));
        Ok((sim, rng))
    };
    let mut restarts = 0u64;
    let Ok((mut sim, mut rng)) = fresh_sim(0) else {
        log::error!("actor {} could not build its simulator", spec.id);
        shared.alive.fetch_sub(1, Ordering::SeqCst);
        return;
    };
    let mut seq = 0u64;
    while shared.permits.acquire() {
        let attempt = panic::catch_unwind(AssertUnwindSafe(|| -> Result<TrajectoryEnvelope> {
            if spec.panic_at == Some(seq) && restarts == 0 {
                panic!("injected fault in actor {}", spec.id);
            }
            let snap = match spec.forced_staleness {
                Some(max) => shared.board.lagged(rng.random_range(0..=max)),
                None => shared.board.latest(),
            };
            let traj = actor_episode(&mut sim, &snap.params, spec.n, spec.gamma, spec.epsilon, &mut rng)?;
            TrajectoryEnvelope::seal(spec.id, seq, traj)
        }));
        match attempt {
            Ok(Ok(envelope)) => {
                seq += 1;
                if link.send(envelope).is_err() {
                    break;
                }
                shared.submitted.fetch_add(1, Ordering::SeqCst);
            }
            Ok(Err(e)) => {
                log::error!("actor {} stopped: {e}", spec.id);
                shared.permits.grant(1);
                break;
            }
            Err(_) => {
                restarts += 1;
                shared.restarts.fetch_add(1, Ordering::SeqCst);
                log::warn!("actor {} crashed; restarting (restart {restarts})", spec.id);
                shared.permits.grant(1);
                match fresh_sim(restarts) {
                    Ok(fresh) => (sim, rng) = fresh,
                    Err(e) => {
                        log::error!("actor {} could not restart: {e}", spec.id);
                        break;
                    }
                }
            }
        }
    }
    shared.alive.fetch_sub(1, Ordering::SeqCst);
}

/// Accepts one connection per actor and forwards decoded frames.
fn spawn_wire_readers(
    listener: TcpListener,
    actors: usize,
    tx: SyncSender<Delivery>,
) -> thread::JoinHandle<()> {
    thread::spawn(move || {
        let mut readers = Vec::new();
        for _ in 0..actors {
            let Ok((stream, _)) = listener.accept() else {
                break;
            };
            let tx = tx.clone();
            readers.push(thread::spawn(move || {
                let mut r = std::io::BufReader::new(stream);
                loop {
                    let delivery = match read_frame(&mut r) {
                        Ok(Some(env)) => Delivery::Envelope(env),
                        Ok(None) => break,
                        Err(e @ (Error::Checksum { .. } | Error::Format(_))) => {
                            Delivery::Rejected(e.to_string())
                        }
                        Err(e) => {
                            let _ = tx.send(Delivery::Rejected(e.to_string()));
                            break;
                        }
                    };
                    if tx.send(delivery).is_err() {
                        break;
                    }
                }
            }));
        }
        for r in readers {
            let _ = r.join();
        }
    })
}

struct Sinks {
    dir: PathBuf,
    metrics: csv::Writer<File>,
}

impl Sinks {
    fn open(dir: &Path, config: &TrainingConfig, network: &NetworkConfig) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let sidecar = serde_json::json!({ "training": config, "network": network });
        fs::write(dir.join(CONFIG_FILE), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(Sinks {
            dir: dir.to_path_buf(),
            metrics: csv::Writer::from_path(dir.join(METRICS_FILE))?,
        })
    }

    fn checkpoint(&self, params: &ParameterSet) -> Result<PathBuf> {
        let path = self.dir.join(CHECKPOINT_FILE);
        write_checkpoint(&path, params)?;
        Ok(path)
    }
}

/// Runs the actor/learner loop for `config.iterations` learner updates and
/// returns the final parameters with per-iteration metrics.
pub fn run_training(
    env: &EnvironmentSpec,
    workload: &WorkloadTrace,
    config: &TrainingConfig,
    options: &RunOptions,
) -> Result<TrainingOutcome> {
    config.validate()?;
    env.validate()?;
    workload.validate()?;
    let network = config.network_for(env)?;
    let params = ParameterSet::init(&network, config.seed)?;
    // schedules run over the whole training run
    let learner_config = LearnerConfig {
        total_iterations: config.iterations,
        ..config.learner
    };
    let mut learner = Learner::new(params.clone(), learner_config)?;
    let mut sinks = match &options.out_dir {
        Some(dir) => Some(Sinks::open(dir, config, &network)?),
        None => None,
    };
    let rt = config.runtime;
    let batch = config.learner.batch;
    let min_batch = rt.min_batch.unwrap_or(batch);
    let max_lag = match rt.forced_staleness {
        Some(_) => None,
        None => Some(rt.max_lag.unwrap_or(rt.queue_depth as u64 + 1)),
    };

    let shared = Arc::new(Shared {
        board: PolicyBoard::new(PolicySnapshot::new(params)),
        permits: Permits::default(),
        submitted: AtomicUsize::new(0),
        restarts: AtomicUsize::new(0),
        alive: AtomicUsize::new(rt.actors),
    });
    let (tx, rx) = mpsc::sync_channel::<Delivery>(rt.queue_depth);
    let (links, wire) = match rt.transport {
        TransportMode::InProcess => {
            let links = (0..rt.actors).map(|_| Link::Local(tx.clone())).collect();
            (links, None)
        }
        TransportMode::Tcp => {
            let listener = TcpListener::bind(("127.0.0.1", rt.port))?;
            let addr = listener.local_addr()?;
            let readers = spawn_wire_readers(listener, rt.actors, tx.clone());
            let links = (0..rt.actors)
                .map(|_| Ok(Link::Wire(BufWriter::new(TcpStream::connect(addr)?))))
                .collect::<Result<Vec<_>>>()?;
            (links, Some(readers))
        }
    };
    drop(tx);

    let actors: Vec<_> = links
        .into_iter()
        .enumerate()
        .map(|(id, link)| {
            let spec = ActorSpec {
                id,
                seed: config.seed,
                env: env.clone(),
                workload: workload.clone(),
                mdp: config.mdp,
                n: config.learner.n,
                gamma: config.learner.gamma(),
                epsilon: config.learner.per.epsilon,
                forced_staleness: rt.forced_staleness,
                panic_at: options
                    .inject_actor_panic
                    .filter(|p| p.0 == id)
                    .map(|p| p.1),
            };
            let shared = shared.clone();
            thread::Builder::new()
                .name(format!("actor-{id}"))
                .spawn(move || run_actor(spec, shared, link))
        })
        .collect::<std::io::Result<_>>()?;

    let mut state = LearnerLoop {
        rx,
        shared: shared.clone(),
        outstanding: 0,
        seen: HashSet::new(),
        stats: RuntimeStats::default(),
        consumed: Vec::new(),
        max_lag,
    };
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x1EA2_4E55);
    let mut metrics = Vec::with_capacity(config.iterations);
    let mut checkpoint = None;
    let result = (|| -> Result<()> {
        for it in 0..config.iterations {
            let last = it + 1 == config.iterations;
            state.grant(batch);
            let wanted = if last { batch } else { min_batch };
            let envs = state.collect(it, wanted, batch, learner.params.version)?;
            let batch_trajs: Vec<_> = envs.into_iter().map(|e| e.trajectory).collect();
            let report = learner.update(&batch_trajs, &mut rng)?;
            shared
                .board
                .broadcast(PolicySnapshot::new(learner.params.clone()))?;
            let eval = match (&options.eval_workload, rt.eval_every) {
                (Some(w), every) if every > 0 && ((it + 1) % every == 0 || last) => {
                    Some(evaluate_policy(&learner.params, env, w, config.mdp)?)
                }
                _ => None,
            };
            let row = MetricsRow::new(&report.metrics, started.elapsed().as_secs_f64(), eval.as_ref());
            if let Some(s) = sinks.as_mut() {
                s.metrics.serialize(&row)?;
                s.metrics.flush()?;
                if last || (rt.checkpoint_every > 0 && (it + 1) % rt.checkpoint_every == 0) {
                    checkpoint = Some(s.checkpoint(&learner.params)?);
                }
            }
            metrics.push(row);
        }
        Ok(())
    })();

    // Shutdown: no further permits. Whatever is already queued was granted
    // by the learner and, on success, has been consumed; anything left is
    // counted as lost rather than applied.
    shared.permits.close();
    let lost = state.drain_until_actors_exit();
    drop(state.rx);
    for a in actors {
        let _ = a.join();
    }
    if let Some(w) = wire {
        let _ = w.join();
    }
    result?;
    let mut stats = state.stats;
    stats.lost = lost;
    stats.submitted = shared.submitted.load(Ordering::SeqCst);
    stats.actor_restarts = shared.restarts.load(Ordering::SeqCst);
    Ok(TrainingOutcome {
        params: learner.params,
        metrics,
        stats,
        consumed: state.consumed,
        broadcasts: shared.board.log(),
        checkpoint,
        metrics_path: options.out_dir.as_ref().map(|d| d.join(METRICS_FILE)),
    })
}

struct LearnerLoop {
    rx: Receiver<Delivery>,
    shared: Arc<Shared>,
    /// Permits granted whose envelopes have not arrived.
    outstanding: usize,
    seen: HashSet<u64>,
    stats: RuntimeStats,
    consumed: Vec<ConsumedEnvelope>,
    max_lag: Option<u64>,
}

const POLL: Duration = Duration::from_millis(50);

impl LearnerLoop {
    /// Tops the outstanding permits up to `target`.
    fn grant(&mut self, target: usize) {
        let extra = target.saturating_sub(self.outstanding);
        self.outstanding += extra;
        self.shared.permits.grant(extra);
    }

    fn regrant(&mut self) {
        self.outstanding += 1;
        self.shared.permits.grant(1);
    }

    fn next(&mut self, block: bool) -> Result<Option<Delivery>> {
        if !block {
            return Ok(self.rx.try_recv().ok());
        }
        loop {
            match self.rx.recv_timeout(POLL) {
                Ok(d) => return Ok(Some(d)),
                Err(RecvTimeoutError::Timeout) => {
                    if self.shared.alive.load(Ordering::SeqCst) == 0 {
                        return Err(Error::TransportClosed);
                    }
                }
                Err(RecvTimeoutError::Disconnected) => return Err(Error::TransportClosed),
            }
        }
    }

    /// Blocks until `wanted` usable envelopes arrived, then takes whatever
    /// else is ready up to `most`.
    fn collect(
        &mut self,
        iteration: usize,
        wanted: usize,
        most: usize,
        version: u64,
    ) -> Result<Vec<TrajectoryEnvelope>> {
        let mut out = Vec::with_capacity(most);
        while out.len() < most {
            let block = out.len() < wanted;
            let Some(delivery) = self.next(block)? else {
                break;
            };
            let envelope = match delivery {
                Delivery::Envelope(e) => e,
                Delivery::Rejected(why) => {
                    log::warn!("dropping corrupt envelope: {why}");
                    self.stats.corrupt += 1;
                    self.outstanding -= 1;
                    self.regrant();
                    continue;
                }
            };
            if !self.seen.insert(envelope.id) {
                self.stats.duplicates += 1;
                continue;
            }
            self.outstanding -= 1;
            if let Err(e) = envelope.verify() {
                log::warn!("dropping envelope {}: {e}", envelope.id);
                self.stats.corrupt += 1;
                self.regrant();
                continue;
            }
            let lag = version.saturating_sub(envelope.policy_version);
            if envelope.policy_version > version || self.max_lag.is_some_and(|m| lag > m) {
                self.stats.stale_dropped += 1;
                self.regrant();
                continue;
            }
            self.consumed.push(ConsumedEnvelope {
                iteration,
                id: envelope.id,
                actor: envelope.actor,
                policy_version: envelope.policy_version,
                learner_version: version,
            });
            self.stats.consumed += 1;
            out.push(envelope);
        }
        Ok(out)
    }

    /// Empties the queue while actors wind down; returns how many
    /// envelopes were discarded.
    fn drain_until_actors_exit(&mut self) -> usize {
        let mut lost = 0;
        loop {
            match self.rx.recv_timeout(Duration::from_millis(5)) {
                Ok(Delivery::Envelope(_)) => lost += 1,
                Ok(Delivery::Rejected(_)) => {}
                Err(RecvTimeoutError::Disconnected) => break,
                Err(RecvTimeoutError::Timeout) => {
                    if self.shared.alive.load(Ordering::SeqCst) == 0 {
                        while let Ok(d) = self.rx.try_recv() {
                            lost += matches!(d, Delivery::Envelope(_)) as usize;
                        }
                        break;
                    }
                }
            }
        }
        lost
    }
}
