//! DAG application model, synthetic workload generation and trace files.
//!
//! An application is a DAG of tasks. Each task carries its CPU demand in
//! Mcycles, its RAM demand in GB and a list of outgoing edges, each edge
//! carrying the number of bytes the task hands to that successor.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Resolution every preset is calibrated at.
pub const REFERENCE_LABEL: u32 = 480;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: usize,
    #[serde(skip)]
    pub app_id: usize,
    /// CPU demand in Mcycles.
    pub cycles: f64,
    /// RAM demand in GB.
    pub ram: f64,
    /// `(successor id, bytes)` pairs.
    #[serde(default)]
    pub edges: Vec<(usize, f64)>,
}

impl TaskSpec {
    pub fn successor_count(&self) -> usize {
        self.edges.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppDag {
    pub app_id: usize,
    /// Resolution tag of the application (e.g. 480 or 240).
    pub label: u32,
    pub tasks: Vec<TaskSpec>,
}

impl AppDag {
    pub fn new(app_id: usize, label: u32, mut tasks: Vec<TaskSpec>) -> Self {
        for t in &mut tasks {
            t.app_id = app_id;
        }
        AppDag {
            app_id,
            label,
            tasks,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    /// Predecessor lists as `(predecessor id, bytes)`; edges referencing
    /// unknown ids are skipped (see [`validate_and_order`]).
    pub fn predecessors(&self) -> Vec<Vec<(usize, f64)>> {
        let mut preds = vec![Vec::new(); self.tasks.len()];
        for t in &self.tasks {
            for &(succ, bytes) in &t.edges {
                if succ < preds.len() {
                    preds[succ].push((t.id, bytes));
                }
            }
        }
        for p in &mut preds {
            p.sort_by_key(|&(id, _)| id);
        }
        preds
    }

    pub fn sources(&self) -> Vec<usize> {
        let preds = self.predecessors();
        (0..self.tasks.len())
            .filter(|&i| preds[i].is_empty())
            .collect()
    }

    pub fn sinks(&self) -> Vec<usize> {
        (0..self.tasks.len())
            .filter(|&i| self.tasks[i].edges.is_empty())
            .collect()
    }

    /// Re-stamps `app_id` on every task. Needed after deserialization.
    fn restamp(&mut self) {
        let id = self.app_id;
        for t in &mut self.tasks {
            t.app_id = id;
        }
    }
}

/// Topological order, smallest ready index first.
pub fn validate_and_order(dag: &AppDag) -> Result<Vec<usize>> {
    let n = dag.tasks.len();
    if n == 0 {
        return Err(Error::InvalidDag(format!(
            "application {} has no tasks",
            dag.app_id
        )));
    }
    for (i, t) in dag.tasks.iter().enumerate() {
        if t.id != i {
            return Err(Error::InvalidDag(format!(
                "task ids must be contiguous: position {i} holds id {}",
                t.id
            )));
        }
        if !(t.cycles > 0.0) || !t.cycles.is_finite() {
            return Err(Error::InvalidDag(format!(
                "task {i}: cycles must be positive"
            )));
        }
        if !(t.ram >= 0.0) || !t.ram.is_finite() {
            return Err(Error::InvalidDag(format!(
                "task {i}: ram must be non-negative"
            )));
        }
        for &(succ, bytes) in &t.edges {
            if succ >= n {
                return Err(Error::Reference(format!(
                    "task {i} has an edge to nonexistent task {succ}"
                )));
            }
            if succ == i {
                return Err(Error::InvalidDag(format!("task {i} has a self-loop")));
            }
            if !(bytes > 0.0) || !bytes.is_finite() {
                return Err(Error::Constraint {
                    constraint: "C2",
                    detail: format!("edge {i}->{succ} carries a non-positive data size"),
                });
            }
        }
    }

    let mut indegree = vec![0usize; n];
    for t in &dag.tasks {
        for &(succ, _) in &t.edges {
            indegree[succ] += 1;
        }
    }
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..n).filter(|&i| indegree[i] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(i);
        for &(succ, _) in &dag.tasks[i].edges {
            indegree[succ] -= 1;
            if indegree[succ] == 0 {
                ready.push(Reverse(succ));
            }
        }
    }
    if order.len() != n {
        return Err(Error::InvalidDag(format!(
            "application {} contains a cycle",
            dag.app_id
        )));
    }
    Ok(order)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DagShape {
    Chain,
    Diamond,
    Layered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorParams {
    pub task_count: usize,
    pub max_fanout: usize,
    /// Mcycles.
    pub cycles_range: (f64, f64),
    /// Bytes per edge.
    pub data_range: (f64, f64),
    /// GB.
    pub ram_range: (f64, f64),
    pub shape: DagShape,
    #[serde(default = "default_label")]
    pub label: u32,
}

fn default_label() -> u32 {
    REFERENCE_LABEL
}

impl Default for GeneratorParams {
    fn default() -> Self {
        GeneratorParams {
            task_count: 5,
            max_fanout: 2,
            cycles_range: (100.0, 3000.0),
            data_range: (1.0e5, 4.0e6),
            ram_range: (0.05, 0.8),
            shape: DagShape::Layered,
            label: REFERENCE_LABEL,
        }
    }
}

impl GeneratorParams {
    fn validate(&self) -> Result<()> {
        if self.task_count == 0 {
            return Err(Error::Parameter("task_count must be at least 1".into()));
        }
        if self.max_fanout == 0 {
            return Err(Error::Parameter("max_fanout must be at least 1".into()));
        }
        let positive = |name: &str, (lo, hi): (f64, f64)| {
            if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
                Err(Error::Parameter(format!(
                    "{name} must be a non-empty positive range, got ({lo}, {hi})"
                )))
            } else {
                Ok(())
            }
        };
        positive("cycles_range", self.cycles_range)?;
        positive("data_range", self.data_range)?;
        let (lo, hi) = self.ram_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::Parameter(format!(
                "ram_range must be a non-empty non-negative range, got ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

fn sample_range(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Generates a random acyclic application. Deterministic in `(params, seed)`.
///
/// Every edge points from a lower to a higher task id, so the output is
/// acyclic by construction.
pub fn generate_dag(params: &GeneratorParams, seed: u64) -> Result<AppDag> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = params.task_count;

    let mut edges: Vec<Vec<usize>> = vec![Vec::new(); n];
    match params.shape {
        DagShape::Chain => {
            for i in 1..n {
                edges[i - 1].push(i);
            }
        }
        DagShape::Diamond => {
            if n <= 2 {
                for i in 1..n {
                    edges[i - 1].push(i);
                }
            } else {
                // source 0, sink n-1, middle tasks in layers of width <= max_fanout
                let width = (n - 2).min(params.max_fanout);
                let middle: Vec<usize> = (1..n - 1).collect();
                let layers: Vec<&[usize]> = middle.chunks(width).collect();
                for &m in layers[0] {
                    edges[0].push(m);
                }
                for pair in layers.windows(2) {
                    for (k, &to) in pair[1].iter().enumerate() {
                        let from = pair[0][k % pair[0].len()];
                        edges[from].push(to);
                    }
                }
                for &m in *layers.last().unwrap() {
                    edges[m].push(n - 1);
                }
            }
        }
        DagShape::Layered => {
            let mut layers: Vec<Vec<usize>> = Vec::new();
            let mut next = 0;
            while next < n {
                let width = rng.random_range(1..=params.max_fanout).min(n - next);
                layers.push((next..next + width).collect());
                next += width;
            }
            for pair in layers.windows(2) {
                let (prev, cur) = (&pair[0], &pair[1]);
                for &to in cur {
                    let k = rng.random_range(1..=prev.len().min(params.max_fanout));
                    let start = rng.random_range(0..prev.len());
                    for j in 0..k {
                        edges[prev[(start + j) % prev.len()]].push(to);
                    }
                }
                // no dead ends inside the DAG
                for &from in prev {
                    if edges[from].is_empty() {
                        let to = cur[rng.random_range(0..cur.len())];
                        edges[from].push(to);
                    }
                }
            }
        }
    }

    let tasks = (0..n)
        .map(|i| {
            let cycles = sample_range(&mut rng, params.cycles_range);
            let ram = sample_range(&mut rng, params.ram_range);
            let mut out: Vec<(usize, f64)> = edges[i]
                .iter()
                .map(|&s| (s, sample_range(&mut rng, params.data_range)))
                .collect();
            out.sort_by_key(|&(s, _)| s);
            out.dedup_by_key(|e| e.0);
            TaskSpec {
                id: i,
                app_id: 0,
                cycles,
                ram,
                edges: out,
            }
        })
        .collect();
    Ok(AppDag::new(0, params.label, tasks))
}

/// Synthetic stand-ins for four video-analytics applications.
///
/// Magnitudes are calibrated at resolution 480 and scale linearly with the
/// label. They are illustrative numbers, not measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    FaceDetect,
    ColorTrack,
    FaceEye,
    Ocr,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::FaceDetect,
        Preset::ColorTrack,
        Preset::FaceEye,
        Preset::Ocr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::FaceDetect => "facedetect",
            Preset::ColorTrack => "colortrack",
            Preset::FaceEye => "faceeye",
            Preset::Ocr => "ocr",
        }
    }

    pub fn parse(name: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == name)
    }

    /// `(cycles, ram, edges)` per task at the reference label.
    fn blueprint(self) -> Vec<(f64, f64, Vec<(usize, f64)>)> {
        match self {
            Preset::FaceDetect => vec![
                (200.0, 0.2, vec![(1, 2.0e6)]),
                (600.0, 0.3, vec![(2, 1.5e6)]),
                (3000.0, 0.6, vec![(3, 0.3e6)]),
                (400.0, 0.2, vec![]),
            ],
            Preset::ColorTrack => vec![
                (150.0, 0.2, vec![(1, 2.0e6)]),
                (1500.0, 0.5, vec![(2, 0.2e6)]),
                (300.0, 0.2, vec![]),
            ],
            Preset::FaceEye => vec![
                (200.0, 0.2, vec![(1, 1.5e6), (2, 1.5e6)]),
                (2500.0, 0.6, vec![(3, 0.4e6)]),
                (800.0, 0.4, vec![(3, 0.6e6)]),
                (1800.0, 0.5, vec![(4, 0.2e6)]),
                (300.0, 0.2, vec![]),
            ],
            Preset::Ocr => vec![
                (300.0, 0.3, vec![(1, 4.0e6)]),
                (1200.0, 0.4, vec![(2, 1.0e6), (3, 1.0e6)]),
                (2800.0, 0.7, vec![(4, 0.05e6)]),
                (2800.0, 0.7, vec![(4, 0.05e6)]),
                (400.0, 0.3, vec![(5, 0.02e6)]),
                (100.0, 0.1, vec![]),
            ],
        }
    }

    pub fn app(self, app_id: usize, label: u32) -> AppDag {
        self.build(app_id, label, None)
    }

    /// Same shape with cycles and data sizes each scaled by an independent
    /// factor drawn from `[1 - jitter, 1 + jitter]`.
    pub fn jittered(self, app_id: usize, label: u32, jitter: f64, seed: u64) -> AppDag {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.build(app_id, label, Some((jitter.clamp(0.0, 0.95), &mut rng)))
    }

    fn build(
        self,
        app_id: usize,
        label: u32,
        mut jitter: Option<(f64, &mut ChaCha8Rng)>,
    ) -> AppDag {
        let scale = label as f64 / REFERENCE_LABEL as f64;
        let mut factor = || match jitter.as_mut() {
            Some((j, rng)) if *j > 0.0 => rng.random_range(1.0 - *j..=1.0 + *j),
            _ => 1.0,
        };
        let tasks = self
            .blueprint()
            .into_iter()
            .enumerate()
            .map(|(id, (cycles, ram, edges))| {
                let cycles = cycles * scale * factor();
                let edges = edges
                    .into_iter()
                    .map(|(s, bytes)| (s, bytes * scale * factor()))
                    .collect();
                TaskSpec {
                    id,
                    app_id,
                    cycles,
                    ram,
                    edges,
                }
            })
            .collect();
        AppDag::new(app_id, label, tasks)
    }
}

/// Ordered sequence of application arrivals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadTrace {
    pub apps: Vec<AppDag>,
}

impl WorkloadTrace {
    pub fn new(apps: Vec<AppDag>) -> Result<Self> {
        let trace = WorkloadTrace { apps };
        trace.validate()?;
        Ok(trace)
    }

    /// The four presets, in a fixed order, at the given label.
    pub fn presets(label: u32) -> Self {
        WorkloadTrace {
            apps: Preset::ALL
                .iter()
                .enumerate()
                .map(|(i, p)| p.app(i, label))
                .collect(),
        }
    }

    /// `count` jittered preset instances cycling through the four presets.
    pub fn jittered_presets(count: usize, label: u32, jitter: f64, seed: u64) -> Self {
        WorkloadTrace {
            apps: (0..count)
                .map(|i| {
                    let preset = Preset::ALL[i % Preset::ALL.len()];
                    preset.jittered(
                        i,
                        label,
                        jitter,
                        seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                    )
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.apps.is_empty() {
            return Err(Error::Validation(
                "workload trace has no applications".into(),
            ));
        }
        for app in &self.apps {
            validate_and_order(app)?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut trace: WorkloadTrace = serde_json::from_str(text)?;
        for app in &mut trace.apps {
            app.restamp();
        }
        trace.validate()?;
        Ok(trace)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&crate::error::read_text(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn task_count(&self) -> usize {
        self.apps.iter().map(AppDag::len).sum()
    }
}
