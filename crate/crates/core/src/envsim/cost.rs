use serde::{Deserialize, Serialize};

use super::{
    critical_path, normalize, Assignment, EnvironmentSpec, Tier, JOULES_PER_KWH, SECONDS_PER_HOUR,
};
use crate::error::{Error, Result};
use crate::workload::{validate_and_order, AppDag};

/// Cost components of one task under an assignment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskCost {
    pub server: usize,
    pub data_arrival: f64,
    pub execution: f64,
    pub response_time: f64,
    pub exec_energy: f64,
    /// Energy spent sending this task's outputs to successors on other servers.
    pub tx_energy: f64,
    pub energy: f64,
    pub monetary: f64,
    /// Per-task weighted cost against per-task bounds.
    pub weighted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub response_time: f64,
    pub energy: f64,
    pub monetary: f64,
    pub weighted: f64,
    pub per_task: Vec<TaskCost>,
    /// Critical path, root to sink.
    pub critical_path: Vec<usize>,
}

/// Normalization range of a task's (or application's) T, E and F.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskBounds {
    pub t: (f64, f64),
    pub e: (f64, f64),
    pub f: (f64, f64),
}

impl TaskBounds {
    /// Weighted cost of a raw `(T, E, F)` triple against these bounds.
    pub fn weighted(&self, env: &EnvironmentSpec, t: f64, e: f64, f: f64) -> f64 {
        let [w1, w2, w3] = env.weights.normalized();
        w1 * normalize(t, self.t.0, self.t.1)
            + w2 * normalize(e, self.e.0, self.e.1)
            + w3 * normalize(f, self.f.0, self.f.1)
    }
}

struct LinkExtremes {
    min_bandwidth: f64,
    max_propagation_s: f64,
}

fn link_extremes(env: &EnvironmentSpec) -> LinkExtremes {
    let n = env.len();
    let mut min_bandwidth = f64::INFINITY;
    let mut max_propagation_s: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let b = env.links.bandwidth(i, j);
            if b > 0.0 {
                min_bandwidth = min_bandwidth.min(b);
            }
            max_propagation_s = max_propagation_s.max(env.links.propagation_s(i, j));
        }
    }
    LinkExtremes {
        min_bandwidth,
        max_propagation_s,
    }
}

/// Per-task normalization bounds.
///
/// Unless the environment overrides them, bounds are extremal constructions:
/// the minimum runs on the best server with nothing to transfer, the maximum
/// on the worst server with every transfer over the slowest link.
pub fn task_bounds(dag: &AppDag, task: usize, env: &EnvironmentSpec) -> TaskBounds {
    if let Some(b) = env.weights.bounds {
        return TaskBounds {
            t: (b.t_min, b.t_max),
            e: (b.e_min, b.e_max),
            f: (b.f_min, b.f_max),
        };
    }
    let spec = &dag.tasks[task];
    let cycles = spec.cycles;
    let links = link_extremes(env);
    let has_links = env.len() > 1 && links.min_bandwidth.is_finite();

    let max_in = dag
        .tasks
        .iter()
        .flat_map(|t| t.edges.iter().filter(|e| e.0 == task).map(|e| e.1))
        .fold(0.0f64, f64::max);
    let worst_arrival = if max_in > 0.0 && has_links {
        max_in / links.min_bandwidth + links.max_propagation_s
    } else {
        0.0
    };
    let out_bytes: f64 = spec.edges.iter().map(|e| e.1).sum();
    let worst_out_time = if out_bytes > 0.0 && has_links {
        out_bytes / links.min_bandwidth
    } else {
        0.0
    };

    let mut t = (f64::INFINITY, 0.0f64);
    let mut e = (f64::INFINITY, 0.0f64);
    let mut f = (f64::INFINITY, 0.0f64);
    for s in &env.servers {
        let exec = cycles / s.freq;
        let exec_energy = exec * s.exec_power;
        let worst_energy = exec_energy + worst_out_time * s.tx_power;
        t = (t.0.min(exec), t.1.max(exec + worst_arrival));
        e = (e.0.min(exec_energy), e.1.max(worst_energy));
        let (f_lo, f_hi) = match s.tier {
            Tier::Cloud => {
                let p = s.cloud_price.unwrap_or(0.0) / SECONDS_PER_HOUR;
                (exec * p, (exec + worst_arrival) * p)
            }
            Tier::Edge => {
                let p = s.electricity_price.unwrap_or(0.0) / JOULES_PER_KWH;
                (exec_energy * p, worst_energy * p)
            }
        };
        f = (f.0.min(f_lo), f.1.max(f_hi));
    }
    TaskBounds { t, e, f }
}

/// Costs of one task. All predecessors must be placed; transmission energy
/// counts only successors that are already placed.
pub fn task_costs(
    dag: &AppDag,
    task: usize,
    assignment: &[Option<usize>],
    env: &EnvironmentSpec,
) -> Result<TaskCost> {
    if task >= dag.len() || assignment.len() != dag.len() {
        return Err(Error::Precondition(format!(
            "assignment covers {} slots for {} tasks (task {task})",
            assignment.len(),
            dag.len()
        )));
    }
    let server_id = assignment[task]
        .ok_or_else(|| Error::Precondition(format!("task {task} has no server")))?;
    let server = env.servers.get(server_id).ok_or_else(|| {
        Error::Precondition(format!("task {task} mapped to unknown server {server_id}"))
    })?;

    let mut data_arrival: f64 = 0.0;
    for pred in &dag.tasks {
        for &(succ, bytes) in &pred.edges {
            if succ != task {
                continue;
            }
            let from = assignment[pred.id].ok_or_else(|| {
                Error::Precondition(format!(
                    "predecessor {} of task {task} is unassigned",
                    pred.id
                ))
            })?;
            data_arrival = data_arrival.max(env.links.transfer_time(from, server_id, bytes)?);
        }
    }

    let spec = &dag.tasks[task];
    let execution = spec.cycles / server.freq;
    let response_time = data_arrival + execution;
    let exec_energy = execution * server.exec_power;

    let mut tx_energy = 0.0;
    for &(succ, bytes) in &spec.edges {
        if let Some(to) = assignment[succ] {
            if to != server_id {
                let b = env.links.bandwidth(server_id, to);
                if !(b > 0.0) {
                    return Err(Error::Constraint {
                        constraint: "C2",
                        detail: format!("link {server_id}->{to} is used but has bandwidth {b}"),
                    });
                }
                tx_energy += bytes / b * server.tx_power;
            }
        }
    }
    // sink tasks transmit nothing
    let energy = exec_energy
        + if spec.edges.is_empty() {
            0.0
        } else {
            tx_energy
        };
    let monetary = server.monetary(response_time, energy);
    let weighted = task_bounds(dag, task, env).weighted(env, response_time, energy, monetary);

    Ok(TaskCost {
        server: server_id,
        data_arrival,
        execution,
        response_time,
        exec_energy,
        tx_energy,
        energy,
        monetary,
        weighted,
    })
}

/// Application-level bounds: T along the extremal path, E and F summed.
pub fn app_bounds(dag: &AppDag, env: &EnvironmentSpec, order: &[usize]) -> TaskBounds {
    let per: Vec<TaskBounds> = (0..dag.len()).map(|i| task_bounds(dag, i, env)).collect();
    let longest = |pick: fn(&TaskBounds) -> f64| {
        let mut best = vec![0.0f64; dag.len()];
        for &v in order.iter().rev() {
            let tail = dag.tasks[v]
                .edges
                .iter()
                .map(|&(s, _)| best[s])
                .fold(0.0f64, f64::max);
            best[v] = pick(&per[v]) + tail;
        }
        best.into_iter().fold(0.0f64, f64::max)
    };
    TaskBounds {
        t: (longest(|b| b.t.0), longest(|b| b.t.1)),
        e: (
            per.iter().map(|b| b.e.0).sum(),
            per.iter().map(|b| b.e.1).sum(),
        ),
        f: (
            per.iter().map(|b| b.f.0).sum(),
            per.iter().map(|b| b.f.1).sum(),
        ),
    }
}

/// Application costs: T along the realized critical path, E and F summed
/// over all tasks, J against application-level bounds.
pub fn app_costs(
    dag: &AppDag,
    assignment: &Assignment,
    env: &EnvironmentSpec,
) -> Result<CostBreakdown> {
    let order = validate_and_order(dag)?;
    if assignment.len() != dag.len() {
        return Err(Error::Precondition(format!(
            "assignment has {} entries for {} tasks",
            assignment.len(),
            dag.len()
        )));
    }
    let partial = assignment.as_partial();
    let mut per_task = vec![TaskCost::default(); dag.len()];
    for &v in &order {
        per_task[v] = task_costs(dag, v, &partial, env)?;
    }
    let times: Vec<f64> = per_task.iter().map(|c| c.response_time).collect();
    let cp = critical_path(dag, &times)?;
    let response_time = cp.iter().map(|&v| times[v]).sum();
    let energy = per_task.iter().map(|c| c.energy).sum();
    let monetary = per_task.iter().map(|c| c.monetary).sum();
    let weighted = app_bounds(dag, env, &order).weighted(env, response_time, energy, monetary);
    Ok(CostBreakdown {
        response_time,
        energy,
        monetary,
        weighted,
        per_task,
        critical_path: cp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envsim::{CostWeights, LinkMatrix, ServerSpec};
    use crate::workload::TaskSpec;

    fn edge(id: usize, freq: f64) -> ServerSpec {
        ServerSpec {
            id,
            name: String::new(),
            tier: Tier::Edge,
            freq,
            ram: 4.0,
            exec_power: 10.0,
            tx_power: 1.0,
            cloud_price: None,
            electricity_price: Some(0.2871),
        }
    }

    fn two_server_env() -> EnvironmentSpec {
        let mut links = LinkMatrix::uniform(2, 10.0, 14.0e6);
        links.bandwidth[0][1] = 14.0e6;
        EnvironmentSpec::new(
            vec![edge(0, 2000.0), edge(1, 2000.0)],
            links,
            CostWeights::default(),
        )
        .unwrap()
    }

    fn task(id: usize, cycles: f64, edges: Vec<(usize, f64)>) -> TaskSpec {
        TaskSpec {
            id,
            app_id: 0,
            cycles,
            ram: 0.1,
            edges,
        }
    }

    #[test]
    fn colocated_predecessor_has_no_arrival_time() {
        let env = two_server_env();
        let dag = AppDag::new(
            0,
            480,
            vec![task(0, 100.0, vec![(1, 1e6)]), task(1, 2000.0, vec![])],
        );
        let c = task_costs(&dag, 1, &[Some(0), Some(0)], &env).unwrap();
        assert_eq!(c.data_arrival, 0.0);
        assert_eq!(c.execution, 1.0);
        assert_eq!(c.response_time, 1.0);
    }

    #[test]
    fn cross_server_predecessor_pays_transfer_and_propagation() {
        // 28 MB over 14 MB/s plus 10 ms, then 0.5 s of execution
        let env = two_server_env();
        let dag = AppDag::new(
            0,
            480,
            vec![task(0, 100.0, vec![(1, 28.0e6)]), task(1, 1000.0, vec![])],
        );
        let c = task_costs(&dag, 1, &[Some(0), Some(1)], &env).unwrap();
        assert!((c.execution - 0.5).abs() < 1e-15);
        assert!((c.response_time - 2.51).abs() < 1e-12);
    }

    #[test]
    fn sink_task_has_execution_energy_only() {
        let env = two_server_env();
        let dag = AppDag::new(
            0,
            480,
            vec![task(0, 100.0, vec![(1, 1e6)]), task(1, 1000.0, vec![])],
        );
        let c = task_costs(&dag, 1, &[Some(0), Some(1)], &env).unwrap();
        assert_eq!(c.tx_energy, 0.0);
        assert_eq!(c.energy, c.exec_energy);
        let src = task_costs(&dag, 0, &[Some(0), Some(1)], &env).unwrap();
        assert!(src.tx_energy > 0.0);
        assert_eq!(src.energy, src.exec_energy + src.tx_energy);
    }

    #[test]
    fn missing_predecessor_is_precondition_error() {
        let env = two_server_env();
        let dag = AppDag::new(
            0,
            480,
            vec![task(0, 100.0, vec![(1, 1e6)]), task(1, 1000.0, vec![])],
        );
        assert!(matches!(
            task_costs(&dag, 1, &[None, Some(1)], &env),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn zero_bandwidth_on_used_link_is_c2_error() {
        let mut env = two_server_env();
        env.links.bandwidth[0][1] = 0.0;
        let dag = AppDag::new(
            0,
            480,
            vec![task(0, 100.0, vec![(1, 1e6)]), task(1, 1000.0, vec![])],
        );
        assert!(matches!(
            task_costs(&dag, 1, &[Some(0), Some(1)], &env),
            Err(Error::Constraint {
                constraint: "C2",
                ..
            })
        ));
        // unused link is fine
        assert!(task_costs(&dag, 1, &[Some(0), Some(0)], &env).is_ok());
    }

    #[test]
    fn single_task_app_response_equals_task() {
        let env = two_server_env();
        let dag = AppDag::new(0, 480, vec![task(0, 700.0, vec![])]);
        let c = app_costs(&dag, &Assignment(vec![1]), &env).unwrap();
        assert_eq!(c.critical_path, vec![0]);
        assert_eq!(c.response_time, c.per_task[0].response_time);
    }

    #[test]
    fn diamond_counts_only_the_slow_branch() {
        // branch via task 1 takes 2 s, via task 2 takes 1 s
        let env = two_server_env();
        let dag = AppDag::new(
            0,
            480,
            vec![
                task(0, 200.0, vec![(1, 1.0e3), (2, 1.0e3)]),
                task(1, 4000.0, vec![(3, 1.0e3)]),
                task(2, 2000.0, vec![(3, 1.0e3)]),
                task(3, 200.0, vec![]),
            ],
        );
        let c = app_costs(&dag, &Assignment(vec![0, 0, 0, 0]), &env).unwrap();
        assert_eq!(c.critical_path, vec![0, 1, 3]);
        assert!((c.response_time - (0.1 + 2.0 + 0.1)).abs() < 1e-12);
    }

    #[test]
    fn time_only_weights_give_normalized_time() {
        let mut env = two_server_env();
        env.servers[1].freq = 1000.0;
        env.weights = CostWeights::new(1.0, 0.0, 0.0);
        let dag = AppDag::new(
            0,
            480,
            vec![task(0, 1000.0, vec![(1, 1e6)]), task(1, 1000.0, vec![])],
        );
        let order = validate_and_order(&dag).unwrap();
        let c = app_costs(&dag, &Assignment(vec![1, 0]), &env).unwrap();
        let b = app_bounds(&dag, &env, &order);
        assert_eq!(c.weighted, normalize(c.response_time, b.t.0, b.t.1));
    }

    #[test]
    fn colocation_removes_transfers() {
        let env = EnvironmentSpec::desk();
        for preset in crate::workload::Preset::ALL {
            let dag = preset.app(0, 480);
            for s in 0..env.len() {
                let c = app_costs(&dag, &Assignment(vec![s; dag.len()]), &env).unwrap();
                assert!(c
                    .per_task
                    .iter()
                    .all(|t| t.data_arrival == 0.0 && t.tx_energy == 0.0));
            }
        }
    }

    #[test]
    fn analytic_bounds_contain_every_assignment() {
        let env = EnvironmentSpec::desk();
        let dag = crate::workload::Preset::FaceEye.app(0, 480);
        let n = env.len();
        let total = n.pow(dag.len() as u32);
        for code in 0..total {
            let mut a = Vec::new();
            let mut c = code;
            for _ in 0..dag.len() {
                a.push(c % n);
                c /= n;
            }
            let costs = app_costs(&dag, &Assignment(a), &env).unwrap();
            assert!((0.0..=1.0).contains(&costs.weighted));
            for (i, t) in costs.per_task.iter().enumerate() {
                let b = task_bounds(&dag, i, &env);
                assert!(t.response_time >= b.t.0 - 1e-12 && t.response_time <= b.t.1 + 1e-12);
                assert!(t.energy >= b.e.0 - 1e-12 && t.energy <= b.e.1 + 1e-12);
                assert!(t.monetary >= b.f.0 - 1e-15 && t.monetary <= b.f.1 + 1e-15);
            }
        }
    }
}
