use serde::{Deserialize, Serialize};

use super::{Assignment, EnvironmentSpec};
use crate::workload::AppDag;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintResult {
    pub passed: bool,
    pub violations: Vec<String>,
}

impl ConstraintResult {
    fn from_violations(violations: Vec<String>) -> Self {
        ConstraintResult {
            passed: violations.is_empty(),
            violations,
        }
    }
}

/// Pass/fail for each problem constraint with the offending entities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// Every task mapped to exactly one known server.
    pub c1: ConstraintResult,
    /// Positive data size and bandwidth on every used link.
    pub c2: ConstraintResult,
    /// Positive frequency and RAM on every server.
    pub c3: ConstraintResult,
    /// RAM demand per server within its capacity.
    pub c4: ConstraintResult,
    /// Cumulative response time non-decreasing along every edge.
    pub c5: ConstraintResult,
    /// Weights in [0, 1] summing to one after renormalization.
    pub c6: ConstraintResult,
}

impl FeasibilityReport {
    pub fn feasible(&self) -> bool {
        [&self.c1, &self.c2, &self.c3, &self.c4, &self.c5, &self.c6]
            .iter()
            .all(|c| c.passed)
    }
}

/// Evaluates every constraint. Violations are reported, never raised.
pub fn check_constraints(
    dag: &AppDag,
    assignment: &Assignment,
    env: &EnvironmentSpec,
) -> FeasibilityReport {
    let n_servers = env.len();
    let n_tasks = dag.len();

    let mut c1 = Vec::new();
    if assignment.len() != n_tasks {
        c1.push(format!(
            "assignment has {} entries for {n_tasks} tasks",
            assignment.len()
        ));
    }
    for (task, &server) in assignment.0.iter().enumerate() {
        if server >= n_servers {
            c1.push(format!("task {task} -> unknown server {server}"));
        }
    }
    let structural_ok = c1.is_empty();

    let mut c2 = Vec::new();
    if structural_ok {
        for t in &dag.tasks {
            for &(succ, bytes) in &t.edges {
                if succ >= n_tasks {
                    continue;
                }
                let (from, to) = (assignment.0[t.id], assignment.0[succ]);
                if from == to {
                    continue;
                }
                if !(bytes > 0.0) {
                    c2.push(format!("edge {}->{succ}: data size {bytes}", t.id));
                }
                let b = env.links.bandwidth(from, to);
                if !(b > 0.0) {
                    c2.push(format!(
                        "edge {}->{succ}: link {from}->{to} bandwidth {b}",
                        t.id
                    ));
                }
            }
        }
    }

    let c3 = env
        .servers
        .iter()
        .filter(|s| !(s.freq > 0.0 && s.ram > 0.0))
        .map(|s| format!("server {}: freq {} ram {}", s.id, s.freq, s.ram))
        .collect();

    let mut c4 = Vec::new();
    if structural_ok {
        let mut used = vec![0.0f64; n_servers];
        for (task, &server) in assignment.0.iter().enumerate() {
            used[server] += dag.tasks[task].ram;
        }
        for (k, s) in env.servers.iter().enumerate() {
            if used[k] > s.ram {
                c4.push(format!(
                    "server {k}: demand {:.6} GB exceeds {:.6} GB",
                    used[k], s.ram
                ));
            }
        }
    }

    let mut c5 = Vec::new();
    if structural_ok {
        if let Ok(order) = crate::workload::validate_and_order(dag) {
            let partial = assignment.as_partial();
            let mut finish = vec![0.0f64; n_tasks];
            let preds = dag.predecessors();
            for &v in &order {
                let t = super::task_costs(dag, v, &partial, env)
                    .map(|c| c.response_time)
                    .unwrap_or(f64::INFINITY);
                let start = preds[v]
                    .iter()
                    .map(|&(p, _)| finish[p])
                    .fold(0.0f64, f64::max);
                finish[v] = start + t;
            }
            for t in &dag.tasks {
                for &(succ, _) in &t.edges {
                    if !(finish[succ] >= finish[t.id]) {
                        c5.push(format!("edge {}->{succ}: cumulative time decreases", t.id));
                    }
                }
            }
        } else {
            c5.push("application graph is not a DAG".into());
        }
    }

    let mut c6 = Vec::new();
    let w = &env.weights;
    if [w.w1, w.w2, w.w3]
        .iter()
        .any(|x| !(x.is_finite() && *x >= 0.0))
        || !(w.w1 + w.w2 + w.w3 > 0.0)
    {
        c6.push(format!(
            "weights ({}, {}, {}) cannot be renormalized",
            w.w1, w.w2, w.w3
        ));
    } else {
        let nw = w.normalized();
        if (nw.iter().sum::<f64>() - 1.0).abs() > 1e-12
            || nw.iter().any(|x| !(0.0..=1.0).contains(x))
        {
            c6.push(format!("renormalized weights {nw:?} out of range"));
        }
    }

    FeasibilityReport {
        c1: ConstraintResult::from_violations(c1),
        c2: ConstraintResult::from_violations(c2),
        c3: ConstraintResult::from_violations(c3),
        c4: ConstraintResult::from_violations(c4),
        c5: ConstraintResult::from_violations(c5),
        c6: ConstraintResult::from_violations(c6),
    }
}
