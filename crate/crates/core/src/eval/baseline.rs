use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envsim::{app_costs, check_constraints, task_costs, Assignment, CostBreakdown, EnvironmentSpec};
use crate::error::{Error, Result};
use crate::workload::{validate_and_order, AppDag};

pub const ORACLE_MAX_TASKS: usize = 6;
pub const ORACLE_MAX_SERVERS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Random,
    Greedy,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineResult {
    pub kind: BaselineKind,
    pub assignment: Vec<usize>,
    pub costs: CostBreakdown,
}

/// Places every task of `dag`. `seed` only matters for the random kind.
pub fn baseline_schedule(
    kind: BaselineKind,
    dag: &AppDag,
    env: &EnvironmentSpec,
    seed: u64,
) -> Result<BaselineResult> {
    env.validate()?;
    let order = validate_and_order(dag)?;
    let assignment = match kind {
        BaselineKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sequential(dag, env, &order, |_, _, fits| {
                Ok(*fits.choose(&mut rng).expect("non-empty"))
            })?
        }
        BaselineKind::Greedy => sequential(dag, env, &order, |placed, task, fits| {
            let mut best = (fits[0], f64::INFINITY);
            let mut trial = placed.to_vec();
            for &s in fits {
                trial[task] = Some(s);
                let j = task_costs(dag, task, &trial, env)?.weighted;
                if j < best.1 {
                    best = (s, j);
                }
            }
            Ok(best.0)
        })?,
        BaselineKind::Oracle => oracle(dag, env)?,
    };
    let costs = app_costs(dag, &Assignment(assignment.clone()), env)?;
    Ok(BaselineResult {
        kind,
        assignment,
        costs,
    })
}

/// Places tasks in topological order, choosing among servers with enough
/// RAM left.
fn sequential(
    dag: &AppDag,
    env: &EnvironmentSpec,
    order: &[usize],
    mut choose: impl FnMut(&[Option<usize>], usize, &[usize]) -> Result<usize>,
) -> Result<Vec<usize>> {
    let mut left: Vec<f64> = env.servers.iter().map(|s| s.ram).collect();
    let mut placed = vec![None; dag.len()];
    for &task in order {
        let need = dag.tasks[task].ram;
        let fits: Vec<usize> = (0..env.len()).filter(|&s| need <= left[s]).collect();
        if fits.is_empty() {
            return Err(Error::Constraint {
                constraint: "C4",
                detail: format!("no server has {need} GB left for task {task}"),
            });
        }
        let s = choose(&placed, task, &fits)?;
        left[s] -= need;
        placed[task] = Some(s);
    }
    Ok(placed.into_iter().map(|s| s.expect("placed")).collect())
}

/// Exhaustive search in odometer order with task 0 varying fastest; the
/// first assignment reaching the minimum wins ties.
fn oracle(dag: &AppDag, env: &EnvironmentSpec) -> Result<Vec<usize>> {
    if dag.len() > ORACLE_MAX_TASKS || env.len() > ORACLE_MAX_SERVERS {
        return Err(Error::LimitExceeded(format!(
            "oracle handles at most {ORACLE_MAX_TASKS} tasks and {ORACLE_MAX_SERVERS} servers, got {} and {}",
            dag.len(),
            env.len()
        )));
    }
    let mut digits = vec![0usize; dag.len()];
    let mut best: Option<(f64, Vec<usize>)> = None;
    loop {
        let a = Assignment(digits.clone());
        if check_constraints(dag, &a, env).feasible() {
            let j = app_costs(dag, &a, env)?.weighted;
            if best.as_ref().is_none_or(|b| j < b.0) {
                best = Some((j, digits.clone()));
            }
        }
        let mut i = 0;
        while i < digits.len() {
            digits[i] += 1;
            if digits[i] < env.len() {
                break;
            }
            digits[i] = 0;
            i += 1;
        }
        if i == digits.len() {
            break;
        }
    }
    best.map(|b| b.1).ok_or_else(|| Error::Constraint {
        constraint: "C4",
        detail: "no feasible assignment exists".into(),
    })
}
