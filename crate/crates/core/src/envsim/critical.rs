use crate::error::{Error, Result};
use crate::workload::{validate_and_order, AppDag};

fn ties(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
}

/// Root-to-sink path with the largest cumulative response time.
///
/// Ties go to the smaller task index at each divergence, so among equally
/// long paths the lexicographically smallest one is returned.
pub fn critical_path(dag: &AppDag, per_task_response: &[f64]) -> Result<Vec<usize>> {
    if per_task_response.len() != dag.len() {
        return Err(Error::Precondition(format!(
            "{} response times for {} tasks",
            per_task_response.len(),
            dag.len()
        )));
    }
    let order = validate_and_order(dag)?;
    let n = dag.len();
    let mut best = vec![0.0f64; n];
    let mut next: Vec<Option<usize>> = vec![None; n];
    for &v in order.iter().rev() {
        let mut succs: Vec<usize> = dag.tasks[v].edges.iter().map(|e| e.0).collect();
        succs.sort_unstable();
        let mut choice: Option<usize> = None;
        for s in succs {
            match choice {
                None => choice = Some(s),
                Some(c) if best[s] > best[c] && !ties(best[s], best[c]) => choice = Some(s),
                _ => {}
            }
        }
        next[v] = choice;
        best[v] = per_task_response[v] + choice.map_or(0.0, |c| best[c]);
    }

    let preds = dag.predecessors();
    let mut start: Option<usize> = None;
    for v in (0..n).filter(|&v| preds[v].is_empty()) {
        match start {
            None => start = Some(v),
            Some(c) if best[v] > best[c] && !ties(best[v], best[c]) => start = Some(v),
            _ => {}
        }
    }
    let mut path = Vec::new();
    let mut cur = start;
    while let Some(v) = cur {
        path.push(v);
        cur = next[v];
    }
    Ok(path)
}
