use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Outcome of a speedup comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Speedup {
    Ratio {
        reference_time: f64,
        candidate_time: f64,
        speedup: f64,
    },
    /// A curve never gets down to the threshold.
    NotReached {
        reference_reached: bool,
        candidate_reached: bool,
    },
}

/// First time a `(time, J)` curve reaches `threshold` or below, linearly
/// interpolated between the bracketing samples.
pub fn first_crossing(curve: &[(f64, f64)], threshold: f64) -> Result<Option<f64>> {
    if curve.is_empty() {
        return Err(Error::Precondition("curve has no samples".into()));
    }
    if curve.windows(2).any(|w| w[1].0 < w[0].0) {
        return Err(Error::Precondition("curve times must be non-decreasing".into()));
    }
    if curve.iter().any(|&(t, j)| !t.is_finite() || !j.is_finite()) {
        return Err(Error::Domain("curve holds a non-finite sample".into()));
    }
    if curve[0].1 <= threshold {
        return Ok(Some(curve[0].0));
    }
    for w in curve.windows(2) {
        let ((t0, j0), (t1, j1)) = (w[0], w[1]);
        if j1 <= threshold {
            let frac = (j0 - threshold) / (j0 - j1);
            return Ok(Some(t0 + frac * (t1 - t0)));
        }
    }
    Ok(None)
}

/// Time the reference needs to reach `threshold` over the time the
/// candidate needs.
pub fn speedup(reference: &[(f64, f64)], candidate: &[(f64, f64)], threshold: f64) -> Result<Speedup> {
    let r = first_crossing(reference, threshold)?;
    let c = first_crossing(candidate, threshold)?;
    match (r, c) {
        (Some(r), Some(c)) => {
            if c <= 0.0 {
                return Err(Error::Domain(format!(
                    "candidate reaches the threshold at time {c}; speedup is undefined"
                )));
            }
            Ok(Speedup::Ratio {
                reference_time: r,
                candidate_time: c,
                speedup: r / c,
            })
        }
        (r, c) => Ok(Speedup::NotReached {
            reference_reached: r.is_some(),
            candidate_reached: c.is_some(),
        }),
    }
}
