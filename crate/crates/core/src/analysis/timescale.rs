//! Separation of timescales between an interior process and the exterior
//! process its dependencies belong to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AgentId;
use crate::sim::{EventKind, Trace};

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimescaleReport {
    /// Mean interval between inner completions.
    pub interior: f64,
    /// Mean interval between outer changes; `None` if it never changed.
    pub exterior: Option<f64>,
    pub ratio: f64,
    pub epsilon: f64,
    pub effectively_invariant: bool,
}

/// What to measure in a trace. Times are global steps, the one unit that
/// both processes share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Keepings by `agent` whose label is exactly `label`.
    Kept { agent: AgentId, label: String },
    /// Changes of a variable's recorded value.
    Changes { agent: AgentId, variable: String },
}

impl Selector {
    pub fn times(&self, trace: &Trace) -> Vec<u64> {
        match self {
            Selector::Kept { agent, label } => {
                let mut out: Vec<u64> = trace
                    .by(agent)
                    .filter(|e| e.kind == EventKind::Kept && e.body_label.as_deref() == Some(label))
                    .map(|e| e.global_step)
                    .collect();
                out.dedup();
                out
            }
            Selector::Changes { agent, variable } => {
                let mut out = Vec::new();
                let mut last: Option<&str> = None;
                for e in trace.by(agent) {
                    let relevant = matches!(
                        e.kind,
                        EventKind::State | EventKind::Observe | EventKind::Drift | EventKind::Repair | EventKind::Perturb
                    ) && e.body_label.as_deref() == Some(variable.as_str());
                    if !relevant {
                        continue;
                    }
                    let v = e.payload.as_deref();
                    if last.is_some() && last != v {
                        out.push(e.global_step);
                    }
                    last = v;
                }
                out
            }
        }
    }
}

/// Mean spacing of events counted from `origin`.
fn mean_interval(origin: u64, times: &[u64]) -> Option<f64> {
    let last = *times.last()?;
    Some(last.saturating_sub(origin) as f64 / times.len() as f64)
}

/// Compares the mean inner completion interval with the mean interval
/// between outer changes, both measured from `origin`.
pub fn timescale_from_times(origin: u64, inner: &[u64], outer: &[u64], epsilon: f64) -> Result<TimescaleReport> {
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::Argument("timescale threshold must be positive".into()));
    }
    let interior = mean_interval(origin, inner).ok_or(Error::InsufficientData {
        what: "inner process completions",
        required: 1,
        actual: 0,
    })?;
    let exterior = mean_interval(origin, outer).filter(|e| *e > 0.0);
    let ratio = exterior.map_or(0.0, |e| interior / e);
    Ok(TimescaleReport {
        interior,
        exterior,
        ratio,
        epsilon,
        effectively_invariant: ratio < epsilon,
    })
}

pub fn timescale_report(trace: &Trace, inner: &Selector, outer: &Selector, epsilon: f64) -> Result<TimescaleReport> {
    timescale_from_times(0, &inner.times(trace), &outer.times(trace), epsilon)
}
