//! Line-delimited trace records.
//!
//! One JSON object per line, LF terminated, fields always in the order
//! `global_step, observer, observer_proper_time, kind, message_id,
//! body_label, payload`.

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// The observer emitted a message keeping one of its offers.
    Kept,
    /// A message was lost in transit (recorded against the sender's clock).
    Lost,
    /// The observer sampled a message. Ticks the observer's clock.
    Sample,
    /// The observer sampled an acknowledgement. Ticks the clock.
    Ack,
    /// An interior step completed. Ticks the clock.
    Interior,
    /// One iteration of interior feedback inside a single exterior step.
    /// Advances a subtime counter only; the clock does not tick.
    Substep,
    /// A retarded process moved to a new state. Ticks the clock.
    State,
    /// Noise perturbed a variable. No tick.
    Drift,
    /// Maintenance moved a variable toward its desired state. Ticks the clock.
    Repair,
    /// The observer sampled another agent's variable. Ticks the clock.
    Observe,
    /// A local not-kept assessment (never sampled, or timed out).
    NotKept,
    Kill,
    Restart,
    Perturb,
    Annotation,
}

impl EventKind {
    /// Whether this kind of event advances the observer's proper time.
    pub fn ticks(self) -> bool {
        matches!(
            self,
            EventKind::Sample
                | EventKind::Ack
                | EventKind::Interior
                | EventKind::State
                | EventKind::Repair
                | EventKind::Observe
        )
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(s.trim_matches('"'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub global_step: u64,
    pub observer: AgentId,
    pub observer_proper_time: u64,
    pub kind: EventKind,
    pub message_id: Option<u64>,
    pub body_label: Option<String>,
    pub payload: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Trace {
    pub events: Vec<TraceEvent>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Canonical serialization; equal traces give equal bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn parse(text: &str) -> Result<Trace> {
        let mut events = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let e = serde_json::from_str(line).map_err(|e| Error::Trace {
                line: i + 1,
                message: e.to_string(),
            })?;
            events.push(e);
        }
        Ok(Trace { events })
    }

    pub fn by<'a>(&'a self, observer: &'a AgentId) -> impl Iterator<Item = &'a TraceEvent> + 'a {
        self.events.iter().filter(move |e| &e.observer == observer)
    }

    /// The sequence of payloads an agent recorded for one variable, from
    /// state transitions, observations, drift, repairs and perturbations.
    pub fn project_states(&self, agent: &AgentId, variable: &str) -> Vec<String> {
        self.by(agent)
            .filter(|e| {
                matches!(
                    e.kind,
                    EventKind::State | EventKind::Observe | EventKind::Drift | EventKind::Repair | EventKind::Perturb
                ) && e.body_label.as_deref() == Some(variable)
            })
            .filter_map(|e| e.payload.clone())
            .collect()
    }
}
