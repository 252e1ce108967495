//! Synchronisation delays of conditional promises, and the mechanical
//! split of a blocking agent into non-blocking subagents.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::body::Body;
use crate::error::{Error, Result};
use crate::graph::{Agent, AgentId, Polarity, Promise, PromiseGraph, PromiseId, Promisees};
use crate::sim::trace::{EventKind, Trace};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyncReport {
    /// Promiser proper-time delay for each keeping, in trace order.
    pub delays: Vec<u64>,
    /// Keepings observed without every condition sampled beforehand.
    pub premature: usize,
}

impl SyncReport {
    /// `None` when the promise was never kept.
    pub fn is_synchronous(&self, tau: u64) -> Option<bool> {
        if self.delays.is_empty() && self.premature == 0 {
            None
        } else {
            Some(self.premature == 0 && self.delays.iter().all(|d| *d <= tau))
        }
    }

    pub fn keepings(&self) -> usize {
        self.delays.len() + self.premature
    }
}

fn labels_of(label: &str) -> impl Iterator<Item = &str> {
    label.split(',').filter(|l| !l.is_empty())
}

/// Replays the promiser's own events: a keeping's delay runs from the
/// sample that completed its set of conditions to the emission.
///
/// While an output is being computed the promiser does not consume further
/// condition samples, matching the blocking semantics of the simulator.
pub fn measure_sync(trace: &Trace, promise: &Promise) -> SyncReport {
    let mut report = SyncReport::default();
    let needed: BTreeSet<String> = promise.condition_labels().labels().map(str::to_string).collect();
    let own: BTreeSet<&str> = promise.body.labels().collect();
    let is_own = |label: &str| labels_of(label).all(|l| own.contains(l));

    let mut fresh: BTreeSet<String> = BTreeSet::new();
    let mut completed: Option<u64> = None;
    let mut last_keep: Option<(u64, u64)> = None;

    for e in trace.by(&promise.promiser) {
        let label = e.body_label.as_deref().unwrap_or_default();
        match e.kind {
            EventKind::Sample if completed.is_none() => {
                let mut touched = false;
                for l in labels_of(label) {
                    if needed.contains(l) {
                        fresh.insert(l.to_string());
                        touched = true;
                    }
                }
                if touched && fresh.len() == needed.len() {
                    fresh.clear();
                    completed = Some(e.observer_proper_time);
                }
            }
            EventKind::Kept if is_own(label) => {
                let key = (e.global_step, e.observer_proper_time);
                if last_keep == Some(key) {
                    continue;
                }
                last_keep = Some(key);
                match completed.take() {
                    Some(t) => report.delays.push(e.observer_proper_time - t),
                    None if needed.is_empty() => report.delays.push(0),
                    None => report.premature += 1,
                }
            }
            EventKind::NotKept if is_own(label) => fresh.clear(),
            EventKind::Restart if e.payload.is_some() => {
                fresh.clear();
                completed = None;
            }
            _ => {}
        }
    }
    report
}

/// Replaces one blocking agent by subagents `agent/1..agent/m`, one per
/// condition of each conditional offer, so that no subagent waits on more
/// than one dependency. Accepts for a condition move to the subagent that
/// uses it, and providers of that condition also promise it to the subagent.
pub fn partition_nonblocking(graph: &PromiseGraph, agent: &AgentId) -> Result<PromiseGraph> {
    let original = graph.agent(agent).ok_or_else(|| Error::UnknownAgent(agent.clone()))?;
    let conditional: Vec<&Promise> = graph
        .promises_by(agent)
        .filter(|p| p.polarity == Polarity::Offer && p.conditions.len() > 1)
        .collect();
    if conditional.is_empty() {
        return Ok(graph.clone());
    }

    let mut out = graph.clone();
    let mut sub_of: BTreeMap<String, AgentId> = BTreeMap::new();
    let mut next = 1;
    let mut removed: BTreeSet<PromiseId> = BTreeSet::new();
    let mut added = Vec::new();
    for p in &conditional {
        removed.insert(p.id.clone());
        for (i, cond) in p.conditions.iter().enumerate() {
            let key = cond.to_string();
            let sub = sub_of
                .entry(key)
                .or_insert_with(|| {
                    let id = AgentId::new(format!("{agent}/{next}"));
                    next += 1;
                    id
                })
                .clone();
            out.agents.entry(sub.clone()).or_insert_with(|| Agent {
                id: sub.clone(),
                variables: original.variables.clone(),
                scale: original.scale,
                interior: None,
            });
            let mut part = (*p).clone();
            part.id = PromiseId::new(format!("{}/{}", p.id, i + 1));
            part.promiser = sub;
            part.conditions = vec![cond.clone()];
            added.push(part);
        }
    }

    for q in out.promises.iter_mut() {
        if q.polarity == Polarity::Accept && &q.promiser == agent {
            if let Some((_, sub)) = sub_of.iter().find(|(k, _)| cond_matches(k, &q.body, &conditional)) {
                q.promiser = sub.clone();
            }
        }
    }
    for q in out.promises.iter_mut() {
        if q.polarity != Polarity::Offer || &q.promiser == agent {
            continue;
        }
        if let Promisees::Agents(set) = &mut q.promisees {
            if set.contains(agent) {
                for c in conditional.iter().flat_map(|p| &p.conditions) {
                    if q.body.intersects(c) {
                        set.insert(sub_of[&c.to_string()].clone());
                    }
                }
            }
        }
    }
    out.promises.retain(|q| !removed.contains(&q.id));
    out.promises.extend(added);
    out.validate()?;
    Ok(out)
}

fn cond_matches(key: &str, accept: &Body, offers: &[&Promise]) -> bool {
    offers
        .iter()
        .flat_map(|p| &p.conditions)
        .any(|c| c.to_string() == key && accept.intersects(c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::trace::TraceEvent;

    fn ev(step: u64, who: &str, t: u64, kind: EventKind, label: &str) -> TraceEvent {
        TraceEvent {
            global_step: step,
            observer: AgentId::new(who),
            observer_proper_time: t,
            kind,
            message_id: None,
            body_label: Some(label.into()),
            payload: None,
        }
    }

    fn two_conditions() -> Promise {
        Promise::offer("p", "R", Promisees::Any, Body::of(["out"]))
            .given(Body::of(["y1"]))
            .given(Body::of(["y2"]))
    }

    #[test]
    fn delay_counts_from_last_condition() {
        let trace = Trace {
            events: vec![
                ev(0, "R", 1, EventKind::Sample, "y2"),
                ev(1, "R", 2, EventKind::Sample, "y1"),
                ev(2, "R", 3, EventKind::Interior, "out"),
                ev(3, "R", 4, EventKind::Interior, "out"),
                ev(3, "R", 4, EventKind::Kept, "out"),
                ev(3, "R", 4, EventKind::Kept, "out"),
            ],
        };
        let r = measure_sync(&trace, &two_conditions());
        assert_eq!(r.delays, vec![2]);
        assert_eq!(r.is_synchronous(2), Some(true));
        assert_eq!(r.is_synchronous(1), Some(false));
    }

    #[test]
    fn never_kept_is_empty() {
        let trace = Trace {
            events: vec![ev(0, "R", 1, EventKind::Sample, "y1")],
        };
        let r = measure_sync(&trace, &two_conditions());
        assert!(r.delays.is_empty());
        assert_eq!(r.is_synchronous(0), None);
    }
}
