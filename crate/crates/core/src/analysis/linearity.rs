//! Linearity of a conditional promise: the output must be a fixed function
//! of the dependency value for the whole life of the promise.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Promise;
use crate::sim::{EventKind, Trace};

/// One keeping of the promise, paired with the dependency value the
/// promiser had most recently sampled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keeping {
    pub global_step: u64,
    pub proper_time: u64,
    pub dependency: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    pub first: Keeping,
    pub second: Keeping,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearityReport {
    pub linear: bool,
    /// Linear, with one output across at least two dependency values.
    pub causally_independent: bool,
    pub keepings: usize,
    /// The observed dependency -> output mapping (first output per value).
    pub mapping: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

/// Extracts keepings of `promise` from its promiser's events.
pub fn keepings(trace: &Trace, promise: &Promise, dependency: &str) -> Vec<Keeping> {
    let own: BTreeSet<&str> = promise.body.labels().collect();
    let mut latest: Option<String> = None;
    let mut last_key = None;
    let mut out = Vec::new();
    for e in trace.by(&promise.promiser) {
        let label = e.body_label.as_deref().unwrap_or_default();
        let mut labels = label.split(',').filter(|l| !l.is_empty());
        match e.kind {
            EventKind::Sample if labels.any(|l| l == dependency) => latest = e.payload.clone(),
            EventKind::Kept if labels.all(|l| own.contains(l)) => {
                let key = (e.global_step, e.observer_proper_time);
                if last_key == Some(key) {
                    continue;
                }
                last_key = Some(key);
                if let (Some(d), Some(v)) = (&latest, &e.payload) {
                    out.push(Keeping {
                        global_step: e.global_step,
                        proper_time: e.observer_proper_time,
                        dependency: d.clone(),
                        output: v.clone(),
                    });
                }
            }
            _ => {}
        }
    }
    out
}

/// Judges a sequence of keepings. A counterexample settles the question
/// even when some dependency values were seen only once.
pub fn linearity_of(keepings: &[Keeping]) -> Result<LinearityReport> {
    let mut first: BTreeMap<&str, &Keeping> = BTreeMap::new();
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
    let mut witness = None;
    for k in keepings {
        *seen.entry(&k.dependency).or_default() += 1;
        let f = *first.entry(&k.dependency).or_insert(k);
        if witness.is_none() && f.output != k.output {
            witness = Some(Witness {
                first: f.clone(),
                second: k.clone(),
            });
        }
    }
    if witness.is_none() {
        let fewest = seen.values().copied().min().unwrap_or(0);
        if fewest < 2 {
            return Err(Error::InsufficientData {
                what: "keepings per dependency value",
                required: 2,
                actual: fewest,
            });
        }
    }
    let mapping: BTreeMap<String, String> = first
        .iter()
        .map(|(d, k)| (d.to_string(), k.output.clone()))
        .collect();
    let linear = witness.is_none();
    let outputs: BTreeSet<&String> = mapping.values().collect();
    Ok(LinearityReport {
        linear,
        causally_independent: linear && mapping.len() >= 2 && outputs.len() == 1,
        keepings: keepings.len(),
        mapping,
        witness,
    })
}

pub fn check_linearity(trace: &Trace, promise: &Promise, dependency: &str) -> Result<LinearityReport> {
    linearity_of(&keepings(trace, promise, dependency))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn k(step: u64, d: &str, v: &str) -> Keeping {
        Keeping {
            global_step: step,
            proper_time: step,
            dependency: d.into(),
            output: v.into(),
        }
    }

    #[test]
    fn static_lookup_is_linear() {
        let ks = [k(0, "a", "1"), k(1, "b", "2"), k(2, "a", "1"), k(3, "b", "2")];
        let r = linearity_of(&ks).unwrap();
        assert!(r.linear);
        assert!(!r.causally_independent);
    }

    #[test]
    fn mutation_gives_witness() {
        let ks = [k(0, "a", "1"), k(1, "a", "1"), k(2, "a", "9")];
        let r = linearity_of(&ks).unwrap();
        assert!(!r.linear);
        let w = r.witness.unwrap();
        assert_eq!((w.first.global_step, w.second.global_step), (0, 2));
    }

    #[test]
    fn constant_output_is_causally_independent() {
        let ks = [k(0, "a", "c"), k(1, "b", "c"), k(2, "a", "c"), k(3, "b", "c")];
        let r = linearity_of(&ks).unwrap();
        assert!(r.linear && r.causally_independent);
    }

    #[test]
    fn single_keeping_is_insufficient() {
        let ks = [k(0, "a", "1"), k(1, "a", "1"), k(2, "b", "2")];
        assert!(matches!(linearity_of(&ks), Err(Error::InsufficientData { actual: 1, .. })));
    }
}
