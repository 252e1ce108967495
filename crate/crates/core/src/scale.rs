//! Scale composition and classification.
//!
//! Agents at scale `n` are grouped into non-overlapping member sets; each set
//! becomes a superagent at scale `n + 1`. The checks in this module all take
//! an agent id that may name either a plain agent or such a superagent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::body::Body;
use crate::error::{Error, Result};
use crate::graph::{Agent, AgentId, Polarity, Promise, PromiseGraph, PromiseId, Promisees};

/// Statefulness class. The derived order is the composition order: the
/// class of a composite is the maximum over its parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateClass {
    StronglyStateless,
    WeaklyStateless,
    Stateful,
}

impl fmt::Display for StateClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StateClass::StronglyStateless => "strongly_stateless",
            StateClass::WeaklyStateless => "weakly_stateless",
            StateClass::Stateful => "stateful",
        })
    }
}

/// Where the memory of a stateful agent lives relative to the agent that
/// mediates its exterior promises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Locality {
    Local,
    NonLocal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateReport {
    pub class: StateClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality: Option<Locality>,
}

/// Groups agents into superagents and raises the graph scale by one.
pub fn compose(graph: &PromiseGraph, partition: &[BTreeSet<AgentId>]) -> Result<PromiseGraph> {
    let mut seen = BTreeSet::new();
    for set in partition {
        for a in set {
            if !graph.agents.contains_key(a) {
                return Err(Error::UnknownAgent(a.clone()));
            }
            if !seen.insert(a) {
                return Err(Error::PartitionOverlap(a.clone()));
            }
        }
    }
    let mut out = graph.clone();
    for set in partition.iter().filter(|s| !s.is_empty()) {
        out = out.collapse_assisted(set)?;
    }
    out.scale = graph.scale + 1;
    Ok(out)
}

fn lookup<'a>(graph: &'a PromiseGraph, agent: &AgentId) -> Result<&'a Agent> {
    graph
        .agent(agent)
        .ok_or_else(|| Error::UnknownAgent(agent.clone()))
}

fn own_class(graph: &PromiseGraph, agent: &Agent) -> StateClass {
    let accepts = graph
        .promises_by(&agent.id)
        .any(|p| p.polarity == Polarity::Accept);
    if !accepts {
        StateClass::StronglyStateless
    } else if agent.variables.iter().all(|v| v.history <= 1) {
        StateClass::WeaklyStateless
    } else {
        StateClass::Stateful
    }
}

fn class_of(graph: &PromiseGraph, agent: &Agent) -> StateClass {
    let own = own_class(graph, agent);
    match &agent.interior {
        None => own,
        Some(interior) => interior
            .agents
            .values()
            .map(|m| class_of(interior, m))
            .fold(own, StateClass::max),
    }
}

fn holds_memory(graph: &PromiseGraph, agent: &Agent) -> bool {
    let declared = match &agent.interior {
        None => agent.variables.iter().any(|v| v.history > 1),
        Some(interior) => interior.agents.values().any(|m| holds_memory(interior, m)),
    };
    declared && class_of(graph, agent) == StateClass::Stateful
}

/// Classifies an agent or superagent.
pub fn classify_state(graph: &PromiseGraph, agent: &AgentId) -> Result<StateReport> {
    let a = lookup(graph, agent)?;
    let class = class_of(graph, a);
    let locality = (class == StateClass::Stateful).then(|| match &a.interior {
        None => Locality::Local,
        Some(interior) => {
            let inside: BTreeSet<&AgentId> = interior.agents.keys().collect();
            let mediates = |m: &AgentId| {
                interior.promises_by(m).any(|p| match &p.promisees {
                    Promisees::Any => true,
                    Promisees::Agents(set) => set.iter().any(|x| !inside.contains(x)),
                })
            };
            let local = interior
                .agents
                .values()
                .any(|m| mediates(&m.id) && holds_memory(interior, m));
            if local {
                Locality::Local
            } else {
                Locality::NonLocal
            }
        }
    });
    Ok(StateReport { class, locality })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Redundancy {
    Redundant,
    Partitioned,
    Neither,
}

fn offered_to(graph: &PromiseGraph, from: &AgentId, to: &AgentId) -> Body {
    graph
        .promises_by(from)
        .filter(|p| p.polarity == Polarity::Offer && p.promisees.admits(to))
        .fold(Body::new(), |acc, p| acc.union(&p.body))
}

fn accepted_from(graph: &PromiseGraph, by: &AgentId, from: &AgentId) -> Body {
    graph
        .promises_by(by)
        .filter(|p| p.polarity == Polarity::Accept && p.promisees.admits(from))
        .fold(Body::new(), |acc, p| acc.union(&p.body))
}

/// Decides whether `observer` sees `a1` and `a2` as interchangeable
/// (redundant), as distinguishable complementary parts (partitioned), or
/// neither.
pub fn check_redundant(
    graph: &PromiseGraph,
    a1: &AgentId,
    a2: &AgentId,
    observer: &AgentId,
) -> Result<Redundancy> {
    for a in [a1, a2, observer] {
        lookup(graph, a)?;
    }
    let x1 = offered_to(graph, a1, observer);
    let x2 = offered_to(graph, a2, observer);
    let y1 = accepted_from(graph, observer, a1);
    let y2 = accepted_from(graph, observer, a2);

    let seen1 = x1.intersects(&y1);
    let seen2 = x2.intersects(&y2);
    Ok(if !x1.is_empty() && x1.same_labels(&x2) && seen1 && seen2 {
        Redundancy::Redundant
    } else if seen1 && seen2 && !x1.intersects(&x2) {
        Redundancy::Partitioned
    } else {
        Redundancy::Neither
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Invariance {
    Invariant,
    ConditionalOn(Vec<Body>),
}

impl Invariance {
    pub fn is_invariant(&self) -> bool {
        matches!(self, Invariance::Invariant)
    }
}

/// Every id inside an agent's boundary (members at all depths, including
/// intermediate superagents) and every promise those members made.
fn flatten(graph: &PromiseGraph, agent: &Agent, ids: &mut BTreeSet<AgentId>, promises: &mut Vec<Promise>) {
    ids.insert(agent.id.clone());
    match &agent.interior {
        None => promises.extend(graph.promises_by(&agent.id).cloned()),
        Some(interior) => {
            for m in interior.agents.values() {
                flatten(interior, m, ids, promises);
            }
        }
    }
}

/// An agent is invariant under exterior change iff every condition on its
/// exterior offers is supplied from inside its boundary by a promise
/// declared constant.
pub fn check_invariant(graph: &PromiseGraph, agent: &AgentId) -> Result<Invariance> {
    let a = lookup(graph, agent)?;
    let mut inside = BTreeSet::new();
    let mut promises = Vec::new();
    flatten(graph, a, &mut inside, &mut promises);

    let reaches_inside = |p: &Promise| match &p.promisees {
        Promisees::Any => true,
        Promisees::Agents(set) => set.iter().any(|x| inside.contains(x)),
    };
    let exterior = |p: &Promise| match &p.promisees {
        Promisees::Any => true,
        Promisees::Agents(set) => set.iter().any(|x| !inside.contains(x)),
    };

    let constant_supply = promises
        .iter()
        .filter(|p| p.polarity == Polarity::Offer && p.constant && reaches_inside(p))
        .fold(Body::new(), |acc, p| acc.union(&p.body));

    let mut missing: Vec<Body> = Vec::new();
    for p in promises
        .iter()
        .filter(|p| p.polarity == Polarity::Offer && exterior(p))
    {
        for c in &p.conditions {
            let open = c.minus(&constant_supply);
            if !open.is_empty() && !missing.contains(&open) {
                missing.push(open);
            }
        }
    }
    missing.sort();
    Ok(if missing.is_empty() {
        Invariance::Invariant
    } else {
        Invariance::ConditionalOn(missing)
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// An exterior promise that is only kept with outside assistance.
    ConditionalPromise { promise: PromiseId, conditions: Body },
    /// An accept that feeds a condition: (receiver, -body, provider).
    AssistingBinding {
        receiver: AgentId,
        body: Body,
        provider: AgentId,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedNothing {
    pub shared_nothing: bool,
    pub hub: bool,
    pub violations: Vec<Violation>,
}

/// Checks the shared-nothing property and flags confluence/divergence hubs.
pub fn check_shared_nothing(graph: &PromiseGraph, agent: &AgentId) -> Result<SharedNothing> {
    lookup(graph, agent)?;
    let bindings = graph.bindings_unchecked();
    let mut violations = Vec::new();

    let mut needed = Body::new();
    for p in graph.promises_by(agent) {
        if p.polarity == Polarity::Offer && p.is_conditional() {
            let conditions = p.condition_labels();
            needed = needed.union(&conditions);
            violations.push(Violation::ConditionalPromise {
                promise: p.id.clone(),
                conditions,
            });
        }
    }
    let mut assisting = BTreeSet::new();
    for b in bindings.iter().filter(|b| &b.receiver == agent) {
        let used = b.effective_body.intersect(&needed);
        if !used.is_empty() {
            assisting.insert((b.provider.clone(), used));
        }
    }
    violations.extend(assisting.into_iter().map(|(provider, body)| Violation::AssistingBinding {
        receiver: agent.clone(),
        body,
        provider,
    }));

    let upstream: BTreeSet<&AgentId> = bindings
        .iter()
        .filter(|b| &b.receiver == agent)
        .map(|b| &b.provider)
        .collect();
    let downstream: BTreeSet<&AgentId> = bindings
        .iter()
        .filter(|b| &b.provider == agent)
        .map(|b| &b.receiver)
        .collect();
    let hub = (upstream.len() >= 2 && !downstream.is_empty())
        || (upstream.len() == 1 && downstream.len() >= 2);

    Ok(SharedNothing {
        shared_nothing: violations.is_empty() && !hub,
        hub,
        violations,
    })
}

/// Classification of every agent in a graph.
pub fn classify_all(graph: &PromiseGraph) -> BTreeMap<AgentId, StateReport> {
    graph
        .agents
        .keys()
        .map(|id| (id.clone(), classify_state(graph, id).expect("agent exists")))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[&str]) -> BTreeSet<AgentId> {
        ids.iter().map(|s| AgentId::new(*s)).collect()
    }

    fn id(s: &str) -> AgentId {
        AgentId::new(s)
    }

    #[test]
    fn class_order_is_composition_order() {
        assert!(StateClass::Stateful > StateClass::WeaklyStateless);
        assert!(StateClass::WeaklyStateless > StateClass::StronglyStateless);
    }

    #[test]
    fn no_accepts_is_strongly_stateless() {
        let g = PromiseGraph::new()
            .with_agents(["A", "B"])
            .with_promise(Promise::offer("p", "A", Promisees::Any, Body::of(["v"])).constant());
        let r = classify_state(&g, &id("A")).unwrap();
        assert_eq!(r.class, StateClass::StronglyStateless);
        assert_eq!(r.locality, None);
    }

    #[test]
    fn empty_and_nonempty_memory_is_stateful() {
        let g = PromiseGraph::new()
            .with_agent(Agent::new("A").with_variable("cache", 0).with_variable("log", 5))
            .with_agents(["B"])
            .with_promise(Promise::accept("in", "A", Promisees::of(["B"]), Body::of(["x"])));
        assert_eq!(classify_state(&g, &id("A")).unwrap().class, StateClass::Stateful);
    }

    #[test]
    fn overlapping_partition_names_agent() {
        let g = PromiseGraph::new().with_agents(["A", "B", "C"]);
        let err = compose(&g, &[set(&["A", "B"]), set(&["B", "C"])]).unwrap_err();
        assert_eq!(err, Error::PartitionOverlap(id("B")));
    }

    #[test]
    fn singleton_partition_only_raises_scale() {
        let g = PromiseGraph::new()
            .with_agents(["A", "B"])
            .with_promise(Promise::offer("p", "A", Promisees::of(["B"]), Body::of(["v"])));
        let up = compose(&g, &[set(&["A"]), set(&["B"])]).unwrap();
        assert_eq!(up.scale, 1);
        assert_eq!(up.agents, g.agents);
        assert_eq!(up.promises, g.promises);
    }

    fn observer_model(x1: &[&str], x2: &[&str], y: &[&str]) -> PromiseGraph {
        PromiseGraph::new()
            .with_agents(["A1", "A2", "A3"])
            .with_promise(Promise::offer("1", "A1", Promisees::of(["A3"]), Body::of(x1.iter().copied())))
            .with_promise(Promise::offer("2", "A2", Promisees::of(["A3"]), Body::of(x2.iter().copied())))
            .with_promise(Promise::accept("3", "A3", Promisees::of(["A1", "A2"]), Body::of(y.iter().copied())))
    }

    #[test]
    fn redundancy_cases() {
        let check = |g: &PromiseGraph| check_redundant(g, &id("A1"), &id("A2"), &id("A3")).unwrap();
        assert_eq!(check(&observer_model(&["x"], &["x"], &["x"])), Redundancy::Redundant);
        assert_eq!(
            check(&observer_model(&["x1"], &["x2"], &["x1", "x2"])),
            Redundancy::Partitioned
        );
        assert_eq!(check(&observer_model(&["x"], &["x"], &["z"])), Redundancy::Neither);
    }

    #[test]
    fn invariance_requires_constant_interior_supply() {
        let build = |constant: bool| {
            let mut d = Promise::offer("pd", "AD", Promisees::of(["A"]), Body::of(["D"]));
            d.constant = constant;
            PromiseGraph::new()
                .with_agents(["A", "AD", "O"])
                .with_promise(
                    Promise::offer("pa", "A", Promisees::of(["O"]), Body::of(["X"])).given(Body::of(["D"])),
                )
                .with_promise(Promise::accept("pt", "A", Promisees::of(["AD"]), Body::of(["D"])))
                .with_promise(d)
        };
        for constant in [true, false] {
            let g = build(constant);
            let a = check_invariant(&g, &id("A")).unwrap();
            assert_eq!(a, Invariance::ConditionalOn(vec![Body::of(["D"])]));
            let merged = compose(&g, &[set(&["A", "AD"])]).unwrap();
            let verdict = check_invariant(&merged, &id("{A,AD}")).unwrap();
            assert_eq!(verdict.is_invariant(), constant);
        }
    }

    #[test]
    fn unconditional_is_invariant() {
        let g = PromiseGraph::new()
            .with_agents(["A", "O"])
            .with_promise(Promise::offer("p", "A", Promisees::of(["O"]), Body::of(["X"])));
        assert!(check_invariant(&g, &id("A")).unwrap().is_invariant());
    }

    #[test]
    fn isolated_promiser_shares_nothing() {
        let g = PromiseGraph::new()
            .with_agents(["A", "O"])
            .with_promise(Promise::offer("p", "A", Promisees::of(["O"]), Body::of(["X"])))
            .with_promise(Promise::accept("q", "O", Promisees::of(["A"]), Body::of(["X"])));
        let r = check_shared_nothing(&g, &id("A")).unwrap();
        assert!(r.shared_nothing && !r.hub && r.violations.is_empty());
    }

    #[test]
    fn relay_is_not_a_hub() {
        let g = PromiseGraph::new()
            .with_agents(["A", "B", "C"])
            .with_promise(Promise::offer("1", "A", Promisees::of(["B"]), Body::of(["x"])))
            .with_promise(Promise::accept("2", "B", Promisees::of(["A"]), Body::of(["x"])))
            .with_promise(Promise::offer("3", "B", Promisees::of(["C"]), Body::of(["y"])))
            .with_promise(Promise::accept("4", "C", Promisees::of(["B"]), Body::of(["y"])));
        assert!(!check_shared_nothing(&g, &id("B")).unwrap().hub);
    }

    #[test]
    fn divergence_is_a_hub() {
        let g = PromiseGraph::new()
            .with_agents(["A", "B", "C", "D"])
            .with_promise(Promise::offer("1", "A", Promisees::of(["B"]), Body::of(["x"])))
            .with_promise(Promise::accept("2", "B", Promisees::of(["A"]), Body::of(["x"])))
            .with_promise(Promise::offer("3", "B", Promisees::of(["C", "D"]), Body::of(["y"])))
            .with_promise(Promise::accept("4", "C", Promisees::of(["B"]), Body::of(["y"])))
            .with_promise(Promise::accept("5", "D", Promisees::of(["B"]), Body::of(["y"])));
        let r = check_shared_nothing(&g, &id("B")).unwrap();
        assert!(r.hub);
        assert!(!r.shared_nothing);
    }
}
