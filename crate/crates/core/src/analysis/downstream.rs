//! Responsibility along conditional promise chains: who is downstream of
//! whom, which upstream agents every path depends on, and which choices
//! of provider each recipient has.

use std::collections::{BTreeMap, BTreeSet};

use petgraph::algo::{condensation, toposort};
use petgraph::graph::{DiGraph, NodeIndex};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graph::{AgentId, Binding, Polarity, Promise, PromiseGraph, PromiseId};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProviderOption {
    pub provider: AgentId,
    pub offer: PromiseId,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DownstreamReport {
    /// Agents in dependency order, upstream first (agents on loops omitted).
    pub order: Vec<AgentId>,
    /// Longest distance from a source of the dependency flow.
    pub rank: BTreeMap<AgentId, usize>,
    /// Union of the per-promise single points of failure.
    pub single_points_of_failure: BTreeSet<AgentId>,
    pub spof_by_promise: BTreeMap<PromiseId, BTreeSet<AgentId>>,
    /// Promises that cannot be satisfied even with every agent present.
    pub unsatisfiable: BTreeSet<PromiseId>,
    /// Per accept, the bound offers that could satisfy it.
    pub redundancy_options: BTreeMap<PromiseId, Vec<ProviderOption>>,
    /// Agent sets joined by a dependency cycle; excluded from ranking.
    pub feedback_loops: Vec<BTreeSet<AgentId>>,
}

struct Ctx<'a> {
    graph: &'a PromiseGraph,
    bindings: Vec<Binding>,
}

impl Ctx<'_> {
    fn offer_ok(&self, p: &Promise, removed: &BTreeSet<AgentId>, visiting: &mut BTreeSet<PromiseId>) -> bool {
        if removed.contains(&p.promiser) || !visiting.insert(p.id.clone()) {
            return false;
        }
        let ok = p.condition_labels().labels().all(|label| {
            self.bindings.iter().any(|b| {
                b.receiver == p.promiser
                    && b.effective_body.contains(label)
                    && !removed.contains(&b.provider)
                    && self.graph.promise(&b.offer).is_some_and(|o| self.offer_ok(o, removed, visiting))
            })
        });
        visiting.remove(&p.id);
        ok
    }

    /// Whether some chain of present agents can keep (or feed) the promise.
    fn satisfiable(&self, p: &Promise, removed: &BTreeSet<AgentId>) -> bool {
        let mut visiting = BTreeSet::new();
        match p.polarity {
            Polarity::Offer => self.offer_ok(p, removed, &mut visiting),
            Polarity::Accept => {
                !removed.contains(&p.promiser)
                    && self.bindings.iter().any(|b| {
                        b.accept == p.id
                            && !removed.contains(&b.provider)
                            && self
                                .graph
                                .promise(&b.offer)
                                .is_some_and(|o| self.offer_ok(o, removed, &mut visiting))
                    })
            }
        }
    }
}

/// True when, with `removed` agents gone, the promise still has a complete
/// path through present providers.
pub fn satisfiable_without(graph: &PromiseGraph, promise: &PromiseId, removed: &BTreeSet<AgentId>) -> Result<bool> {
    let ctx = Ctx {
        graph,
        bindings: graph.bind_promises()?,
    };
    Ok(graph.promise(promise).is_some_and(|p| ctx.satisfiable(p, removed)))
}

pub fn downstream_analysis(graph: &PromiseGraph) -> Result<DownstreamReport> {
    let bindings = graph.bind_promises()?;
    let mut flow: DiGraph<AgentId, ()> = DiGraph::new();
    let nodes: BTreeMap<&AgentId, NodeIndex> = graph.agents.keys().map(|a| (a, flow.add_node(a.clone()))).collect();
    let mut edges = BTreeSet::new();
    for b in &bindings {
        if edges.insert((&b.provider, &b.receiver)) {
            flow.add_edge(nodes[&b.provider], nodes[&b.receiver], ());
        }
    }

    let dag = condensation(flow, true);
    let topo = toposort(&dag, None).expect("condensation is acyclic");
    let mut level: BTreeMap<NodeIndex, usize> = BTreeMap::new();
    for n in &topo {
        let l = dag
            .neighbors_directed(*n, petgraph::Direction::Incoming)
            .map(|p| level[&p] + 1)
            .max()
            .unwrap_or(0);
        level.insert(*n, l);
    }

    let mut report = DownstreamReport::default();
    for n in &topo {
        let members = &dag[*n];
        let cyclic = members.len() > 1
            || bindings
                .iter()
                .any(|b| b.provider == members[0] && b.receiver == members[0]);
        if cyclic {
            report.feedback_loops.push(members.iter().cloned().collect());
        } else {
            report.order.push(members[0].clone());
            report.rank.insert(members[0].clone(), level[n]);
        }
    }
    report.feedback_loops.sort();

    let ctx = Ctx { graph, bindings };
    let none = BTreeSet::new();
    for p in &graph.promises {
        if !ctx.satisfiable(p, &none) {
            report.unsatisfiable.insert(p.id.clone());
            continue;
        }
        let spofs: BTreeSet<AgentId> = graph
            .agents
            .keys()
            .filter(|a| **a != p.promiser)
            .filter(|a| !ctx.satisfiable(p, &BTreeSet::from([(*a).clone()])))
            .cloned()
            .collect();
        if !spofs.is_empty() {
            report.single_points_of_failure.extend(spofs.iter().cloned());
            report.spof_by_promise.insert(p.id.clone(), spofs);
        }
    }
    for p in graph.promises.iter().filter(|p| p.polarity == Polarity::Accept) {
        let mut options: Vec<ProviderOption> = ctx
            .bindings
            .iter()
            .filter(|b| b.accept == p.id)
            .map(|b| ProviderOption {
                provider: b.provider.clone(),
                offer: b.offer.clone(),
            })
            .collect();
        options.sort();
        options.dedup();
        report.redundancy_options.insert(p.id.clone(), options);
    }
    Ok(report)
}
