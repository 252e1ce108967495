//! The promise graph: agents, promises, bindings, conditional resolution and
//! assisted-promise collapse.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::body::Body;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub String);

impl AgentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for AgentId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromiseId(pub String);

impl PromiseId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PromiseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PromiseId {
    fn from(s: &str) -> Self {
        Self(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Polarity {
    #[serde(rename = "+", alias = "offer")]
    Offer,
    #[serde(rename = "-", alias = "accept")]
    Accept,
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Polarity::Offer => "+",
            Polarity::Accept => "-",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Promisees {
    /// The `*` wildcard: binds to any agent holding a matching counterpart.
    Any,
    Agents(BTreeSet<AgentId>),
}

impl Promisees {
    pub fn of<I: IntoIterator<Item = S>, S: Into<String>>(ids: I) -> Self {
        Promisees::Agents(ids.into_iter().map(|s| AgentId(s.into())).collect())
    }

    pub fn admits(&self, agent: &AgentId) -> bool {
        match self {
            Promisees::Any => true,
            Promisees::Agents(set) => set.contains(agent),
        }
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, Promisees::Any)
    }
}

impl fmt::Display for Promisees {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Promisees::Any => f.write_str("*"),
            Promisees::Agents(set) => {
                let ids: Vec<&str> = set.iter().map(AgentId::as_str).collect();
                if ids.len() == 1 {
                    f.write_str(ids[0])
                } else {
                    write!(f, "{{{}}}", ids.join(","))
                }
            }
        }
    }
}

/// How long a promise is in force, in simulation ticks.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub enum Lifetime {
    #[default]
    Unbounded,
    Ticks(u64),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Promise {
    pub id: PromiseId,
    pub promiser: AgentId,
    pub promisees: Promisees,
    pub polarity: Polarity,
    pub body: Body,
    /// The `| d` clause: each entry is one dependency body.
    pub conditions: Vec<Body>,
    pub constant: bool,
    pub imposed: bool,
    pub scope: Option<String>,
    pub lifetime: Lifetime,
}

impl Promise {
    pub fn offer(id: &str, promiser: &str, promisees: Promisees, body: Body) -> Self {
        Self {
            id: PromiseId(id.to_string()),
            promiser: AgentId::new(promiser),
            promisees,
            polarity: Polarity::Offer,
            body,
            conditions: Vec::new(),
            constant: false,
            imposed: false,
            scope: None,
            lifetime: Lifetime::Unbounded,
        }
    }

    pub fn accept(id: &str, promiser: &str, promisees: Promisees, body: Body) -> Self {
        Self {
            polarity: Polarity::Accept,
            ..Self::offer(id, promiser, promisees, body)
        }
    }

    pub fn given(mut self, condition: Body) -> Self {
        self.conditions.push(condition);
        self
    }

    pub fn constant(mut self) -> Self {
        self.constant = true;
        self
    }

    pub fn is_conditional(&self) -> bool {
        self.conditions.iter().any(|c| !c.is_empty())
    }

    /// All labels mentioned by any condition.
    pub fn condition_labels(&self) -> Body {
        self.conditions.iter().fold(Body::new(), |acc, c| acc.union(c))
    }
}

impl fmt::Display for Promise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}{}", self.promiser, self.polarity, self.body)?;
        if self.is_conditional() {
            let conds: Vec<String> = self.conditions.iter().map(|c| c.to_string()).collect();
            write!(f, "|{}", conds.join(","))?;
        }
        write!(f, " -> {}", self.promisees)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<String>,
    /// Declared memory of past interactions: 0 none, 1 last state only,
    /// anything larger is a memory process.
    #[serde(default)]
    pub history: u32,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: AgentId,
    pub variables: Vec<Variable>,
    pub scale: u32,
    /// For superagents: the members and every promise they made, as they
    /// were before the boundary was drawn.
    pub interior: Option<Box<PromiseGraph>>,
}

impl Agent {
    pub fn new(id: &str) -> Self {
        Self {
            id: AgentId::new(id),
            variables: Vec::new(),
            scale: 0,
            interior: None,
        }
    }

    pub fn with_variable(mut self, name: &str, history: u32) -> Self {
        self.variables.push(Variable {
            name: name.to_string(),
            domain: Vec::new(),
            history,
            constant: false,
        });
        self
    }

    pub fn is_super(&self) -> bool {
        self.interior.is_some()
    }

    pub fn members(&self) -> Vec<AgentId> {
        match &self.interior {
            Some(g) => g.agents.keys().cloned().collect(),
            None => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromiseGraph {
    pub scale: u32,
    pub agents: BTreeMap<AgentId, Agent>,
    pub promises: Vec<Promise>,
}

/// A matched offer/accept pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Binding {
    pub provider: AgentId,
    pub receiver: AgentId,
    pub effective_body: Body,
    pub offer: PromiseId,
    pub accept: PromiseId,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub imposed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Kept,
    NotKept,
    Unknown,
}

/// A local verdict formed by one agent about one promise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assessment {
    pub assessor: AgentId,
    pub promise: PromiseId,
    pub verdict: Verdict,
    pub sample_time: u64,
}

impl Assessment {
    pub fn kept(assessor: &str, promise: &str) -> Self {
        Self {
            assessor: AgentId::new(assessor),
            promise: PromiseId(promise.to_string()),
            verdict: Verdict::Kept,
            sample_time: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resolution {
    Unconditional,
    Complete,
    Incomplete,
}

impl PromiseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_agent(mut self, agent: Agent) -> Self {
        self.agents.insert(agent.id.clone(), agent);
        self
    }

    pub fn with_agents<I: IntoIterator<Item = S>, S: AsRef<str>>(mut self, ids: I) -> Self {
        for id in ids {
            let a = Agent::new(id.as_ref());
            self.agents.insert(a.id.clone(), a);
        }
        self
    }

    pub fn with_promise(mut self, promise: Promise) -> Self {
        self.promises.push(promise);
        self
    }

    pub fn agent(&self, id: &AgentId) -> Option<&Agent> {
        self.agents.get(id)
    }

    pub fn promise(&self, id: &PromiseId) -> Option<&Promise> {
        self.promises.iter().find(|p| &p.id == id)
    }

    pub fn promises_by<'a>(&'a self, agent: &'a AgentId) -> impl Iterator<Item = &'a Promise> + 'a {
        self.promises.iter().filter(move |p| &p.promiser == agent)
    }

    /// Checks that every promise references existing agents and that ids are unique.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for p in &self.promises {
            if !seen.insert(&p.id) {
                return Err(Error::Duplicate {
                    kind: "promise",
                    id: p.id.0.clone(),
                });
            }
            if p.body.is_empty() {
                return Err(Error::EmptyBody(p.id.clone()));
            }
            if !self.agents.contains_key(&p.promiser) {
                return Err(Error::DanglingAgent {
                    promise: p.id.clone(),
                    agent: p.promiser.clone(),
                });
            }
            if let Promisees::Agents(set) = &p.promisees {
                if set.is_empty() {
                    return Err(Error::EmptyPromisees(p.id.clone()));
                }
                if let Some(missing) = set.iter().find(|a| !self.agents.contains_key(*a)) {
                    return Err(Error::DanglingAgent {
                        promise: p.id.clone(),
                        agent: missing.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Every offer/accept pair with matching endpoints and a non-empty body
    /// intersection, in canonical order.
    pub fn bind_promises(&self) -> Result<Vec<Binding>> {
        self.validate()?;
        Ok(self.bindings_unchecked())
    }

    pub(crate) fn bindings_unchecked(&self) -> Vec<Binding> {
        let (offers, accepts): (Vec<&Promise>, Vec<&Promise>) = self
            .promises
            .iter()
            .partition(|p| p.polarity == Polarity::Offer);
        let mut out = Vec::new();
        for o in &offers {
            for a in &accepts {
                if o.promiser == a.promiser {
                    continue;
                }
                if !o.promisees.admits(&a.promiser) || !a.promisees.admits(&o.promiser) {
                    continue;
                }
                let effective_body = o.body.intersect(&a.body);
                if effective_body.is_empty() {
                    continue;
                }
                out.push(Binding {
                    provider: o.promiser.clone(),
                    receiver: a.promiser.clone(),
                    effective_body,
                    offer: o.id.clone(),
                    accept: a.id.clone(),
                    imposed: o.imposed,
                });
            }
        }
        out.sort();
        out
    }

    /// Classifies each promise as unconditional, complete or incomplete.
    ///
    /// A condition label counts as satisfied when the promiser holds a bound
    /// accept covering it and has assessed the upstream offer as kept.
    pub fn resolve_conditionals(
        &self,
        assessments: &[Assessment],
    ) -> BTreeMap<PromiseId, Resolution> {
        let latest = latest_verdicts(assessments);
        let bindings = self.bindings_unchecked();
        self.promises
            .iter()
            .map(|p| {
                let res = if !p.is_conditional() {
                    Resolution::Unconditional
                } else {
                    let satisfied = p.condition_labels().labels().all(|label| {
                        bindings.iter().any(|b| {
                            b.receiver == p.promiser
                                && b.effective_body.contains(label)
                                && latest.get(&(&p.promiser, &b.offer)) == Some(&Verdict::Kept)
                        })
                    });
                    if satisfied {
                        Resolution::Complete
                    } else {
                        Resolution::Incomplete
                    }
                };
                (p.id.clone(), res)
            })
            .collect()
    }

    /// Static half of the conditional promise law: every condition label is
    /// at least covered by a bound accept held by the promiser.
    pub fn conditions_accepted(&self, promise: &Promise) -> bool {
        let bindings = self.bindings_unchecked();
        promise.condition_labels().labels().all(|label| {
            bindings
                .iter()
                .any(|b| b.receiver == promise.promiser && b.effective_body.contains(label))
        })
    }

    /// Redraws the boundary around `cluster`, turning it into one agent.
    ///
    /// Promises between members disappear from the exterior view (they are
    /// kept in the new agent's interior snapshot). Exterior promises keep
    /// their bodies; condition labels that a member receives from another
    /// member are erased.
    pub fn collapse_assisted(&self, cluster: &BTreeSet<AgentId>) -> Result<PromiseGraph> {
        if cluster.is_empty() {
            return Err(Error::Argument("cluster must not be empty".into()));
        }
        if let Some(missing) = cluster.iter().find(|a| !self.agents.contains_key(*a)) {
            return Err(Error::UnknownAgent(missing.clone()));
        }
        if cluster.len() == 1 {
            return Ok(self.clone());
        }

        let new_id = cluster_id(cluster);
        if self.agents.contains_key(&new_id) {
            return Err(Error::Duplicate {
                kind: "agent",
                id: new_id.0,
            });
        }

        let inside = |a: &AgentId| cluster.contains(a);

        // Labels each member obtains from inside the boundary.
        let mut internal_supply: BTreeMap<&AgentId, Body> = BTreeMap::new();
        for b in self.bindings_unchecked() {
            if inside(&b.provider) && inside(&b.receiver) {
                let entry = internal_supply.entry(cluster.get(&b.receiver).unwrap()).or_default();
                *entry = entry.union(&b.effective_body);
            }
        }

        let interior = PromiseGraph {
            scale: self.scale,
            agents: self
                .agents
                .iter()
                .filter(|(id, _)| inside(id))
                .map(|(id, a)| (id.clone(), a.clone()))
                .collect(),
            promises: self
                .promises
                .iter()
                .filter(|p| inside(&p.promiser))
                .cloned()
                .collect(),
        };

        let mut promises = Vec::new();
        for p in &self.promises {
            if inside(&p.promiser) {
                let promisees = match &p.promisees {
                    Promisees::Any => Promisees::Any,
                    Promisees::Agents(set) => {
                        let outer: BTreeSet<AgentId> =
                            set.iter().filter(|a| !inside(a)).cloned().collect();
                        if outer.is_empty() {
                            continue;
                        }
                        Promisees::Agents(outer)
                    }
                };
                let supplied = internal_supply.get(&p.promiser);
                let conditions = p
                    .conditions
                    .iter()
                    .map(|c| match supplied {
                        Some(s) => c.minus(s),
                        None => c.clone(),
                    })
                    .filter(|c| !c.is_empty())
                    .collect();
                promises.push(Promise {
                    promiser: new_id.clone(),
                    promisees,
                    conditions,
                    ..p.clone()
                });
            } else {
                let promisees = match &p.promisees {
                    Promisees::Any => Promisees::Any,
                    Promisees::Agents(set) => Promisees::Agents(
                        set.iter()
                            .map(|a| if inside(a) { new_id.clone() } else { a.clone() })
                            .collect(),
                    ),
                };
                promises.push(Promise {
                    promisees,
                    ..p.clone()
                });
            }
        }

        let members: Vec<&Agent> = interior.agents.values().collect();
        let superagent = Agent {
            id: new_id.clone(),
            variables: members.iter().flat_map(|a| a.variables.clone()).collect(),
            scale: 1 + members.iter().map(|a| a.scale).max().unwrap_or(0),
            interior: Some(Box::new(interior)),
        };

        let mut agents: BTreeMap<AgentId, Agent> = self
            .agents
            .iter()
            .filter(|(id, _)| !inside(id))
            .map(|(id, a)| (id.clone(), a.clone()))
            .collect();
        agents.insert(new_id, superagent);

        Ok(PromiseGraph {
            scale: self.scale,
            agents,
            promises,
        })
    }
}

/// Canonical id for a merged cluster: sorted member ids in braces.
pub fn cluster_id(cluster: &BTreeSet<AgentId>) -> AgentId {
    let ids: Vec<&str> = cluster.iter().map(AgentId::as_str).collect();
    AgentId(format!("{{{}}}", ids.join(",")))
}

fn latest_verdicts(assessments: &[Assessment]) -> BTreeMap<(&AgentId, &PromiseId), Verdict> {
    let mut best: BTreeMap<(&AgentId, &PromiseId), (u64, Verdict)> = BTreeMap::new();
    for a in assessments {
        let key = (&a.assessor, &a.promise);
        match best.get(&key) {
            Some((t, _)) if *t > a.sample_time => {}
            _ => {
                best.insert(key, (a.sample_time, a.verdict));
            }
        }
    }
    best.into_iter().map(|(k, (_, v))| (k, v)).collect()
}
