//! YAML model and scenario documents.
//!
//! Parsing is two-phase: syntax errors carry a line and column, while
//! semantic problems are collected as [`Diagnostic`]s that name the field
//! path (`promises[2].promisees[0]`) and the promise or agent involved.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::body::Body;
use crate::error::{Error, Result};
use crate::graph::{Agent, AgentId, Lifetime, Polarity, Promise, PromiseGraph, PromiseId, Promisees, Variable};
use crate::sim::{ChannelSpec, ProcessSpec, Scenario};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl Diagnostic {
    fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentDoc {
    pub id: AgentId,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub variables: Vec<Variable>,
}

/// `"*"` or a list of agent ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PromiseesDoc {
    Wildcard(String),
    Agents(Vec<AgentId>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromiseDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<PromiseId>,
    pub promiser: AgentId,
    pub promisees: PromiseesDoc,
    pub polarity: Polarity,
    pub body: Body,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<Body>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub constant: bool,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub imposed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scope: Option<String>,
    /// Ticks; absent means unbounded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lifetime: Option<u64>,
}

impl PromiseDoc {
    pub fn from_promise(p: &Promise) -> Self {
        Self {
            id: Some(p.id.clone()),
            promiser: p.promiser.clone(),
            promisees: match &p.promisees {
                Promisees::Any => PromiseesDoc::Wildcard("*".into()),
                Promisees::Agents(s) => PromiseesDoc::Agents(s.iter().cloned().collect()),
            },
            polarity: p.polarity,
            body: p.body.clone(),
            conditions: p.conditions.clone(),
            constant: p.constant,
            imposed: p.imposed,
            scope: p.scope.clone(),
            lifetime: match p.lifetime {
                Lifetime::Unbounded => None,
                Lifetime::Ticks(t) => Some(t),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    pub version: u32,
    #[serde(default)]
    pub agents: Vec<AgentDoc>,
    #[serde(default)]
    pub promises: Vec<PromiseDoc>,
    /// Named partitions, each a list of disjoint member sets.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub partitions: BTreeMap<String, Vec<Vec<AgentId>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub processes: Vec<ProcessSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelSpec>,
}

/// A validated model: the graph plus the model-level simulation defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub graph: PromiseGraph,
    pub partitions: BTreeMap<String, Vec<BTreeSet<AgentId>>>,
    pub processes: Vec<ProcessSpec>,
    pub channels: Vec<ChannelSpec>,
}

impl Model {
    pub fn partition(&self, name: &str) -> Result<&[BTreeSet<AgentId>]> {
        self.partitions
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Argument(format!("unknown partition `{name}`")))
    }

    /// The scenario with model-level processes and channels folded in.
    /// A scenario process replaces the model's process on the same
    /// variable; scenario channels come later and so take precedence.
    pub fn scenario(&self, scenario: &Scenario) -> Scenario {
        let mut out = scenario.clone();
        out.processes = self
            .processes
            .iter()
            .filter(|m| {
                !scenario
                    .processes
                    .iter()
                    .any(|s| s.agent == m.agent && s.variable == m.variable)
            })
            .chain(&scenario.processes)
            .cloned()
            .collect();
        out.channels = self.channels.iter().chain(&scenario.channels).cloned().collect();
        out
    }
}

pub(crate) fn yaml_error(what: &'static str, e: &serde_yaml::Error) -> Error {
    let loc = e.location();
    let mut message = e.to_string();
    if let Some(cut) = message.find(" at line ") {
        message.truncate(cut);
    }
    Error::Parse {
        what,
        line: loc.as_ref().map(|l| l.line()),
        column: loc.as_ref().map(|l| l.column()),
        message,
    }
}

impl ModelDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_yaml::from_str(text).map_err(|e| yaml_error("model", &e))
    }

    pub fn to_yaml(&self) -> String {
        serde_yaml::to_string(self).expect("model documents always serialize")
    }

    pub fn from_graph(graph: &PromiseGraph) -> Self {
        Self {
            version: VERSION,
            agents: graph
                .agents
                .values()
                .map(|a| AgentDoc {
                    id: a.id.clone(),
                    variables: a.variables.clone(),
                })
                .collect(),
            promises: graph.promises.iter().map(PromiseDoc::from_promise).collect(),
            partitions: BTreeMap::new(),
            processes: Vec::new(),
            channels: Vec::new(),
        }
    }

    fn promise_id(&self, i: usize) -> PromiseId {
        self.promises[i].id.clone().unwrap_or_else(|| PromiseId::new(format!("p{i}")))
    }

    /// Every semantic problem in the document, in document order.
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        if self.version != VERSION {
            out.push(Diagnostic::new("version", format!("unsupported version {} (expected {VERSION})", self.version)));
        }
        let mut agents: BTreeMap<&AgentId, &AgentDoc> = BTreeMap::new();
        for (i, a) in self.agents.iter().enumerate() {
            if agents.insert(&a.id, a).is_some() {
                out.push(Diagnostic::new(format!("agents[{i}].id"), format!("duplicate agent `{}`", a.id)));
            }
            let mut names = BTreeSet::new();
            for (j, v) in a.variables.iter().enumerate() {
                if !names.insert(&v.name) {
                    out.push(Diagnostic::new(
                        format!("agents[{i}].variables[{j}]"),
                        format!("duplicate variable `{}` on agent `{}`", v.name, a.id),
                    ));
                }
            }
        }
        let mut ids = BTreeSet::new();
        for i in 0..self.promises.len() {
            let p = &self.promises[i];
            let id = self.promise_id(i);
            let at = format!("promises[{i}]");
            if !ids.insert(id.clone()) {
                out.push(Diagnostic::new(format!("{at}.id"), format!("duplicate promise id `{id}`")));
            }
            if !agents.contains_key(&p.promiser) {
                out.push(Diagnostic::new(
                    format!("{at}.promiser"),
                    format!("promise `{id}` names unknown agent `{}`", p.promiser),
                ));
            }
            match &p.promisees {
                PromiseesDoc::Wildcard(w) if w != "*" => out.push(Diagnostic::new(
                    format!("{at}.promisees"),
                    format!("promise `{id}`: expected a list of agents or \"*\", got `{w}`"),
                )),
                PromiseesDoc::Agents(list) if list.is_empty() => out.push(Diagnostic::new(
                    format!("{at}.promisees"),
                    format!("promise `{id}` has no promisees"),
                )),
                PromiseesDoc::Agents(list) => {
                    for (j, a) in list.iter().enumerate() {
                        if !agents.contains_key(a) {
                            out.push(Diagnostic::new(
                                format!("{at}.promisees[{j}]"),
                                format!("promise `{id}` names unknown agent `{a}`"),
                            ));
                        }
                    }
                }
                PromiseesDoc::Wildcard(_) => {}
            }
            if p.body.is_empty() {
                out.push(Diagnostic::new(format!("{at}.body"), format!("promise `{id}` has an empty body")));
            }
            for (j, c) in p.conditions.iter().enumerate() {
                if c.is_empty() {
                    out.push(Diagnostic::new(
                        format!("{at}.conditions[{j}]"),
                        format!("promise `{id}` has an empty condition"),
                    ));
                }
            }
        }
        for (name, sets) in &self.partitions {
            let mut seen = BTreeSet::new();
            for (i, set) in sets.iter().enumerate() {
                if set.is_empty() {
                    out.push(Diagnostic::new(format!("partitions.{name}[{i}]"), "empty member set"));
                }
                for (j, a) in set.iter().enumerate() {
                    let at = format!("partitions.{name}[{i}][{j}]");
                    if !agents.contains_key(a) {
                        out.push(Diagnostic::new(at, format!("unknown agent `{a}`")));
                    } else if !seen.insert(a) {
                        out.push(Diagnostic::new(at, format!("agent `{a}` appears in more than one member set")));
                    }
                }
            }
        }
        for (i, p) in self.processes.iter().enumerate() {
            let at = format!("processes[{i}]");
            let Some(agent) = agents.get(&p.agent) else {
                out.push(Diagnostic::new(format!("{at}.agent"), format!("unknown agent `{}`", p.agent)));
                continue;
            };
            let Some(var) = agent.variables.iter().find(|v| v.name == p.variable) else {
                out.push(Diagnostic::new(
                    format!("{at}.variable"),
                    format!("agent `{}` has no variable `{}`", p.agent, p.variable),
                ));
                continue;
            };
            let mut spec = p.clone();
            if spec.domain.is_empty() {
                spec.domain = var.domain.clone();
            }
            if let Err(e) = spec.validate() {
                out.push(Diagnostic::new(at.clone(), e.to_string()));
            }
            if let Some(o) = &p.observer {
                if !agents.contains_key(&o.agent) {
                    out.push(Diagnostic::new(format!("{at}.observer.agent"), format!("unknown agent `{}`", o.agent)));
                }
            }
        }
        for (i, c) in self.channels.iter().enumerate() {
            for (field, a) in [("provider", &c.provider), ("receiver", &c.receiver)] {
                if !agents.contains_key(a) {
                    out.push(Diagnostic::new(format!("channels[{i}].{field}"), format!("unknown agent `{a}`")));
                }
            }
        }
        out
    }

    pub fn to_model(&self) -> Result<Model> {
        let diags = self.diagnostics();
        if !diags.is_empty() {
            return Err(Error::Invalid(diags));
        }
        let mut graph = PromiseGraph::new();
        for a in &self.agents {
            graph = graph.with_agent(Agent {
                variables: a.variables.clone(),
                ..Agent::new(a.id.as_str())
            });
        }
        for (i, p) in self.promises.iter().enumerate() {
            graph.promises.push(Promise {
                id: self.promise_id(i),
                promiser: p.promiser.clone(),
                promisees: match &p.promisees {
                    PromiseesDoc::Wildcard(_) => Promisees::Any,
                    PromiseesDoc::Agents(list) => Promisees::Agents(list.iter().cloned().collect()),
                },
                polarity: p.polarity,
                body: p.body.clone(),
                conditions: p.conditions.clone(),
                constant: p.constant,
                imposed: p.imposed,
                scope: p.scope.clone(),
                lifetime: p.lifetime.map_or(Lifetime::Unbounded, Lifetime::Ticks),
            });
        }
        graph.validate()?;
        Ok(Model {
            graph,
            partitions: self
                .partitions
                .iter()
                .map(|(k, sets)| (k.clone(), sets.iter().map(|s| s.iter().cloned().collect()).collect()))
                .collect(),
            processes: self.processes.clone(),
            channels: self.channels.clone(),
        })
    }
}

/// Parses and validates a model in one step.
pub fn load_model(text: &str) -> Result<Model> {
    ModelDocument::parse(text)?.to_model()
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    serde_yaml::from_str(text).map_err(|e| yaml_error("scenario", &e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"
version: 1
agents:
  - id: S
  - id: R
    variables:
      - { name: v, domain: [a, b], history: 1 }
promises:
  - id: s
    promiser: S
    promisees: "*"
    polarity: offer
    body: [m, { label: v, domain: [a, b] }]
  - promiser: R
    promisees: [S]
    polarity: accept
    body: [m]
    lifetime: 5
partitions:
  all: [[S, R]]
"#;

    #[test]
    fn parses_and_round_trips() {
        let doc = ModelDocument::parse(MODEL).unwrap();
        let again = ModelDocument::parse(&doc.to_yaml()).unwrap();
        assert_eq!(doc, again);
        let model = doc.to_model().unwrap();
        assert_eq!(model.graph.promises[1].id, PromiseId::new("p1"));
        assert_eq!(model.graph.promises[1].lifetime, Lifetime::Ticks(5));
        assert_eq!(model.graph.bind_promises().unwrap().len(), 1);
    }

    #[test]
    fn unknown_agent_names_the_promise_and_field() {
        let text = MODEL.replace("promisees: [S]", "promisees: [S, Q]");
        let err = load_model(&text).unwrap_err();
        let Error::Invalid(diags) = err else { panic!("expected diagnostics") };
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].path, "promises[1].promisees[1]");
        assert!(diags[0].message.contains("`p1`"));
    }

    #[test]
    fn syntax_error_has_line() {
        let err = ModelDocument::parse("version: 1\nagents: [\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: Some(_), .. }));
    }

    #[test]
    fn wrong_version_rejected() {
        let err = load_model("version: 2\n").unwrap_err();
        assert!(err.to_string().contains("version"));
    }

    #[test]
    fn overlapping_partition_rejected() {
        let text = MODEL.replace("all: [[S, R]]", "all: [[S, R], [R]]");
        assert!(matches!(load_model(&text), Err(Error::Invalid(_))));
    }
}
