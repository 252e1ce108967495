//! Scenario description: channel parameters, processes, responders and faults.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AgentId, Binding, Polarity, PromiseGraph, PromiseId};
use crate::sim::process::ProcessSpec;
use crate::sim::rate::Rate;
use crate::sim::transaction::TransactionSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// λ: chance per global step that an unconditional offer emits.
    #[serde(default)]
    pub send_rate: Rate,
    /// μ: chance per global step that the receiver samples the queue head.
    #[serde(default)]
    pub service_rate: Rate,
    #[serde(default = "zero", skip_serializing_if = "is_zero")]
    pub loss: Rate,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub reorder: bool,
    /// Extra global steps before a sent message can be sampled.
    #[serde(default, skip_serializing_if = "is_zero_u64")]
    pub latency: u64,
    /// Stop emitting after this many messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limit: Option<u64>,
}

fn zero() -> Rate {
    Rate::ZERO
}

fn is_zero(r: &Rate) -> bool {
    *r == Rate::ZERO
}

fn is_zero_u64(v: &u64) -> bool {
    *v == 0
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            send_rate: Rate::ONE,
            service_rate: Rate::ONE,
            loss: Rate::ZERO,
            reorder: false,
            latency: 0,
            limit: None,
        }
    }
}

/// Overrides for the channels of matching bindings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub provider: AgentId,
    pub receiver: AgentId,
    /// Restrict to bindings whose effective body carries this label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(flatten)]
    pub params: ChannelParams,
}

impl ChannelSpec {
    pub fn matches(&self, b: &Binding) -> bool {
        self.provider == b.provider
            && self.receiver == b.receiver
            && self.label.as_ref().is_none_or(|l| b.effective_body.contains(l))
    }
}

/// How a conditional offer turns its condition payloads into an output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Responder {
    pub promise: PromiseId,
    /// Interior steps between sampling the last condition and emitting.
    #[serde(default)]
    pub lag: u64,
    /// Lookup from the comma-joined condition payloads (in label order) to
    /// the output payload. Without a table the output is `label(p1,p2,..)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "fault", rename_all = "snake_case")]
pub enum Fault {
    /// Stop the agent at step `at`; optionally bring it back at `restart_at`
    /// with its interior state preserved or wiped.
    Kill {
        agent: AgentId,
        at: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        restart_at: Option<u64>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        lose_state: bool,
    },
    /// Every message on matching channels is lost from step `at` on.
    Drop {
        provider: AgentId,
        receiver: AgentId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
        at: u64,
    },
    /// Force a variable to a value at step `at`.
    Perturb {
        agent: AgentId,
        variable: String,
        value: String,
        at: u64,
    },
}

impl Fault {
    pub fn at(&self) -> u64 {
        match self {
            Fault::Kill { at, .. } | Fault::Drop { at, .. } | Fault::Perturb { at, .. } => *at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "one")]
    pub version: u32,
    #[serde(default)]
    pub defaults: ChannelParams,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub processes: Vec<ProcessSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub responders: Vec<Responder>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub faults: Vec<Fault>,
    /// Declared upstream-to-downstream order; bindings running against it
    /// are annotated as exterior feedback.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pipeline: Vec<AgentId>,
    /// Proper-time budget a partially satisfied conditional promise may wait
    /// before its promiser records a not-kept assessment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timeout: Option<u64>,
    /// Threshold for classifying keepings as synchronous in summaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_sync: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transaction: Option<TransactionSpec>,
}

fn one() -> u32 {
    1
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            version: 1,
            defaults: ChannelParams::default(),
            channels: Vec::new(),
            processes: Vec::new(),
            responders: Vec::new(),
            faults: Vec::new(),
            pipeline: Vec::new(),
            timeout: None,
            tau_sync: None,
            transaction: None,
        }
    }
}

impl Scenario {
    pub fn params_for(&self, b: &Binding) -> ChannelParams {
        self.channels
            .iter()
            .rev()
            .find(|c| c.matches(b))
            .map(|c| c.params.clone())
            .unwrap_or_else(|| self.defaults.clone())
    }

    pub fn responder(&self, promise: &PromiseId) -> Option<&Responder> {
        self.responders.iter().find(|r| &r.promise == promise)
    }

    /// Fills process domains from the model and checks every reference.
    pub fn resolve(&self, graph: &PromiseGraph) -> Result<Scenario> {
        if self.version != 1 {
            return Err(Error::Scenario(format!("unsupported version {}", self.version)));
        }
        let known = |a: &AgentId| -> Result<()> {
            if graph.agents.contains_key(a) {
                Ok(())
            } else {
                Err(Error::UnknownAgent(a.clone()))
            }
        };
        let mut out = self.clone();
        for p in &mut out.processes {
            known(&p.agent)?;
            let var = graph.agents[&p.agent]
                .variables
                .iter()
                .find(|v| v.name == p.variable)
                .ok_or_else(|| Error::UnknownVariable {
                    agent: p.agent.clone(),
                    variable: p.variable.clone(),
                })?;
            if p.domain.is_empty() {
                p.domain = var.domain.clone();
            }
            if let Some(o) = &p.observer {
                known(&o.agent)?;
            }
            p.validate()?;
        }
        for c in &self.channels {
            known(&c.provider)?;
            known(&c.receiver)?;
        }
        for r in &self.responders {
            let p = graph
                .promise(&r.promise)
                .ok_or_else(|| Error::Scenario(format!("responder names unknown promise `{}`", r.promise)))?;
            if p.polarity != Polarity::Offer {
                return Err(Error::Scenario(format!("responder `{}` is not an offer", r.promise)));
            }
        }
        for f in &self.faults {
            validate_fault(graph, f)?;
        }
        for a in &self.pipeline {
            known(a)?;
        }
        if let Some(t) = &self.transaction {
            t.validate()?;
        }
        Ok(out)
    }
}

fn validate_fault(graph: &PromiseGraph, fault: &Fault) -> Result<()> {
    let known = |a: &AgentId| {
        if graph.agents.contains_key(a) {
            Ok(())
        } else {
            Err(Error::UnknownAgent(a.clone()))
        }
    };
    match fault {
        Fault::Kill { agent, at, restart_at, .. } => {
            known(agent)?;
            if restart_at.is_some_and(|r| r <= *at) {
                return Err(Error::Scenario(format!("restart of `{agent}` precedes its kill")));
            }
        }
        Fault::Drop { provider, receiver, .. } => {
            known(provider)?;
            known(receiver)?;
        }
        Fault::Perturb { agent, variable, .. } => {
            known(agent)?;
            if !graph.agents[agent].variables.iter().any(|v| &v.name == variable) {
                return Err(Error::UnknownVariable {
                    agent: agent.clone(),
                    variable: variable.clone(),
                });
            }
        }
    }
    Ok(())
}

/// Returns a copy of `scenario` extended with `fault`, after checking that
/// the fault targets something that exists in `graph`.
pub fn inject_fault(graph: &PromiseGraph, scenario: &Scenario, fault: Fault) -> Result<Scenario> {
    validate_fault(graph, &fault)?;
    let mut out = scenario.clone();
    out.faults.push(fault);
    Ok(out)
}
