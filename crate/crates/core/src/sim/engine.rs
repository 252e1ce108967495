//! The lock-step scheduler.
//!
//! Each global step runs, in order: scheduled faults, interior processes,
//! pending interior (lag) steps, unconditional emissions, then sampling.
//! Agents never see the global step; every decision an agent makes is
//! driven by what it has sampled and by its own clock.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{AgentId, Binding, Polarity, Promise, PromiseGraph, PromiseId};
use crate::sim::process::{Mode, ProcessSpec};
use crate::sim::scenario::{ChannelParams, Fault, Scenario};
use crate::sim::sync::measure_sync;
use crate::sim::trace::{EventKind, Trace, TraceEvent};
use crate::sim::transaction::{run_transaction, TransactionOutcome};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub id: u64,
    pub label: String,
    pub payload: String,
    pub sent_at: u64,
    available_at: u64,
}

struct Channel {
    binding: Binding,
    params: ChannelParams,
    label: String,
    conditional: bool,
    queue: VecDeque<Message>,
    sent: u64,
    lost: u64,
    sampled: u64,
    max_queue: usize,
    dropped: bool,
}

struct AgentState {
    clock: u64,
    alive: bool,
}

/// Waiting state of one conditional offer.
struct Pending {
    promise: Promise,
    labels: Vec<String>,
    fresh: BTreeMap<String, String>,
    first_partial: Option<u64>,
    countdown: Option<(u64, BTreeMap<String, String>)>,
    lag: u64,
    table: Option<BTreeMap<String, String>>,
}

struct ProcessState {
    spec: ProcessSpec,
    value: String,
    drifts: u64,
    repairs: u64,
    samples: u64,
    deviations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromiseStats {
    pub promise: PromiseId,
    pub agent: AgentId,
    pub polarity: Polarity,
    pub kept: u64,
    pub not_kept: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub provider: AgentId,
    pub receiver: AgentId,
    pub label: String,
    pub sent: u64,
    pub lost: u64,
    pub sampled: u64,
    pub max_queue: usize,
    pub final_queue: usize,
    /// Measured receive rate over send rate, λ_R/λ_S.
    pub rate_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncStats {
    pub promise: PromiseId,
    pub agent: AgentId,
    /// Delay in promiser proper time -> number of keepings.
    pub delays: BTreeMap<u64, u64>,
    pub premature: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synchronous: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessStats {
    pub agent: AgentId,
    pub variable: String,
    pub final_value: String,
    pub drifts: u64,
    pub repairs: u64,
    pub samples: u64,
    pub deviations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub steps: u64,
    pub events: usize,
    pub promises: Vec<PromiseStats>,
    pub channels: Vec<ChannelStats>,
    pub sync: Vec<SyncStats>,
    pub processes: Vec<ProcessStats>,
    pub clocks: BTreeMap<AgentId, u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transaction: Option<TransactionOutcome>,
}

impl Summary {
    pub fn promise(&self, id: &str) -> Option<&PromiseStats> {
        self.promises.iter().find(|p| p.promise.0 == id)
    }
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub trace: Trace,
    pub summary: Summary,
}

struct Sim<'a> {
    graph: &'a PromiseGraph,
    scenario: &'a Scenario,
    rng: ChaCha8Rng,
    step: u64,
    next_id: u64,
    trace: Trace,
    agents: BTreeMap<AgentId, AgentState>,
    channels: Vec<Channel>,
    pending: Vec<Pending>,
    processes: Vec<ProcessState>,
}

fn joined(labels: impl Iterator<Item = impl AsRef<str>>) -> String {
    labels.map(|l| l.as_ref().to_string()).collect::<Vec<_>>().join(",")
}

impl<'a> Sim<'a> {
    fn record(
        &mut self,
        who: &AgentId,
        kind: EventKind,
        message_id: Option<u64>,
        label: Option<String>,
        payload: Option<String>,
    ) {
        let st = self.agents.get_mut(who).expect("known agent");
        if kind.ticks() {
            st.clock += 1;
        }
        self.trace.events.push(TraceEvent {
            global_step: self.step,
            observer: who.clone(),
            observer_proper_time: st.clock,
            kind,
            message_id,
            body_label: label,
            payload,
        });
    }

    fn alive(&self, a: &AgentId) -> bool {
        self.agents.get(a).is_some_and(|s| s.alive)
    }

    fn variable_value(&self, agent: &AgentId, variable: &str) -> Option<String> {
        self.processes
            .iter()
            .find(|p| &p.spec.agent == agent && p.spec.variable == variable)
            .map(|p| p.value.clone())
    }

    fn apply_faults(&mut self) {
        let faults: Vec<Fault> = self.scenario.faults.clone();
        for f in &faults {
            match f {
                Fault::Kill { agent, at, .. } if *at == self.step => {
                    self.agents.get_mut(agent).expect("validated").alive = false;
                    self.record(agent, EventKind::Kill, None, None, None);
                }
                Fault::Kill { agent, restart_at: Some(r), lose_state, .. } if *r == self.step => {
                    self.agents.get_mut(agent).expect("validated").alive = true;
                    if *lose_state {
                        for p in self.pending.iter_mut().filter(|p| &p.promise.promiser == agent) {
                            p.fresh.clear();
                            p.first_partial = None;
                            p.countdown = None;
                        }
                        for p in self.processes.iter_mut().filter(|p| &p.spec.agent == agent) {
                            p.value = p.spec.initial_value();
                        }
                    }
                    let note = lose_state.then(|| "state lost".to_string());
                    self.record(agent, EventKind::Restart, None, None, note);
                }
                Fault::Drop { provider, receiver, label, at } if *at == self.step => {
                    for c in self.channels.iter_mut() {
                        let b = &c.binding;
                        if &b.provider == provider
                            && &b.receiver == receiver
                            && label.as_ref().is_none_or(|l| b.effective_body.contains(l))
                        {
                            c.dropped = true;
                            c.lost += c.queue.len() as u64;
                            c.queue.clear();
                        }
                    }
                }
                Fault::Perturb { agent, variable, value, at } if *at == self.step => {
                    for p in self.processes.iter_mut() {
                        if &p.spec.agent == agent && &p.spec.variable == variable {
                            p.value = value.clone();
                        }
                    }
                    self.record(agent, EventKind::Perturb, None, Some(variable.clone()), Some(value.clone()));
                }
                _ => {}
            }
        }
    }

    fn run_processes(&mut self) {
        let n = self.step + 1;
        for i in 0..self.processes.len() {
            let agent = self.processes[i].spec.agent.clone();
            if !self.alive(&agent) {
                continue;
            }
            let spec = self.processes[i].spec.clone();
            let var = spec.variable.clone();
            match spec.mode {
                Mode::Retarded => {
                    let every = spec.maintenance_interval.max(1);
                    if n.is_multiple_of(every) {
                        let next = spec.step(&self.processes[i].value, &mut self.rng);
                        self.processes[i].value = next.clone();
                        self.record(&agent, EventKind::State, None, Some(var.clone()), Some(next));
                    }
                }
                Mode::Advanced => {
                    if spec.maintenance_interval > 0 && n.is_multiple_of(spec.maintenance_interval) {
                        let cur = self.processes[i].value.clone();
                        let (next, iterations) = if spec.settle {
                            spec.settle_from(&cur)
                        } else {
                            let next = spec.step(&cur, &mut self.rng);
                            let changed = usize::from(next != cur);
                            (next, changed)
                        };
                        if next != cur {
                            if spec.settle {
                                for k in 1..=iterations {
                                    self.record(
                                        &agent,
                                        EventKind::Substep,
                                        None,
                                        Some(var.clone()),
                                        Some(format!("{k}/{iterations}")),
                                    );
                                }
                            }
                            self.processes[i].value = next.clone();
                            self.processes[i].repairs += 1;
                            self.record(&agent, EventKind::Repair, None, Some(var.clone()), Some(next));
                        }
                    }
                }
            }
            if spec.drift_rate.draw(&mut self.rng) {
                let v = spec.domain[self.rng.gen_range(0..spec.domain.len())].clone();
                self.processes[i].value = v.clone();
                self.processes[i].drifts += 1;
                self.record(&agent, EventKind::Drift, None, Some(var.clone()), Some(v));
            }
            if let Some(obs) = &spec.observer {
                if n.is_multiple_of(obs.interval) && self.alive(&obs.agent) {
                    let v = self.processes[i].value.clone();
                    self.processes[i].samples += 1;
                    if spec.desired.as_ref().is_some_and(|d| d != &v) {
                        self.processes[i].deviations += 1;
                    }
                    self.record(&obs.agent, EventKind::Observe, None, Some(var.clone()), Some(v));
                }
            }
        }
    }

    fn emit_on(&mut self, idx: usize, payload: &str) {
        let c = &self.channels[idx];
        if c.params.limit.is_some_and(|l| c.sent >= l) {
            return;
        }
        let id = self.next_id;
        self.next_id += 1;
        let provider = c.binding.provider.clone();
        let label = c.label.clone();
        self.record(&provider, EventKind::Kept, Some(id), Some(label.clone()), Some(payload.to_string()));
        let sent_at = self.agents[&provider].clock;
        let loss = self.channels[idx].params.loss;
        let c = &mut self.channels[idx];
        c.sent += 1;
        if c.dropped || loss.draw(&mut self.rng) {
            c.lost += 1;
            self.record(&provider, EventKind::Lost, Some(id), Some(label), None);
            return;
        }
        c.queue.push_back(Message {
            id,
            label,
            payload: payload.to_string(),
            sent_at,
            available_at: self.step + 1 + c.params.latency,
        });
        c.max_queue = c.max_queue.max(c.queue.len());
    }

    fn keep_conditional(&mut self, k: usize, snapshot: &BTreeMap<String, String>) {
        let p = &self.pending[k];
        let values: Vec<&str> = p.labels.iter().map(|l| snapshot[l].as_str()).collect();
        let key = values.join(",");
        let payload = match &p.table {
            Some(t) => t.get(&key).cloned().unwrap_or_else(|| format!("?({key})")),
            None => format!("{}({key})", joined(p.promise.body.labels())),
        };
        let id = p.promise.id.clone();
        let targets: Vec<usize> = (0..self.channels.len())
            .filter(|&i| self.channels[i].binding.offer == id)
            .collect();
        for i in targets {
            self.emit_on(i, &payload);
        }
    }

    fn interior_steps(&mut self) {
        for k in 0..self.pending.len() {
            let promiser = self.pending[k].promise.promiser.clone();
            if !self.alive(&promiser) {
                continue;
            }
            if let Some((left, snapshot)) = self.pending[k].countdown.take() {
                let label = joined(self.pending[k].promise.body.labels());
                self.record(&promiser, EventKind::Interior, None, Some(label), Some(format!("lag {}", left - 1)));
                if left <= 1 {
                    self.keep_conditional(k, &snapshot);
                } else {
                    self.pending[k].countdown = Some((left - 1, snapshot));
                }
            }
        }
    }

    fn unconditional_emissions(&mut self) {
        for i in 0..self.channels.len() {
            let c = &self.channels[i];
            if c.conditional || !self.alive(&c.binding.provider) {
                continue;
            }
            if !c.params.send_rate.draw(&mut self.rng) {
                continue;
            }
            let provider = c.binding.provider.clone();
            let first = c.binding.effective_body.labels().next().unwrap_or_default().to_string();
            let payload = self.variable_value(&provider, &first).unwrap_or(first);
            self.emit_on(i, &payload);
        }
    }

    fn sampling(&mut self) {
        for i in 0..self.channels.len() {
            let receiver = self.channels[i].binding.receiver.clone();
            if !self.alive(&receiver) {
                continue;
            }
            if self.busy_with(&receiver, &self.channels[i].binding.effective_body) {
                continue;
            }
            let step = self.step;
            let c = &self.channels[i];
            let ready: Vec<usize> = c
                .queue
                .iter()
                .enumerate()
                .filter(|(_, m)| m.available_at <= step)
                .map(|(j, _)| j)
                .collect();
            if ready.is_empty() {
                continue;
            }
            if !c.params.service_rate.draw(&mut self.rng) {
                continue;
            }
            let pick = if self.channels[i].params.reorder {
                ready[self.rng.gen_range(0..ready.len())]
            } else {
                ready[0]
            };
            let msg = self.channels[i].queue.remove(pick).expect("index in range");
            self.channels[i].sampled += 1;
            self.record(&receiver, EventKind::Sample, Some(msg.id), Some(msg.label.clone()), Some(msg.payload.clone()));
            let body = self.channels[i].binding.effective_body.clone();
            self.absorb(&receiver, &body, &msg.payload);
        }
    }

    /// Blocking: while computing an output, an agent does not sample the
    /// conditions that output depends on.
    fn busy_with(&self, receiver: &AgentId, body: &crate::body::Body) -> bool {
        self.pending.iter().any(|p| {
            &p.promise.promiser == receiver
                && p.countdown.is_some()
                && body.labels().any(|l| p.labels.iter().any(|x| x == l))
        })
    }

    /// Feeds a sampled payload to the receiver's waiting conditional offers.
    fn absorb(&mut self, receiver: &AgentId, body: &crate::body::Body, payload: &str) {
        let clock = self.agents[receiver].clock;
        for k in 0..self.pending.len() {
            if &self.pending[k].promise.promiser != receiver {
                continue;
            }
            let p = &mut self.pending[k];
            // Busy with an interior computation: conditions are not consumed.
            if p.countdown.is_some() {
                continue;
            }
            let mut touched = false;
            for l in body.labels() {
                if p.labels.iter().any(|x| x == l) {
                    p.fresh.insert(l.to_string(), payload.to_string());
                    touched = true;
                }
            }
            if !touched {
                continue;
            }
            if p.fresh.len() == p.labels.len() {
                let snapshot = std::mem::take(&mut p.fresh);
                p.first_partial = None;
                if p.lag == 0 {
                    self.keep_conditional(k, &snapshot);
                } else {
                    p.countdown = Some((p.lag, snapshot));
                }
            } else {
                let first = *p.first_partial.get_or_insert(clock);
                if let Some(limit) = self.scenario.timeout {
                    if clock - first > limit {
                        p.fresh.clear();
                        p.first_partial = None;
                        let label = joined(p.promise.body.labels());
                        self.record(receiver, EventKind::NotKept, None, Some(label), Some("timeout".into()));
                    }
                }
            }
        }
    }

    fn annotate_feedback(&mut self) {
        let order: BTreeMap<&AgentId, usize> = self
            .scenario
            .pipeline
            .iter()
            .enumerate()
            .map(|(i, a)| (a, i))
            .collect();
        let mut notes = Vec::new();
        for c in &self.channels {
            let b = &c.binding;
            if let (Some(p), Some(r)) = (order.get(&b.provider), order.get(&b.receiver)) {
                if p > r {
                    notes.push((b.receiver.clone(), c.label.clone(), b.provider.to_string()));
                }
            }
        }
        for (who, label, from) in notes {
            self.record(&who, EventKind::Annotation, None, Some(label), Some(format!("exterior_feedback from {from}")));
        }
    }
}

/// Runs a scenario over a model for `max_steps` global steps.
pub fn run(graph: &PromiseGraph, scenario: &Scenario, seed: u64, max_steps: u64) -> Result<SimRun> {
    if max_steps == 0 {
        return Err(Error::Argument("max_global_steps must be positive".into()));
    }
    graph.validate()?;
    let scenario = scenario.resolve(graph)?;
    let bindings = graph.bindings_unchecked();

    let channels: Vec<Channel> = bindings
        .into_iter()
        .map(|b| {
            let offer = graph.promise(&b.offer).expect("bound offer exists");
            Channel {
                params: scenario.params_for(&b),
                label: joined(b.effective_body.labels()),
                conditional: offer.is_conditional(),
                binding: b,
                queue: VecDeque::new(),
                sent: 0,
                lost: 0,
                sampled: 0,
                max_queue: 0,
                dropped: false,
            }
        })
        .collect();

    let pending = graph
        .promises
        .iter()
        .filter(|p| p.polarity == Polarity::Offer && p.is_conditional())
        .filter(|p| channels.iter().any(|c| c.binding.offer == p.id))
        .map(|p| {
            let r = scenario.responder(&p.id);
            Pending {
                promise: p.clone(),
                labels: p.condition_labels().labels().map(str::to_string).collect(),
                fresh: BTreeMap::new(),
                first_partial: None,
                countdown: None,
                lag: r.map_or(0, |r| r.lag),
                table: r.and_then(|r| r.table.clone()),
            }
        })
        .collect();

    let processes = scenario
        .processes
        .iter()
        .map(|s| ProcessState {
            value: s.initial_value(),
            spec: s.clone(),
            drifts: 0,
            repairs: 0,
            samples: 0,
            deviations: 0,
        })
        .collect();

    let mut sim = Sim {
        graph,
        scenario: &scenario,
        rng: ChaCha8Rng::seed_from_u64(seed),
        step: 0,
        next_id: 0,
        trace: Trace::default(),
        agents: graph
            .agents
            .keys()
            .map(|a| (a.clone(), AgentState { clock: 0, alive: true }))
            .collect(),
        channels,
        pending,
        processes,
    };

    sim.annotate_feedback();
    for step in 0..max_steps {
        sim.step = step;
        sim.apply_faults();
        sim.run_processes();
        sim.interior_steps();
        sim.unconditional_emissions();
        sim.sampling();
    }
    sim.step = max_steps;

    // Accepts that were never satisfied are assessed not kept.
    for p in sim.graph.promises.iter().filter(|p| p.polarity == Polarity::Accept) {
        let mine: Vec<&Channel> = sim.channels.iter().filter(|c| c.binding.accept == p.id).collect();
        if !mine.is_empty() && mine.iter().all(|c| c.sampled == 0) {
            let label = joined(p.body.labels());
            let who = p.promiser.clone();
            sim.record(&who, EventKind::NotKept, None, Some(label), Some("never sampled".into()));
        }
    }

    let summary = summarize(&sim, seed, max_steps)?;
    Ok(SimRun {
        trace: sim.trace,
        summary,
    })
}

fn summarize(sim: &Sim<'_>, seed: u64, steps: u64) -> Result<Summary> {
    let trace = &sim.trace;
    let not_kept_of = |p: &Promise| {
        let label = joined(p.body.labels());
        trace
            .events
            .iter()
            .filter(|e| e.kind == EventKind::NotKept && e.observer == p.promiser && e.body_label.as_deref() == Some(&label))
            .count() as u64
    };
    let promises = sim
        .graph
        .promises
        .iter()
        .map(|p| {
            let kept = match p.polarity {
                Polarity::Offer => sim.channels.iter().filter(|c| c.binding.offer == p.id).map(|c| c.sent).sum(),
                Polarity::Accept => sim.channels.iter().filter(|c| c.binding.accept == p.id).map(|c| c.sampled).sum(),
            };
            PromiseStats {
                promise: p.id.clone(),
                agent: p.promiser.clone(),
                polarity: p.polarity,
                kept,
                not_kept: not_kept_of(p),
            }
        })
        .collect();
    let channels = sim
        .channels
        .iter()
        .map(|c| ChannelStats {
            provider: c.binding.provider.clone(),
            receiver: c.binding.receiver.clone(),
            label: c.label.clone(),
            sent: c.sent,
            lost: c.lost,
            sampled: c.sampled,
            max_queue: c.max_queue,
            final_queue: c.queue.len(),
            rate_ratio: (c.sent > 0).then(|| c.sampled as f64 / c.sent as f64),
        })
        .collect();
    let sync = sim
        .pending
        .iter()
        .map(|p| {
            let r = measure_sync(trace, &p.promise);
            let mut delays = BTreeMap::new();
            for d in &r.delays {
                *delays.entry(*d).or_insert(0) += 1;
            }
            SyncStats {
                promise: p.promise.id.clone(),
                agent: p.promise.promiser.clone(),
                delays,
                premature: r.premature as u64,
                synchronous: sim.scenario.tau_sync.and_then(|tau| r.is_synchronous(tau)),
            }
        })
        .collect();
    let processes = sim
        .processes
        .iter()
        .map(|p| ProcessStats {
            agent: p.spec.agent.clone(),
            variable: p.spec.variable.clone(),
            final_value: p.value.clone(),
            drifts: p.drifts,
            repairs: p.repairs,
            samples: p.samples,
            deviations: p.deviations,
        })
        .collect();
    let transaction = match &sim.scenario.transaction {
        Some(t) => Some(run_transaction(t, seed)?),
        None => None,
    };
    Ok(Summary {
        seed,
        steps,
        events: trace.len(),
        promises,
        channels,
        sync,
        processes,
        clocks: sim.agents.iter().map(|(a, s)| (a.clone(), s.clock)).collect(),
        transaction,
    })
}
