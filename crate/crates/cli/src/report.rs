//! Structured reports and their plain-text rendering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use promise_scale::analysis::{downstream_analysis, DownstreamReport, MarkovEstimate};
use promise_scale::scale::{self, Violation};
use promise_scale::sim::Summary;
use promise_scale::{AgentId, Binding, Body, Model, PromiseGraph, PromiseId, Redundancy, Result, StateClass};
use promise_scale::{Locality, Polarity};
use serde::{Deserialize, Serialize};

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentView {
    pub class: StateClass,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locality: Option<Locality>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<AgentId>,
    pub invariant: bool,
    /// Conditions not supplied constantly from inside the boundary.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditional_on: Vec<Body>,
    pub shared_nothing: bool,
    pub hub: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleView {
    /// `base` for the model as written, otherwise the partition name.
    pub name: String,
    pub scale: u32,
    pub agents: BTreeMap<AgentId, AgentView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundancyVerdict {
    pub observer: AgentId,
    pub providers: (AgentId, AgentId),
    pub verdict: Redundancy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub version: u32,
    pub bindings: Vec<Binding>,
    /// Conditional promises whose promiser does not accept every condition.
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    pub incomplete: BTreeSet<PromiseId>,
    pub scales: Vec<ScaleView>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub redundancy: Vec<RedundancyVerdict>,
    pub downstream: DownstreamReport,
}

fn view(graph: &PromiseGraph, name: &str) -> Result<ScaleView> {
    let mut agents = BTreeMap::new();
    for a in graph.agents.values() {
        let state = scale::classify_state(graph, &a.id)?;
        let inv = scale::check_invariant(graph, &a.id)?;
        let sn = scale::check_shared_nothing(graph, &a.id)?;
        agents.insert(
            a.id.clone(),
            AgentView {
                class: state.class,
                locality: state.locality,
                members: if a.is_super() { a.members() } else { Vec::new() },
                invariant: inv.is_invariant(),
                conditional_on: match inv {
                    promise_scale::Invariance::Invariant => Vec::new(),
                    promise_scale::Invariance::ConditionalOn(c) => c,
                },
                shared_nothing: sn.shared_nothing,
                hub: sn.hub,
                violations: sn.violations,
            },
        );
    }
    Ok(ScaleView {
        name: name.to_string(),
        scale: graph.scale,
        agents,
    })
}

pub fn analyze(model: &Model, scales: &[String]) -> Result<AnalysisReport> {
    let graph = &model.graph;
    let bindings = graph.bind_promises()?;
    let incomplete = graph
        .promises
        .iter()
        .filter(|p| p.is_conditional() && !graph.conditions_accepted(p))
        .map(|p| p.id.clone())
        .collect();
    let mut views = vec![view(graph, "base")?];
    for name in scales {
        let composed = scale::compose(graph, model.partition(name)?)?;
        views.push(view(&composed, name)?);
    }
    let downstream = downstream_analysis(graph)?;

    let mut redundancy = Vec::new();
    for (accept, options) in &downstream.redundancy_options {
        let observer = &graph.promise(accept).expect("reported accept exists").promiser;
        let providers: Vec<&AgentId> = options.iter().map(|o| &o.provider).collect::<BTreeSet<_>>().into_iter().collect();
        for (i, a1) in providers.iter().enumerate() {
            for a2 in &providers[i + 1..] {
                let verdict = scale::check_redundant(graph, a1, a2, observer)?;
                let entry = RedundancyVerdict {
                    observer: observer.clone(),
                    providers: ((*a1).clone(), (*a2).clone()),
                    verdict,
                };
                if !redundancy.contains(&entry) {
                    redundancy.push(entry);
                }
            }
        }
    }

    Ok(AnalysisReport {
        version: VERSION,
        bindings,
        incomplete,
        scales: views,
        redundancy,
        downstream,
    })
}

fn ids<'a>(it: impl IntoIterator<Item = &'a AgentId>) -> String {
    let v: Vec<&str> = it.into_iter().map(AgentId::as_str).collect();
    if v.is_empty() {
        "none".to_string()
    } else {
        v.join(", ")
    }
}

pub fn render_analysis(r: &AnalysisReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "bindings ({})", r.bindings.len());
    for b in &r.bindings {
        let _ = writeln!(s, "  {} -> {} {} ({} / {})", b.provider, b.receiver, b.effective_body, b.offer, b.accept);
    }
    if !r.incomplete.is_empty() {
        let list: Vec<&str> = r.incomplete.iter().map(PromiseId::as_str).collect();
        let _ = writeln!(s, "incomplete conditional promises: {}", list.join(", "));
    }
    for v in &r.scales {
        let _ = writeln!(s, "\nscale {} ({})", v.scale, v.name);
        for (id, a) in &v.agents {
            let mut flags = vec![a.class.to_string()];
            if let Some(l) = a.locality {
                flags.push(match l {
                    Locality::Local => "local".into(),
                    Locality::NonLocal => "non-local".into(),
                });
            }
            flags.push(if a.invariant { "invariant".into() } else { "not invariant".into() });
            flags.push(if a.shared_nothing { "shared-nothing".into() } else { "shares".into() });
            if a.hub {
                flags.push("hub".into());
            }
            let _ = write!(s, "  {id}: {}", flags.join(", "));
            if !a.members.is_empty() {
                let _ = write!(s, " [members {}]", ids(&a.members));
            }
            s.push('\n');
            if !a.conditional_on.is_empty() {
                let c: Vec<String> = a.conditional_on.iter().map(ToString::to_string).collect();
                let _ = writeln!(s, "    conditional on {}", c.join(", "));
            }
            for viol in &a.violations {
                match viol {
                    Violation::ConditionalPromise { promise, conditions } => {
                        let _ = writeln!(s, "    conditional promise {promise} | {conditions}");
                    }
                    Violation::AssistingBinding { receiver, body, provider } => {
                        let _ = writeln!(s, "    assisted by ({receiver}, -{body}, {provider})");
                    }
                }
            }
        }
    }
    let d = &r.downstream;
    let _ = writeln!(s, "\ndownstream");
    let ranks: Vec<String> = d.order.iter().map(|a| format!("{a}:{}", d.rank[a])).collect();
    let _ = writeln!(s, "  rank: {}", if ranks.is_empty() { "none".into() } else { ranks.join(" ") });
    let _ = writeln!(s, "  single points of failure: {}", ids(&d.single_points_of_failure));
    for (p, spofs) in &d.spof_by_promise {
        let _ = writeln!(s, "    {p}: {}", ids(spofs));
    }
    if !d.unsatisfiable.is_empty() {
        let list: Vec<&str> = d.unsatisfiable.iter().map(PromiseId::as_str).collect();
        let _ = writeln!(s, "  unsatisfiable: {}", list.join(", "));
    }
    for (accept, options) in &d.redundancy_options {
        let _ = writeln!(s, "  {accept}: {} provider(s) {}", options.len(), ids(options.iter().map(|o| &o.provider)));
    }
    for loop_ in &d.feedback_loops {
        let _ = writeln!(s, "  feedback loop: {}", ids(loop_));
    }
    for v in &r.redundancy {
        let _ = writeln!(
            s,
            "  {} sees {} and {} as {}",
            v.observer,
            v.providers.0,
            v.providers.1,
            serde_yaml::to_string(&v.verdict).unwrap_or_default().trim()
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub version: u32,
    pub runs: Vec<Summary>,
}

pub fn render_summary(sum: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seed {}: {} steps, {} events", sum.seed, sum.steps, sum.events);
    for p in &sum.promises {
        let verb = match p.polarity {
            Polarity::Offer => "kept",
            Polarity::Accept => "sampled",
        };
        let _ = writeln!(s, "  promise {} ({}): {verb} {}, not kept {}", p.promise, p.agent, p.kept, p.not_kept);
    }
    for c in &sum.channels {
        let ratio = c.rate_ratio.map_or("-".to_string(), |r| format!("{r:.3}"));
        let _ = writeln!(
            s,
            "  channel {} -> {} {{{}}}: sent {}, lost {}, sampled {}, queue max {} final {}, λR/λS {ratio}",
            c.provider, c.receiver, c.label, c.sent, c.lost, c.sampled, c.max_queue, c.final_queue
        );
    }
    for y in &sum.sync {
        let hist: Vec<String> = y.delays.iter().map(|(d, n)| format!("{d}x{n}")).collect();
        let class = match y.synchronous {
            Some(true) => ", synchronous",
            Some(false) => ", asynchronous",
            None => "",
        };
        let _ = writeln!(
            s,
            "  sync {} ({}): delays [{}], premature {}{class}",
            y.promise,
            y.agent,
            hist.join(" "),
            y.premature
        );
    }
    for p in &sum.processes {
        let _ = writeln!(
            s,
            "  process {}.{} = {}: drifts {}, repairs {}, observed deviations {}/{}",
            p.agent, p.variable, p.final_value, p.drifts, p.repairs, p.deviations, p.samples
        );
    }
    if let Some(t) = &sum.transaction {
        let _ = writeln!(
            s,
            "  transaction: {}, output {}, replay_equivalent {}, retransmissions {}",
            serde_yaml::to_string(&t.status).unwrap_or_default().trim(),
            t.output.as_deref().unwrap_or("-"),
            t.replay_equivalent,
            t.retransmissions
        );
    }
    let clocks: Vec<String> = sum.clocks.iter().map(|(a, t)| format!("{a}={t}")).collect();
    let _ = writeln!(s, "  clocks: {}", clocks.join(" "));
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovReport {
    pub version: u32,
    pub agent: AgentId,
    pub variable: String,
    pub estimate: MarkovEstimate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_history: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consistent_with_declaration: Option<bool>,
}

pub fn render_markov(r: &MarkovReport) -> String {
    let e = &r.estimate;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{}.{}: estimated order {} from {} samples over {} states",
        r.agent,
        r.variable,
        e.order,
        e.length,
        e.states.len()
    );
    for t in &e.tests {
        let _ = writeln!(
            s,
            "  order {} vs {}: G = {:.2}, df = {}, p = {:.4}{}",
            t.order,
            t.against,
            t.g,
            t.df,
            t.p_value,
            if t.rejected { " (rejected)" } else { "" }
        );
    }
    if let Some(m) = e.matrix(e.order) {
        let _ = writeln!(s, "  transition matrix, order {}{}:", m.order, if m.homogeneous { "" } else { " (not homogeneous)" });
        let _ = writeln!(s, "    {:>12} {}", "", m.states.iter().map(|x| format!("{x:>8}")).collect::<String>());
        for (ctx, row) in m.contexts.iter().zip(&m.normalized) {
            let label = if ctx.is_empty() { "-".to_string() } else { ctx.join(",") };
            let cells: String = row.iter().map(|p| format!("{p:>8.4}")).collect();
            let _ = writeln!(s, "    {label:>12} {cells}");
        }
    }
    if let (Some(h), Some(ok)) = (r.declared_history, r.consistent_with_declaration) {
        let _ = writeln!(
            s,
            "  declared history {h}: {}",
            if ok { "consistent" } else { "inconsistent with the estimate" }
        );
    }
    s
}
