//! Interior processes on a single variable: retarded (driven by the past
//! through a transition rule) and advanced (driven toward a desired end
//! state that is a fixed point of the rule).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AgentId;
use crate::sim::rate::Rate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Retarded,
    Advanced,
}

/// The update rule applied at each interior step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    /// `x -> value` for every `x`.
    Set(String),
    /// A total deterministic map over the domain.
    Table(BTreeMap<String, String>),
    /// Row-stochastic weights: `from -> (to -> weight)`.
    Matrix(BTreeMap<String, BTreeMap<String, f64>>),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObserverSpec {
    pub agent: AgentId,
    /// Global steps between samples of the variable.
    pub interval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessSpec {
    pub agent: AgentId,
    pub variable: String,
    pub mode: Mode,
    /// Written as a one-key map, e.g. `rule: { set: ok }`.
    #[serde(with = "serde_yaml::with::singleton_map")]
    pub rule: Rule,
    /// Filled from the model's variable declaration when omitted.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub domain: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub desired: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<String>,
    #[serde(default = "zero_rate", skip_serializing_if = "is_zero_rate")]
    pub drift_rate: Rate,
    /// Global steps between maintenance applications; 0 switches it off.
    #[serde(default)]
    pub maintenance_interval: u64,
    /// Iterate the rule to its fixed point inside one maintenance step
    /// (interior feedback) instead of applying it once.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub settle: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observer: Option<ObserverSpec>,
}

fn zero_rate() -> Rate {
    Rate::ZERO
}

fn is_zero_rate(r: &Rate) -> bool {
    *r == Rate::ZERO
}

impl ProcessSpec {
    /// An advanced process with the rule "set to `desired`".
    pub fn converge_to(agent: &str, variable: &str, domain: &[&str], desired: &str) -> Self {
        Self {
            agent: AgentId::new(agent),
            variable: variable.to_string(),
            mode: Mode::Advanced,
            rule: Rule::Set(desired.to_string()),
            domain: domain.iter().map(|s| s.to_string()).collect(),
            desired: Some(desired.to_string()),
            initial: None,
            drift_rate: Rate::ZERO,
            maintenance_interval: 1,
            settle: false,
            observer: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Error::Process(format!("{}.{}: {m}", self.agent, self.variable));
        if self.domain.is_empty() {
            return Err(err("empty domain".into()));
        }
        let in_domain = |v: &str| self.domain.iter().any(|d| d == v);
        match &self.rule {
            Rule::Set(v) if !in_domain(v) => return Err(err(format!("`{v}` is not in the domain"))),
            Rule::Table(t) => {
                for x in &self.domain {
                    match t.get(x) {
                        None => return Err(err(format!("table has no entry for `{x}`"))),
                        Some(y) if !in_domain(y) => {
                            return Err(err(format!("table maps to `{y}` outside the domain")))
                        }
                        _ => {}
                    }
                }
            }
            Rule::Matrix(m) => {
                for x in &self.domain {
                    let row = m.get(x).ok_or_else(|| err(format!("matrix has no row `{x}`")))?;
                    let total: f64 = row.values().sum();
                    if row.keys().any(|y| !in_domain(y))
                        || row.values().any(|w| *w < 0.0)
                        || (total - 1.0).abs() > 1e-9
                    {
                        return Err(err(format!("row `{x}` is not a distribution over the domain")));
                    }
                }
            }
            Rule::Set(_) => {}
        }
        if let Some(init) = &self.initial {
            if !in_domain(init) {
                return Err(err(format!("initial `{init}` is not in the domain")));
            }
        }
        if self.mode == Mode::Advanced {
            let desired = self
                .desired
                .as_deref()
                .ok_or_else(|| err("advanced process needs a desired state".into()))?;
            if !in_domain(desired) {
                return Err(err(format!("desired `{desired}` is not in the domain")));
            }
            if matches!(self.rule, Rule::Matrix(_)) {
                return Err(err("advanced process needs a deterministic rule".into()));
            }
            if self.step(desired, &mut NoRng) != desired {
                return Err(err(format!("desired `{desired}` is not a fixed point of the rule")));
            }
            for x in &self.domain {
                if self.settle_from(x).0 != desired {
                    return Err(err(format!("`{x}` does not converge to `{desired}`")));
                }
            }
        }
        if let Some(o) = &self.observer {
            if o.interval == 0 {
                return Err(err("observer interval must be positive".into()));
            }
        }
        Ok(())
    }

    /// One application of the rule.
    pub fn step<R: RngLike>(&self, x: &str, rng: &mut R) -> String {
        match &self.rule {
            Rule::Set(v) => v.clone(),
            Rule::Table(t) => t.get(x).cloned().unwrap_or_else(|| x.to_string()),
            Rule::Matrix(m) => {
                let Some(row) = m.get(x) else {
                    return x.to_string();
                };
                let u = rng.unit();
                let mut acc = 0.0;
                let mut last = x;
                for (y, w) in row {
                    acc += w;
                    last = y;
                    if u < acc {
                        return y.clone();
                    }
                }
                last.to_string()
            }
        }
    }

    /// Iterates a deterministic rule until it stops changing, at most
    /// |domain| times. Returns the end value and the number of iterations
    /// that changed it.
    pub fn settle_from(&self, x: &str) -> (String, usize) {
        let mut cur = x.to_string();
        for n in 0..=self.domain.len() {
            let next = self.step(&cur, &mut NoRng);
            if next == cur {
                return (cur, n);
            }
            cur = next;
        }
        (cur, self.domain.len() + 1)
    }

    pub fn initial_value(&self) -> String {
        self.initial
            .clone()
            .or_else(|| self.desired.clone())
            .unwrap_or_else(|| self.domain[0].clone())
    }
}

/// Minimal randomness interface so deterministic rules can run without an RNG.
pub trait RngLike {
    fn unit(&mut self) -> f64;
}

struct NoRng;

impl RngLike for NoRng {
    fn unit(&mut self) -> f64 {
        0.0
    }
}

impl<R: Rng> RngLike for R {
    fn unit(&mut self) -> f64 {
        self.gen::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvergenceOptions {
    pub seed: u64,
    /// Global steps between observer samples; 0 disables observation.
    pub sample_interval: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    /// Value at step 0 (initial) and after every step.
    pub values: Vec<String>,
    pub converged_at: Option<u64>,
    pub drifts: u64,
    pub repairs: u64,
    pub samples: u64,
    pub deviations: u64,
}

impl Trajectory {
    pub fn final_value(&self) -> &str {
        self.values.last().map(String::as_str).unwrap_or_default()
    }

    pub fn deviation_rate(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.deviations as f64 / self.samples as f64
        }
    }
}

/// Runs an advanced process from `initial` for `steps` global steps.
///
/// Each step: maintenance (if due), then drift, then observation (if due).
pub fn run_convergence(
    spec: &ProcessSpec,
    initial: &str,
    steps: u64,
    opts: ConvergenceOptions,
) -> Result<Trajectory> {
    if spec.mode != Mode::Advanced {
        return Err(Error::Process("convergence needs an advanced process".into()));
    }
    spec.validate()?;
    if !spec.domain.iter().any(|d| d == initial) {
        return Err(Error::Process(format!("initial `{initial}` is not in the domain")));
    }
    let desired = spec.desired.as_deref().expect("validated");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut x = initial.to_string();
    let mut t = Trajectory {
        values: vec![x.clone()],
        converged_at: (x == desired).then_some(0),
        drifts: 0,
        repairs: 0,
        samples: 0,
        deviations: 0,
    };
    for step in 1..=steps {
        if spec.maintenance_interval > 0 && step % spec.maintenance_interval == 0 {
            let next = if spec.settle {
                spec.settle_from(&x).0
            } else {
                spec.step(&x, &mut rng)
            };
            if next != x {
                t.repairs += 1;
                x = next;
            }
        }
        if spec.drift_rate.draw(&mut rng) {
            x = spec.domain[rng.gen_range(0..spec.domain.len())].clone();
            t.drifts += 1;
        }
        if opts.sample_interval > 0 && step % opts.sample_interval == 0 {
            t.samples += 1;
            if x != desired {
                t.deviations += 1;
            }
        }
        if x == desired {
            t.converged_at.get_or_insert(step);
        } else if spec.drift_rate == Rate::ZERO {
            t.converged_at = None;
        }
        t.values.push(x.clone());
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn countdown(n: usize) -> ProcessSpec {
        // x_k -> x_{k-1}, x_0 fixed.
        let domain: Vec<String> = (0..n).map(|i| format!("x{i}")).collect();
        let table = (0..n)
            .map(|i| (format!("x{i}"), format!("x{}", i.saturating_sub(1))))
            .collect();
        ProcessSpec {
            rule: Rule::Table(table),
            domain,
            desired: Some("x0".into()),
            ..ProcessSpec::converge_to("A", "v", &["x0"], "x0")
        }
    }

    #[test]
    fn set_rule_is_idempotent() {
        let spec = ProcessSpec::converge_to("A", "v", &["a", "b", "c"], "b");
        for x in ["a", "b", "c"] {
            let fx = spec.step(x, &mut NoRng);
            assert_eq!(fx, "b");
            assert_eq!(spec.step(&fx, &mut NoRng), fx);
        }
        let t = run_convergence(&spec, "a", 5, ConvergenceOptions { seed: 0, sample_interval: 0 }).unwrap();
        assert_eq!(t.final_value(), "b");
        assert_eq!(t.converged_at, Some(1));
    }

    #[test]
    fn stepwise_rule_converges_within_domain_size() {
        let spec = countdown(6);
        spec.validate().unwrap();
        let t = run_convergence(&spec, "x5", 6, ConvergenceOptions { seed: 1, sample_interval: 0 }).unwrap();
        assert_eq!(t.converged_at, Some(5));
        assert_eq!(spec.settle_from("x5"), ("x0".to_string(), 5));
    }

    #[test]
    fn missing_fixed_point_rejected() {
        let mut spec = countdown(3);
        spec.desired = Some("x2".into());
        assert!(matches!(spec.validate(), Err(Error::Process(_))));

        let mut cycle = countdown(2);
        cycle.rule = Rule::Table(
            [("x0", "x1"), ("x1", "x0")].into_iter().map(|(a, b)| (a.into(), b.into())).collect(),
        );
        assert!(cycle.validate().is_err());
    }

    #[test]
    fn retarded_rejected_by_convergence() {
        let mut spec = countdown(3);
        spec.mode = Mode::Retarded;
        assert!(run_convergence(&spec, "x1", 3, ConvergenceOptions { seed: 0, sample_interval: 0 }).is_err());
    }

    #[test]
    fn matrix_rows_must_be_distributions() {
        let mut spec = countdown(2);
        spec.mode = Mode::Retarded;
        spec.rule = Rule::Matrix(
            [
                ("x0".to_string(), [("x1".to_string(), 0.5)].into_iter().collect()),
                ("x1".to_string(), [("x0".to_string(), 1.0)].into_iter().collect()),
            ]
            .into_iter()
            .collect(),
        );
        assert!(spec.validate().is_err());
    }
}
