//! Markov order estimation by likelihood-ratio (G) tests.
//!
//! Order `m` is accepted when, for every higher order `j <= k`, the extra
//! history does not significantly improve the fit. Testing against every
//! higher order (not just `m + 1`) catches sources such as parity, whose
//! dependence on two past states is invisible at lag one. The family of
//! tests for one `m` shares a Bonferroni-corrected significance level.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovOptions {
    pub max_order: usize,
    pub alpha: f64,
    /// Overrides the default minimum length `10 * |states|^(max_order + 1)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_length: Option<usize>,
    /// Number of consecutive windows compared for the homogeneity flag.
    pub windows: usize,
}

impl MarkovOptions {
    pub fn new(max_order: usize) -> Self {
        Self {
            max_order,
            alpha: 0.01,
            min_length: None,
            windows: 4,
        }
    }

    pub fn required_length(&self, states: usize) -> usize {
        self.min_length.unwrap_or_else(|| {
            let exp = u32::try_from(self.max_order + 1).unwrap_or(u32::MAX);
            states.max(1).saturating_pow(exp).saturating_mul(10)
        })
    }
}

/// Conditional transition estimates for one order. Rows are contexts (the
/// last `order` states, oldest first), columns are `states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub order: usize,
    pub states: Vec<String>,
    pub contexts: Vec<Vec<String>>,
    pub counts: Vec<Vec<u64>>,
    pub normalized: Vec<Vec<f64>>,
    /// Whether windowed estimates agree (no significant change over time).
    pub homogeneous: bool,
}

impl TransitionMatrix {
    /// Probability of `to` after `context`, if the context was observed.
    pub fn probability(&self, context: &[&str], to: &str) -> Option<f64> {
        let row = self
            .contexts
            .iter()
            .position(|c| c.iter().map(String::as_str).eq(context.iter().copied()))?;
        let col = self.states.iter().position(|s| s == to)?;
        Some(self.normalized[row][col])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTest {
    pub order: usize,
    pub against: usize,
    pub g: f64,
    pub df: u64,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovEstimate {
    pub order: usize,
    pub states: Vec<String>,
    pub length: usize,
    pub matrices: Vec<TransitionMatrix>,
    pub tests: Vec<OrderTest>,
}

impl MarkovEstimate {
    pub fn matrix(&self, order: usize) -> Option<&TransitionMatrix> {
        self.matrices.iter().find(|m| m.order == order)
    }
}

/// Counts of `next` (dense by state) grouped by a stratum and a finer row
/// key. Contexts are packed into integers, base `|states|`.
type Table = BTreeMap<usize, BTreeMap<usize, Vec<u64>>>;

/// Packs `seq[from..to]` into one integer.
fn code(seq: &[usize], from: usize, to: usize, base: usize) -> usize {
    seq[from..to].iter().fold(0, |acc, s| acc * base + s)
}

fn bump(table: &mut Table, stratum: usize, row: usize, next: usize, states: usize) {
    table.entry(stratum).or_default().entry(row).or_insert_with(|| vec![0; states])[next] += 1;
}

/// G statistic and degrees of freedom for independence of `next` from the
/// row key within each stratum.
fn stratified_g(table: &Table) -> (f64, u64) {
    let mut g = 0.0;
    let mut df = 0u64;
    for rows in table.values() {
        let width = rows.values().next().map_or(0, Vec::len);
        let mut col_tot = vec![0u64; width];
        for row in rows.values() {
            for (c, n) in row.iter().enumerate() {
                col_tot[c] += n;
            }
        }
        let total: u64 = col_tot.iter().sum();
        for row in rows.values() {
            let row_tot: u64 = row.iter().sum();
            for (c, n) in row.iter().enumerate() {
                if *n > 0 {
                    let expected = row_tot as f64 * col_tot[c] as f64 / total as f64;
                    g += 2.0 * *n as f64 * (*n as f64 / expected).ln();
                }
            }
        }
        let r = rows.len() as u64;
        let c = col_tot.iter().filter(|n| **n > 0).count() as u64;
        df += r.saturating_sub(1) * c.saturating_sub(1);
    }
    (g.max(0.0), df)
}

fn p_value(g: f64, df: u64) -> f64 {
    if df == 0 {
        return 1.0;
    }
    ChiSquared::new(df as f64).map(|d| d.sf(g)).unwrap_or(1.0)
}

fn matrix(seq: &[usize], states: &[String], order: usize, start: usize, alpha: f64, windows: usize) -> TransitionMatrix {
    let n = states.len();
    let mut rows: BTreeMap<Vec<usize>, Vec<u64>> = BTreeMap::new();
    for t in start..seq.len() {
        let ctx = seq[t - order..t].to_vec();
        rows.entry(ctx).or_insert_with(|| vec![0; n])[seq[t]] += 1;
    }
    // Homogeneity: does the window index carry information beyond the context?
    let span = seq.len() - start;
    let w = windows.clamp(1, span.max(1));
    let mut table: Table = BTreeMap::new();
    for t in start..seq.len() {
        let window = (t - start) * w / span;
        bump(&mut table, code(seq, t - order, t, n), window, seq[t], n);
    }
    let (g, df) = stratified_g(&table);
    let homogeneous = p_value(g, df) >= alpha;

    let contexts = rows.keys().map(|c| c.iter().map(|i| states[*i].clone()).collect()).collect();
    let normalized = rows
        .values()
        .map(|r| {
            let tot: u64 = r.iter().sum();
            r.iter().map(|n| *n as f64 / tot as f64).collect()
        })
        .collect();
    TransitionMatrix {
        order,
        states: states.to_vec(),
        contexts,
        counts: rows.into_values().collect(),
        normalized,
        homogeneous,
    }
}

/// Estimates the Markov order of a state sequence, up to `opts.max_order`.
pub fn estimate_markov_order<S: AsRef<str>>(seq: &[S], opts: &MarkovOptions) -> Result<MarkovEstimate> {
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::Argument(format!("significance level {} is not in (0, 1)", opts.alpha)));
    }
    let states: Vec<String> = seq
        .iter()
        .map(|s| s.as_ref().to_string())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let required = opts.required_length(states.len());
    if seq.len() < required || seq.len() <= opts.max_order {
        return Err(Error::InsufficientData {
            what: "state sequence",
            required: required.max(opts.max_order + 1),
            actual: seq.len(),
        });
    }
    let index: BTreeMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let coded: Vec<usize> = seq.iter().map(|s| index[s.as_ref()]).collect();
    let k = opts.max_order;

    // All orders are fitted on the same positions so likelihoods compare.
    let mut tests = Vec::new();
    let mut order = k;
    for m in 0..k {
        let level = opts.alpha / (k - m) as f64;
        let mut accepted = true;
        for j in m + 1..=k {
            let n = states.len();
            let mut table: Table = BTreeMap::new();
            for t in k..coded.len() {
                bump(&mut table, code(&coded, t - m, t, n), code(&coded, t - j, t - m, n), coded[t], n);
            }
            let (g, df) = stratified_g(&table);
            let p = p_value(g, df);
            let rejected = p < level;
            accepted &= !rejected;
            tests.push(OrderTest {
                order: m,
                against: j,
                g,
                df,
                p_value: p,
                rejected,
            });
        }
        if accepted {
            order = m;
            break;
        }
    }

    let matrices = (0..=k)
        .map(|m| matrix(&coded, &states, m, k, opts.alpha, opts.windows))
        .collect();
    Ok(MarkovEstimate {
        order,
        states,
        length: seq.len(),
        matrices,
        tests,
    })
}

/// True when every maximal run of equal values lasts at least `n` samples,
/// ignoring a possibly truncated final run.
pub fn persists_for<S: AsRef<str>>(seq: &[S], n: usize) -> bool {
    let mut runs = Vec::new();
    let mut len = 0;
    for (i, s) in seq.iter().enumerate() {
        if i > 0 && s.as_ref() != seq[i - 1].as_ref() {
            runs.push(len);
            len = 0;
        }
        len += 1;
    }
    runs.iter().all(|r| *r >= n)
}
