//! `pscale`: validate, analyze and simulate promise models.
//!
//! Exit status: 0 on success, 1 when the model or data fail a domain check,
//! 2 on I/O or usage errors.

mod report;

use std::fs;
use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::thread;

use clap::{Parser, Subcommand};
use promise_scale::analysis::{estimate_markov_order, MarkovOptions};
use promise_scale::sim::{self, Trace};
use promise_scale::{load_model, parse_scenario, AgentId, Model};
use serde::Serialize;
use thiserror::Error;

use report::{MarkovReport, SimulationReport};

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error("{context}: {source}")]
    Domain {
        context: String,
        source: promise_scale::Error,
    },
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Domain { .. } => 1,
            CliError::Io { .. } | CliError::Usage(_) => 2,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn domain(context: impl std::fmt::Display) -> impl FnOnce(promise_scale::Error) -> CliError {
    let context = context.to_string();
    move |source| CliError::Domain { context, source }
}

#[derive(Parser)]
#[command(name = "pscale", version, about = "Scale-dependent state analysis and simulation of promise models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a model parses and all references resolve.
    Validate { model: PathBuf },
    /// Report bindings, state classes, invariance, sharing and downstream
    /// responsibility, optionally at coarser scales.
    Analyze {
        model: PathBuf,
        /// Partition to compose into superagents (repeatable).
        #[arg(long = "scale", value_name = "PARTITION")]
        scales: Vec<String>,
        /// Write the structured report (YAML) here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a seeded simulation and summarize it.
    Simulate {
        model: PathBuf,
        scenario: PathBuf,
        #[arg(long, required_unless_present = "seeds", conflicts_with = "seeds")]
        seed: Option<u64>,
        /// Inclusive seed range `a..b`, run in parallel.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<RangeInclusive<u64>>,
        #[arg(long, default_value_t = 1000)]
        steps: u64,
        /// Trace file. With several seeds, `{seed}` in the name is replaced
        /// by the seed, or the seed is inserted before the extension.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate the Markov order of one agent's recorded variable.
    Markov {
        trace: PathBuf,
        #[arg(long)]
        agent: String,
        #[arg(long)]
        variable: String,
        #[arg(long, default_value_t = 2)]
        max_order: usize,
        #[arg(long, default_value_t = 0.01)]
        alpha: f64,
        /// Override the minimum sequence length.
        #[arg(long)]
        min_length: Option<usize>,
        /// Model declaring the variable's history, to cross-check.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> std::result::Result<RangeInclusive<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got `{s}`"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad seed `{a}`: {e}"))?;
    let b: u64 = b.trim_start_matches('=').trim().parse().map_err(|e| format!("bad seed `{b}`: {e}"))?;
    if a > b {
        return Err(format!("empty seed range `{s}`"));
    }
    Ok(a..=b)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_yaml<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_yaml::to_string(value).map_err(|e| CliError::Usage(e.to_string()))?;
    write(path, text.as_bytes())
}

fn model_from(path: &Path) -> Result<Model> {
    load_model(&read(path)?).map_err(domain(path.display()))
}

fn trace_path(template: &Path, seed: u64, many: bool) -> PathBuf {
    let text = template.to_string_lossy();
    if text.contains("{seed}") {
        return PathBuf::from(text.replace("{seed}", &seed.to_string()));
    }
    if !many {
        return template.to_path_buf();
    }
    let stem = template.file_stem().unwrap_or_default().to_string_lossy();
    let name = match template.extension() {
        Some(ext) => format!("{stem}.{seed}.{}", ext.to_string_lossy()),
        None => format!("{stem}.{seed}"),
    };
    template.with_file_name(name)
}

fn print(text: &str) {
    let mut out = io::stdout().lock();
    let _ = out.write_all(text.as_bytes());
}

fn validate(path: &Path) -> Result<()> {
    let model = model_from(path)?;
    let bindings = model.graph.bind_promises().map_err(domain(path.display()))?;
    print(&format!(
        "{}: ok ({} agents, {} promises, {} bindings, {} partitions)\n",
        path.display(),
        model.graph.agents.len(),
        model.graph.promises.len(),
        bindings.len(),
        model.partitions.len()
    ));
    Ok(())
}

fn analyze(path: &Path, scales: &[String], out: Option<&Path>) -> Result<()> {
    let model = model_from(path)?;
    let report = report::analyze(&model, scales).map_err(domain(path.display()))?;
    print(&report::render_analysis(&report));
    if let Some(out) = out {
        write_yaml(out, &report)?;
    }
    Ok(())
}

fn simulate(
    model_path: &Path,
    scenario_path: &Path,
    seeds: RangeInclusive<u64>,
    steps: u64,
    trace: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let model = model_from(model_path)?;
    let scenario = parse_scenario(&read(scenario_path)?).map_err(domain(scenario_path.display()))?;
    let scenario = model.scenario(&scenario);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()));
    }

    let seeds: Vec<u64> = seeds.collect();
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(seeds.len()).max(1);
    let chunk = seeds.len().div_ceil(workers);
    // Each run owns its state; results are gathered back in seed order.
    let results: Vec<promise_scale::Result<sim::SimRun>> = thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                let (graph, scenario) = (&model.graph, &scenario);
                s.spawn(move || part.iter().map(|seed| sim::run(graph, scenario, *seed, steps)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("simulation thread panicked")).collect()
    });

    let many = seeds.len() > 1;
    let mut summaries = Vec::new();
    for (seed, run) in seeds.iter().zip(results) {
        let run = run.map_err(domain(format!("{} (seed {seed})", scenario_path.display())))?;
        if let Some(t) = trace {
            write(&trace_path(t, *seed, many), &run.trace.to_bytes())?;
        }
        print(&report::render_summary(&run.summary));
        summaries.push(run.summary);
    }
    if let Some(out) = out {
        write_yaml(
            out,
            &SimulationReport {
                version: report::VERSION,
                runs: summaries,
            },
        )?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn markov(
    trace_file: &Path,
    agent: &str,
    variable: &str,
    max_order: usize,
    alpha: f64,
    min_length: Option<usize>,
    model: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let trace = Trace::parse(&read(trace_file)?).map_err(domain(trace_file.display()))?;
    let agent = AgentId::new(agent);
    let seq = trace.project_states(&agent, variable);
    let opts = MarkovOptions {
        alpha,
        min_length,
        ..MarkovOptions::new(max_order)
    };
    let estimate = estimate_markov_order(&seq, &opts).map_err(domain(format!("{agent}.{variable}")))?;
    let declared_history = match model {
        Some(path) => {
            let m = model_from(path)?;
            let a = m.graph.agent(&agent).ok_or_else(|| CliError::Domain {
                context: path.display().to_string(),
                source: promise_scale::Error::UnknownAgent(agent.clone()),
            })?;
            let v = a.variables.iter().find(|v| v.name == variable).ok_or_else(|| CliError::Domain {
                context: path.display().to_string(),
                source: promise_scale::Error::UnknownVariable {
                    agent: agent.clone(),
                    variable: variable.to_string(),
                },
            })?;
            Some(v.history)
        }
        None => None,
    };
    let report = MarkovReport {
        version: report::VERSION,
        consistent_with_declaration: declared_history.map(|h| estimate.order <= h as usize),
        declared_history,
        agent,
        variable: variable.to_string(),
        estimate,
    };
    print(&report::render_markov(&report));
    if let Some(out) = out {
        write_yaml(out, &report)?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { model } => validate(&model),
        Command::Analyze { model, scales, out } => analyze(&model, &scales, out.as_deref()),
        Command::Simulate {
            model,
            scenario,
            seed,
            seeds,
            steps,
            trace,
            out,
        } => {
            let seeds = match (seed, seeds) {
                (Some(s), None) => s..=s,
                (None, Some(r)) => r,
                _ => return Err(CliError::Usage("give exactly one of --seed or --seeds".into())),
            };
            simulate(&model, &scenario, seeds, steps, trace.as_deref(), out.as_deref())
        }
        Command::Markov {
            trace,
            agent,
            variable,
            max_order,
            alpha,
            min_length,
            model,
            out,
        } => markov(&trace, &agent, &variable, max_order, alpha, min_length, model.as_deref(), out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
