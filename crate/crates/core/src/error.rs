use thiserror::Error;

use crate::document::Diagnostic;
use crate::graph::{AgentId, PromiseId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("promise `{promise}` references unknown agent `{agent}`")]
    DanglingAgent { promise: PromiseId, agent: AgentId },

    #[error("promise `{0}` has an empty promisee set")]
    EmptyPromisees(PromiseId),

    #[error("promise `{0}` has an empty body")]
    EmptyBody(PromiseId),

    #[error("duplicate {kind} id `{id}`")]
    Duplicate { kind: &'static str, id: String },

    #[error("unknown agent `{0}`")]
    UnknownAgent(AgentId),

    #[error("agent `{agent}` has no variable `{variable}`")]
    UnknownVariable { agent: AgentId, variable: String },

    #[error("agent `{0}` appears in more than one member set")]
    PartitionOverlap(AgentId),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid process: {0}")]
    Process(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("insufficient data for {what}: need at least {required}, got {actual}")]
    InsufficientData {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("malformed trace line {line}: {message}")]
    Trace { line: usize, message: String },

    #[error("{what}: {message}{}", location(*.line, *.column))]
    Parse {
        what: &'static str,
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },

    #[error("{}", join(.0))]
    Invalid(Vec<Diagnostic>),
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" (line {l}, column {c})"),
        (Some(l), None) => format!(" (line {l})"),
        _ => String::new(),
    }
}

fn join(ds: &[Diagnostic]) -> String {
    ds.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n")
}
