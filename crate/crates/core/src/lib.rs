//! Promise graphs, scale composition, statefulness classification and a
//! deterministic discrete-event simulator for agents that make and keep
//! promises.

pub mod analysis;
pub mod body;
pub mod document;
pub mod error;
pub mod graph;
pub mod scale;
pub mod sim;

pub use body::{Body, Term};
pub use error::{Error, Result};
pub use graph::{
    Agent, AgentId, Assessment, Binding, Lifetime, Polarity, Promise, PromiseGraph, PromiseId,
    Promisees, Resolution, Variable, Verdict,
};
pub use scale::{Invariance, Locality, Redundancy, SharedNothing, StateClass, StateReport};
pub use document::{load_model, parse_scenario, Diagnostic, Model, ModelDocument};
