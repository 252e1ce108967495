//! Analytics over traces and models.

pub mod downstream;
pub mod linearity;
pub mod markov;
pub mod timescale;

pub use downstream::{downstream_analysis, satisfiable_without, DownstreamReport, ProviderOption};
pub use linearity::{check_linearity, keepings, linearity_of, Keeping, LinearityReport, Witness};
pub use markov::{estimate_markov_order, persists_for, MarkovEstimate, MarkovOptions, OrderTest, TransitionMatrix};
pub use timescale::{timescale_from_times, timescale_report, Selector, TimescaleReport, DEFAULT_EPSILON};
