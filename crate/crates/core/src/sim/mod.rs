//! Deterministic, seeded discrete-event simulation of promise keeping.

mod engine;
pub mod process;
pub mod rate;
pub mod scenario;
pub mod sync;
pub mod trace;
pub mod transaction;

pub use engine::{run, ChannelStats, Message, ProcessStats, PromiseStats, SimRun, Summary, SyncStats};
pub use process::{run_convergence, ConvergenceOptions, Mode, ObserverSpec, ProcessSpec, Rule, Trajectory};
pub use rate::Rate;
pub use scenario::{inject_fault, ChannelParams, ChannelSpec, Fault, Responder, Scenario};
pub use sync::{measure_sync, partition_nonblocking, SyncReport};
pub use trace::{EventKind, Trace, TraceEvent};
pub use transaction::{
    run_transaction, transaction_messages, transaction_output, BufferFate, TransactionOutcome, TransactionSpec,
    TxKill, TxStatus,
};
