//! Transactions at scale T.
//!
//! A source sends the sequence M_1..M_T to a transacting agent over a lossy
//! channel, retrying until each message is acknowledged. Once the agent
//! holds the whole sequence it keeps its conditional promise by sending the
//! output to a sink, and it retains the buffer until the sink acknowledges.
//! Acknowledgements travel on reverse channels with the same loss model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AgentId;
use crate::sim::rate::Rate;
use crate::sim::trace::{EventKind, Trace, TraceEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BufferFate {
    Intact,
    Lost,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxKill {
    pub at: u64,
    /// Steps the agent stays down before restarting.
    #[serde(default = "one")]
    pub down_for: u64,
    pub buffer: BufferFate,
}

fn one() -> u64 {
    1
}

fn default_max_steps() -> u64 {
    10_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionSpec {
    /// Number of messages in the transaction, T >= 1.
    pub scale: u32,
    #[serde(default = "zero_rate")]
    pub loss: Rate,
    #[serde(default = "default_source")]
    pub source: AgentId,
    #[serde(default = "default_agent")]
    pub agent: AgentId,
    #[serde(default = "default_sink")]
    pub sink: AgentId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kill: Option<TxKill>,
    #[serde(default = "default_max_steps")]
    pub max_steps: u64,
}

fn zero_rate() -> Rate {
    Rate::ZERO
}

fn default_source() -> AgentId {
    AgentId::new("S")
}

fn default_agent() -> AgentId {
    AgentId::new("A")
}

fn default_sink() -> AgentId {
    AgentId::new("R")
}

impl TransactionSpec {
    pub fn new(scale: u32, loss: Rate) -> Self {
        Self {
            scale,
            loss,
            source: default_source(),
            agent: default_agent(),
            sink: default_sink(),
            kill: None,
            max_steps: default_max_steps(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scale == 0 {
            return Err(Error::Argument("transaction scale T must be at least 1".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::Argument("max_steps must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Accumulating,
    Kept,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionOutcome {
    pub status: TxStatus,
    /// Output the sink received.
    pub output: Option<String>,
    /// Output recomputed from the retained buffer after acknowledgement.
    pub replay_output: Option<String>,
    pub replay_equivalent: bool,
    /// Only a transaction of a single message is memoryless.
    pub memoryless: bool,
    pub steps: u64,
    pub retransmissions: u64,
    #[serde(skip)]
    pub trace: Trace,
}

/// The conditional output X | M_1..M_T, a pure function of the ordered sequence.
pub fn transaction_output(buffer: &[String]) -> String {
    format!("X({})", buffer.join(","))
}

/// Message payloads depend on the seed only, never on channel draws, so a
/// lossless run with the same seed sees the same sequence.
pub fn transaction_messages(scale: u32, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    (1..=scale)
        .map(|i| format!("m{i}:{}", rng.gen_range(0..1000u32)))
        .collect()
}

struct Clocks {
    source: u64,
    agent: u64,
    sink: u64,
}

pub fn run_transaction(spec: &TransactionSpec, seed: u64) -> Result<TransactionOutcome> {
    spec.validate()?;
    let t = spec.scale as usize;
    let messages = transaction_messages(spec.scale, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut trace = Trace::default();
    let mut clocks = Clocks { source: 0, agent: 0, sink: 0 };
    let mut next_id = 0u64;

    let mut acked = vec![false; t];
    let mut sent = vec![false; t];
    let mut buffer: Vec<Option<String>> = vec![None; t];
    let mut agent_up = true;
    let mut restart_at = None;
    let mut output_sent: Option<String> = None;
    let mut sink_received: Option<String> = None;
    let mut status = TxStatus::Accumulating;
    let mut replay_output = None;
    let mut retransmissions = 0u64;
    let mut step = 0u64;

    macro_rules! record {
        ($step:expr, $who:expr, $time:expr, $kind:expr, $id:expr, $label:expr, $payload:expr) => {
            trace.events.push(TraceEvent {
                global_step: $step,
                observer: $who.clone(),
                observer_proper_time: $time,
                kind: $kind,
                message_id: $id,
                body_label: $label,
                payload: $payload,
            })
        };
    }

    while step < spec.max_steps && status == TxStatus::Accumulating {
        if let Some(k) = &spec.kill {
            if step == k.at && agent_up {
                agent_up = false;
                restart_at = Some(step + k.down_for.max(1));
                record!(step, spec.agent, clocks.agent, EventKind::Kill, None, None, None);
                if k.buffer == BufferFate::Lost {
                    buffer.iter_mut().for_each(|b| *b = None);
                    status = TxStatus::Aborted;
                    break;
                }
            }
        }
        if restart_at == Some(step) {
            agent_up = true;
            restart_at = None;
            record!(step, spec.agent, clocks.agent, EventKind::Restart, None, None, None);
        }

        // Source retries every unacknowledged message.
        for i in 0..t {
            if acked[i] {
                continue;
            }
            let id = next_id;
            next_id += 1;
            let label = Some(format!("M{}", i + 1));
            record!(step, spec.source, clocks.source, EventKind::Kept, Some(id), label.clone(), Some(messages[i].clone()));
            if sent[i] {
                retransmissions += 1;
            }
            sent[i] = true;
            if spec.loss.draw(&mut rng) || !agent_up {
                record!(step, spec.source, clocks.source, EventKind::Lost, Some(id), label, None);
                continue;
            }
            clocks.agent += 1;
            record!(step, spec.agent, clocks.agent, EventKind::Sample, Some(id), label.clone(), Some(messages[i].clone()));
            buffer[i] = Some(messages[i].clone());
            if spec.loss.draw(&mut rng) {
                record!(step, spec.agent, clocks.agent, EventKind::Lost, Some(id), Some(format!("ack:M{}", i + 1)), None);
            } else {
                acked[i] = true;
                clocks.source += 1;
                record!(step, spec.source, clocks.source, EventKind::Ack, Some(id), label, None);
            }
        }

        // The conditional output is kept only once the whole sequence is held.
        if agent_up && buffer.iter().all(Option::is_some) {
            let held: Vec<String> = buffer.iter().flatten().cloned().collect();
            let out = transaction_output(&held);
            let id = next_id;
            next_id += 1;
            record!(step, spec.agent, clocks.agent, EventKind::Kept, Some(id), Some("X".into()), Some(out.clone()));
            output_sent = Some(out.clone());
            if spec.loss.draw(&mut rng) {
                record!(step, spec.agent, clocks.agent, EventKind::Lost, Some(id), Some("X".into()), None);
            } else {
                clocks.sink += 1;
                record!(step, spec.sink, clocks.sink, EventKind::Sample, Some(id), Some("X".into()), Some(out.clone()));
                sink_received = Some(out);
                if spec.loss.draw(&mut rng) {
                    record!(step, spec.sink, clocks.sink, EventKind::Lost, Some(id), Some("ack:X".into()), None);
                } else {
                    clocks.agent += 1;
                    record!(step, spec.agent, clocks.agent, EventKind::Ack, Some(id), Some("X".into()), None);
                    // Replay from the retained buffer before releasing it.
                    replay_output = Some(transaction_output(&held));
                    buffer.iter_mut().for_each(|b| *b = None);
                    status = TxStatus::Kept;
                }
            }
        }
        step += 1;
    }

    let output = sink_received.or(output_sent);
    let replay_equivalent = status == TxStatus::Kept && replay_output.is_some() && replay_output == output;
    Ok(TransactionOutcome {
        status,
        output,
        replay_output,
        replay_equivalent,
        memoryless: spec.scale == 1,
        steps: step,
        retransmissions,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_message_lossless() {
        let out = run_transaction(&TransactionSpec::new(1, Rate::ZERO), 4).unwrap();
        assert_eq!(out.status, TxStatus::Kept);
        assert!(out.replay_equivalent);
        assert!(out.memoryless);
        assert_eq!(out.steps, 1);
    }

    #[test]
    fn lossy_run_matches_lossless_oracle() {
        let seed = 11;
        let oracle = run_transaction(&TransactionSpec::new(3, Rate::ZERO), seed).unwrap();
        let lossy = run_transaction(&TransactionSpec::new(3, Rate::new(3, 10).unwrap()), seed).unwrap();
        assert_eq!(lossy.status, TxStatus::Kept);
        assert!(lossy.replay_equivalent);
        assert_eq!(lossy.output, oracle.output);
        assert!(!lossy.memoryless);
    }

    #[test]
    fn restart_with_intact_buffer_completes() {
        let seed = 5;
        let oracle = run_transaction(&TransactionSpec::new(3, Rate::ZERO), seed).unwrap();
        let mut spec = TransactionSpec::new(3, Rate::new(3, 10).unwrap());
        spec.kill = Some(TxKill { at: 0, down_for: 2, buffer: BufferFate::Intact });
        let out = run_transaction(&spec, seed).unwrap();
        assert_eq!(out.status, TxStatus::Kept);
        assert_eq!(out.output, oracle.output);
        assert!(out.trace.events.iter().any(|e| e.kind == EventKind::Restart));
    }

    #[test]
    fn lost_buffer_aborts() {
        let mut spec = TransactionSpec::new(3, Rate::new(6, 10).unwrap());
        spec.kill = Some(TxKill { at: 0, down_for: 1, buffer: BufferFate::Lost });
        let out = run_transaction(&spec, 1).unwrap();
        assert_eq!(out.status, TxStatus::Aborted);
        assert!(!out.replay_equivalent);
    }

    #[test]
    fn zero_scale_rejected() {
        assert!(run_transaction(&TransactionSpec::new(0, Rate::ZERO), 0).is_err());
    }
}
