//! Schedule traces and bit ledgers.
//!
//! A trace is an ordered list of slot intervals. Parallel cluster work is
//! recorded as one event per cluster; sequential long-range transmissions
//! as sweep events covering consecutive slots. Delivery of ledger entries is
//! recorded by `Deliver` events that reference ledger indices.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::netmodel::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phase {
    /// Plain one-at-a-time transmissions (the base of every recursion).
    Tdma,
    /// Setting up transmit cooperation.
    #[serde(rename = "phase1")]
    Distribute,
    /// Sub-phase 1 of the sessionized hierarchy (local MIMO sweep).
    #[serde(rename = "phase1.mimo")]
    DistributeMimo,
    /// Sub-phase 2 of the sessionized hierarchy (cooperate to decode).
    #[serde(rename = "phase1.decode")]
    DistributeDecode,
    /// Long-range MIMO transmissions.
    #[serde(rename = "phase2")]
    LongRange,
    /// Cooperate to decode.
    #[serde(rename = "phase3")]
    Decode,
}

impl Phase {
    pub fn label(self) -> &'static str {
        match self {
            Phase::Tdma => "tdma",
            Phase::Distribute => "phase1",
            Phase::DistributeMimo => "phase1.mimo",
            Phase::DistributeDecode => "phase1.decode",
            Phase::LongRange => "phase2",
            Phase::Decode => "phase3",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Tdma,
    Mimo,
    Recurse,
    Deliver,
}

/// Cluster id used by events that are not tied to a single cluster.
pub const NETWORK_WIDE: u32 = u32::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start: u64,
    pub end: u64,
    pub session: u32,
    pub phase: Phase,
    pub depth: u32,
    pub cluster: u32,
    pub kind: EventKind,
    pub payload_bits: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub batches: Vec<u32>,
}

impl Event {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScheduleTrace {
    pub scheme: String,
    pub events: Vec<Event>,
    pub total_slots: u64,
}

impl ScheduleTrace {
    pub fn new(scheme: impl Into<String>) -> Self {
        ScheduleTrace {
            scheme: scheme.into(),
            events: Vec::new(),
            total_slots: 0,
        }
    }

    pub fn push(&mut self, event: Event) {
        self.total_slots = self.total_slots.max(event.end);
        self.events.push(event);
    }

    /// Slots spent in each top-level phase, summed over sessions. Within a
    /// session a phase lasts from its earliest event start to its latest
    /// event end. Phases are listed in order of first appearance.
    pub fn phase_totals(&self) -> Vec<(Phase, u64)> {
        let mut order: Vec<Phase> = Vec::new();
        let mut spans: HashMap<(Phase, u32), (u64, u64)> = HashMap::new();
        for e in self.events.iter().filter(|e| e.depth == 0 && e.kind != EventKind::Deliver) {
            if !order.contains(&e.phase) {
                order.push(e.phase);
            }
            let span = spans.entry((e.phase, e.session)).or_insert((e.start, e.end));
            span.0 = span.0.min(e.start);
            span.1 = span.1.max(e.end);
        }
        order
            .into_iter()
            .map(|p| {
                let total = spans
                    .iter()
                    .filter(|((q, _), _)| *q == p)
                    .map(|(_, (s, e))| e - s)
                    .sum();
                (p, total)
            })
            .collect()
    }

    /// Structural checks: events inside the trace span, and events of the
    /// same cluster at the same depth never overlap in time.
    pub fn validate(&self) -> Result<()> {
        let max_end = self.events.iter().map(|e| e.end).max().unwrap_or(0);
        if max_end != self.total_slots {
            return Err(Error::InvalidParams(format!(
                "total_slots {} differs from last event end {}",
                self.total_slots, max_end
            )));
        }
        let mut by_cluster: HashMap<(u32, u32), Vec<(u64, u64)>> = HashMap::new();
        for e in &self.events {
            if e.start > e.end {
                return Err(Error::InvalidParams(format!("event ends before it starts: {e:?}")));
            }
            if e.kind != EventKind::Deliver && e.cluster != NETWORK_WIDE && !e.is_empty() {
                by_cluster.entry((e.depth, e.cluster)).or_default().push((e.start, e.end));
            }
        }
        for ((depth, cluster), mut spans) in by_cluster {
            spans.sort_unstable();
            if spans.windows(2).any(|w| w[1].0 < w[0].1) {
                return Err(Error::InvalidParams(format!(
                    "overlapping events for cluster {cluster} at depth {depth}"
                )));
            }
        }
        Ok(())
    }

    /// One JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BitBatch {
    pub source: NodeId,
    pub destination: NodeId,
    pub size: u64,
    pub departure: u64,
    pub arrival: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BitLedger {
    pub entries: Vec<BitBatch>,
    pub total_bits: u64,
}

impl BitLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a batch and returns its index.
    pub fn inject(&mut self, source: NodeId, destination: NodeId, size: u64, departure: u64) -> u32 {
        self.total_bits += size;
        self.entries.push(BitBatch {
            source,
            destination,
            size,
            departure,
            arrival: None,
        });
        (self.entries.len() - 1) as u32
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A trace together with the ledger of the bits it moves.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub trace: ScheduleTrace,
    pub ledger: BitLedger,
    /// Bits per source-destination pair.
    pub bulk: u64,
}
