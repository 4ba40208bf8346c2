//! Seeded discrete-event network simulation.
//!
//! Events are processed in `(at, seq)` order where `seq` is the insertion
//! counter, so a run is a pure function of its inputs and seed. Crashed
//! nodes drop inbound messages and send nothing; partitioned links drop
//! messages at delivery time until the partition heals.

pub mod gossip;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use crate::crypto::{sha256, Hash32};

pub type NodeId = String;
pub type Tick = u64;

/// What the event log records about a message.
pub trait NetMessage {
    fn kind(&self) -> &'static str;
    fn detail(&self) -> String {
        String::new()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkModel {
    pub base_latency: Tick,
    /// Extra latency drawn uniformly from `0..=jitter`.
    pub jitter: Tick,
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            base_latency: 1,
            jitter: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ByzantineStrategy {
    ForgeWriteset,
    WrongSignature,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum FaultKind {
    Crash,
    Partition { group_a: Vec<NodeId>, group_b: Vec<NodeId> },
    ByzantineEndorser { strategy: ByzantineStrategy },
    DosClient { rate: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub target: NodeId,
    #[serde(flatten)]
    pub kind: FaultKind,
    pub from_tick: Tick,
    /// `None` means the fault never heals.
    #[serde(default)]
    pub until_tick: Option<Tick>,
}

impl FaultSpec {
    pub fn validate(&self) -> Result<(), String> {
        match self.until_tick {
            Some(until) if until <= self.from_tick => Err(format!(
                "fault on {}: until_tick {} must exceed from_tick {}",
                self.target, until, self.from_tick
            )),
            _ => Ok(()),
        }
    }

    pub fn active_at(&self, t: Tick) -> bool {
        t >= self.from_tick && self.until_tick.map_or(true, |u| t < u)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EventKind<M> {
    Deliver { from: NodeId, to: NodeId, msg: M },
    Timer { node: NodeId, tag: u64 },
    FaultInject(usize),
    FaultHeal(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SimEvent<M> {
    pub at: Tick,
    pub seq: u64,
    pub kind: EventKind<M>,
}

/// Result of processing one event.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Processed<M> {
    Deliver { at: Tick, from: NodeId, to: NodeId, msg: M },
    Timer { at: Tick, node: NodeId, tag: u64 },
    Dropped { at: Tick },
    Fault { at: Tick, index: usize, injected: bool },
}

impl<M> Processed<M> {
    pub fn at(&self) -> Tick {
        match self {
            Processed::Deliver { at, .. }
            | Processed::Timer { at, .. }
            | Processed::Dropped { at }
            | Processed::Fault { at, .. } => *at,
        }
    }
}

/// Line-oriented trace: `tick,node,kind,detail`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EventLog {
    lines: Vec<String>,
    enabled: bool,
    hasher_input: Vec<u8>,
}

pub const TRACE_HEADER: &str = "tick,node,kind,detail";

impl EventLog {
    fn record(&mut self, tick: Tick, node: &str, kind: &str, detail: &str) {
        let line = format!("{tick},{node},{kind},{}", detail.replace([',', '\n'], ";"));
        self.hasher_input.extend_from_slice(line.as_bytes());
        self.hasher_input.push(b'\n');
        if self.hasher_input.len() > 1 << 16 {
            let h = sha256(&self.hasher_input);
            self.hasher_input.clear();
            self.hasher_input.extend_from_slice(&h.0);
        }
        if self.enabled {
            self.lines.push(line);
        }
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    /// Digest over every recorded event, whether or not lines are retained.
    pub fn digest(&self) -> Hash32 {
        sha256(&self.hasher_input)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(TRACE_HEADER);
        out.push('\n');
        for l in &self.lines {
            let _ = writeln!(out, "{l}");
        }
        out
    }
}

#[derive(Debug)]
pub struct Network<M> {
    now: Tick,
    next_seq: u64,
    queue: BinaryHeap<Reverse<(Tick, u64)>>,
    pending: BTreeMap<u64, SimEvent<M>>,
    rng: ChaCha8Rng,
    link: LinkModel,
    crashed: BTreeSet<NodeId>,
    partitions: BTreeMap<usize, (BTreeSet<NodeId>, BTreeSet<NodeId>)>,
    faults: Vec<FaultSpec>,
    active_faults: BTreeSet<usize>,
    message_cap: Option<usize>,
    sent_in_tick: (Tick, BTreeMap<NodeId, usize>),
    log: EventLog,
    dropped: u64,
}

impl<M: NetMessage> Network<M> {
    pub fn new(seed: u64, link: LinkModel) -> Self {
        Network {
            now: 0,
            next_seq: 0,
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            link,
            crashed: BTreeSet::new(),
            partitions: BTreeMap::new(),
            faults: Vec::new(),
            active_faults: BTreeSet::new(),
            message_cap: None,
            sent_in_tick: (0, BTreeMap::new()),
            log: EventLog::default(),
            dropped: 0,
        }
    }

    /// Keeps every trace line in memory (the digest is always maintained).
    pub fn with_trace(mut self) -> Self {
        self.log.enabled = true;
        self
    }

    /// Caps messages a node may send per tick; excess sends are dropped.
    pub fn with_message_cap(mut self, cap: usize) -> Self {
        self.message_cap = Some(cap);
        self
    }

    pub fn now(&self) -> Tick {
        self.now
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    pub fn faults(&self) -> &[FaultSpec] {
        &self.faults
    }

    pub fn is_crashed(&self, node: &str) -> bool {
        self.crashed.contains(node)
    }

    /// Faults currently in effect.
    pub fn active_faults(&self) -> impl Iterator<Item = &FaultSpec> {
        self.active_faults.iter().map(|&i| &self.faults[i])
    }

    pub fn is_partitioned(&self, a: &str, b: &str) -> bool {
        self.partitions.values().any(|(ga, gb)| {
            (ga.contains(a) && gb.contains(b)) || (ga.contains(b) && gb.contains(a))
        })
    }

    pub fn schedule(&mut self, at: Tick, kind: EventKind<M>) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse((at, seq)));
        self.pending.insert(seq, SimEvent { at, seq, kind });
    }

    /// Registers a fault and schedules its injection and heal events.
    pub fn add_fault(&mut self, spec: FaultSpec) {
        let index = self.faults.len();
        let (from, until) = (spec.from_tick, spec.until_tick);
        self.faults.push(spec);
        self.schedule(from, EventKind::FaultInject(index));
        if let Some(until) = until {
            self.schedule(until, EventKind::FaultHeal(index));
        }
    }

    pub fn schedule_timer(&mut self, node: &str, after: Tick, tag: u64) {
        let at = self.now + after;
        self.schedule(at, EventKind::Timer { node: node.to_string(), tag });
    }

    pub fn latency(&mut self) -> Tick {
        let jitter = if self.link.jitter > 0 {
            self.rng.gen_range(0..=self.link.jitter)
        } else {
            0
        };
        self.link.base_latency.max(1) + jitter
    }

    pub fn send(&mut self, from: &str, to: &str, msg: M) {
        if self.crashed.contains(from) {
            self.dropped += 1;
            self.log.record(self.now, from, "drop-crashed-sender", msg.kind());
            return;
        }
        if let Some(cap) = self.message_cap {
            if self.sent_in_tick.0 != self.now {
                self.sent_in_tick = (self.now, BTreeMap::new());
            }
            let count = self.sent_in_tick.1.entry(from.to_string()).or_insert(0);
            if *count >= cap {
                self.dropped += 1;
                self.log.record(self.now, from, "drop-cap", msg.kind());
                return;
            }
            *count += 1;
        }
        let at = self.now + self.latency();
        self.log
            .record(self.now, from, "send", &format!("{}>{} {}", msg.kind(), to, msg.detail()));
        self.schedule(
            at,
            EventKind::Deliver {
                from: from.to_string(),
                to: to.to_string(),
                msg,
            },
        );
    }

    /// Tick of the next queued event.
    pub fn peek_time(&self) -> Option<Tick> {
        self.queue.peek().map(|Reverse((at, _))| *at)
    }

    /// Processes the next event, or returns `None` when the queue is empty.
    pub fn step(&mut self) -> Option<Processed<M>> {
        let Reverse((at, seq)) = self.queue.pop()?;
        let event = self.pending.remove(&seq).expect("queued event is pending");
        self.now = at;
        Some(match event.kind {
            EventKind::Deliver { from, to, msg } => {
                if self.crashed.contains(&to) {
                    self.dropped += 1;
                    self.log.record(at, &to, "drop-crashed", msg.kind());
                    Processed::Dropped { at }
                } else if self.is_partitioned(&from, &to) {
                    self.dropped += 1;
                    self.log
                        .record(at, &to, "drop-partition", &format!("{}<{}", msg.kind(), from));
                    Processed::Dropped { at }
                } else {
                    self.log.record(at, &to, "deliver", &format!("{}<{}", msg.kind(), from));
                    Processed::Deliver { at, from, to, msg }
                }
            }
            EventKind::Timer { node, tag } => {
                if self.crashed.contains(&node) {
                    Processed::Dropped { at }
                } else {
                    Processed::Timer { at, node, tag }
                }
            }
            EventKind::FaultInject(index) => {
                self.set_fault(index, true);
                Processed::Fault { at, index, injected: true }
            }
            EventKind::FaultHeal(index) => {
                self.set_fault(index, false);
                Processed::Fault { at, index, injected: false }
            }
        })
    }

    /// Processes every event scheduled at or before `t`, then sets the clock to `t`.
    pub fn drain_until(&mut self, t: Tick) -> Vec<Processed<M>> {
        let mut out = Vec::new();
        while self.peek_time().is_some_and(|at| at <= t) {
            out.extend(self.step());
        }
        self.now = self.now.max(t);
        out
    }

    fn set_fault(&mut self, index: usize, on: bool) {
        let spec = self.faults[index].clone();
        let kind = if on { "fault-inject" } else { "fault-heal" };
        let detail = match &spec.kind {
            FaultKind::Crash => "crash".to_string(),
            FaultKind::Partition { group_a, group_b } => {
                format!("partition {}|{}", group_a.join(" "), group_b.join(" "))
            }
            FaultKind::ByzantineEndorser { strategy } => format!("byzantine {strategy:?}"),
            FaultKind::DosClient { rate } => format!("dos rate {rate}"),
        };
        self.log.record(self.now, &spec.target, kind, &detail);
        if on {
            self.active_faults.insert(index);
        } else {
            self.active_faults.remove(&index);
        }
        match spec.kind {
            FaultKind::Crash if on => {
                self.crashed.insert(spec.target);
            }
            FaultKind::Crash => {
                self.crashed.remove(&spec.target);
            }
            FaultKind::Partition { group_a, group_b } if on => {
                self.partitions
                    .insert(index, (group_a.into_iter().collect(), group_b.into_iter().collect()));
            }
            FaultKind::Partition { .. } => {
                self.partitions.remove(&index);
            }
            FaultKind::ByzantineEndorser { .. } | FaultKind::DosClient { .. } => {}
        }
    }

    /// Node-local annotation in the trace.
    pub fn note(&mut self, node: &str, kind: &str, detail: &str) {
        self.log.record(self.now, node, kind, detail);
    }
}
