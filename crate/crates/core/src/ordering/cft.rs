//! Leader-based crash-fault-tolerant replicated log.
//!
//! Log entries carry blocks; entry 0 is genesis. A new leader appends a
//! no-op entry so that entries left over from earlier terms commit along
//! with it. Clients broadcast to every orderer; followers forward their
//! pool to the leader they know, and a leader cuts blocks from its own pool.
//! Vote requests are buffered and answered on the next tick, lowest
//! candidate id first, so simultaneous candidacies resolve deterministically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use super::{cut_block, BlockAssembler, BroadcastError, BroadcastOutcome, PendingPool};
use crate::crypto::{sha256_parts, Hash32};
use crate::ledger::{verify_chain, Block, ChannelConfig, Transaction};
use crate::netsim::{EventLog, FaultKind, FaultSpec, LinkModel, NetMessage, Network, NodeId, Processed, Tick};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CftConfig {
    pub nodes: Vec<NodeId>,
    pub election_timeout_min: Tick,
    pub election_timeout_max: Tick,
    pub heartbeat_interval: Tick,
    pub max_entries_per_append: usize,
    /// Followers re-forward their pool to the leader this often.
    pub forward_retry: Tick,
}

impl CftConfig {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        CftConfig {
            nodes,
            election_timeout_min: 10,
            election_timeout_max: 20,
            heartbeat_interval: 3,
            max_entries_per_append: 16,
            forward_retry: 12,
        }
    }

    pub fn quorum(&self) -> usize {
        self.nodes.len() / 2 + 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogEntry {
    pub term: u64,
    /// `None` for the leader's no-op entry.
    pub block: Option<Block>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CftRole {
    Follower,
    Candidate,
    Leader,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CftMessage {
    AppendEntries {
        term: u64,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<LogEntry>,
        leader_commit: u64,
    },
    AppendAck {
        term: u64,
        success: bool,
        /// Last replicated index on success, a retry hint otherwise.
        match_index: u64,
    },
    VoteRequest {
        term: u64,
        last_index: u64,
        last_term: u64,
    },
    VoteGrant {
        term: u64,
        granted: bool,
    },
    Forward(Vec<Transaction>),
}

impl NetMessage for CftMessage {
    fn kind(&self) -> &'static str {
        match self {
            CftMessage::AppendEntries { .. } => "append-entries",
            CftMessage::AppendAck { .. } => "append-ack",
            CftMessage::VoteRequest { .. } => "vote-request",
            CftMessage::VoteGrant { .. } => "vote-grant",
            CftMessage::Forward(_) => "forward",
        }
    }

    fn detail(&self) -> String {
        match self {
            CftMessage::AppendEntries {
                term,
                prev_index,
                entries,
                leader_commit,
                ..
            } => format!("term {term} prev {prev_index} n {} commit {leader_commit}", entries.len()),
            CftMessage::AppendAck {
                term,
                success,
                match_index,
            } => format!("term {term} ok {success} match {match_index}"),
            CftMessage::VoteRequest {
                term,
                last_index,
                last_term,
            } => format!("term {term} last {last_index}@{last_term}"),
            CftMessage::VoteGrant { term, granted } => format!("term {term} granted {granted}"),
            CftMessage::Forward(txs) => txs.len().to_string(),
        }
    }
}

pub type Outbox = Vec<(NodeId, CftMessage)>;

#[derive(Clone, Debug)]
struct VoteRequest {
    candidate: NodeId,
    term: u64,
    last_index: u64,
    last_term: u64,
}

#[derive(Clone, Debug)]
pub struct CftNode {
    pub id: NodeId,
    peers: Vec<NodeId>,
    cfg: CftConfig,
    role: CftRole,
    term: u64,
    voted_for: Option<NodeId>,
    leader: Option<NodeId>,
    log: Vec<LogEntry>,
    log_txs: BTreeSet<Hash32>,
    commit_index: u64,
    delivered: Vec<Block>,
    channel: ChannelConfig,
    pool: PendingPool,
    assembler: Option<BlockAssembler>,
    next_index: BTreeMap<NodeId, u64>,
    match_index: BTreeMap<NodeId, u64>,
    votes: BTreeSet<NodeId>,
    vote_buffer: Vec<VoteRequest>,
    election_deadline: Tick,
    next_heartbeat: Tick,
    next_forward: Tick,
    rng: ChaCha8Rng,
}

impl CftNode {
    /// Panics if `genesis` is not a config block.
    pub fn new(id: &str, cfg: CftConfig, genesis: &Block, seed: u64) -> Self {
        let channel = genesis.config.as_ref().expect("genesis carries a config").config.clone();
        let node_seed = sha256_parts(&[b"cft", id.as_bytes(), &seed.to_be_bytes()]);
        let mut node = CftNode {
            id: id.to_string(),
            peers: cfg.nodes.iter().filter(|n| *n != id).cloned().collect(),
            cfg,
            role: CftRole::Follower,
            term: 0,
            voted_for: None,
            leader: None,
            log: vec![LogEntry {
                term: 0,
                block: Some(genesis.clone()),
            }],
            log_txs: BTreeSet::new(),
            commit_index: 0,
            delivered: vec![genesis.clone()],
            channel,
            pool: PendingPool::new(),
            assembler: None,
            next_index: BTreeMap::new(),
            match_index: BTreeMap::new(),
            votes: BTreeSet::new(),
            vote_buffer: Vec::new(),
            election_deadline: 0,
            next_heartbeat: 0,
            next_forward: 0,
            rng: ChaCha8Rng::from_seed(node_seed.0),
        };
        node.reset_deadline(0);
        node
    }

    pub fn role(&self) -> CftRole {
        self.role
    }

    pub fn term(&self) -> u64 {
        self.term
    }

    pub fn leader(&self) -> Option<&NodeId> {
        self.leader.as_ref()
    }

    pub fn commit_index(&self) -> u64 {
        self.commit_index
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    /// Committed blocks, genesis first.
    pub fn delivered(&self) -> &[Block] {
        &self.delivered
    }

    /// Committed block `s`, or `None` while it does not exist yet.
    pub fn deliver(&self, s: u64) -> Option<&Block> {
        self.delivered.get(usize::try_from(s).ok()?)
    }

    pub fn height(&self) -> u64 {
        self.delivered.len() as u64
    }

    pub fn pending(&self) -> usize {
        self.pool.len()
    }

    fn last_index(&self) -> u64 {
        self.log.len() as u64 - 1
    }

    fn last_term(&self) -> u64 {
        self.log.last().map_or(0, |e| e.term)
    }

    fn entry(&self, index: u64) -> &LogEntry {
        &self.log[index as usize]
    }

    fn reset_deadline(&mut self, now: Tick) {
        let (lo, hi) = (self.cfg.election_timeout_min, self.cfg.election_timeout_max.max(self.cfg.election_timeout_min));
        self.election_deadline = now + self.rng.gen_range(lo..=hi);
    }

    fn step_down(&mut self, term: u64) {
        if term > self.term {
            self.term = term;
            self.voted_for = None;
            self.leader = None;
        }
        self.role = CftRole::Follower;
        self.assembler = None;
        self.votes.clear();
    }

    fn append(&mut self, entry: LogEntry) {
        if let Some(block) = &entry.block {
            let ids: Vec<Hash32> = block.txs.iter().map(|t| t.tx_id).collect();
            self.log_txs.extend(ids.iter().copied());
            self.pool.remove_ordered(&ids);
        }
        self.log.push(entry);
    }

    fn truncate(&mut self, from: u64, now: Tick) {
        debug_assert!(from > self.commit_index, "committed entries never change");
        for entry in self.log.drain(from as usize..) {
            for tx in entry.block.into_iter().flat_map(|b| b.txs) {
                self.log_txs.remove(&tx.tx_id);
                self.pool.requeue(tx, now);
            }
        }
    }

    fn advance_commit(&mut self, to: u64) {
        let to = to.min(self.last_index());
        for index in self.commit_index + 1..=to {
            if let Some(block) = &self.log[index as usize].block {
                if let Some(env) = &block.config {
                    self.channel = env.config.clone();
                }
                self.delivered.push(block.clone());
            }
        }
        self.commit_index = self.commit_index.max(to);
    }

    /// Client entry point; forwards fresh transactions to a known leader.
    pub fn broadcast(&mut self, tx: Transaction, now: Tick, out: &mut Outbox) -> Result<BroadcastOutcome, BroadcastError> {
        if !self.channel.may_broadcast(&tx.client) {
            return Err(BroadcastError::AccessDenied(tx.client.clone()));
        }
        if self.log_txs.contains(&tx.tx_id) {
            return Ok(BroadcastOutcome::Duplicate);
        }
        let outcome = self.pool.insert(tx.clone(), now);
        if outcome == BroadcastOutcome::Accepted && self.role != CftRole::Leader {
            if let Some(leader) = &self.leader {
                out.push((leader.clone(), CftMessage::Forward(vec![tx])));
            }
        }
        Ok(outcome)
    }

    pub fn on_message(&mut self, from: &str, msg: CftMessage, now: Tick, out: &mut Outbox) {
        match msg {
            CftMessage::AppendEntries {
                term,
                prev_index,
                prev_term,
                entries,
                leader_commit,
            } => self.on_append(from, term, prev_index, prev_term, entries, leader_commit, now, out),
            CftMessage::AppendAck {
                term,
                success,
                match_index,
            } => self.on_ack(from, term, success, match_index, out),
            CftMessage::VoteRequest {
                term,
                last_index,
                last_term,
            } => self.vote_buffer.push(VoteRequest {
                candidate: from.to_string(),
                term,
                last_index,
                last_term,
            }),
            CftMessage::VoteGrant { term, granted } => {
                if term > self.term {
                    self.step_down(term);
                } else if self.role == CftRole::Candidate && term == self.term && granted {
                    self.votes.insert(from.to_string());
                    if self.votes.len() >= self.cfg.quorum() {
                        self.become_leader(now, out);
                    }
                }
            }
            CftMessage::Forward(txs) => {
                for tx in txs {
                    if self.channel.may_broadcast(&tx.client) && !self.log_txs.contains(&tx.tx_id) {
                        self.pool.insert(tx, now);
                    }
                }
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn on_append(
        &mut self,
        from: &str,
        term: u64,
        prev_index: u64,
        prev_term: u64,
        entries: Vec<LogEntry>,
        leader_commit: u64,
        now: Tick,
        out: &mut Outbox,
    ) {
        let reply = |term, success, match_index| {
            (
                from.to_string(),
                CftMessage::AppendAck {
                    term,
                    success,
                    match_index,
                },
            )
        };
        if term < self.term {
            out.push(reply(self.term, false, 0));
            return;
        }
        if term > self.term || self.role != CftRole::Follower {
            self.step_down(term);
        }
        self.reset_deadline(now);
        if self.leader.as_deref() != Some(from) {
            self.leader = Some(from.to_string());
            if !self.pool.is_empty() {
                out.push((from.to_string(), CftMessage::Forward(self.pool.iter().cloned().collect())));
            }
        }
        if prev_index > self.last_index() || self.entry(prev_index).term != prev_term {
            let hint = self.last_index().min(prev_index.saturating_sub(1));
            out.push(reply(self.term, false, hint));
            return;
        }
        let count = entries.len() as u64;
        for (i, entry) in entries.into_iter().enumerate() {
            let index = prev_index + 1 + i as u64;
            if index <= self.last_index() {
                if self.entry(index).term == entry.term {
                    continue;
                }
                self.truncate(index, now);
            }
            self.append(entry);
        }
        let matched = prev_index + count;
        if leader_commit > self.commit_index {
            self.advance_commit(leader_commit.min(matched));
        }
        out.push(reply(self.term, true, matched));
    }

    fn on_ack(&mut self, from: &str, term: u64, success: bool, match_index: u64, out: &mut Outbox) {
        if term > self.term {
            self.step_down(term);
            return;
        }
        if self.role != CftRole::Leader || term != self.term {
            return;
        }
        let next = self.next_index.get(from).copied().unwrap_or(1);
        if success {
            let matched = match_index.max(self.match_index.get(from).copied().unwrap_or(0));
            self.match_index.insert(from.to_string(), matched);
            self.next_index.insert(from.to_string(), next.max(matched + 1));
            self.leader_commit();
            if matched < self.last_index() {
                self.send_append(from, out);
            }
        } else {
            self.next_index
                .insert(from.to_string(), (match_index + 1).min(next.saturating_sub(1)).max(1));
            self.send_append(from, out);
        }
    }

    fn send_append(&self, to: &str, out: &mut Outbox) {
        let next = self.next_index.get(to).copied().unwrap_or(1).clamp(1, self.last_index() + 1);
        let prev_index = next - 1;
        let entries: Vec<LogEntry> = self.log[next as usize..]
            .iter()
            .take(self.cfg.max_entries_per_append)
            .cloned()
            .collect();
        out.push((
            to.to_string(),
            CftMessage::AppendEntries {
                term: self.term,
                prev_index,
                prev_term: self.entry(prev_index).term,
                entries,
                leader_commit: self.commit_index,
            },
        ));
    }

    fn leader_commit(&mut self) {
        for n in (self.commit_index + 1..=self.last_index()).rev() {
            if self.entry(n).term != self.term {
                break;
            }
            let acks = 1 + self.match_index.values().filter(|&&m| m >= n).count();
            if acks >= self.cfg.quorum() {
                self.advance_commit(n);
                break;
            }
        }
    }

    fn start_election(&mut self, now: Tick, out: &mut Outbox) {
        self.term += 1;
        self.role = CftRole::Candidate;
        self.voted_for = Some(self.id.clone());
        self.leader = None;
        self.votes = BTreeSet::from([self.id.clone()]);
        self.reset_deadline(now);
        if self.votes.len() >= self.cfg.quorum() {
            self.become_leader(now, out);
            return;
        }
        for p in &self.peers {
            out.push((
                p.clone(),
                CftMessage::VoteRequest {
                    term: self.term,
                    last_index: self.last_index(),
                    last_term: self.last_term(),
                },
            ));
        }
    }

    fn become_leader(&mut self, now: Tick, out: &mut Outbox) {
        self.role = CftRole::Leader;
        self.leader = Some(self.id.clone());
        self.votes.clear();
        self.append(LogEntry {
            term: self.term,
            block: None,
        });
        let next = self.last_index();
        self.next_index = self.peers.iter().map(|p| (p.clone(), next)).collect();
        self.match_index = self.peers.iter().map(|p| (p.clone(), 0)).collect();
        let tip = self
            .log
            .iter()
            .rev()
            .find_map(|e| e.block.as_ref())
            .expect("genesis is always in the log");
        let config = self
            .log
            .iter()
            .rev()
            .find_map(|e| e.block.as_ref().and_then(|b| b.config.as_ref()))
            .expect("genesis is a config block")
            .config
            .clone();
        self.assembler = Some(BlockAssembler::new(config, tip.seq + 1, tip.block_hash));
        self.broadcast_appends(now, out);
        self.leader_commit();
    }

    fn broadcast_appends(&mut self, now: Tick, out: &mut Outbox) {
        for p in &self.peers {
            self.send_append(p, out);
        }
        self.next_heartbeat = now + self.cfg.heartbeat_interval.max(1);
    }

    fn answer_votes(&mut self, now: Tick, out: &mut Outbox) {
        let mut requests = std::mem::take(&mut self.vote_buffer);
        requests.sort_by(|a, b| (Reverse(a.term), &a.candidate).cmp(&(Reverse(b.term), &b.candidate)));
        for r in requests {
            if r.term > self.term {
                self.step_down(r.term);
            }
            let up_to_date = (r.last_term, r.last_index) >= (self.last_term(), self.last_index());
            let free = self.voted_for.as_ref().map_or(true, |v| *v == r.candidate);
            let granted = r.term == self.term && self.role == CftRole::Follower && free && up_to_date;
            if granted {
                self.voted_for = Some(r.candidate.clone());
                self.reset_deadline(now);
            }
            out.push((
                r.candidate,
                CftMessage::VoteGrant {
                    term: self.term,
                    granted,
                },
            ));
        }
    }

    /// Timer-driven work: vote answers, elections, block cutting and heartbeats.
    pub fn on_tick(&mut self, now: Tick, out: &mut Outbox) {
        self.answer_votes(now, out);
        match self.role {
            CftRole::Leader => {
                let mut appended = false;
                loop {
                    let asm = self.assembler.as_mut().expect("leader has an assembler");
                    let params = &asm.config.consensus;
                    let (max, timeout) = (params.batch_max_txs, params.batch_timeout);
                    let Some(batch) = cut_block(&mut self.pool, max, timeout, now, asm.next_seq) else {
                        break;
                    };
                    let blocks = asm.assemble(batch.txs);
                    for block in blocks {
                        self.append(LogEntry {
                            term: self.term,
                            block: Some(block),
                        });
                    }
                    appended = true;
                }
                if appended || now >= self.next_heartbeat {
                    self.broadcast_appends(now, out);
                }
                self.leader_commit();
            }
            CftRole::Follower | CftRole::Candidate => {
                if now >= self.election_deadline {
                    self.start_election(now, out);
                } else if now >= self.next_forward {
                    self.next_forward = now + self.cfg.forward_retry.max(1);
                    let stale = now.saturating_sub(self.cfg.forward_retry);
                    if let (Some(leader), Some(oldest)) = (&self.leader, self.pool.oldest_arrival()) {
                        if oldest <= stale && *leader != self.id {
                            out.push((leader.clone(), CftMessage::Forward(self.pool.iter().cloned().collect())));
                        }
                    }
                }
            }
        }
    }
}

/// A set of orderer nodes wired through the simulated network. Each tick
/// delivers due messages, then runs every live node's timer work.
#[derive(Debug)]
pub struct CftCluster {
    net: Network<CftMessage>,
    nodes: BTreeMap<NodeId, CftNode>,
}

impl CftCluster {
    pub fn new(genesis: &Block, cfg: CftConfig, seed: u64, link: LinkModel) -> Self {
        let nodes = cfg
            .nodes
            .iter()
            .map(|id| (id.clone(), CftNode::new(id, cfg.clone(), genesis, seed)))
            .collect();
        CftCluster {
            net: Network::new(seed, link),
            nodes,
        }
    }

    pub fn with_trace(mut self) -> Self {
        self.net = self.net.with_trace();
        self
    }

    pub fn add_fault(&mut self, spec: FaultSpec) {
        self.net.add_fault(spec);
    }

    pub fn now(&self) -> Tick {
        self.net.now()
    }

    pub fn trace(&self) -> &EventLog {
        self.net.log()
    }

    pub fn is_crashed(&self, id: &str) -> bool {
        self.net.is_crashed(id)
    }

    pub fn node(&self, id: &str) -> Option<&CftNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &CftNode> {
        self.nodes.values()
    }

    /// The live leader with the highest term.
    pub fn leader(&self) -> Option<&CftNode> {
        self.nodes
            .values()
            .filter(|n| n.role == CftRole::Leader && !self.net.is_crashed(&n.id))
            .max_by_key(|n| n.term)
    }

    fn dispatch(&mut self, from: &str, out: Outbox) {
        for (to, msg) in out {
            self.net.send(from, &to, msg);
        }
    }

    /// Hands a client transaction to every live orderer.
    pub fn broadcast(&mut self, tx: &Transaction) -> Vec<(NodeId, Result<BroadcastOutcome, BroadcastError>)> {
        let now = self.net.now();
        let live: Vec<NodeId> = self.nodes.keys().filter(|n| !self.net.is_crashed(n)).cloned().collect();
        let mut results = Vec::new();
        for id in live {
            let mut out = Outbox::new();
            let r = self.nodes.get_mut(&id).expect("known node").broadcast(tx.clone(), now, &mut out);
            self.dispatch(&id, out);
            results.push((id, r));
        }
        results
    }

    /// Advances one tick.
    pub fn step(&mut self) {
        let t = self.net.now() + 1;
        for processed in self.net.drain_until(t) {
            if let Processed::Deliver { from, to, msg, .. } = processed {
                let mut out = Outbox::new();
                self.nodes.get_mut(&to).expect("known node").on_message(&from, msg, t, &mut out);
                self.dispatch(&to, out);
            }
        }
        let live: Vec<NodeId> = self.nodes.keys().filter(|n| !self.net.is_crashed(n)).cloned().collect();
        for id in live {
            let mut out = Outbox::new();
            self.nodes.get_mut(&id).expect("known node").on_tick(t, &mut out);
            self.dispatch(&id, out);
        }
    }

    pub fn run_until(&mut self, t: Tick) {
        while self.net.now() < t {
            self.step();
        }
    }
}

/// Safety and liveness properties of the delivered chains.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SafetyReport {
    /// Same block at every node for every sequence number both have.
    pub agreement: bool,
    /// Every chain verifies hash links and block hashes.
    pub hash_chain: bool,
    /// Sequence numbers are contiguous from 0.
    pub no_skipping: bool,
    /// Every delivered transaction was broadcast, and only once.
    pub no_creation: bool,
    /// Every broadcast transaction is delivered at every live node.
    pub validity: bool,
}

impl SafetyReport {
    pub fn safe(&self) -> bool {
        self.agreement && self.hash_chain && self.no_skipping && self.no_creation
    }
}

pub fn audit_cluster(cluster: &CftCluster, broadcast: &BTreeSet<Hash32>) -> SafetyReport {
    let chains: Vec<&[Block]> = cluster.nodes().map(|n| n.delivered()).collect();
    let agreement = chains.iter().all(|a| {
        chains
            .iter()
            .all(|b| a.iter().zip(b.iter()).all(|(x, y)| x.block_hash == y.block_hash && x == y))
    });
    let no_skipping = chains
        .iter()
        .all(|c| c.iter().enumerate().all(|(i, b)| b.seq == i as u64));
    let hash_chain = chains.iter().all(|c| verify_chain(c).is_ok());
    let no_creation = chains.iter().all(|c| {
        let mut seen = BTreeSet::new();
        c.iter()
            .flat_map(|b| &b.txs)
            .all(|t| broadcast.contains(&t.tx_id) && seen.insert(t.tx_id))
    });
    let validity = cluster.nodes().filter(|n| !cluster.is_crashed(&n.id)).all(|n| {
        let got: BTreeSet<Hash32> = n.delivered().iter().flat_map(|b| &b.txs).map(|t| t.tx_id).collect();
        broadcast.is_subset(&got)
    });
    SafetyReport {
        agreement,
        hash_chain,
        no_skipping,
        no_creation,
        validity,
    }
}

/// Shape of one randomized safety trial.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrialParams {
    pub orderers: usize,
    pub txs: u64,
    /// Faults start and heal before this tick.
    pub fault_horizon: Tick,
    pub duration: Tick,
    pub max_faults: usize,
}

impl Default for TrialParams {
    fn default() -> Self {
        TrialParams {
            orderers: 3,
            txs: 30,
            fault_horizon: 150,
            duration: 300,
            max_faults: 3,
        }
    }
}

/// Runs a cluster under random crash and single-node partition faults that
/// never affect more than one node at a time, then audits the result.
pub fn safety_trial(genesis: &Block, client: &str, params: &TrialParams, seed: u64) -> (SafetyReport, CftCluster) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<NodeId> = (0..params.orderers).map(|i| format!("orderer{i}")).collect();
    let mut cluster = CftCluster::new(
        genesis,
        CftConfig::new(ids.clone()),
        seed,
        LinkModel {
            base_latency: 1,
            jitter: 1,
        },
    );
    let faults = rng.gen_range(0..=params.max_faults);
    let window = params.fault_horizon / (params.max_faults.max(1) as u64);
    for k in 0..faults {
        let start = k as u64 * window + rng.gen_range(0..window / 2);
        let end = start + rng.gen_range(window / 4..window / 2).max(1);
        let target = ids[rng.gen_range(0..ids.len())].clone();
        let kind = if rng.gen_bool(0.5) {
            FaultKind::Crash
        } else {
            FaultKind::Partition {
                group_a: vec![target.clone()],
                group_b: ids.iter().filter(|i| **i != target).cloned().collect(),
            }
        };
        cluster.add_fault(FaultSpec {
            target,
            kind,
            from_tick: start,
            until_tick: Some(end),
        });
    }
    let mut schedule: Vec<Tick> = (0..params.txs).map(|_| rng.gen_range(0..params.fault_horizon)).collect();
    schedule.sort_unstable();
    let mut broadcast = BTreeSet::new();
    let mut nonce = 0;
    for t in 0..params.duration {
        while schedule.first().is_some_and(|&at| at <= t) {
            schedule.remove(0);
            nonce += 1;
            let tx = Transaction::invoke(client, nonce, "cc", "op", Vec::new());
            let accepted = cluster.broadcast(&tx).iter().any(|(_, r)| r.is_ok());
            if accepted {
                broadcast.insert(tx.tx_id);
            }
        }
        cluster.step();
    }
    (audit_cluster(&cluster, &broadcast), cluster)
}
