//! Block dissemination among peers: push to `fanout` random neighbours for
//! `push_rounds` rounds after a block is first received, plus a periodic
//! anti-entropy pull so peers that were cut off catch up after healing.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::{FaultSpec, LinkModel, NetMessage, Network, NodeId, Processed, Tick};
use crate::crypto::sha256_parts;
use crate::ledger::Block;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GossipConfig {
    pub fanout: usize,
    pub push_rounds: u32,
    pub pull_interval: Tick,
    /// Most blocks returned for one pull.
    pub pull_batch: usize,
}

impl Default for GossipConfig {
    fn default() -> Self {
        GossipConfig {
            fanout: 3,
            push_rounds: 3,
            pull_interval: 4,
            pull_batch: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GossipMsg {
    Push(Box<Block>),
    Pull { from_seq: u64 },
    Blocks(Vec<Block>),
}

impl NetMessage for GossipMsg {
    fn kind(&self) -> &'static str {
        match self {
            GossipMsg::Push(_) => "gossip-push",
            GossipMsg::Pull { .. } => "gossip-pull",
            GossipMsg::Blocks(_) => "gossip-blocks",
        }
    }

    fn detail(&self) -> String {
        match self {
            GossipMsg::Push(b) => b.seq.to_string(),
            GossipMsg::Pull { from_seq } => from_seq.to_string(),
            GossipMsg::Blocks(bs) => bs.iter().map(|b| b.seq.to_string()).collect::<Vec<_>>().join(" "),
        }
    }
}

pub type Outbox = Vec<(NodeId, GossipMsg)>;

/// One peer's gossip state.
#[derive(Clone, Debug)]
pub struct GossipNode {
    pub id: NodeId,
    neighbours: Vec<NodeId>,
    blocks: BTreeMap<u64, Block>,
    received_at: BTreeMap<u64, Tick>,
    config: GossipConfig,
    rng: ChaCha8Rng,
}

impl GossipNode {
    pub fn new(id: &str, neighbours: Vec<NodeId>, config: GossipConfig, seed: u64) -> Self {
        let node_seed = sha256_parts(&[b"gossip", id.as_bytes(), &seed.to_be_bytes()]);
        GossipNode {
            id: id.to_string(),
            neighbours: neighbours.into_iter().filter(|n| n != id).collect(),
            blocks: BTreeMap::new(),
            received_at: BTreeMap::new(),
            config,
            rng: ChaCha8Rng::from_seed(node_seed.0),
        }
    }

    pub fn has(&self, seq: u64) -> bool {
        self.blocks.contains_key(&seq)
    }

    pub fn block(&self, seq: u64) -> Option<&Block> {
        self.blocks.get(&seq)
    }

    /// First sequence number this node is missing.
    pub fn contiguous_height(&self) -> u64 {
        let mut h = 0;
        while self.blocks.contains_key(&h) {
            h += 1;
        }
        h
    }

    /// Stores a block; returns whether it was new.
    pub fn accept(&mut self, block: Block, now: Tick) -> bool {
        if self.blocks.contains_key(&block.seq) {
            return false;
        }
        self.received_at.insert(block.seq, now);
        self.blocks.insert(block.seq, block);
        true
    }

    /// Newly accepted blocks, in sequence order, from a delivered message.
    pub fn on_message(&mut self, from: &str, msg: GossipMsg, now: Tick, out: &mut Outbox) -> Vec<u64> {
        match msg {
            GossipMsg::Push(block) => {
                let seq = block.seq;
                if self.accept(*block, now) {
                    vec![seq]
                } else {
                    Vec::new()
                }
            }
            GossipMsg::Blocks(blocks) => blocks
                .into_iter()
                .filter_map(|b| {
                    let seq = b.seq;
                    self.accept(b, now).then_some(seq)
                })
                .collect(),
            GossipMsg::Pull { from_seq } => {
                let batch: Vec<Block> = self
                    .blocks
                    .range(from_seq..)
                    .take(self.config.pull_batch)
                    .map(|(_, b)| b.clone())
                    .collect();
                if !batch.is_empty() {
                    out.push((from.to_string(), GossipMsg::Blocks(batch)));
                }
                Vec::new()
            }
        }
    }

    /// Once-per-tick actions: pushes of recently received blocks and the
    /// periodic pull.
    pub fn round(&mut self, now: Tick, out: &mut Outbox) {
        let fresh: Vec<u64> = self
            .received_at
            .iter()
            .filter(|(_, &at)| now >= at && now - at < Tick::from(self.config.push_rounds))
            .map(|(&seq, _)| seq)
            .collect();
        for seq in fresh {
            let targets: Vec<NodeId> = self
                .neighbours
                .choose_multiple(&mut self.rng, self.config.fanout)
                .cloned()
                .collect();
            for t in targets {
                out.push((t, GossipMsg::Push(Box::new(self.blocks[&seq].clone()))));
            }
        }
        if self.config.pull_interval > 0 && now % self.config.pull_interval == 0 {
            if let Some(t) = self.neighbours.choose(&mut self.rng).cloned() {
                out.push((
                    t,
                    GossipMsg::Pull {
                        from_seq: self.contiguous_height(),
                    },
                ));
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GossipReport {
    /// Tick at which each node first held the block.
    pub received: BTreeMap<NodeId, Tick>,
    /// Rounds until every node that ended up holding the block had it.
    pub rounds: Tick,
    pub log_digest: crate::crypto::Hash32,
}

/// Disseminates one block from `origin` over a full mesh of `peers`, one
/// round per tick with unit latency, for at most `max_rounds` rounds.
pub fn gossip_disseminate(
    peers: &[NodeId],
    origin: &str,
    block: Block,
    config: GossipConfig,
    faults: &[FaultSpec],
    seed: u64,
    max_rounds: Tick,
) -> GossipReport {
    let mut net: Network<GossipMsg> = Network::new(seed, LinkModel::default());
    for f in faults {
        net.add_fault(f.clone());
    }
    let mut nodes: BTreeMap<NodeId, GossipNode> = peers
        .iter()
        .map(|p| (p.clone(), GossipNode::new(p, peers.to_vec(), config, seed)))
        .collect();
    let seq = block.seq;
    net.drain_until(0);
    if !net.is_crashed(origin) {
        nodes.get_mut(origin).expect("origin is a peer").accept(block, 0);
    }
    for t in 0..=max_rounds {
        for processed in net.drain_until(t) {
            if let Processed::Deliver { from, to, msg, .. } = processed {
                let mut out = Outbox::new();
                nodes.get_mut(&to).expect("known peer").on_message(&from, msg, t, &mut out);
                for (dst, m) in out {
                    net.send(&to, &dst, m);
                }
            }
        }
        let live: Vec<NodeId> = nodes.keys().filter(|n| !net.is_crashed(n)).cloned().collect();
        if live.iter().all(|n| nodes[n].has(seq)) && net.peek_time().is_none() {
            break;
        }
        for id in live {
            let mut out = Outbox::new();
            nodes.get_mut(&id).expect("known peer").round(t, &mut out);
            for (dst, m) in out {
                net.send(&id, &dst, m);
            }
        }
    }
    let received: BTreeMap<NodeId, Tick> = nodes
        .iter()
        .filter_map(|(id, n)| n.received_at.get(&seq).map(|&t| (id.clone(), t)))
        .collect();
    GossipReport {
        rounds: received.values().copied().max().unwrap_or(0),
        received,
        log_digest: net.log().digest(),
    }
}
