//! Networked permissionless run: every producer keeps its own fork tree,
//! blocks travel over the simulated network, and missing ancestors are
//! fetched on demand. An omniscient observer tree records every block for
//! fork statistics and double-sign detection.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::dpos::WitnessRoster;
use super::poi::{importance_score, ImportanceParams, Transfer};
use super::pos::{DoubleSignEvidence, SelectionMode, SignedHeader, StakeLedger};
use super::pow::{pow_attempt, retarget_difficulty, PowParams};
use super::{ChainBlock, ForkTree, ForkWeight};
use crate::crypto::{sha256_parts, Hash32, KeyPair};
use crate::netsim::{FaultSpec, LinkModel, NetMessage, Network, NodeId, Processed, Tick};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PosParams {
    pub selection: SelectionMode,
    #[serde(default)]
    pub slashing: bool,
    #[serde(default = "one")]
    pub slot_ticks: Tick,
    #[serde(default = "one")]
    pub day_length: Tick,
    #[serde(default)]
    pub fee: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DposParams {
    pub witnesses: usize,
    pub epoch_length: u64,
    pub reputation_floor: i64,
    #[serde(default = "one")]
    pub slot_ticks: Tick,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoiParams {
    #[serde(default)]
    pub importance: ImportanceParams,
    #[serde(default)]
    pub transfers: Vec<Transfer>,
    #[serde(default)]
    pub today: u64,
    #[serde(default = "one")]
    pub slot_ticks: Tick,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum LotteryMode {
    Pow(PowParams),
    Pos(PosParams),
    Dpos(DposParams),
    Poi(PoiParams),
}

impl LotteryMode {
    pub fn fork_weight(&self) -> ForkWeight {
        match self {
            LotteryMode::Pow(_) => ForkWeight::TotalDifficulty,
            _ => ForkWeight::BlockCount,
        }
    }

    fn slot_ticks(&self) -> Tick {
        match self {
            LotteryMode::Pow(_) => 1,
            LotteryMode::Pos(p) => p.slot_ticks,
            LotteryMode::Dpos(p) => p.slot_ticks,
            LotteryMode::Poi(p) => p.slot_ticks,
        }
        .max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Producer {
    pub id: NodeId,
    /// Hash attempts per tick under proof of work; coins otherwise.
    pub power: u64,
    /// Extends every live tip it knows instead of only its main tip.
    #[serde(default)]
    pub nothing_at_stake: bool,
    /// Witnesses this holder approves besides itself.
    #[serde(default)]
    pub votes: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LotteryConfig {
    pub consensus: LotteryMode,
    pub producers: Vec<Producer>,
    #[serde(default)]
    pub link: LinkModel,
    /// Scenario files leave these out; the scenario's own values apply.
    #[serde(default)]
    pub duration: Tick,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Tips this close to the best height count as competing.
    #[serde(default = "one")]
    pub live_depth: u64,
}

impl LotteryConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.producers.is_empty() {
            return Err("producers: at least one producer is required".into());
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, p) in self.producers.iter().enumerate() {
            if !ids.insert(&p.id) {
                return Err(format!("producers[{i}].id: duplicate id {}", p.id));
            }
        }
        match &self.consensus {
            LotteryMode::Pow(p) => p.validate().map_err(|e| format!("consensus: {e}")),
            LotteryMode::Poi(p) => p.importance.validate().map_err(|e| format!("consensus.importance: {e}")),
            LotteryMode::Dpos(p) if p.witnesses == 0 => Err("consensus.witnesses: must be at least 1".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ChainMsg {
    Block(SignedHeader),
    Request(Hash32),
}

impl NetMessage for ChainMsg {
    fn kind(&self) -> &'static str {
        match self {
            ChainMsg::Block(_) => "chain-block",
            ChainMsg::Request(_) => "chain-request",
        }
    }

    fn detail(&self) -> String {
        match self {
            ChainMsg::Block(h) => format!("{}@{}", h.block.height, h.block.producer),
            ChainMsg::Request(hash) => hash.to_hex()[..16].to_string(),
        }
    }
}

/// Continuous stretch with more than one live tip.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForkEpisode {
    pub start: Tick,
    pub end: Option<Tick>,
    /// Blocks produced while the fork lasted.
    pub blocks: u64,
}

#[derive(Clone, Debug)]
pub struct LotteryRun {
    pub observer: ForkTree,
    pub node_tips: BTreeMap<NodeId, Hash32>,
    pub episodes: Vec<ForkEpisode>,
    pub blocks_produced: u64,
    pub slashed: Vec<NodeId>,
    pub missed_slots: u64,
    pub audit: Vec<String>,
    pub log_digest: Hash32,
}

impl LotteryRun {
    pub fn mean_persistence(&self) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().map(|e| e.blocks as f64).sum::<f64>() / self.episodes.len() as f64
    }

    /// Mean gap between main-chain timestamps from `height` on.
    pub fn mean_interval_from(&self, height: u64) -> Option<f64> {
        let chain = self.observer.main_chain();
        let tail: Vec<Tick> = chain.iter().filter(|b| b.height >= height).map(|b| b.timestamp).collect();
        if tail.len() < 2 {
            return None;
        }
        Some((tail[tail.len() - 1] - tail[0]) as f64 / (tail.len() - 1) as f64)
    }

    /// Whether every node settled on the same main tip.
    pub fn converged(&self) -> bool {
        let mut tips = self.node_tips.values();
        let first = tips.next();
        tips.all(|t| Some(t) == first)
    }
}

struct Node {
    tree: ForkTree,
    signatures: BTreeMap<Hash32, Vec<u8>>,
    orphans: Vec<SignedHeader>,
    nonce: u64,
    key: KeyPair,
}

/// Difficulty required of a child of `parent`.
pub fn next_difficulty(tree: &ForkTree, parent: &Hash32, params: &PowParams) -> u32 {
    let node = tree.get(parent).expect("parent in tree");
    let height = node.block.height + 1;
    if height % params.retarget_window != 0 {
        return node.block.difficulty;
    }
    let mut stamps: Vec<Tick> = tree
        .ancestry(*parent)
        .take(params.retarget_window as usize)
        .map(|n| n.block.timestamp)
        .collect();
    stamps.reverse();
    let current = PowParams {
        difficulty: node.block.difficulty,
        ..*params
    };
    retarget_difficulty(&current, &stamps)
}

impl Node {
    fn accepts(&self, block: &ChainBlock, mode: &LotteryMode) -> bool {
        match mode {
            LotteryMode::Pow(params) => {
                block.difficulty == next_difficulty(&self.tree, &block.parent, params)
                    && pow_attempt(&block.header_bytes(), block.nonce, block.difficulty)
            }
            _ => true,
        }
    }

    /// Inserts a block, or parks it and returns the missing parent.
    fn receive(&mut self, header: SignedHeader, mode: &LotteryMode) -> Option<Hash32> {
        let hash = header.block.hash();
        if self.tree.contains(&hash) {
            return None;
        }
        if !self.tree.contains(&header.block.parent) {
            let missing = header.block.parent;
            if !self.orphans.iter().any(|o| o.block.hash() == hash) {
                self.orphans.push(header);
            }
            return Some(missing);
        }
        if self.accepts(&header.block, mode) && self.tree.insert(header.block.clone()).is_ok() {
            self.signatures.insert(hash, header.signature);
            while let Some(i) = self.orphans.iter().position(|o| self.tree.contains(&o.block.parent)) {
                let o = self.orphans.swap_remove(i);
                let h = o.block.hash();
                if self.accepts(&o.block, mode) && self.tree.insert(o.block).is_ok() {
                    self.signatures.insert(h, o.signature);
                }
            }
        }
        None
    }

    fn signed(&self, hash: &Hash32) -> Option<SignedHeader> {
        Some(SignedHeader {
            block: self.tree.get(hash)?.block.clone(),
            signature: self.signatures.get(hash)?.clone(),
        })
    }
}

fn slot_rng(seed: u64, slot: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(sha256_parts(&[b"slot", &seed.to_be_bytes(), &slot.to_be_bytes()]).0)
}

fn weighted_pick<'a>(weights: &'a [(NodeId, u128)], rng: &mut impl Rng) -> Option<&'a NodeId> {
    let total: u128 = weights.iter().map(|(_, w)| w).sum();
    if total == 0 {
        return None;
    }
    let mut draw = rng.gen_range(0..total);
    for (id, w) in weights {
        if draw < *w {
            return Some(id);
        }
        draw -= w;
    }
    None
}

enum Selector {
    Pow(PowParams),
    Pos(PosParams, StakeLedger),
    Dpos(WitnessRoster),
    Poi(Vec<(NodeId, u128)>),
}

struct Sim<'a> {
    cfg: &'a LotteryConfig,
    net: Network<ChainMsg>,
    nodes: BTreeMap<NodeId, Node>,
    observer: ForkTree,
    signed_at: BTreeMap<(NodeId, u64), Vec<SignedHeader>>,
    selector: Selector,
    produced: u64,
    missed: u64,
    slashed: Vec<NodeId>,
    audit: Vec<String>,
}

impl Sim<'_> {
    fn publish(&mut self, id: &str, block: ChainBlock) {
        let node = self.nodes.get_mut(id).expect("producer");
        let header = SignedHeader::sign(block, &node.key);
        node.receive(header.clone(), &self.cfg.consensus);
        let peers: Vec<NodeId> = self.nodes.keys().filter(|p| *p != id).cloned().collect();
        for p in peers {
            self.net.send(id, &p, ChainMsg::Block(header.clone()));
        }
        if self.observer.insert(header.block.clone()).is_ok() {
            self.produced += 1;
        }
        self.detect_double_sign(header);
    }

    fn detect_double_sign(&mut self, header: SignedHeader) {
        let Selector::Pos(params, ledger) = &mut self.selector else {
            return;
        };
        let key = (header.block.producer.clone(), header.block.height);
        let seen = self.signed_at.entry(key).or_default();
        let conflict = seen.iter().find(|h| h.block.parent != header.block.parent).cloned();
        seen.push(header.clone());
        if let (true, Some(first)) = (params.slashing, conflict) {
            let evidence = DoubleSignEvidence {
                validator: header.block.producer.clone(),
                first,
                second: header,
            };
            if ledger.slash(&evidence).is_ok() {
                self.slashed.push(evidence.validator);
            }
        }
    }

    fn deliver(&mut self, t: Tick) {
        for processed in self.net.drain_until(t) {
            let Processed::Deliver { from, to, msg, .. } = processed else {
                continue;
            };
            let node = self.nodes.get_mut(&to).expect("known node");
            match msg {
                ChainMsg::Block(header) => {
                    if let Some(missing) = node.receive(header, &self.cfg.consensus) {
                        self.net.send(&to, &from, ChainMsg::Request(missing));
                    }
                }
                ChainMsg::Request(hash) => {
                    if let Some(h) = node.signed(&hash) {
                        self.net.send(&to, &from, ChainMsg::Block(h));
                    }
                }
            }
        }
    }

    fn mine(&mut self, t: Tick, params: &PowParams) {
        let ids: Vec<NodeId> = self.cfg.producers.iter().map(|p| p.id.clone()).collect();
        for (id, producer) in ids.iter().zip(&self.cfg.producers) {
            if self.net.is_crashed(id) {
                continue;
            }
            let node = self.nodes.get_mut(id).expect("producer");
            let parent = node.tree.main_tip();
            let mut block = ChainBlock {
                height: node.tree.height() + 1,
                parent,
                producer: id.clone(),
                timestamp: t,
                difficulty: next_difficulty(&node.tree, &parent, params),
                nonce: 0,
            };
            let header = block.header_bytes();
            let start = node.nonce;
            node.nonce += producer.power;
            if let Some(nonce) = (start..start + producer.power).find(|&n| pow_attempt(&header, n, block.difficulty)) {
                block.nonce = nonce;
                self.publish(id, block);
            }
        }
    }

    fn leader(&mut self, slot: u64, t: Tick) -> Option<NodeId> {
        let mut rng = slot_rng(self.cfg.seed, slot);
        match &mut self.selector {
            Selector::Pow(_) => None,
            Selector::Pos(params, ledger) => {
                let id = ledger.select_with(params.selection, t, &mut rng).ok()?;
                ledger.reward(&id, params.fee, t);
                Some(id)
            }
            Selector::Dpos(roster) => {
                if roster.active().is_empty() || roster.is_epoch_boundary(slot) {
                    roster.elect_witnesses();
                }
                roster.scheduled(slot).cloned()
            }
            Selector::Poi(weights) => weighted_pick(weights, &mut rng).cloned(),
        }
    }

    fn produce_slot(&mut self, t: Tick) {
        let slot = t / self.cfg.consensus.slot_ticks();
        let Some(leader) = self.leader(slot, t) else {
            return;
        };
        let online = !self.net.is_crashed(&leader);
        if let Selector::Dpos(roster) = &mut self.selector {
            roster.record_slot(&leader, online);
        }
        if !online {
            self.missed += 1;
            return;
        }
        let producer = self.cfg.producers.iter().find(|p| p.id == leader).expect("leader is a producer");
        let node = &self.nodes[&leader];
        let mut parents = vec![node.tree.main_tip()];
        if producer.nothing_at_stake {
            for tip in node.tree.live_tips(self.cfg.live_depth) {
                if !parents.contains(&tip) {
                    parents.push(tip);
                }
            }
        }
        let blocks: Vec<ChainBlock> = parents
            .iter()
            .map(|p| ChainBlock {
                height: node.tree.get(p).expect("tip").block.height + 1,
                parent: *p,
                producer: leader.clone(),
                timestamp: t,
                difficulty: 0,
                nonce: slot,
            })
            .collect();
        for b in blocks {
            self.publish(&leader, b);
        }
    }
}

/// Runs a permissionless scenario to completion.
pub fn run_lottery(cfg: &LotteryConfig) -> LotteryRun {
    let difficulty = match &cfg.consensus {
        LotteryMode::Pow(p) => p.difficulty,
        _ => 0,
    };
    let genesis = ChainBlock::genesis(difficulty);
    let weight = cfg.consensus.fork_weight();
    let selector = match &cfg.consensus {
        LotteryMode::Pow(p) => Selector::Pow(*p),
        LotteryMode::Pos(p) => {
            let mut ledger = StakeLedger::new(p.day_length);
            for prod in &cfg.producers {
                let key = KeyPair::derive(&prod.id, cfg.seed);
                ledger.stake(&prod.id, prod.power, prod.power / 10 + 1, 0, key.public_key());
            }
            Selector::Pos(*p, ledger)
        }
        LotteryMode::Dpos(p) => {
            let mut roster = WitnessRoster::new(p.witnesses, p.epoch_length, p.reputation_floor);
            for prod in &cfg.producers {
                roster.add_candidate(&prod.id);
                roster.set_stake(&prod.id, prod.power);
            }
            for prod in &cfg.producers {
                let _ = roster.vote(&prod.id, &prod.id);
                for w in &prod.votes {
                    let _ = roster.vote(&prod.id, w);
                }
            }
            Selector::Dpos(roster)
        }
        LotteryMode::Poi(p) => Selector::Poi(
            cfg.producers
                .iter()
                .map(|prod| {
                    let s = importance_score(&prod.id, prod.power, &p.importance, &p.transfers, p.today);
                    (prod.id.clone(), (s.score * 1000.0).round() as u128)
                })
                .collect(),
        ),
    };
    let mut net = Network::new(cfg.seed, cfg.link);
    for f in &cfg.faults {
        net.add_fault(f.clone());
    }
    let nodes = cfg
        .producers
        .iter()
        .map(|p| {
            let node = Node {
                tree: ForkTree::new(genesis.clone(), weight),
                signatures: BTreeMap::new(),
                orphans: Vec::new(),
                nonce: u64::from_be_bytes(sha256_parts(&[p.id.as_bytes(), &cfg.seed.to_be_bytes()]).0[..8].try_into().expect("8 bytes")),
                key: KeyPair::derive(&p.id, cfg.seed),
            };
            (p.id.clone(), node)
        })
        .collect();
    let mut sim = Sim {
        cfg,
        net,
        nodes,
        observer: ForkTree::new(genesis, weight),
        signed_at: BTreeMap::new(),
        selector,
        produced: 0,
        missed: 0,
        slashed: Vec::new(),
        audit: Vec::new(),
    };
    let mut episodes: Vec<ForkEpisode> = Vec::new();
    let mut open: Option<(Tick, u64)> = None;
    for t in 1..=cfg.duration {
        sim.deliver(t);
        match &sim.selector {
            Selector::Pow(p) => {
                let p = *p;
                sim.mine(t, &p);
            }
            _ if t % cfg.consensus.slot_ticks() == 0 => sim.produce_slot(t),
            _ => {}
        }
        let forked = sim.observer.live_tips(cfg.live_depth).len() > 1;
        match (forked, open) {
            (true, None) => open = Some((t, sim.produced.saturating_sub(1))),
            (false, Some((start, at))) => {
                episodes.push(ForkEpisode {
                    start,
                    end: Some(t),
                    blocks: sim.produced - at,
                });
                open = None;
            }
            _ => {}
        }
    }
    if let Some((start, at)) = open {
        episodes.push(ForkEpisode {
            start,
            end: None,
            blocks: sim.produced - at,
        });
    }
    if let Selector::Pos(_, ledger) = &sim.selector {
        sim.audit.extend(ledger.audit.iter().cloned());
    }
    if let Selector::Dpos(roster) = &sim.selector {
        if roster.shortfalls > 0 {
            sim.audit.push(format!("{} elections with fewer candidates than seats", roster.shortfalls));
        }
    }
    LotteryRun {
        node_tips: sim.nodes.iter().map(|(id, n)| (id.clone(), n.tree.main_tip())).collect(),
        observer: sim.observer,
        episodes,
        blocks_produced: sim.produced,
        slashed: sim.slashed,
        missed_slots: sim.missed,
        audit: sim.audit,
        log_digest: sim.net.log().digest(),
    }
}

/// Paired nothing-at-stake comparison: mean fork persistence with slashing
/// off and on for each seed.
pub fn nothing_at_stake_pairs(base: &LotteryConfig, seeds: impl IntoIterator<Item = u64>) -> Vec<(f64, f64)> {
    seeds
        .into_iter()
        .map(|seed| {
            let run = |slashing: bool| {
                let mut cfg = base.clone();
                cfg.seed = seed;
                if let LotteryMode::Pos(p) = &mut cfg.consensus {
                    p.slashing = slashing;
                }
                run_lottery(&cfg).mean_persistence()
            };
            (run(false), run(true))
        })
        .collect()
}

/// Four miners of unequal power retargeting towards a 10-tick interval.
pub fn pow_example(seed: u64) -> LotteryConfig {
    LotteryConfig {
        consensus: LotteryMode::Pow(PowParams {
            difficulty: 8,
            target_interval: 10,
            retarget_window: 32,
            clamp: 4,
        }),
        producers: [150u64, 120, 90, 50]
            .iter()
            .enumerate()
            .map(|(i, &power)| Producer {
                id: format!("miner{i}"),
                power,
                nothing_at_stake: false,
                votes: Vec::new(),
            })
            .collect(),
        link: LinkModel::default(),
        duration: 2000,
        seed,
        faults: Vec::new(),
        live_depth: 1,
    }
}

/// Six equal validators, half of which extend every live tip.
pub fn pos_example(seed: u64) -> LotteryConfig {
    LotteryConfig {
        consensus: LotteryMode::Pos(PosParams {
            selection: SelectionMode::RelativeValue,
            slashing: false,
            slot_ticks: 1,
            day_length: 1,
            fee: 0,
        }),
        producers: (0..6)
            .map(|i| Producer {
                id: format!("val{i}"),
                power: 100,
                nothing_at_stake: i % 2 == 0,
                votes: Vec::new(),
            })
            .collect(),
        link: LinkModel {
            base_latency: 1,
            jitter: 2,
        },
        duration: 300,
        seed,
        faults: Vec::new(),
        live_depth: 1,
    }
}
