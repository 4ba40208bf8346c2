//! Total-order broadcast for one channel.
//!
//! Clients `broadcast` transactions into a backend's pending pool; the
//! backend cuts batches into hash-chained blocks which peers `deliver` by
//! sequence number. The service never validates or executes transactions,
//! with one exception: an authorized configuration update is turned into a
//! config block of its own.

pub mod cft;
pub mod solo;

use std::collections::{BTreeSet, VecDeque};

use crate::crypto::Hash32;
use crate::ledger::{apply_config_update, Block, ChannelConfig, ConfigEnvelope, Payload, Transaction};

pub use cft::{
    audit_cluster, safety_trial, CftCluster, CftConfig, CftMessage, CftNode, CftRole, LogEntry, SafetyReport, TrialParams,
};
pub use solo::SoloOrderer;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BroadcastOutcome {
    Accepted,
    /// The tx-id was seen before; the transaction is ignored.
    Duplicate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BroadcastError {
    #[error("client {0} may not broadcast on this channel")]
    AccessDenied(String),
}

/// A cut batch before it is framed as a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrderedBatch {
    pub seq: u64,
    pub txs: Vec<Transaction>,
}

/// Transactions awaiting ordering, in arrival order, deduplicated by tx-id
/// over the pool's lifetime.
#[derive(Debug, Clone, Default)]
pub struct PendingPool {
    queue: VecDeque<(Transaction, u64)>,
    seen: BTreeSet<Hash32>,
}

impl PendingPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    /// Arrival tick of the oldest queued transaction.
    pub fn oldest_arrival(&self) -> Option<u64> {
        self.queue.front().map(|(_, at)| *at)
    }

    pub fn contains(&self, tx_id: &Hash32) -> bool {
        self.queue.iter().any(|(t, _)| t.tx_id == *tx_id)
    }

    pub fn insert(&mut self, tx: Transaction, now: u64) -> BroadcastOutcome {
        if !self.seen.insert(tx.tx_id) {
            return BroadcastOutcome::Duplicate;
        }
        self.queue.push_back((tx, now));
        BroadcastOutcome::Accepted
    }

    /// Drops queued transactions that were ordered elsewhere.
    pub fn remove_ordered<'a>(&mut self, ids: impl IntoIterator<Item = &'a Hash32>) {
        let ids: BTreeSet<&Hash32> = ids.into_iter().collect();
        for id in &ids {
            self.seen.insert(**id);
        }
        self.queue.retain(|(t, _)| !ids.contains(&t.tx_id));
    }

    /// Puts back a transaction whose ordering was undone, ignoring the
    /// duplicate filter.
    pub fn requeue(&mut self, tx: Transaction, now: u64) {
        if !self.contains(&tx.tx_id) {
            self.seen.insert(tx.tx_id);
            self.queue.push_back((tx, now));
        }
    }

    fn take(&mut self, n: usize) -> Vec<Transaction> {
        let n = n.min(self.queue.len());
        self.queue.drain(..n).map(|(t, _)| t).collect()
    }

    /// Transactions still queued, oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.queue.iter().map(|(t, _)| t)
    }
}

/// Access check plus idempotent insertion.
pub fn broadcast(
    config: &ChannelConfig,
    pool: &mut PendingPool,
    tx: Transaction,
    now: u64,
) -> Result<BroadcastOutcome, BroadcastError> {
    if !config.may_broadcast(&tx.client) {
        return Err(BroadcastError::AccessDenied(tx.client.clone()));
    }
    Ok(pool.insert(tx, now))
}

/// Cuts one batch when the pool holds at least `batch_max` transactions or
/// the oldest one has waited `batch_timeout` ticks. Never cuts an empty batch.
pub fn cut_block(
    pool: &mut PendingPool,
    batch_max: usize,
    batch_timeout: u64,
    now: u64,
    next_seq: u64,
) -> Option<OrderedBatch> {
    let at = pool.oldest_arrival()?;
    let full = pool.len() >= batch_max.max(1);
    if !full && now.saturating_sub(at) < batch_timeout {
        return None;
    }
    Some(OrderedBatch {
        seq: next_seq,
        txs: pool.take(batch_max.max(1)),
    })
}

/// Frames batches as blocks on top of a chain tip, tracking the channel
/// configuration as config updates are ordered.
#[derive(Debug, Clone)]
pub struct BlockAssembler {
    pub config: ChannelConfig,
    pub next_seq: u64,
    pub last_hash: Hash32,
}

impl BlockAssembler {
    pub fn new(config: ChannelConfig, next_seq: u64, last_hash: Hash32) -> Self {
        BlockAssembler {
            config,
            next_seq,
            last_hash,
        }
    }

    /// Starts after a genesis (or any config) block.
    pub fn after(block: &Block) -> Option<Self> {
        let config = block.config.as_ref()?.config.clone();
        Some(BlockAssembler::new(config, block.seq + 1, block.block_hash))
    }

    /// Tracks a block produced elsewhere (e.g. replicated from a leader).
    pub fn observe(&mut self, block: &Block) {
        if let Some(env) = &block.config {
            self.config = env.config.clone();
        }
        self.next_seq = block.seq + 1;
        self.last_hash = block.block_hash;
    }

    fn push(&mut self, block: Block, out: &mut Vec<Block>) {
        self.observe(&block);
        out.push(block);
    }

    /// Turns an ordered batch into one or more blocks. Authorized config
    /// updates split the batch and become config blocks; unauthorized ones
    /// stay in the transaction block to be flagged invalid by validation.
    pub fn assemble(&mut self, txs: Vec<Transaction>) -> Vec<Block> {
        let mut out = Vec::new();
        let mut current = Vec::new();
        for tx in txs {
            let next = match &tx.payload {
                Payload::ConfigUpdate(update) => apply_config_update(&self.config, update).ok(),
                Payload::Invoke(_) => None,
            };
            match (next, &tx.payload) {
                (Some(config), Payload::ConfigUpdate(update)) => {
                    if !current.is_empty() {
                        let b = Block::new(self.next_seq, self.last_hash, std::mem::take(&mut current));
                        self.push(b, &mut out);
                    }
                    let b = Block::config(
                        self.next_seq,
                        self.last_hash,
                        ConfigEnvelope {
                            config,
                            update: Some(update.clone()),
                        },
                    );
                    self.push(b, &mut out);
                }
                _ => current.push(tx),
            }
        }
        if !current.is_empty() {
            let b = Block::new(self.next_seq, self.last_hash, current);
            self.push(b, &mut out);
        }
        out
    }
}
