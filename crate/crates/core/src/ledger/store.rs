use std::fmt;

use super::{hash_block, Block};
use crate::crypto::Hash32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommitReceipt {
    pub seq: u64,
    pub block_hash: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("sequence gap: expected block {expected}, got {got}")]
    Gap { expected: u64, got: u64 },
    #[error("block {seq} does not link to the previous block hash")]
    HashMismatch { seq: u64 },
    #[error("block {seq} carries a hash that does not match its contents")]
    CorruptBlock { seq: u64 },
    #[error("config block {seq} contains ordinary transactions")]
    ConfigWithTransactions { seq: u64 },
}

/// In-memory, append-only block store for one channel.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BlockStore {
    blocks: Vec<Block>,
}

impl BlockStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sequence number of the last block, `None` for an empty store.
    pub fn height(&self) -> Option<u64> {
        self.blocks.last().map(|b| b.seq)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn next_seq(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn last_hash(&self) -> Hash32 {
        self.blocks.last().map(|b| b.block_hash).unwrap_or(Hash32::ZERO)
    }

    pub fn get(&self, seq: u64) -> Option<&Block> {
        self.blocks.get(usize::try_from(seq).ok()?)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Checks what [`append_block`](Self::append_block) would check, without appending.
    pub fn check_append(&self, block: &Block) -> Result<(), LedgerError> {
        let expected = self.next_seq();
        if block.seq != expected {
            return Err(LedgerError::Gap { expected, got: block.seq });
        }
        if block.prev_hash != self.last_hash() {
            return Err(LedgerError::HashMismatch { seq: block.seq });
        }
        if hash_block(block) != block.block_hash {
            return Err(LedgerError::CorruptBlock { seq: block.seq });
        }
        if block.is_config() && !block.txs.is_empty() {
            return Err(LedgerError::ConfigWithTransactions { seq: block.seq });
        }
        Ok(())
    }

    pub fn append_block(&mut self, block: Block) -> Result<CommitReceipt, LedgerError> {
        self.check_append(&block)?;
        let receipt = CommitReceipt {
            seq: block.seq,
            block_hash: block.block_hash,
        };
        self.blocks.push(block);
        Ok(receipt)
    }

    pub fn verify(&self) -> Result<(), ChainError> {
        verify_chain(&self.blocks)
    }
}

impl From<Vec<Block>> for BlockStore {
    /// Wraps blocks without checking them; call [`BlockStore::verify`] afterwards.
    fn from(blocks: Vec<Block>) -> Self {
        BlockStore { blocks }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainFault {
    SeqGap { expected: u64, got: u64 },
    BadHash,
    BrokenLink,
    BadGenesisLink,
    BadMetadata,
    ConfigWithTransactions,
    Undecodable,
}

/// The first block (by position) at which verification failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub struct ChainError {
    pub index: usize,
    pub fault: ChainFault,
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "chain verification failed at block {}: {:?}", self.index, self.fault)
    }
}

/// Re-hashes every block, checks contiguous sequence numbers from 0, the
/// previous-hash links and the validity metadata digests.
pub fn verify_chain(blocks: &[Block]) -> Result<(), ChainError> {
    let mut prev = Hash32::ZERO;
    for (index, block) in blocks.iter().enumerate() {
        let fail = |fault| Err(ChainError { index, fault });
        if block.seq != index as u64 {
            return fail(ChainFault::SeqGap { expected: index as u64, got: block.seq });
        }
        if hash_block(block) != block.block_hash {
            return fail(ChainFault::BadHash);
        }
        if block.prev_hash != prev {
            return fail(if index == 0 { ChainFault::BadGenesisLink } else { ChainFault::BrokenLink });
        }
        if !block.metadata_consistent() {
            return fail(ChainFault::BadMetadata);
        }
        if block.is_config() && !block.txs.is_empty() {
            return fail(ChainFault::ConfigWithTransactions);
        }
        prev = block.block_hash;
    }
    Ok(())
}
