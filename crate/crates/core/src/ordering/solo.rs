//! Single sequencer: one node cuts every block.

use super::{broadcast, cut_block, BlockAssembler, BroadcastError, BroadcastOutcome, PendingPool};
use crate::ledger::{Block, Transaction};

#[derive(Debug, Clone)]
pub struct SoloOrderer {
    pool: PendingPool,
    assembler: BlockAssembler,
    chain: Vec<Block>,
}

impl SoloOrderer {
    /// Panics if `genesis` is not a config block.
    pub fn new(genesis: Block) -> Self {
        let assembler = BlockAssembler::after(&genesis).expect("genesis carries a config");
        SoloOrderer {
            pool: PendingPool::new(),
            assembler,
            chain: vec![genesis],
        }
    }

    pub fn broadcast(&mut self, tx: Transaction, now: u64) -> Result<BroadcastOutcome, BroadcastError> {
        broadcast(&self.assembler.config, &mut self.pool, tx, now)
    }

    /// Cuts every batch that is due at `now` and returns the new blocks.
    pub fn tick(&mut self, now: u64) -> Vec<Block> {
        let mut out = Vec::new();
        loop {
            let params = &self.assembler.config.consensus;
            let (max, timeout) = (params.batch_max_txs, params.batch_timeout);
            let Some(batch) = cut_block(&mut self.pool, max, timeout, now, self.assembler.next_seq) else {
                break;
            };
            out.extend(self.assembler.assemble(batch.txs));
        }
        self.chain.extend(out.iter().cloned());
        out
    }

    /// Block `s`, or `None` while it does not exist yet.
    pub fn deliver(&self, s: u64) -> Option<&Block> {
        self.chain.get(usize::try_from(s).ok()?)
    }

    pub fn height(&self) -> u64 {
        self.chain.len() as u64
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn pending(&self) -> usize {
        self.pool.len()
    }
}
