//! Permissionless block production over a fork tree.
//!
//! Producers are chosen by proof of work, stake lottery, delegated witness
//! schedule or importance lottery. Every produced block lands in a
//! [`ForkTree`]; the main chain is the tip with the greatest cumulative
//! weight, ties going to the lowest block hash. Losing branches stay in the
//! tree.

pub mod dpos;
pub mod poi;
pub mod pos;
pub mod pow;
pub mod sim;

use serde::{Deserialize, Serialize};
use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

use crate::codec;
use crate::crypto::Hash32;
use crate::netsim::Tick;

pub use dpos::{Candidate, DposError, WitnessRoster};
pub use poi::{importance_score, ImportanceParams, ImportanceScore, Transfer};
pub use pos::{select_validator_pos, DoubleSignEvidence, SelectionMode, SignedHeader, StakeLedger, Validator};
pub use pow::{pow_attempt, pow_hash, retarget_difficulty, PowParams};
pub use sim::{pos_example, pow_example, run_lottery, LotteryConfig, LotteryMode, LotteryRun, Producer};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ChainBlock {
    pub height: u64,
    pub parent: Hash32,
    pub producer: String,
    pub timestamp: Tick,
    /// Leading zero bits required of the hash; 0 outside proof of work.
    pub difficulty: u32,
    pub nonce: u64,
}

impl ChainBlock {
    pub fn genesis(difficulty: u32) -> Self {
        ChainBlock {
            height: 0,
            parent: Hash32::ZERO,
            producer: "genesis".into(),
            timestamp: 0,
            difficulty,
            nonce: 0,
        }
    }

    /// Everything hashed except the nonce.
    pub fn header_bytes(&self) -> Vec<u8> {
        codec::encode(&(self.height, &self.parent, &self.producer, self.timestamp, self.difficulty))
    }

    pub fn hash(&self) -> Hash32 {
        pow::pow_hash(&self.header_bytes(), self.nonce)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForkWeight {
    /// Each block weighs 2^difficulty.
    TotalDifficulty,
    /// Each block is one vote.
    BlockCount,
}

impl ForkWeight {
    fn of(self, block: &ChainBlock) -> u128 {
        match self {
            ForkWeight::TotalDifficulty => 1u128 << block.difficulty.min(127),
            ForkWeight::BlockCount => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ForkError {
    #[error("block {0} already in the tree")]
    Duplicate(Hash32),
    #[error("parent {0} unknown")]
    UnknownParent(Hash32),
    #[error("height {got} does not follow parent height {parent}")]
    BadHeight { parent: u64, got: u64 },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeNode {
    pub block: ChainBlock,
    pub hash: Hash32,
    pub cumulative: u128,
    pub children: Vec<Hash32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ForkTree {
    nodes: BTreeMap<Hash32, TreeNode>,
    tips: BTreeSet<Hash32>,
    genesis: Hash32,
    main_tip: Hash32,
    weight: ForkWeight,
}

impl ForkTree {
    pub fn new(genesis: ChainBlock, weight: ForkWeight) -> Self {
        let hash = genesis.hash();
        let node = TreeNode {
            cumulative: weight.of(&genesis),
            block: genesis,
            hash,
            children: Vec::new(),
        };
        ForkTree {
            nodes: BTreeMap::from([(hash, node)]),
            tips: BTreeSet::from([hash]),
            genesis: hash,
            main_tip: hash,
            weight,
        }
    }

    pub fn insert(&mut self, block: ChainBlock) -> Result<Hash32, ForkError> {
        let hash = block.hash();
        if self.nodes.contains_key(&hash) {
            return Err(ForkError::Duplicate(hash));
        }
        let parent = self.nodes.get_mut(&block.parent).ok_or(ForkError::UnknownParent(block.parent))?;
        if block.height != parent.block.height + 1 {
            return Err(ForkError::BadHeight {
                parent: parent.block.height,
                got: block.height,
            });
        }
        parent.children.push(hash);
        let cumulative = parent.cumulative + self.weight.of(&block);
        self.tips.remove(&block.parent);
        self.tips.insert(hash);
        self.nodes.insert(
            hash,
            TreeNode {
                block,
                hash,
                cumulative,
                children: Vec::new(),
            },
        );
        self.main_tip = self.fork_choice();
        Ok(hash)
    }

    /// Greatest cumulative weight, then lowest hash.
    pub fn fork_choice(&self) -> Hash32 {
        *self
            .tips
            .iter()
            .max_by_key(|h| (self.nodes[*h].cumulative, Reverse(**h)))
            .expect("tree is never empty")
    }

    pub fn main_tip(&self) -> Hash32 {
        self.main_tip
    }

    pub fn genesis(&self) -> Hash32 {
        self.genesis
    }

    pub fn get(&self, hash: &Hash32) -> Option<&TreeNode> {
        self.nodes.get(hash)
    }

    pub fn contains(&self, hash: &Hash32) -> bool {
        self.nodes.contains_key(hash)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn tips(&self) -> &BTreeSet<Hash32> {
        &self.tips
    }

    pub fn height(&self) -> u64 {
        self.nodes[&self.main_tip].block.height
    }

    /// Tips no more than `depth` blocks below the best height.
    pub fn live_tips(&self, depth: u64) -> Vec<Hash32> {
        let best = self.tips.iter().map(|h| self.nodes[h].block.height).max().unwrap_or(0);
        self.tips
            .iter()
            .filter(|h| self.nodes[*h].block.height + depth >= best)
            .copied()
            .collect()
    }

    /// Hashes from `from` back to genesis.
    pub fn ancestry(&self, from: Hash32) -> impl Iterator<Item = &TreeNode> {
        let mut cursor = self.nodes.get(&from);
        std::iter::from_fn(move || {
            let node = cursor?;
            cursor = self.nodes.get(&node.block.parent);
            Some(node)
        })
    }

    /// Genesis to main tip.
    pub fn main_chain(&self) -> Vec<&ChainBlock> {
        let mut chain: Vec<&ChainBlock> = self.ancestry(self.main_tip).map(|n| &n.block).collect();
        chain.reverse();
        chain
    }

    pub fn on_main_chain(&self, hash: &Hash32) -> bool {
        let Some(node) = self.nodes.get(hash) else {
            return false;
        };
        self.ancestry(self.main_tip)
            .find(|n| n.block.height == node.block.height)
            .is_some_and(|n| n.hash == *hash)
    }

    /// Blocks off the main chain.
    pub fn discarded(&self) -> Vec<Hash32> {
        let main: BTreeSet<Hash32> = self.ancestry(self.main_tip).map(|n| n.hash).collect();
        self.nodes.keys().filter(|h| !main.contains(h)).copied().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn child(parent: &ChainBlock, producer: &str, difficulty: u32) -> ChainBlock {
        ChainBlock {
            height: parent.height + 1,
            parent: parent.hash(),
            producer: producer.into(),
            timestamp: parent.timestamp + 1,
            difficulty,
            nonce: 0,
        }
    }

    fn extend(tree: &mut ForkTree, from: &ChainBlock, producer: &str, n: usize, difficulty: u32) -> ChainBlock {
        let mut b = from.clone();
        for _ in 0..n {
            b = child(&b, producer, difficulty);
            tree.insert(b.clone()).unwrap();
        }
        b
    }

    #[test]
    fn single_chain_tip() {
        let g = ChainBlock::genesis(0);
        let mut t = ForkTree::new(g.clone(), ForkWeight::BlockCount);
        let tip = extend(&mut t, &g, "a", 4, 0);
        assert_eq!(t.fork_choice(), tip.hash());
        assert_eq!(t.main_chain().len(), 5);
        assert!(t.discarded().is_empty());
    }

    #[test]
    fn heavier_branch_wins_and_loser_is_kept() {
        let g = ChainBlock::genesis(0);
        let mut t = ForkTree::new(g.clone(), ForkWeight::BlockCount);
        let long = extend(&mut t, &g, "a", 5, 0);
        let short = extend(&mut t, &g, "b", 3, 0);
        assert_eq!(t.main_tip(), long.hash());
        assert_eq!(t.discarded().len(), 3);
        assert!(t.contains(&short.hash()));
        assert!(!t.on_main_chain(&short.hash()));
    }

    #[test]
    fn total_difficulty_beats_length() {
        let g = ChainBlock::genesis(1);
        let mut t = ForkTree::new(g.clone(), ForkWeight::TotalDifficulty);
        let light = extend(&mut t, &g, "a", 3, 1);
        let heavy = extend(&mut t, &g, "b", 1, 4);
        assert_eq!(t.main_tip(), heavy.hash());
        assert!(t.contains(&light.hash()));
    }

    #[test]
    fn equal_weight_lowest_hash_idempotent() {
        let g = ChainBlock::genesis(0);
        let mut t = ForkTree::new(g.clone(), ForkWeight::BlockCount);
        let a = extend(&mut t, &g, "a", 2, 0);
        let b = extend(&mut t, &g, "b", 2, 0);
        let expect = a.hash().min(b.hash());
        assert_eq!(t.fork_choice(), expect);
        assert_eq!(t.fork_choice(), t.fork_choice());
        let mut again = ForkTree::new(g.clone(), ForkWeight::BlockCount);
        for blk in [&b, &a] {
            let chain: Vec<ChainBlock> = t.ancestry(blk.hash()).map(|n| n.block.clone()).collect();
            for c in chain.into_iter().rev().skip(1) {
                let _ = again.insert(c);
            }
        }
        assert_eq!(again.main_tip(), expect, "insertion order does not matter");
    }

    #[test]
    fn rejects_orphans_and_bad_heights() {
        let g = ChainBlock::genesis(0);
        let mut t = ForkTree::new(g.clone(), ForkWeight::BlockCount);
        let c = child(&g, "a", 0);
        let gc = child(&c, "a", 0);
        assert!(matches!(t.insert(gc), Err(ForkError::UnknownParent(_))));
        let mut bad = c.clone();
        bad.height = 5;
        assert!(matches!(t.insert(bad), Err(ForkError::BadHeight { .. })));
        t.insert(c.clone()).unwrap();
        assert!(matches!(t.insert(c), Err(ForkError::Duplicate(_))));
    }
}
