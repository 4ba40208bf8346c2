//! On-disk block files.
//!
//! `blocks.dat` is a sequence of records `[u32 big-endian length ∥ canonical
//! block bytes]`. `index.dat` holds one 16-byte entry per block:
//! `[u64 seq ∥ u64 byte offset of the record]`, both big-endian.

use std::fs;
use std::io;
use std::path::Path;

use super::{verify_chain, Block, ChainError, ChainFault};

pub const BLOCKS_FILE: &str = "blocks.dat";
pub const INDEX_FILE: &str = "index.dat";

#[derive(Debug, thiserror::Error)]
pub enum BlockFileError {
    #[error("{0}")]
    Io(#[from] io::Error),
    #[error("record {record} is truncated")]
    Truncated { record: usize },
    #[error("record {record} does not decode as a block")]
    Undecodable { record: usize },
    #[error("index entry {entry} does not match the block file")]
    IndexMismatch { entry: usize },
    #[error(transparent)]
    Chain(#[from] ChainError),
}

impl BlockFileError {
    /// Position of the offending block, when the failure is tied to one.
    pub fn block_index(&self) -> Option<usize> {
        match self {
            BlockFileError::Truncated { record } | BlockFileError::Undecodable { record } => Some(*record),
            BlockFileError::IndexMismatch { entry } => Some(*entry),
            BlockFileError::Chain(e) => Some(e.index),
            BlockFileError::Io(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerFiles {
    pub blocks: Vec<u8>,
    pub index: Vec<u8>,
}

impl LedgerFiles {
    pub fn encode(blocks: &[Block]) -> LedgerFiles {
        let mut data = Vec::new();
        let mut index = Vec::with_capacity(blocks.len() * 16);
        for block in blocks {
            index.extend_from_slice(&block.seq.to_be_bytes());
            index.extend_from_slice(&(data.len() as u64).to_be_bytes());
            let bytes = block.to_bytes();
            let len = u32::try_from(bytes.len()).expect("block larger than 4 GiB");
            data.extend_from_slice(&len.to_be_bytes());
            data.extend_from_slice(&bytes);
        }
        LedgerFiles { blocks: data, index }
    }

    /// Decodes every record. Fails at the first record that cannot be framed
    /// or decoded.
    pub fn decode_blocks(&self) -> Result<Vec<Block>, BlockFileError> {
        let mut out = Vec::new();
        let mut pos = 0usize;
        let data = &self.blocks;
        while pos < data.len() {
            let record = out.len();
            let Some(len_bytes) = data.get(pos..pos + 4) else {
                return Err(BlockFileError::Truncated { record });
            };
            let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
            let Some(body) = data.get(pos + 4..pos + 4 + len) else {
                return Err(BlockFileError::Truncated { record });
            };
            let block = Block::from_bytes(body).map_err(|_| BlockFileError::Undecodable { record })?;
            // Non-canonical bytes (e.g. upper-case hex) decode fine but must still be caught.
            if block.to_bytes() != body {
                return Err(BlockFileError::Undecodable { record });
            }
            out.push(block);
            pos += 4 + len;
        }
        Ok(out)
    }

    /// Decodes, checks the chain, then cross-checks the index.
    pub fn verify(&self) -> Result<Vec<Block>, BlockFileError> {
        let blocks = self.decode_blocks().map_err(|e| match e {
            BlockFileError::Undecodable { record } | BlockFileError::Truncated { record } => {
                BlockFileError::Chain(ChainError {
                    index: record,
                    fault: ChainFault::Undecodable,
                })
            }
            other => other,
        })?;
        verify_chain(&blocks)?;
        let expected = LedgerFiles::encode(&blocks).index;
        if expected != self.index {
            let entry = expected
                .chunks(16)
                .zip(self.index.chunks(16))
                .position(|(a, b)| a != b)
                .unwrap_or(expected.len().min(self.index.len()) / 16);
            return Err(BlockFileError::IndexMismatch { entry });
        }
        Ok(blocks)
    }
}

pub fn write_ledger(dir: &Path, blocks: &[Block]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let files = LedgerFiles::encode(blocks);
    fs::write(dir.join(BLOCKS_FILE), files.blocks)?;
    fs::write(dir.join(INDEX_FILE), files.index)?;
    Ok(())
}

pub fn read_ledger(dir: &Path) -> Result<LedgerFiles, BlockFileError> {
    Ok(LedgerFiles {
        blocks: fs::read(dir.join(BLOCKS_FILE))?,
        index: fs::read(dir.join(INDEX_FILE))?,
    })
}
