//! Transactions, blocks, the hash chain and channel configuration.

mod config;
mod file;
mod store;

pub use config::{
    apply_config_update, AccessRules, ChannelConfig, ConfigChange, ConfigError, ConfigUpdate,
    ConsensusParams, BACKEND_CFT, BACKEND_SOLO,
};
pub use file::{read_ledger, write_ledger, BlockFileError, LedgerFiles, BLOCKS_FILE, INDEX_FILE};
pub use store::{verify_chain, BlockStore, ChainError, ChainFault, CommitReceipt, LedgerError};

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::codec;
use crate::crypto::{sha256_parts, Hash32, KeyPair};
use crate::endorsement::Endorsement;

/// A registered participant. Public keys are Ed25519 verification keys.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Identity {
    pub id: String,
    pub org: String,
    #[serde(with = "hex::serde")]
    pub public_key: Vec<u8>,
}

impl Identity {
    pub fn new(id: &str, org: &str, public_key: Vec<u8>) -> Self {
        Identity {
            id: id.to_string(),
            org: org.to_string(),
            public_key,
        }
    }

    /// Identity plus its signing key, derived deterministically from `seed`.
    pub fn generate(id: &str, org: &str, seed: u64) -> (Identity, KeyPair) {
        let kp = KeyPair::derive(id, seed);
        (Identity::new(id, org, kp.public_key()), kp)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub signer: String,
    #[serde(with = "hex::serde")]
    pub bytes: Vec<u8>,
}

impl Signature {
    pub fn verify(&self, identity: &Identity, message: &[u8]) -> bool {
        identity.id == self.signer && crate::crypto::verify(&identity.public_key, message, &self.bytes)
    }
}

/// Transaction id derivation: `H(client ∥ nonce)`.
pub fn derive_tx_id(client: &str, nonce: u64) -> Hash32 {
    sha256_parts(&[b"tx-id", client.as_bytes(), &nonce.to_be_bytes()])
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invocation {
    pub chaincode_id: String,
    pub operation: String,
    pub args: Vec<Vec<u8>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Invoke(Invocation),
    ConfigUpdate(ConfigUpdate),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub tx_id: Hash32,
    pub client: String,
    pub nonce: u64,
    pub payload: Payload,
    pub endorsements: Vec<Endorsement>,
}

impl Transaction {
    pub fn invoke(client: &str, nonce: u64, chaincode_id: &str, operation: &str, args: Vec<Vec<u8>>) -> Self {
        Transaction {
            tx_id: derive_tx_id(client, nonce),
            client: client.to_string(),
            nonce,
            payload: Payload::Invoke(Invocation {
                chaincode_id: chaincode_id.to_string(),
                operation: operation.to_string(),
                args,
            }),
            endorsements: Vec::new(),
        }
    }

    pub fn config_update(client: &str, nonce: u64, update: ConfigUpdate) -> Self {
        Transaction {
            tx_id: derive_tx_id(client, nonce),
            client: client.to_string(),
            nonce,
            payload: Payload::ConfigUpdate(update),
            endorsements: Vec::new(),
        }
    }

    pub fn invocation(&self) -> Option<&Invocation> {
        match &self.payload {
            Payload::Invoke(inv) => Some(inv),
            Payload::ConfigUpdate(_) => None,
        }
    }

    pub fn has_consistent_id(&self) -> bool {
        self.tx_id == derive_tx_id(&self.client, self.nonce)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InvalidReason {
    PolicyUnsatisfied,
    MvccConflict,
    BadSignature,
    Malformed,
    /// Order-execute pipeline only: the transaction failed during execution.
    ExecutionFailed,
}

impl InvalidReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            InvalidReason::PolicyUnsatisfied => "policy-unsatisfied",
            InvalidReason::MvccConflict => "mvcc-conflict",
            InvalidReason::BadSignature => "bad-signature",
            InvalidReason::Malformed => "malformed",
            InvalidReason::ExecutionFailed => "execution-failed",
        }
    }

    pub const ALL: [InvalidReason; 5] = [
        InvalidReason::PolicyUnsatisfied,
        InvalidReason::MvccConflict,
        InvalidReason::BadSignature,
        InvalidReason::Malformed,
        InvalidReason::ExecutionFailed,
    ];
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Validity {
    Pending,
    Valid,
    Invalid(InvalidReason),
}

impl Validity {
    pub fn is_valid(&self) -> bool {
        matches!(self, Validity::Valid)
    }
}

/// Config block contents: the full configuration and, except for genesis,
/// the signed update that produced it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigEnvelope {
    pub config: ChannelConfig,
    pub update: Option<ConfigUpdate>,
}

/// Validity flags written by committing peers. They sit outside the block
/// hash, so they carry their own digest bound to the block hash.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockMetadata {
    pub validity: Vec<Validity>,
    pub digest: Hash32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub seq: u64,
    pub prev_hash: Hash32,
    pub txs: Vec<Transaction>,
    pub config: Option<ConfigEnvelope>,
    pub block_hash: Hash32,
    pub metadata: BlockMetadata,
}

#[derive(Serialize)]
struct HashedContent<'a> {
    seq: u64,
    prev_hash: &'a Hash32,
    txs: &'a [Transaction],
    config: &'a Option<ConfigEnvelope>,
}

/// SHA-256 of the canonical encoding of header and body. Validity metadata
/// is excluded.
pub fn hash_block(block: &Block) -> Hash32 {
    codec::digest(&HashedContent {
        seq: block.seq,
        prev_hash: &block.prev_hash,
        txs: &block.txs,
        config: &block.config,
    })
}

fn metadata_digest(block_hash: &Hash32, validity: &[Validity]) -> Hash32 {
    codec::digest(&(block_hash, validity))
}

impl Block {
    /// A transaction block with all flags pending and the hash filled in.
    pub fn new(seq: u64, prev_hash: Hash32, txs: Vec<Transaction>) -> Self {
        let mut block = Block::empty(seq, prev_hash);
        block.metadata.validity = vec![Validity::Pending; txs.len()];
        block.txs = txs;
        block.seal();
        block
    }

    /// A config block: carries the configuration and no transactions.
    pub fn config(seq: u64, prev_hash: Hash32, envelope: ConfigEnvelope) -> Self {
        let mut block = Block::empty(seq, prev_hash);
        block.config = Some(envelope);
        block.seal();
        block
    }

    fn empty(seq: u64, prev_hash: Hash32) -> Block {
        Block {
            seq,
            prev_hash,
            txs: Vec::new(),
            config: None,
            block_hash: Hash32::ZERO,
            metadata: BlockMetadata::default(),
        }
    }

    /// Recomputes the block hash and the metadata digest.
    pub fn seal(&mut self) {
        self.block_hash = hash_block(self);
        self.metadata.digest = metadata_digest(&self.block_hash, &self.metadata.validity);
    }

    pub fn set_validity(&mut self, validity: Vec<Validity>) {
        assert_eq!(validity.len(), self.txs.len(), "one flag per transaction");
        self.metadata.validity = validity;
        self.metadata.digest = metadata_digest(&self.block_hash, &self.metadata.validity);
    }

    pub fn validity(&self, index: usize) -> Validity {
        self.metadata.validity.get(index).copied().unwrap_or(Validity::Pending)
    }

    pub fn is_config(&self) -> bool {
        self.config.is_some()
    }

    pub fn metadata_consistent(&self) -> bool {
        self.metadata.validity.len() == self.txs.len()
            && self.metadata.digest == metadata_digest(&self.block_hash, &self.metadata.validity)
    }

    /// Canonical byte form, as stored in block files.
    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Block, codec::CodecError> {
        codec::decode(bytes)
    }
}

/// Builds the genesis block: sequence 0, all-zero previous hash, config only.
pub fn build_genesis(config: ChannelConfig) -> Result<Block, ConfigError> {
    config.validate()?;
    Ok(Block::config(
        0,
        Hash32::ZERO,
        ConfigEnvelope { config, update: None },
    ))
}
