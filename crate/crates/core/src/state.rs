//! Versioned key-value state (the peer transaction manager).
//!
//! Every key has at most one live entry carrying the version of the
//! transaction that last wrote it. Deletes leave a tombstone with its own
//! version so read-set checks treat them exactly like writes. An append-only
//! history index keeps every write and delete per key.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;

use crate::codec;
use crate::crypto::{Hash32, sha256};

/// Position of the committing transaction: block sequence then index within the block.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Version {
    pub block: u64,
    pub tx: u64,
}

impl Version {
    pub const fn new(block: u64, tx: u64) -> Self {
        Version { block, tx }
    }
}

impl fmt::Debug for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.block, self.tx)
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.block, self.tx)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    pub key: Vec<u8>,
    pub value: Vec<u8>,
    pub version: Version,
    pub tombstone: bool,
}

/// Keys read during a simulation together with the committed version seen.
/// `None` is the nil version of a key that was never written.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadSet {
    pub entries: BTreeMap<Vec<u8>, Option<Version>>,
}

impl ReadSet {
    /// Records a read. The first observed version of a key is kept.
    pub fn record(&mut self, key: Vec<u8>, version: Option<Version>) {
        self.entries.entry(key).or_insert(version);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WriteOp {
    Put(Vec<u8>),
    Delete,
}

impl WriteOp {
    pub fn value(&self) -> Option<&[u8]> {
        match self {
            WriteOp::Put(v) => Some(v),
            WriteOp::Delete => None,
        }
    }
}

/// Ordered writes. A later write to a key replaces the earlier one in place.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteSet {
    pub entries: Vec<(Vec<u8>, WriteOp)>,
}

impl WriteSet {
    pub fn put(&mut self, key: Vec<u8>, value: Vec<u8>) {
        self.record(key, WriteOp::Put(value));
    }

    pub fn delete(&mut self, key: Vec<u8>) {
        self.record(key, WriteOp::Delete);
    }

    fn record(&mut self, key: Vec<u8>, op: WriteOp) {
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = op,
            None => self.entries.push((key, op)),
        }
    }

    pub fn get(&self, key: &[u8]) -> Option<&WriteOp> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, op)| op)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub key: Vec<u8>,
    pub version: Version,
    pub op: WriteOp,
    pub tx_id: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StateError {
    #[error("version regression on key {key:?}: current {current:?}, attempted {attempted:?}")]
    VersionRegression {
        key: Vec<u8>,
        current: Version,
        attempted: Version,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StateStore {
    live: BTreeMap<Vec<u8>, VersionedValue>,
    history: BTreeMap<Vec<u8>, Vec<HistoryEntry>>,
}

impl StateStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Live value of `key`; tombstoned keys read as absent.
    pub fn get_committed(&self, key: &[u8]) -> Option<&VersionedValue> {
        self.live.get(key).filter(|v| !v.tombstone)
    }

    /// Version of the key's latest write or delete, the value compared by MVCC checks.
    pub fn current_version(&self, key: &[u8]) -> Option<Version> {
        self.live.get(key).map(|v| v.version)
    }

    /// Applies every write at version `at`. Fails without touching the state if
    /// any touched key already carries a version at or above `at`.
    pub fn apply_writeset(&mut self, ws: &WriteSet, at: Version, tx_id: Hash32) -> Result<(), StateError> {
        for (key, _) in &ws.entries {
            if let Some(current) = self.current_version(key) {
                if current >= at {
                    return Err(StateError::VersionRegression {
                        key: key.clone(),
                        current,
                        attempted: at,
                    });
                }
            }
        }
        for (key, op) in &ws.entries {
            let entry = match op {
                WriteOp::Put(value) => VersionedValue {
                    key: key.clone(),
                    value: value.clone(),
                    version: at,
                    tombstone: false,
                },
                WriteOp::Delete => VersionedValue {
                    key: key.clone(),
                    value: Vec::new(),
                    version: at,
                    tombstone: true,
                },
            };
            self.live.insert(key.clone(), entry);
            self.history.entry(key.clone()).or_default().push(HistoryEntry {
                key: key.clone(),
                version: at,
                op: op.clone(),
                tx_id,
            });
        }
        Ok(())
    }

    pub fn get_history_for_key(&self, key: &[u8]) -> &[HistoryEntry] {
        self.history.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Live (non-tombstoned) entries in key order.
    pub fn iter_live(&self) -> impl Iterator<Item = &VersionedValue> {
        self.live.values().filter(|v| !v.tombstone)
    }

    pub fn live_len(&self) -> usize {
        self.iter_live().count()
    }

    /// Digest over every entry including tombstones and versions.
    pub fn state_hash(&self) -> Hash32 {
        codec::digest(&self.live)
    }

    /// Digest over live key/value pairs only, ignoring versions. Two ledgers
    /// that apply the same writes in different block positions agree here.
    pub fn value_digest(&self) -> Hash32 {
        let pairs: Vec<(&[u8], &[u8])> = self
            .iter_live()
            .map(|v| (v.key.as_slice(), v.value.as_slice()))
            .collect();
        sha256(&codec::encode(&pairs))
    }

    /// Text dump, one live key per line: `key<TAB>hex(value)<TAB>block.tx`.
    /// Non-printable key bytes are escaped.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for v in self.iter_live() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}",
                v.key.escape_ascii(),
                hex::encode(&v.value),
                v.version
            );
        }
        out
    }
}
