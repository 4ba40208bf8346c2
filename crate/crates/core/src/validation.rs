//! Validation and commit: endorsement-policy checks (run in parallel over a
//! block), sequential MVCC read checks, and atomic ledger and state commit.

use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::chaincode::{simulate_proposal, ChaincodeRegistry, Proposal, SimulationFailure, StepBudget};
use crate::crypto::{Hash32, KeyPair};
use crate::endorsement::{endorse, Endorsement, ProposalResponse};
use crate::ledger::{
    apply_config_update, Block, BlockStore, ChannelConfig, CommitReceipt, ConfigError, Identity, InvalidReason,
    LedgerError, Payload, Transaction, Validity,
};
use crate::state::{ReadSet, StateStore, Version, WriteSet};

pub const VERDICT_CSV_HEADER: &str = "block,txseq,txid,flag,reason";

/// Step ceiling standing in for "no budget" in the order-execute pipeline.
/// A transaction that reaches it is treated as never terminating.
pub const NON_TERMINATION_CEILING: u64 = 10_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationVerdict {
    pub block: u64,
    pub tx_seq: usize,
    pub tx_id: Hash32,
    pub flag: Validity,
}

impl ValidationVerdict {
    pub fn csv_line(&self) -> String {
        let (flag, reason) = match self.flag {
            Validity::Valid => ("valid", ""),
            Validity::Invalid(r) => ("invalid", r.as_str()),
            Validity::Pending => ("pending", ""),
        };
        format!("{},{},{},{},{}", self.block, self.tx_seq, self.tx_id.to_hex(), flag, reason)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("config block {seq} rejected: {source}")]
    ConfigRejected { seq: u64, source: ConfigError },
    #[error("block {seq}: expected {expected} verdicts, got {got}")]
    VerdictCount { seq: u64, expected: usize, got: usize },
    #[error("peer is halted")]
    Halted,
    #[error("transaction {tx} of block {seq} never terminated")]
    NonTermination { seq: u64, tx: usize },
}

/// The endorsements a transaction's write set is taken from: those whose
/// signatures verify against registered identities.
fn verified_endorsements<'a>(tx: &'a Transaction, config: &'a ChannelConfig) -> Vec<(&'a Endorsement, &'a Identity)> {
    tx.endorsements
        .iter()
        .filter_map(|e| {
            let identity = config.identity(&e.endorser)?;
            e.verify(identity).then_some((e, identity))
        })
        .collect()
}

/// Endorsement validation for one transaction against the channel config.
pub fn vscc_check(tx: &Transaction, config: &ChannelConfig) -> Result<(), InvalidReason> {
    if !tx.has_consistent_id() {
        return Err(InvalidReason::Malformed);
    }
    let invocation = match &tx.payload {
        Payload::Invoke(inv) => inv,
        // Authorized updates travel in config blocks; one inside a normal block is not applied.
        Payload::ConfigUpdate(update) => {
            return Err(match apply_config_update(config, update) {
                Ok(_) => InvalidReason::Malformed,
                Err(_) => InvalidReason::PolicyUnsatisfied,
            });
        }
    };
    if tx.endorsements.is_empty() {
        return Err(InvalidReason::Malformed);
    }
    if tx
        .endorsements
        .iter()
        .any(|e| e.tx_id != tx.tx_id || e.chaincode_id != invocation.chaincode_id)
    {
        return Err(InvalidReason::Malformed);
    }
    let verified = verified_endorsements(tx, config);
    let Some((first, _)) = verified.first() else {
        return Err(InvalidReason::BadSignature);
    };
    let digest = first.rwset_digest();
    if verified.iter().any(|(e, _)| e.rwset_digest() != digest) {
        return Err(InvalidReason::Malformed);
    }
    let policy = config
        .endorsement_policies
        .get(&invocation.chaincode_id)
        .ok_or(InvalidReason::PolicyUnsatisfied)?;
    let mut signers: Vec<&Identity> = Vec::with_capacity(verified.len());
    for (_, identity) in &verified {
        if !signers.iter().any(|s| s.id == identity.id) {
            signers.push(identity);
        }
    }
    if policy.evaluate(&signers) {
        Ok(())
    } else {
        Err(InvalidReason::PolicyUnsatisfied)
    }
}

/// Read and write sets of a transaction that passed [`vscc_check`].
pub fn endorsed_rwset<'a>(tx: &'a Transaction, config: &'a ChannelConfig) -> Option<(&'a ReadSet, &'a WriteSet)> {
    verified_endorsements(tx, config)
        .first()
        .map(|(e, _)| (&e.read_set, &e.write_set))
}

/// Versions written earlier in the block being validated.
pub type VersionOverlay = BTreeMap<Vec<u8>, Version>;

/// Every read version must equal the current one, counting writes by earlier
/// valid transactions of the same block.
pub fn mvcc_check(read_set: &ReadSet, state: &StateStore, overlay: &VersionOverlay) -> Result<(), InvalidReason> {
    for (key, seen) in &read_set.entries {
        let current = overlay.get(key).copied().or_else(|| state.current_version(key));
        if current != *seen {
            return Err(InvalidReason::MvccConflict);
        }
    }
    Ok(())
}

/// Computes the verdict vector for a transaction block.
pub fn validate_block(block: &Block, config: &ChannelConfig, state: &StateStore) -> Vec<Validity> {
    let vscc: Vec<Result<(), InvalidReason>> = block.txs.par_iter().map(|tx| vscc_check(tx, config)).collect();
    let mut overlay = VersionOverlay::new();
    let mut flags = Vec::with_capacity(block.txs.len());
    for (i, (tx, pass)) in block.txs.iter().zip(vscc).enumerate() {
        let flag = pass
            .and_then(|()| {
                let (reads, writes) = endorsed_rwset(tx, config).ok_or(InvalidReason::Malformed)?;
                mvcc_check(reads, state, &overlay)?;
                let at = Version::new(block.seq, i as u64);
                for (key, _) in &writes.entries {
                    overlay.insert(key.clone(), at);
                }
                Ok(())
            })
            .map_or_else(Validity::Invalid, |()| Validity::Valid);
        flags.push(flag);
    }
    flags
}

/// How the order-execute pipeline bounds each transaction.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecutionLimit {
    Budget(StepBudget),
    /// No budget. Reaching [`NON_TERMINATION_CEILING`] halts the peer.
    Unbounded,
}

/// A committing peer: ledger, world state, channel config and verdict log.
#[derive(Debug, Clone)]
pub struct Peer {
    pub id: String,
    config: ChannelConfig,
    state: StateStore,
    ledger: BlockStore,
    verdicts: Vec<ValidationVerdict>,
    halted: bool,
}

impl Peer {
    /// A peer bootstrapped from a genesis block.
    pub fn from_genesis(id: &str, genesis: Block) -> Result<Peer, ValidationError> {
        let config = genesis
            .config
            .as_ref()
            .map(|env| env.config.clone())
            .ok_or(ValidationError::ConfigRejected {
                seq: genesis.seq,
                source: ConfigError {
                    field: "config".into(),
                    reason: "genesis block carries no configuration".into(),
                },
            })?;
        let mut ledger = BlockStore::new();
        ledger.append_block(genesis)?;
        Ok(Peer {
            id: id.to_string(),
            config,
            state: StateStore::new(),
            ledger,
            verdicts: Vec::new(),
            halted: false,
        })
    }

    pub fn config(&self) -> &ChannelConfig {
        &self.config
    }

    pub fn state(&self) -> &StateStore {
        &self.state
    }

    pub fn ledger(&self) -> &BlockStore {
        &self.ledger
    }

    pub fn verdicts(&self) -> &[ValidationVerdict] {
        &self.verdicts
    }

    pub fn is_halted(&self) -> bool {
        self.halted
    }

    /// Blocks delivered so far, genesis included.
    pub fn height(&self) -> u64 {
        self.ledger.next_seq()
    }

    pub fn verdict_csv(&self) -> String {
        let mut out = String::from(VERDICT_CSV_HEADER);
        out.push('\n');
        for v in &self.verdicts {
            let _ = writeln!(out, "{}", v.csv_line());
        }
        out
    }

    /// Simulates and signs a proposal against this peer's committed state.
    pub fn endorse(
        &self,
        key: &KeyPair,
        registry: &ChaincodeRegistry,
        proposal: &Proposal,
        budget: StepBudget,
    ) -> ProposalResponse {
        let sim = simulate_proposal(&self.state, registry, &self.config, proposal, budget);
        endorse(&self.id, key, proposal, sim)
    }

    pub fn validate(&self, block: &Block) -> Vec<Validity> {
        validate_block(block, &self.config, &self.state)
    }

    /// Appends `block` with `verdicts` embedded and applies the write sets
    /// of valid transactions at `(block.seq, tx index)`. Nothing changes if
    /// any check fails.
    pub fn commit_block(&mut self, mut block: Block, verdicts: Vec<Validity>) -> Result<CommitReceipt, ValidationError> {
        if self.halted {
            return Err(ValidationError::Halted);
        }
        self.ledger.check_append(&block)?;
        if let Some(envelope) = &block.config {
            let next = match &envelope.update {
                Some(update) => apply_config_update(&self.config, update)
                    .map_err(|source| ValidationError::ConfigRejected { seq: block.seq, source })?,
                None => envelope.config.clone(),
            };
            if next != envelope.config {
                return Err(ValidationError::ConfigRejected {
                    seq: block.seq,
                    source: ConfigError {
                        field: "config".into(),
                        reason: "embedded config differs from the applied update".into(),
                    },
                });
            }
            let receipt = self.ledger.append_block(block)?;
            self.config = next;
            return Ok(receipt);
        }
        if verdicts.len() != block.txs.len() {
            return Err(ValidationError::VerdictCount {
                seq: block.seq,
                expected: block.txs.len(),
                got: verdicts.len(),
            });
        }
        let writes: Vec<(usize, WriteSet)> = block
            .txs
            .iter()
            .zip(&verdicts)
            .enumerate()
            .filter(|(_, (_, v))| v.is_valid())
            .map(|(i, (tx, _))| {
                let ws = endorsed_rwset(tx, &self.config).map(|(_, ws)| ws.clone()).unwrap_or_default();
                (i, ws)
            })
            .collect();
        self.apply_and_append(&mut block, verdicts, writes)
    }

    fn apply_and_append(
        &mut self,
        block: &mut Block,
        verdicts: Vec<Validity>,
        writes: Vec<(usize, WriteSet)>,
    ) -> Result<CommitReceipt, ValidationError> {
        // Every committed version is below (block.seq, 0), which check_append
        // guarantees is fresh, so the writes below cannot regress.
        let mut next_state = self.state.clone();
        for (i, ws) in &writes {
            next_state
                .apply_writeset(ws, Version::new(block.seq, *i as u64), block.txs[*i].tx_id)
                .expect("fresh block versions never regress");
        }
        block.set_validity(verdicts.clone());
        let receipt = self.ledger.append_block(block.clone())?;
        self.state = next_state;
        self.verdicts.extend(verdicts.into_iter().enumerate().map(|(tx_seq, flag)| ValidationVerdict {
            block: block.seq,
            tx_seq,
            tx_id: block.txs[tx_seq].tx_id,
            flag,
        }));
        Ok(receipt)
    }

    /// Validates then commits.
    pub fn process_block(&mut self, block: Block) -> Result<CommitReceipt, ValidationError> {
        let verdicts = if block.is_config() { Vec::new() } else { self.validate(&block) };
        self.commit_block(block, verdicts)
    }

    /// Order-execute pipeline: runs each ordered transaction in turn against
    /// the state left by its predecessors, then commits the block.
    ///
    /// With [`ExecutionLimit::Unbounded`] a transaction that does not
    /// terminate halts the peer and the block is never committed.
    pub fn execute_block(
        &mut self,
        block: Block,
        registry: &ChaincodeRegistry,
        limit: ExecutionLimit,
    ) -> Result<CommitReceipt, ValidationError> {
        if self.halted {
            return Err(ValidationError::Halted);
        }
        if block.is_config() {
            return self.commit_block(block, Vec::new());
        }
        self.ledger.check_append(&block)?;
        let budget = match limit {
            ExecutionLimit::Budget(b) => b,
            ExecutionLimit::Unbounded => StepBudget::new(NON_TERMINATION_CEILING).expect("positive"),
        };
        let mut working = self.state.clone();
        let mut verdicts = Vec::with_capacity(block.txs.len());
        for (i, tx) in block.txs.iter().enumerate() {
            let Some(proposal) = Proposal::from_transaction(tx) else {
                verdicts.push(Validity::Invalid(InvalidReason::Malformed));
                continue;
            };
            match simulate_proposal(&working, registry, &self.config, &proposal, budget) {
                Ok(sim) => {
                    working
                        .apply_writeset(&sim.write_set, Version::new(block.seq, i as u64), tx.tx_id)
                        .expect("fresh block versions never regress");
                    verdicts.push(Validity::Valid);
                }
                Err(SimulationFailure::BudgetExhausted { .. }) if limit == ExecutionLimit::Unbounded => {
                    self.halted = true;
                    return Err(ValidationError::NonTermination { seq: block.seq, tx: i });
                }
                Err(_) => verdicts.push(Validity::Invalid(InvalidReason::ExecutionFailed)),
            }
        }
        let mut block = block;
        block.set_validity(verdicts.clone());
        let receipt = self.ledger.append_block(block.clone())?;
        self.state = working;
        self.verdicts.extend(verdicts.into_iter().enumerate().map(|(tx_seq, flag)| ValidationVerdict {
            block: block.seq,
            tx_seq,
            tx_id: block.txs[tx_seq].tx_id,
            flag,
        }));
        Ok(receipt)
    }
}

/// Rebuilds world state by re-applying the write sets of every transaction
/// flagged valid, in ledger order.
pub fn replay_state(blocks: &[Block]) -> Result<StateStore, String> {
    let mut config: Option<ChannelConfig> = None;
    let mut state = StateStore::new();
    for block in blocks {
        if let Some(env) = &block.config {
            config = Some(env.config.clone());
            continue;
        }
        let cfg = config.as_ref().ok_or("transaction block before any config block")?;
        for (i, tx) in block.txs.iter().enumerate() {
            if !block.validity(i).is_valid() {
                continue;
            }
            let ws = match endorsed_rwset(tx, cfg) {
                Some((_, ws)) => ws.clone(),
                None => continue,
            };
            state
                .apply_writeset(&ws, Version::new(block.seq, i as u64), tx.tx_id)
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaincode::SimulationResult;
    use crate::endorsement::Policy;
    use crate::ledger::build_genesis;
    use proptest::prelude::*;

    pub(crate) struct Net {
        pub config: ChannelConfig,
        pub keys: Vec<(Identity, KeyPair)>,
    }

    pub(crate) fn net() -> Net {
        let keys: Vec<(Identity, KeyPair)> = (1..=3)
            .map(|i| Identity::generate(&format!("peer0.org{i}"), &format!("org{i}"), i))
            .collect();
        let mut b = ChannelConfig::builder("ch")
            .orderers(vec!["orderer0".into()])
            .modification_rules(Policy::org("org1"))
            .endorsement_policy("cc", "KOF(2,org1,org2,org3)".parse().unwrap());
        for (id, _) in &keys {
            b = b.identity(id.clone());
        }
        Net { config: b.build(), keys }
    }

    fn rw(reads: &[(&str, Option<Version>)], writes: &[(&str, &str)]) -> SimulationResult {
        let mut read_set = ReadSet::default();
        for (k, v) in reads {
            read_set.record(k.as_bytes().to_vec(), *v);
        }
        let mut write_set = WriteSet::default();
        for (k, v) in writes {
            write_set.put(k.as_bytes().to_vec(), v.as_bytes().to_vec());
        }
        SimulationResult {
            read_set,
            write_set,
            response: Vec::new(),
            steps_used: 1,
            events: Vec::new(),
        }
    }

    fn tx(net: &Net, nonce: u64, sim: &SimulationResult, signers: &[usize]) -> Transaction {
        let proposal = Proposal::new("client", nonce, "cc", "op", vec![]);
        let mut tx = proposal.to_transaction();
        for &s in signers {
            let (id, key) = &net.keys[s];
            let resp = endorse(&id.id, key, &proposal, Ok(sim.clone()));
            tx.endorsements.push(resp.endorsement().unwrap().clone());
        }
        tx
    }

    fn peer(net: &Net) -> Peer {
        Peer::from_genesis("p", build_genesis(net.config.clone()).unwrap()).unwrap()
    }

    fn block_on(p: &Peer, txs: Vec<Transaction>) -> Block {
        Block::new(p.ledger().next_seq(), p.ledger().last_hash(), txs)
    }

    #[test]
    fn vscc_two_of_three() {
        let n = net();
        let sim = rw(&[], &[("k", "v")]);
        assert_eq!(vscc_check(&tx(&n, 1, &sim, &[0, 2]), &n.config), Ok(()));
        assert_eq!(
            vscc_check(&tx(&n, 1, &sim, &[0]), &n.config),
            Err(InvalidReason::PolicyUnsatisfied)
        );
        // The same endorser twice counts once.
        assert_eq!(
            vscc_check(&tx(&n, 1, &sim, &[1, 1]), &n.config),
            Err(InvalidReason::PolicyUnsatisfied)
        );
    }

    #[test]
    fn forged_signature_is_excluded() {
        let n = net();
        let sim = rw(&[], &[("k", "v")]);
        let mut t = tx(&n, 1, &sim, &[0, 1, 2]);
        t.endorsements[2].signature.bytes[0] ^= 1;
        assert_eq!(vscc_check(&t, &n.config), Ok(()));
        t.endorsements[1].signature.bytes[0] ^= 1;
        assert_eq!(vscc_check(&t, &n.config), Err(InvalidReason::PolicyUnsatisfied));
        t.endorsements[0].signature.bytes[0] ^= 1;
        assert_eq!(vscc_check(&t, &n.config), Err(InvalidReason::BadSignature));
    }

    #[test]
    fn tampered_write_set_fails_verification() {
        let n = net();
        let mut t = tx(&n, 1, &rw(&[], &[("k", "v")]), &[0, 1]);
        t.endorsements[0].write_set.put(b"k".to_vec(), b"stolen".to_vec());
        assert_eq!(vscc_check(&t, &n.config), Err(InvalidReason::PolicyUnsatisfied));
    }

    #[test]
    fn malformed_envelopes() {
        let n = net();
        let sim = rw(&[], &[("k", "v")]);
        let mut t = tx(&n, 1, &sim, &[0, 1]);
        t.nonce = 2;
        assert_eq!(vscc_check(&t, &n.config), Err(InvalidReason::Malformed));
        let empty = tx(&n, 1, &sim, &[]);
        assert_eq!(vscc_check(&empty, &n.config), Err(InvalidReason::Malformed));
        // Validly signed but disagreeing read/write sets.
        let mut mixed = tx(&n, 1, &sim, &[0]);
        mixed
            .endorsements
            .extend(tx(&n, 1, &rw(&[], &[("k", "w")]), &[1]).endorsements);
        assert_eq!(vscc_check(&mixed, &n.config), Err(InvalidReason::Malformed));
    }

    #[test]
    fn mvcc_rules() {
        let mut state = StateStore::new();
        let mut ws = WriteSet::default();
        ws.put(b"k".to_vec(), b"v".to_vec());
        state.apply_writeset(&ws, Version::new(5, 2), Hash32::ZERO).unwrap();
        let overlay = VersionOverlay::new();
        let read = |k: &str, v| {
            let mut r = ReadSet::default();
            r.record(k.as_bytes().to_vec(), v);
            r
        };
        assert_eq!(mvcc_check(&read("k", Some(Version::new(5, 2))), &state, &overlay), Ok(()));
        assert_eq!(
            mvcc_check(&read("k", Some(Version::new(5, 1))), &state, &overlay),
            Err(InvalidReason::MvccConflict)
        );
        assert_eq!(mvcc_check(&read("absent", None), &state, &overlay), Ok(()));
        assert_eq!(
            mvcc_check(&read("k", None), &state, &overlay),
            Err(InvalidReason::MvccConflict)
        );
    }

    #[test]
    fn double_spend_in_one_block_first_wins() {
        let n = net();
        let mut p = peer(&n);
        let seed = tx(&n, 1, &rw(&[], &[("bal", "10")]), &[0, 1]);
        p.process_block(block_on(&p, vec![seed])).unwrap();
        let v = p.state().current_version(b"bal");
        let a = tx(&n, 2, &rw(&[("bal", v)], &[("bal", "0"), ("x", "10")]), &[0, 1]);
        let b = tx(&n, 3, &rw(&[("bal", v)], &[("bal", "0"), ("y", "10")]), &[1, 2]);
        p.process_block(block_on(&p, vec![a, b])).unwrap();
        let last = p.ledger().get(2).unwrap();
        assert_eq!(last.txs.len(), 2);
        assert_eq!(last.metadata.validity, vec![
            Validity::Valid,
            Validity::Invalid(InvalidReason::MvccConflict)
        ]);
        assert!(p.state().get_committed(b"x").is_some());
        assert!(p.state().get_committed(b"y").is_none());
    }

    #[test]
    fn blind_writes_carry_no_version_check() {
        let n = net();
        let mut p = peer(&n);
        let a = tx(&n, 1, &rw(&[], &[("k", "1")]), &[0, 1]);
        let b = tx(&n, 2, &rw(&[], &[("k", "2")]), &[0, 1]);
        p.process_block(block_on(&p, vec![a, b])).unwrap();
        assert_eq!(p.state().get_committed(b"k").unwrap().value, b"2");
        assert_eq!(p.state().current_version(b"k"), Some(Version::new(1, 1)));
    }

    #[test]
    fn commit_is_atomic_on_bad_block() {
        let n = net();
        let mut p = peer(&n);
        let before = p.state().state_hash();
        let mut b = block_on(&p, vec![tx(&n, 1, &rw(&[], &[("k", "1")]), &[0, 1])]);
        b.prev_hash = Hash32::ZERO;
        b.seal();
        assert!(p.process_block(b).is_err());
        assert_eq!(p.state().state_hash(), before);
        assert_eq!(p.height(), 1);
        let good = block_on(&p, vec![tx(&n, 1, &rw(&[], &[("k", "1")]), &[0, 1])]);
        let flags = p.validate(&good);
        assert!(matches!(
            p.commit_block(good, flags[..0].to_vec()),
            Err(ValidationError::VerdictCount { .. })
        ));
        assert_eq!(p.state().state_hash(), before);
    }

    #[test]
    fn verdict_csv_and_replay() {
        let n = net();
        let mut p = peer(&n);
        let a = tx(&n, 1, &rw(&[], &[("k", "1")]), &[0, 1]);
        let bad = tx(&n, 2, &rw(&[], &[("j", "1")]), &[0]);
        p.process_block(block_on(&p, vec![a, bad])).unwrap();
        let csv = p.verdict_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], VERDICT_CSV_HEADER);
        assert!(lines[1].starts_with("1,0,") && lines[1].ends_with(",valid,"));
        assert!(lines[2].ends_with(",invalid,policy-unsatisfied"));
        let replayed = replay_state(p.ledger().blocks()).unwrap();
        assert_eq!(replayed, *p.state());
    }

    #[test]
    fn identical_blocks_identical_verdicts() {
        let n = net();
        let mut p1 = peer(&n);
        let mut p2 = peer(&n);
        let txs: Vec<Transaction> = (0..6)
            .map(|i| tx(&n, i, &rw(&[("k", None)], &[("k", "x")]), &[0, (i % 2 + 1) as usize]))
            .collect();
        let b = block_on(&p1, txs);
        p1.process_block(b.clone()).unwrap();
        p2.process_block(b).unwrap();
        assert_eq!(p1.ledger().blocks(), p2.ledger().blocks());
        assert_eq!(p1.verdict_csv(), p2.verdict_csv());
    }

    /// Independent serial oracle: a plain map of key → (value, version).
    fn serial_oracle(
        pre: &BTreeMap<Vec<u8>, (Vec<u8>, Version)>,
        seq: u64,
        txs: &[(SimulationResult, bool)],
    ) -> BTreeMap<Vec<u8>, (Vec<u8>, Version)> {
        let mut m = pre.clone();
        for (i, (sim, endorsed)) in txs.iter().enumerate() {
            if !endorsed {
                continue;
            }
            let ok = sim
                .read_set
                .entries
                .iter()
                .all(|(k, v)| m.get(k).map(|(_, ver)| *ver) == *v);
            if ok {
                for (k, op) in &sim.write_set.entries {
                    m.insert(k.clone(), (op.value().unwrap().to_vec(), Version::new(seq, i as u64)));
                }
            }
        }
        m
    }

    fn as_map(state: &StateStore) -> BTreeMap<Vec<u8>, (Vec<u8>, Version)> {
        state.iter_live().map(|v| (v.key.clone(), (v.value.clone(), v.version))).collect()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn commit_matches_serial_execution(
            blocks in proptest::collection::vec(
                proptest::collection::vec((
                    proptest::collection::vec((0u8..5, any::<bool>()), 0..3),
                    proptest::collection::vec((0u8..5, 0u8..9), 0..3),
                    any::<bool>(),
                ), 0..20),
                1..4,
            )
        ) {
            let n = net();
            let mut p = peer(&n);
            let mut nonce = 0;
            for raw in blocks {
                let pre = as_map(p.state());
                let mut sims = Vec::new();
                let mut txs = Vec::new();
                for (reads, writes, endorsed) in raw {
                    let mut r = ReadSet::default();
                    for (k, stale) in reads {
                        let key = vec![b'k', k];
                        let cur = p.state().current_version(&key);
                        let v = if stale { Some(Version::new(99, 0)) } else { cur };
                        r.record(key, v);
                    }
                    let mut w = WriteSet::default();
                    for (k, v) in writes {
                        w.put(vec![b'k', k], vec![v]);
                    }
                    let sim = SimulationResult { read_set: r, write_set: w, response: vec![], steps_used: 1, events: vec![] };
                    nonce += 1;
                    let signers: &[usize] = if endorsed { &[0, 1] } else { &[2] };
                    txs.push(tx(&n, nonce, &sim, signers));
                    sims.push((sim, endorsed));
                }
                let seq = p.ledger().next_seq();
                p.process_block(block_on(&p, txs)).unwrap();
                prop_assert_eq!(as_map(p.state()), serial_oracle(&pre, seq, &sims));
            }
        }
    }
}
