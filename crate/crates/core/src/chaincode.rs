//! Deterministic, step-budgeted chaincode simulation.
//!
//! Chaincodes are native handlers registered by name. A simulation runs a
//! proposal against a peer's committed state and records a read set and a
//! write set; nothing is written to the committed state.
//!
//! Reads inside a simulation always observe *committed* state: a `get` after
//! a `put` of the same key in the same simulation returns the committed
//! value, not the pending write. This keeps every read-set entry a
//! `(key, committed version)` pair, which is exactly what validation checks.
//!
//! Keys live in per-chaincode namespaces, stored as
//! `chaincode-id ∥ 0x00 ∥ user-key`. A key that already contains `0x00` is
//! treated as fully qualified and must name the calling chaincode's own
//! namespace.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::crypto::Hash32;
use crate::ledger::{derive_tx_id, ChannelConfig, Transaction};
use crate::state::{HistoryEntry, ReadSet, StateStore, WriteSet};

pub const DEFAULT_MAX_CALL_DEPTH: usize = 8;
const NAMESPACE_SEPARATOR: u8 = 0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub client: String,
    pub chaincode_id: String,
    pub operation: String,
    pub args: Vec<Vec<u8>>,
    pub nonce: u64,
    pub tx_id: Hash32,
}

impl Proposal {
    pub fn new(client: &str, nonce: u64, chaincode_id: &str, operation: &str, args: Vec<Vec<u8>>) -> Self {
        Proposal {
            client: client.to_string(),
            chaincode_id: chaincode_id.to_string(),
            operation: operation.to_string(),
            args,
            nonce,
            tx_id: derive_tx_id(client, nonce),
        }
    }

    pub fn from_transaction(tx: &Transaction) -> Option<Self> {
        let inv = tx.invocation()?;
        Some(Proposal {
            client: tx.client.clone(),
            chaincode_id: inv.chaincode_id.clone(),
            operation: inv.operation.clone(),
            args: inv.args.clone(),
            nonce: tx.nonce,
            tx_id: tx.tx_id,
        })
    }

    /// Unendorsed transaction envelope for this proposal.
    pub fn to_transaction(&self) -> Transaction {
        let mut tx = Transaction::invoke(&self.client, self.nonce, &self.chaincode_id, &self.operation, self.args.clone());
        tx.tx_id = self.tx_id;
        tx
    }
}

/// Maximum number of state-API calls plus interpreter steps a simulation may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepBudget {
    max_steps: u64,
}

impl StepBudget {
    pub fn new(max_steps: u64) -> Option<Self> {
        (max_steps > 0).then_some(StepBudget { max_steps })
    }

    pub fn max_steps(&self) -> u64 {
        self.max_steps
    }
}

/// An event emitted by a chaincode during simulation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChaincodeEvent {
    pub chaincode_id: String,
    pub name: String,
    pub payload: Vec<u8>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationResult {
    pub read_set: ReadSet,
    pub write_set: WriteSet,
    pub response: Vec<u8>,
    pub steps_used: u64,
    #[serde(default)]
    pub events: Vec<ChaincodeEvent>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChaincodeError {
    #[error("step budget exhausted")]
    BudgetExhausted,
    #[error("chaincode {chaincode} may not access key {key:?} outside its namespace")]
    Namespace { chaincode: String, key: String },
    #[error("chaincode {caller} is not authorized to invoke {callee}")]
    Unauthorized { caller: String, callee: String },
    #[error("cross-chaincode call depth exceeds {0}")]
    RecursionLimit(usize),
    #[error("unknown chaincode {0}")]
    UnknownChaincode(String),
    #[error("unknown operation {0}")]
    UnknownOperation(String),
    #[error("{0}")]
    Runtime(String),
}

impl ChaincodeError {
    pub fn runtime(msg: impl fmt::Display) -> Self {
        ChaincodeError::Runtime(msg.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimulationFailure {
    #[error("chaincode {0} is not registered")]
    UnknownChaincode(String),
    #[error("transaction id does not match client and nonce")]
    InvalidTxId,
    #[error("step budget of {max_steps} exhausted")]
    BudgetExhausted { max_steps: u64 },
    #[error("chaincode error: {0}")]
    Chaincode(ChaincodeError),
}

pub trait Chaincode: Send + Sync {
    fn invoke(&self, ctx: &mut SimContext<'_>, operation: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError>;
}

#[derive(Clone)]
pub struct ChaincodeRegistry {
    chaincodes: BTreeMap<String, Arc<dyn Chaincode>>,
    max_call_depth: usize,
}

impl Default for ChaincodeRegistry {
    fn default() -> Self {
        ChaincodeRegistry {
            chaincodes: BTreeMap::new(),
            max_call_depth: DEFAULT_MAX_CALL_DEPTH,
        }
    }
}

impl fmt::Debug for ChaincodeRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChaincodeRegistry")
            .field("chaincodes", &self.chaincodes.keys().collect::<Vec<_>>())
            .field("max_call_depth", &self.max_call_depth)
            .finish()
    }
}

impl ChaincodeRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_max_call_depth(mut self, depth: usize) -> Self {
        self.max_call_depth = depth;
        self
    }

    pub fn register(&mut self, id: &str, chaincode: impl Chaincode + 'static) {
        self.chaincodes.insert(id.to_string(), Arc::new(chaincode));
    }

    pub fn contains(&self, id: &str) -> bool {
        self.chaincodes.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.chaincodes.keys().map(String::as_str)
    }

    fn get(&self, id: &str) -> Option<Arc<dyn Chaincode>> {
        self.chaincodes.get(id).cloned()
    }
}

/// Qualified storage key for `chaincode`'s user key.
pub fn namespaced_key(chaincode: &str, key: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(chaincode.len() + 1 + key.len());
    out.extend_from_slice(chaincode.as_bytes());
    out.push(NAMESPACE_SEPARATOR);
    out.extend_from_slice(key);
    out
}

/// Execution context handed to chaincodes.
pub struct SimContext<'a> {
    state: &'a StateStore,
    registry: &'a ChaincodeRegistry,
    config: &'a ChannelConfig,
    client: String,
    tx_id: Hash32,
    call_stack: Vec<String>,
    read_set: ReadSet,
    write_set: WriteSet,
    events: Vec<ChaincodeEvent>,
    steps_used: u64,
    max_steps: u64,
}

impl<'a> SimContext<'a> {
    pub fn client(&self) -> &str {
        &self.client
    }

    pub fn tx_id(&self) -> Hash32 {
        self.tx_id
    }

    /// Chaincode currently executing.
    pub fn chaincode_id(&self) -> &str {
        self.call_stack.last().expect("context always has a running chaincode")
    }

    /// The immediate caller: the client at top level, `cc:<id>` when invoked
    /// by another chaincode.
    pub fn caller(&self) -> String {
        match self.call_stack.len() {
            0 | 1 => self.client.clone(),
            n => format!("cc:{}", self.call_stack[n - 2]),
        }
    }

    pub fn depth(&self) -> usize {
        self.call_stack.len() - 1
    }

    pub fn steps_used(&self) -> u64 {
        self.steps_used
    }

    /// Charges `n` steps. Fails without charging when the budget would be exceeded.
    pub fn charge(&mut self, n: u64) -> Result<(), ChaincodeError> {
        let next = self.steps_used.saturating_add(n);
        if next > self.max_steps {
            return Err(ChaincodeError::BudgetExhausted);
        }
        self.steps_used = next;
        Ok(())
    }

    /// One interpreter step, for chaincodes that loop.
    pub fn step(&mut self) -> Result<(), ChaincodeError> {
        self.charge(1)
    }

    fn qualify(&self, key: &[u8]) -> Result<Vec<u8>, ChaincodeError> {
        let ns = self.chaincode_id();
        match key.iter().position(|&b| b == NAMESPACE_SEPARATOR) {
            None => Ok(namespaced_key(ns, key)),
            Some(i) if &key[..i] == ns.as_bytes() => Ok(key.to_vec()),
            Some(_) => Err(ChaincodeError::Namespace {
                chaincode: ns.to_string(),
                key: key.escape_ascii().to_string(),
            }),
        }
    }

    /// Committed value of `key`, recording `(key, committed version)` in the read set.
    pub fn get_state(&mut self, key: &[u8]) -> Result<Option<Vec<u8>>, ChaincodeError> {
        self.charge(1)?;
        let full = self.qualify(key)?;
        let version = self.state.current_version(&full);
        let value = self.state.get_committed(&full).map(|v| v.value.clone());
        self.read_set.record(full, version);
        Ok(value)
    }

    pub fn put_state(&mut self, key: &[u8], value: Vec<u8>) -> Result<(), ChaincodeError> {
        self.charge(1)?;
        let full = self.qualify(key)?;
        self.write_set.put(full, value);
        Ok(())
    }

    pub fn del_state(&mut self, key: &[u8]) -> Result<(), ChaincodeError> {
        self.charge(1)?;
        let full = self.qualify(key)?;
        self.write_set.delete(full);
        Ok(())
    }

    pub fn get_history_for_key(&mut self, key: &[u8]) -> Result<Vec<HistoryEntry>, ChaincodeError> {
        self.charge(1)?;
        let full = self.qualify(key)?;
        Ok(self.state.get_history_for_key(&full).to_vec())
    }

    pub fn emit(&mut self, name: &str, payload: Vec<u8>) {
        let chaincode_id = self.chaincode_id().to_string();
        self.events.push(ChaincodeEvent {
            chaincode_id,
            name: name.to_string(),
            payload,
        });
    }

    /// Runs `callee` inside this simulation, sharing the budget. Its reads and
    /// writes land in the same sets under the callee's namespace.
    pub fn invoke_chaincode(&mut self, callee: &str, operation: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        self.charge(1)?;
        let caller = self.chaincode_id().to_string();
        if !self.config.may_invoke(&caller, callee) {
            return Err(ChaincodeError::Unauthorized {
                caller,
                callee: callee.to_string(),
            });
        }
        if self.depth() >= self.registry.max_call_depth {
            return Err(ChaincodeError::RecursionLimit(self.registry.max_call_depth));
        }
        let chaincode = self
            .registry
            .get(callee)
            .ok_or_else(|| ChaincodeError::UnknownChaincode(callee.to_string()))?;
        self.call_stack.push(callee.to_string());
        let result = chaincode.invoke(self, operation, args);
        self.call_stack.pop();
        result
    }
}

/// Simulates `proposal` against `state`. The committed state is only read.
pub fn simulate_proposal(
    state: &StateStore,
    registry: &ChaincodeRegistry,
    config: &ChannelConfig,
    proposal: &Proposal,
    budget: StepBudget,
) -> Result<SimulationResult, SimulationFailure> {
    if proposal.tx_id != derive_tx_id(&proposal.client, proposal.nonce) {
        return Err(SimulationFailure::InvalidTxId);
    }
    let chaincode = registry
        .get(&proposal.chaincode_id)
        .ok_or_else(|| SimulationFailure::UnknownChaincode(proposal.chaincode_id.clone()))?;
    let mut ctx = SimContext {
        state,
        registry,
        config,
        client: proposal.client.clone(),
        tx_id: proposal.tx_id,
        call_stack: vec![proposal.chaincode_id.clone()],
        read_set: ReadSet::default(),
        write_set: WriteSet::default(),
        events: Vec::new(),
        steps_used: 0,
        max_steps: budget.max_steps(),
    };
    match chaincode.invoke(&mut ctx, &proposal.operation, &proposal.args) {
        Ok(response) => Ok(SimulationResult {
            read_set: ctx.read_set,
            write_set: ctx.write_set,
            response,
            steps_used: ctx.steps_used,
            events: ctx.events,
        }),
        Err(ChaincodeError::BudgetExhausted) => Err(SimulationFailure::BudgetExhausted {
            max_steps: budget.max_steps(),
        }),
        Err(e) => Err(SimulationFailure::Chaincode(e)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contracts::testing::{KvChaincode, LoopChaincode, RecursiveChaincode};
    use crate::state::{Version, WriteOp};

    fn config() -> ChannelConfig {
        ChannelConfig::builder("ch")
            .orderers(vec!["o".into()])
            .modification_rules("org1".parse().unwrap())
            .grant_invoke("caller", "kv")
            .build()
    }

    fn registry() -> ChaincodeRegistry {
        let mut r = ChaincodeRegistry::new();
        r.register("kv", KvChaincode);
        r.register("other", KvChaincode);
        r.register("caller", KvChaincode);
        r.register("loop", LoopChaincode);
        r.register("recurse", RecursiveChaincode);
        r
    }

    fn budget(n: u64) -> StepBudget {
        StepBudget::new(n).unwrap()
    }

    fn sim(state: &StateStore, cc: &str, op: &str, args: &[&[u8]]) -> Result<SimulationResult, SimulationFailure> {
        let p = Proposal::new("alice", 1, cc, op, args.iter().map(|a| a.to_vec()).collect());
        simulate_proposal(state, &registry(), &config(), &p, budget(1000))
    }

    fn committed(pairs: &[(&str, &str, &[u8])]) -> StateStore {
        let mut s = StateStore::new();
        for (i, (cc, k, v)) in pairs.iter().enumerate() {
            let mut ws = WriteSet::default();
            ws.put(namespaced_key(cc, k.as_bytes()), v.to_vec());
            s.apply_writeset(&ws, Version::new(1, i as u64), Hash32::ZERO).unwrap();
        }
        s
    }

    #[test]
    fn zero_budget_is_rejected() {
        assert!(StepBudget::new(0).is_none());
    }

    #[test]
    fn get_of_unwritten_key_records_nil_version() {
        let s = StateStore::new();
        let r = sim(&s, "kv", "get", &[b"k"]).unwrap();
        assert_eq!(r.read_set.entries.get(&namespaced_key("kv", b"k")), Some(&None));
        assert!(r.response.is_empty());
    }

    #[test]
    fn get_after_put_sees_committed_value() {
        let s = committed(&[("kv", "k", b"old")]);
        // put k=new, then get k: the response is the committed "old".
        let r = sim(&s, "kv", "put_then_get", &[b"k", b"new"]).unwrap();
        assert_eq!(r.response, b"old");
        assert_eq!(r.read_set.entries.get(&namespaced_key("kv", b"k")), Some(&Some(Version::new(1, 0))));
        assert_eq!(r.write_set.get(&namespaced_key("kv", b"k")), Some(&WriteOp::Put(b"new".to_vec())));
    }

    #[test]
    fn cross_namespace_access_is_rejected() {
        let s = committed(&[("other", "secret", b"x")]);
        let err = sim(&s, "kv", "get", &[b"other\0secret"]).unwrap_err();
        assert!(matches!(err, SimulationFailure::Chaincode(ChaincodeError::Namespace { .. })));
        // A qualified key in the chaincode's own namespace is fine.
        assert!(sim(&s, "kv", "get", &[b"kv\0secret"]).is_ok());
    }

    #[test]
    fn simulation_does_not_touch_committed_state() {
        let s = committed(&[("kv", "a", b"1")]);
        let before = s.state_hash();
        for _ in 0..10 {
            sim(&s, "kv", "put", &[b"a", b"2"]).unwrap();
        }
        assert_eq!(s.state_hash(), before);
    }

    #[test]
    fn repeated_simulations_are_identical() {
        let s = committed(&[("kv", "a", b"1"), ("kv", "b", b"2")]);
        let first = sim(&s, "kv", "swap", &[b"a", b"b"]).unwrap();
        for _ in 0..100 {
            assert_eq!(sim(&s, "kv", "swap", &[b"a", b"b"]).unwrap(), first);
        }
    }

    #[test]
    fn infinite_loop_exhausts_budget() {
        let s = StateStore::new();
        let p = Proposal::new("alice", 1, "loop", "spin", vec![]);
        let err = simulate_proposal(&s, &registry(), &config(), &p, budget(100_000)).unwrap_err();
        assert_eq!(err, SimulationFailure::BudgetExhausted { max_steps: 100_000 });
        // The same runtime keeps serving.
        assert!(sim(&s, "kv", "get", &[b"k"]).is_ok());
    }

    #[test]
    fn steps_never_exceed_budget() {
        let s = committed(&[("kv", "a", b"1")]);
        for n in 1..6 {
            let p = Proposal::new("alice", 1, "kv", "swap", vec![b"a".to_vec(), b"b".to_vec()]);
            match simulate_proposal(&s, &registry(), &config(), &p, budget(n)) {
                Ok(r) => assert!(r.steps_used <= n),
                Err(e) => assert_eq!(e, SimulationFailure::BudgetExhausted { max_steps: n }),
            }
        }
    }

    #[test]
    fn authorized_cross_call_merges_namespaces() {
        let s = committed(&[("kv", "x", b"1")]);
        let p = Proposal::new("alice", 1, "caller", "call", vec![b"kv".to_vec(), b"put".to_vec(), b"x".to_vec(), b"9".to_vec()]);
        let r = simulate_proposal(&s, &registry(), &config(), &p, budget(100)).unwrap();
        assert!(r.write_set.get(&namespaced_key("kv", b"x")).is_some());
        let p = Proposal::new("alice", 1, "kv", "call", vec![b"other".to_vec(), b"get".to_vec(), b"x".to_vec()]);
        let err = simulate_proposal(&s, &registry(), &config(), &p, budget(100)).unwrap_err();
        assert!(matches!(err, SimulationFailure::Chaincode(ChaincodeError::Unauthorized { .. })));
    }

    #[test]
    fn recursion_is_capped_at_eight() {
        let s = StateStore::new();
        for depth in [0u64, 1, 8] {
            let p = Proposal::new("alice", 1, "recurse", "down", vec![depth.to_string().into_bytes()]);
            let r = simulate_proposal(&s, &registry(), &config(), &p, budget(1000)).unwrap();
            assert_eq!(r.response, depth.to_string().into_bytes());
        }
        let p = Proposal::new("alice", 1, "recurse", "down", vec![b"9".to_vec()]);
        let err = simulate_proposal(&s, &registry(), &config(), &p, budget(1000)).unwrap_err();
        assert_eq!(err, SimulationFailure::Chaincode(ChaincodeError::RecursionLimit(8)));
    }

    #[test]
    fn mismatched_tx_id_is_refused() {
        let mut p = Proposal::new("alice", 1, "kv", "get", vec![b"k".to_vec()]);
        p.nonce = 2;
        let err = simulate_proposal(&StateStore::new(), &registry(), &config(), &p, budget(10)).unwrap_err();
        assert_eq!(err, SimulationFailure::InvalidTxId);
    }
}
