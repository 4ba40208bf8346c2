use std::collections::BTreeMap;

use ledgersim::chaincode::{namespaced_key, simulate_proposal, ChaincodeError, Proposal, SimulationFailure, SimulationResult, StepBudget};
use ledgersim::endorsement::Policy;
use ledgersim::harness::standard_registry;
use ledgersim::ledger::ChannelConfig;
use ledgersim::state::{StateStore, Version};

struct World {
    config: ChannelConfig,
    state: StateStore,
    nonces: BTreeMap<String, u64>,
    height: u64,
}

impl World {
    fn new(grants: &[(&str, &str)]) -> Self {
        let mut b = ChannelConfig::builder("ch")
            .orderers(vec!["orderer0".into()])
            .modification_rules(Policy::org("org1"));
        for (caller, callee) in grants {
            b = b.grant_invoke(caller, callee);
        }
        World {
            config: b.build(),
            state: StateStore::new(),
            nonces: BTreeMap::new(),
            height: 0,
        }
    }

    fn simulate(&mut self, client: &str, cc: &str, op: &str, args: &[&str]) -> Result<SimulationResult, SimulationFailure> {
        let nonce = self.nonces.entry(client.to_string()).or_default();
        *nonce += 1;
        let args = args.iter().map(|a| a.as_bytes().to_vec()).collect();
        let proposal = Proposal::new(client, *nonce, cc, op, args);
        simulate_proposal(&self.state, &standard_registry(), &self.config, &proposal, StepBudget::new(100_000).unwrap())
    }

    fn commit(&mut self, client: &str, cc: &str, op: &str, args: &[&str]) -> SimulationResult {
        let sim = self.simulate(client, cc, op, args).unwrap_or_else(|e| panic!("{cc}.{op}: {e}"));
        self.height += 1;
        self.state
            .apply_writeset(&sim.write_set, Version::new(self.height, 0), ledgersim::crypto::Hash32::ZERO)
            .unwrap();
        sim
    }

    fn query(&mut self, cc: &str, op: &str, args: &[&str]) -> String {
        String::from_utf8(self.simulate("viewer", cc, op, args).unwrap().response).unwrap()
    }
}

fn in_namespace(key: &[u8], cc: &str) -> bool {
    key.starts_with(&namespaced_key(cc, b""))
}

fn leased() -> World {
    let mut w = World::new(&[("rental", "token")]);
    w.commit("bank", "token", "init", &["100"]);
    w.commit("bank", "token", "transfer", &["tenant", "50"]);
    w.commit("tenant", "token", "approve", &["cc:rental", "50"]);
    w.commit("landlord", "rental", "create", &["l1", "house", "5", "1", "12", "0", "oracle", "0"]);
    w
}

#[test]
fn rental_call_spans_both_namespaces() {
    let mut w = leased();
    let sim = w.commit("tenant", "rental", "beginLease", &["l1", "1"]);
    let keys: Vec<&Vec<u8>> = sim.write_set.entries.iter().map(|(k, _)| k).collect();
    assert!(keys.iter().any(|k| in_namespace(k, "rental")));
    assert!(keys.iter().any(|k| in_namespace(k, "token")));
    assert!(keys.iter().all(|k| in_namespace(k, "rental") || in_namespace(k, "token")));
    assert!(sim.read_set.entries.keys().any(|k| in_namespace(k, "token")));
    assert_eq!(w.query("token", "balanceOf", &["tenant"]), "49");
    assert_eq!(w.query("token", "balanceOf", &["landlord"]), "1");
    assert_eq!(w.query("rental", "getStatus", &["l1"]), "Active");
}

#[test]
fn rejected_rental_call_writes_nothing() {
    let mut w = leased();
    let before = w.state.dump();
    assert!(w.simulate("tenant", "rental", "beginLease", &["l1", "2"]).is_err());
    assert!(w.simulate("landlord", "rental", "beginLease", &["l1", "1"]).is_err());
    assert!(w.simulate("tenant", "rental", "payRent", &["l1", "5"]).is_err());
    assert_eq!(w.state.dump(), before);
}

#[test]
fn cross_chaincode_calls_need_a_grant() {
    let mut w = World::new(&[]);
    w.commit("landlord", "rental", "create", &["l1", "house", "5", "1", "12", "0", "oracle", "0"]);
    let err = w.simulate("tenant", "rental", "beginLease", &["l1", "1"]).unwrap_err();
    assert!(
        matches!(&err, SimulationFailure::Chaincode(ChaincodeError::Unauthorized { caller, callee }) if caller == "rental" && callee == "token"),
        "{err:?}"
    );
}

#[test]
fn erc777_send_consults_the_registry() {
    let mut w = World::new(&[("token777", "registry")]);
    w.commit("admin", "token777", "init", &["100"]);
    w.commit("admin", "token777", "declareAccount", &["vault", "true", "false"]);
    assert!(w.simulate("admin", "token777", "send", &["vault", "10"]).is_err());
    w.commit("vault", "registry", "register", &["vault", "tokensReceived", "vault"]);
    w.commit("admin", "token777", "send", &["vault", "10"]);
    assert_eq!(w.query("token777", "balanceOf", &["vault"]), "10");
    assert_eq!(w.query("token777", "lostBalanceOf", &["vault"]), "0");
}
