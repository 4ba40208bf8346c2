//! Ready-made scenarios for the standard experiments.

use super::config::{
    ChannelSpec, ClientSpec, ConsensusSpec, OrgSpec, Pipeline, Roster, ScenarioConfig, WorkloadItem,
    DEFAULT_BLACKLIST_THRESHOLD,
};
use crate::lottery::pow_example;
use crate::netsim::{ByzantineStrategy, FaultKind, FaultSpec, LinkModel, Tick};

fn roster(orgs: &[&str], clients: &[(&str, &str)]) -> Roster {
    Roster {
        orgs: orgs
            .iter()
            .map(|o| OrgSpec {
                name: o.to_string(),
                peers: 1,
            })
            .collect(),
        clients: clients
            .iter()
            .map(|(id, org)| ClientSpec {
                id: id.to_string(),
                org: org.to_string(),
            })
            .collect(),
        orderers: 1,
    }
}

fn base(name: &str, seed: u64, duration: Tick, roster: Roster) -> ScenarioConfig {
    ScenarioConfig {
        name: name.into(),
        seed,
        duration,
        pipeline: Pipeline::ExecuteOrderValidate,
        channel: ChannelSpec::default(),
        roster,
        consensus: ConsensusSpec::Solo,
        workload: Vec::new(),
        faults: Vec::new(),
        execution_budget: None,
        blacklist_threshold: DEFAULT_BLACKLIST_THRESHOLD,
        metrics_window: 50,
        gossip_fanout: 3,
        link: LinkModel::default(),
    }
}

fn invoke(at: Tick, client: &str, cc: &str, op: &str, args: &[&str]) -> WorkloadItem {
    WorkloadItem::Invoke {
        at,
        client: client.into(),
        chaincode: cc.into(),
        operation: op.into(),
        args: args.iter().map(|a| a.to_string()).collect(),
    }
}

fn periodic(client: &str, cc: &str, op: &str, args: &[&str], every: Tick, from: Tick) -> WorkloadItem {
    WorkloadItem::Periodic {
        client: client.into(),
        chaincode: cc.into(),
        operation: op.into(),
        args: args.iter().map(|a| a.to_string()).collect(),
        every,
        from,
        until: None,
    }
}

const THREE_ORGS: [&str; 3] = ["org1", "org2", "org3"];
const THREE_CLIENTS: [(&str, &str); 3] = [("alice", "org1"), ("bob", "org2"), ("carol", "org3")];

/// Token transfers spaced so that no two touch the same account before the
/// first commits, plus independent key-value writes.
pub fn token_happy_path(seed: u64) -> ScenarioConfig {
    let mut cfg = base("token-happy-path", seed, 200, roster(&THREE_ORGS, &THREE_CLIENTS));
    cfg.workload = vec![
        invoke(0, "alice", "token", "init", &["1000"]),
        periodic("alice", "token", "transfer", &["bob", "5"], 20, 10),
        periodic("bob", "token", "transfer", &["carol", "1"], 20, 20),
        periodic("carol", "kv", "put", &["k{n}", "{client}-{n}"], 3, 1),
    ];
    cfg
}

/// Two spenders approved for the same balance redeem it in the same tick.
pub fn double_spend(seed: u64) -> ScenarioConfig {
    let mut cfg = base("double-spend", seed, 40, roster(&THREE_ORGS, &THREE_CLIENTS));
    cfg.workload = vec![
        invoke(0, "alice", "token", "init", &["100"]),
        invoke(10, "alice", "token", "approve", &["bob", "100"]),
        invoke(10, "alice", "token", "approve", &["carol", "100"]),
        invoke(20, "bob", "token", "transferFrom", &["alice", "bob", "100"]),
        invoke(20, "carol", "token", "transferFrom", &["alice", "carol", "100"]),
    ];
    cfg
}

/// A client floods the channel with 50 unendorsed transactions.
pub fn dos_blacklist(seed: u64) -> ScenarioConfig {
    let mut cfg = base(
        "dos-blacklist",
        seed,
        60,
        roster(&["org1", "org2"], &[("alice", "org1"), ("mallory", "org2")]),
    );
    cfg.workload = vec![periodic("alice", "kv", "put", &["a{n}", "{n}"], 5, 0)];
    cfg.faults = vec![FaultSpec {
        target: "mallory".into(),
        kind: FaultKind::DosClient { rate: 5 },
        from_tick: 0,
        until_tick: Some(10),
    }];
    cfg
}

/// Steady key-value writes with a non-terminating invocation at tick 100.
pub fn loop_contrast(seed: u64, pipeline: Pipeline, budget: Option<u64>) -> ScenarioConfig {
    let mut cfg = base(&format!("loop-{}", pipeline.as_str()), seed, 200, roster(&["org1", "org2"], &[("alice", "org1"), ("bob", "org2")]));
    cfg.pipeline = pipeline;
    cfg.execution_budget = budget;
    cfg.workload = vec![
        periodic("alice", "kv", "put", &["k{n}", "v{n}"], 2, 0),
        invoke(100, "bob", "loop", "spin", &[]),
    ];
    cfg
}

impl ScenarioConfig {
    /// The same scenario with every `loop` invocation removed.
    pub fn without_loop(mut self) -> Self {
        self.workload.retain(|w| !matches!(w, WorkloadItem::Invoke { chaincode, .. } if chaincode == "loop"));
        self
    }
}

/// Three replicated orderers, one of which crashes mid-run and recovers.
pub fn cft_crash(seed: u64) -> ScenarioConfig {
    let mut cfg = token_happy_path(seed);
    cfg.name = "cft-crash".into();
    cfg.consensus = ConsensusSpec::Cft;
    cfg.roster.orderers = 3;
    cfg.faults = vec![FaultSpec {
        target: "orderer0".into(),
        kind: FaultKind::Crash,
        from_tick: 60,
        until_tick: Some(120),
    }];
    cfg
}

/// One of three endorsers forges write sets for the whole run.
pub fn byzantine_endorser(seed: u64) -> ScenarioConfig {
    let mut cfg = token_happy_path(seed);
    cfg.name = "byzantine-endorser".into();
    cfg.faults = vec![FaultSpec {
        target: "peer0.org3".into(),
        kind: FaultKind::ByzantineEndorser {
            strategy: ByzantineStrategy::ForgeWriteset,
        },
        from_tick: 0,
        until_tick: None,
    }];
    cfg
}

/// Proof-of-work chain with four miners of unequal power.
pub fn lottery_pow(seed: u64) -> ScenarioConfig {
    let mut cfg = base("lottery-pow", seed, 2000, Roster::default());
    cfg.metrics_window = 200;
    let mut l = pow_example(0);
    l.duration = 0;
    cfg.consensus = ConsensusSpec::Lottery(l);
    cfg
}
