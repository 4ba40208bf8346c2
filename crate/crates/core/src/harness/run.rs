use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

use super::artifacts::{derive_metrics, RunArtifacts, Summary, TraceLine};
use super::config::{ConsensusSpec, Pipeline, ScenarioConfig, WorkloadItem, CHAINCODES, DEFAULT_ENDORSEMENT_BUDGET};
use crate::chaincode::{namespaced_key, ChaincodeRegistry, Proposal, StepBudget};
use crate::contracts::registry::RegistryChaincode;
use crate::contracts::rental::RentalChaincode;
use crate::contracts::testing::{KvChaincode, LoopChaincode};
use crate::contracts::token::{TokenChaincode, TokenStandard};
use crate::crypto::KeyPair;
use crate::endorsement::{collect_endorsements, Policy, ResponseStatus};
use crate::ledger::{build_genesis, derive_tx_id, Block, ChannelConfig, ConsensusParams, Identity, Transaction, BACKEND_CFT, BACKEND_SOLO};
use crate::lottery::run_lottery;
use crate::netsim::{ByzantineStrategy, FaultKind, FaultSpec, Tick};
use crate::ordering::{CftCluster, CftConfig, SoloOrderer};
use crate::validation::{replay_state, ExecutionLimit, Peer, ValidationError};

/// Every built-in chaincode under its scenario id.
pub fn standard_registry() -> ChaincodeRegistry {
    let mut r = ChaincodeRegistry::new();
    r.register("token", TokenChaincode::new(TokenStandard::Erc20));
    r.register("token223", TokenChaincode::new(TokenStandard::Erc223));
    r.register("token777", TokenChaincode::new(TokenStandard::Erc777));
    r.register("registry", RegistryChaincode);
    r.register("rental", RentalChaincode::default());
    r.register("kv", KvChaincode);
    r.register("loop", LoopChaincode);
    r
}

/// Channel configuration and signing keys derived from the roster.
pub fn channel_setup(cfg: &ScenarioConfig) -> (ChannelConfig, Vec<(Identity, KeyPair)>) {
    let peers: Vec<(Identity, KeyPair)> = cfg
        .roster
        .peers()
        .iter()
        .map(|(id, org)| Identity::generate(id, org, cfg.seed))
        .collect();
    let orderers = cfg.roster.orderer_ids();
    let (backend, f) = match cfg.consensus {
        ConsensusSpec::Cft => (BACKEND_CFT, (orderers.len() - 1) / 2),
        _ => (BACKEND_SOLO, 0),
    };
    let policy = cfg.endorsement_policy();
    let mut b = ChannelConfig::builder(&cfg.channel.id)
        .orderers(orderers)
        .consensus(ConsensusParams {
            backend: backend.to_string(),
            batch_max_txs: cfg.channel.batch_max_txs,
            batch_timeout: cfg.channel.batch_timeout.max(1),
            f_tolerated: f,
        })
        .modification_rules(Policy::org(&cfg.roster.orgs[0].name))
        .grant_invoke("token777", "registry")
        .grant_invoke("rental", "token");
    for cc in CHAINCODES {
        b = b.endorsement_policy(cc, policy.clone());
    }
    for (id, _) in &peers {
        b = b.identity(id.clone());
    }
    for c in &cfg.roster.clients {
        b = b.identity(Identity::generate(&c.id, &c.org, cfg.seed).0);
    }
    (b.build(), peers)
}

/// The peer whose ledger is persisted: the first one no crash fault targets.
pub fn reference_peer(cfg: &ScenarioConfig) -> String {
    let peers = cfg.roster.peers();
    peers
        .iter()
        .find(|(id, _)| !cfg.faults.iter().any(|f| f.target == *id && f.kind == FaultKind::Crash))
        .or(peers.first())
        .map(|(id, _)| id.clone())
        .unwrap_or_default()
}

pub fn execution_limit(cfg: &ScenarioConfig) -> ExecutionLimit {
    match cfg.execution_budget.and_then(StepBudget::new) {
        Some(b) => ExecutionLimit::Budget(b),
        None => ExecutionLimit::Unbounded,
    }
}

fn crashed(faults: &[FaultSpec], node: &str, t: Tick) -> bool {
    faults.iter().any(|f| f.target == node && f.kind == FaultKind::Crash && f.active_at(t))
}

fn partitioned(faults: &[FaultSpec], a: &str, b: &str, t: Tick) -> bool {
    faults.iter().any(|f| match &f.kind {
        FaultKind::Partition { group_a, group_b } if f.active_at(t) => {
            let has = |g: &Vec<String>, n: &str| g.iter().any(|x| x == n);
            (has(group_a, a) && has(group_b, b)) || (has(group_a, b) && has(group_b, a))
        }
        _ => false,
    })
}

fn byzantine(faults: &[FaultSpec], node: &str, t: Tick) -> Option<ByzantineStrategy> {
    faults.iter().find_map(|f| match f.kind {
        FaultKind::ByzantineEndorser { strategy } if f.target == node && f.active_at(t) => Some(strategy),
        _ => None,
    })
}

fn next_nonce(client: &str, nonces: &mut BTreeMap<String, u64>) -> u64 {
    let n = nonces.entry(client.to_string()).or_insert(0);
    *n += 1;
    *n
}

struct Submission {
    client: String,
    chaincode: String,
    operation: String,
    args: Vec<String>,
}

fn due(t: Tick, from: Tick, until: Option<Tick>, every: Tick) -> Option<u64> {
    (t >= from && until.map_or(true, |u| t < u) && (t - from) % every == 0).then(|| (t - from) / every)
}

fn fill(template: &str, n: u64, client: &str) -> String {
    template.replace("{n}", &n.to_string()).replace("{client}", client)
}

fn workload_at(cfg: &ScenarioConfig, t: Tick, rng: &mut ChaCha8Rng) -> Vec<Submission> {
    let mut out = Vec::new();
    for item in &cfg.workload {
        match item {
            WorkloadItem::Invoke { at, client, chaincode, operation, args } if *at == t => out.push(Submission {
                client: client.clone(),
                chaincode: chaincode.clone(),
                operation: operation.clone(),
                args: args.iter().map(|a| fill(a, 0, client)).collect(),
            }),
            WorkloadItem::Invoke { .. } => {}
            WorkloadItem::Periodic { client, chaincode, operation, args, every, from, until } => {
                if let Some(n) = due(t, *from, *until, *every) {
                    out.push(Submission {
                        client: client.clone(),
                        chaincode: chaincode.clone(),
                        operation: operation.clone(),
                        args: args.iter().map(|a| fill(a, n, client)).collect(),
                    });
                }
            }
            WorkloadItem::RandomTransfers { clients, chaincode, every, max_amount, from, until } => {
                if due(t, *from, *until, *every).is_some() {
                    let i = rng.gen_range(0..clients.len());
                    let j = (i + rng.gen_range(1..clients.len())) % clients.len();
                    let amount = rng.gen_range(1..=(*max_amount).max(1));
                    out.push(Submission {
                        client: clients[i].clone(),
                        chaincode: chaincode.clone(),
                        operation: "transfer".into(),
                        args: vec![clients[j].clone(), amount.to_string()],
                    });
                }
            }
        }
    }
    out
}

enum Orderer {
    Solo(SoloOrderer),
    Cft(CftCluster),
}

struct Trace(Vec<TraceLine>);

impl Trace {
    fn note(&mut self, tick: Tick, node: &str, kind: &str, detail: impl Into<String>) {
        self.0.push(TraceLine::new(tick, node, kind, &detail.into()));
    }
}

/// Runs a scenario to completion and returns its artifacts.
pub fn run_scenario(cfg: &ScenarioConfig) -> RunArtifacts {
    match &cfg.consensus {
        ConsensusSpec::Lottery(l) => {
            let mut l = l.clone();
            l.seed = cfg.seed;
            l.duration = cfg.duration;
            let run = run_lottery(&l);
            RunArtifacts::from_lottery(cfg, &run)
        }
        _ => run_permissioned(cfg),
    }
}

fn run_permissioned(cfg: &ScenarioConfig) -> RunArtifacts {
    let (config, keys) = channel_setup(cfg);
    let genesis: Block = build_genesis(config.clone()).expect("validated scenario yields a valid channel");
    let registry = standard_registry();
    let endorse_budget = StepBudget::new(cfg.execution_budget.unwrap_or(DEFAULT_ENDORSEMENT_BUDGET)).expect("positive");
    let limit = execution_limit(cfg);
    let faults = &cfg.faults;
    let mut peers: Vec<(Peer, KeyPair)> = keys
        .into_iter()
        .map(|(id, key)| (Peer::from_genesis(&id.id, genesis.clone()).expect("genesis accepted"), key))
        .collect();
    let reference = reference_peer(cfg);
    let ref_idx = peers.iter().position(|(p, _)| p.id == reference).unwrap_or(0);
    let orderer_ids = cfg.roster.orderer_ids();
    let mut orderer = match cfg.consensus {
        ConsensusSpec::Cft => {
            let mut c = CftCluster::new(&genesis, CftConfig::new(orderer_ids.clone()), cfg.seed, cfg.link).with_trace();
            for f in faults {
                if matches!(f.kind, FaultKind::Crash | FaultKind::Partition { .. }) {
                    c.add_fault(f.clone());
                }
            }
            Orderer::Cft(c)
        }
        _ => Orderer::Solo(SoloOrderer::new(genesis.clone())),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Trace(Vec::new());
    let mut nonces: BTreeMap<String, u64> = BTreeMap::new();
    let mut invalid: BTreeMap<String, u64> = BTreeMap::new();
    let mut blacklisted: BTreeMap<String, Tick> = BTreeMap::new();

    for t in 0..cfg.duration {
        if let Orderer::Cft(c) = &mut orderer {
            c.run_until(t);
        }
        let mut txs: Vec<Transaction> = Vec::new();
        for s in workload_at(cfg, t, &mut rng) {
            if blacklisted.contains_key(&s.client) {
                trace.note(t, &s.client, "drop", format!("blacklisted {}.{}", s.chaincode, s.operation));
                continue;
            }
            let nonce = next_nonce(&s.client, &mut nonces);
            let tx_id = derive_tx_id(&s.client, nonce);
            trace.note(t, &s.client, "submit", format!("{} {}.{}", tx_id.to_hex(), s.chaincode, s.operation));
            let args: Vec<Vec<u8>> = s.args.iter().map(|a| a.as_bytes().to_vec()).collect();
            if cfg.pipeline == Pipeline::OrderExecute {
                txs.push(Transaction::invoke(&s.client, nonce, &s.chaincode, &s.operation, args));
                continue;
            }
            let proposal = Proposal::new(&s.client, nonce, &s.chaincode, &s.operation, args);
            let mut responses = Vec::new();
            for (peer, key) in &peers {
                if crashed(faults, &peer.id, t) || partitioned(faults, &s.client, &peer.id, t) {
                    continue;
                }
                let mut resp = peer.endorse(key, &registry, &proposal, endorse_budget);
                if let (Some(strategy), ResponseStatus::Ok(e)) = (byzantine(faults, &peer.id, t), &mut resp.status) {
                    match strategy {
                        ByzantineStrategy::ForgeWriteset => {
                            e.write_set.put(namespaced_key(&s.chaincode, b"forged"), b"1".to_vec());
                            e.resign(key);
                        }
                        ByzantineStrategy::WrongSignature => e.signature.bytes = key.sign(b"not the endorsement"),
                    }
                }
                responses.push(resp);
            }
            match collect_endorsements(&proposal, responses, &config) {
                Ok(tx) => txs.push(tx),
                Err(e) => trace.note(t, &s.client, "endorse-fail", format!("{} {e}", tx_id.to_hex())),
            }
        }
        for f in faults {
            let FaultKind::DosClient { rate } = f.kind else { continue };
            if !f.active_at(t) {
                continue;
            }
            for _ in 0..rate {
                if blacklisted.contains_key(&f.target) {
                    trace.note(t, &f.target, "drop", "blacklisted kv.put");
                    continue;
                }
                let nonce = next_nonce(&f.target, &mut nonces);
                let tx = Transaction::invoke(&f.target, nonce, "kv", "put", vec![format!("dos{nonce}").into_bytes(), b"x".to_vec()]);
                trace.note(t, &f.target, "submit", format!("{} kv.put", tx.tx_id.to_hex()));
                txs.push(tx);
            }
        }

        match &mut orderer {
            Orderer::Solo(solo) => {
                let id = &orderer_ids[0];
                for tx in txs {
                    if crashed(faults, id, t) || partitioned(faults, &tx.client, id, t) {
                        trace.note(t, &tx.client, "broadcast-fail", format!("{} {id} unreachable", tx.tx_id.to_hex()));
                    } else if let Err(e) = solo.broadcast(tx.clone(), t) {
                        trace.note(t, &tx.client, "broadcast-fail", format!("{} {e}", tx.tx_id.to_hex()));
                    }
                }
                if !crashed(faults, id, t) {
                    for b in solo.tick(t) {
                        trace.note(t, id, "cut", format!("seq={} txs={}", b.seq, b.txs.len()));
                    }
                }
            }
            Orderer::Cft(cluster) => {
                for tx in txs {
                    if cluster.broadcast(&tx).is_empty() {
                        trace.note(t, &tx.client, "broadcast-fail", format!("{} no live orderer", tx.tx_id.to_hex()));
                    }
                }
            }
        }

        for i in 0..peers.len() {
            let peer_id = peers[i].0.id.clone();
            if crashed(faults, &peer_id, t) || peers[i].0.is_halted() {
                continue;
            }
            loop {
                let s = peers[i].0.height();
                let block = match &orderer {
                    Orderer::Solo(solo) => {
                        let id = &orderer_ids[0];
                        if crashed(faults, id, t) || partitioned(faults, &peer_id, id, t) {
                            None
                        } else {
                            solo.deliver(s).cloned()
                        }
                    }
                    Orderer::Cft(cluster) => cluster
                        .nodes()
                        .filter(|n| !cluster.is_crashed(&n.id) && !partitioned(faults, &peer_id, &n.id, t))
                        .find_map(|n| n.deliver(s))
                        .cloned(),
                };
                let Some(block) = block else { break };
                let result = match cfg.pipeline {
                    Pipeline::ExecuteOrderValidate => peers[i].0.process_block(block),
                    Pipeline::OrderExecute => peers[i].0.execute_block(block, &registry, limit),
                };
                match result {
                    Ok(_) => {
                        let peer = &peers[i].0;
                        let committed = peer.ledger().get(s).expect("just committed");
                        let bad = (0..committed.txs.len()).filter(|&k| !committed.validity(k).is_valid()).count();
                        trace.note(
                            t,
                            &peer_id,
                            "commit",
                            format!("seq={s} valid={} invalid={bad}", committed.txs.len() - bad),
                        );
                        if i != ref_idx {
                            continue;
                        }
                        for (k, tx) in committed.txs.iter().enumerate() {
                            if committed.validity(k).is_valid() {
                                continue;
                            }
                            let count = invalid.entry(tx.client.clone()).or_insert(0);
                            *count += 1;
                            if *count == cfg.blacklist_threshold && !blacklisted.contains_key(&tx.client) {
                                blacklisted.insert(tx.client.clone(), t);
                                trace.note(t, &tx.client, "blacklisted", format!("invalid={count}"));
                            }
                        }
                    }
                    Err(ValidationError::NonTermination { seq, tx }) => {
                        trace.note(t, &peer_id, "halt", format!("seq={seq} tx={tx} non-terminating"));
                        break;
                    }
                    Err(e) => {
                        trace.note(t, &peer_id, "reject", format!("seq={s} {e}"));
                        break;
                    }
                }
            }
        }
    }

    let mut lines = match &orderer {
        Orderer::Cft(c) => c.trace().lines().iter().filter_map(|l| TraceLine::parse(l)).collect(),
        Orderer::Solo(_) => Vec::new(),
    };
    lines.extend(trace.0);
    lines.sort_by_key(|l| l.tick);

    let reference_peer = &peers[ref_idx].0;
    let blocks = reference_peer.ledger().blocks().to_vec();
    let metrics = derive_metrics(cfg, &blocks, &lines).expect("artifacts of a fresh run are consistent");

    let mut summary = Summary::default();
    summary.field("scenario", &cfg.name);
    summary.field("seed", cfg.seed);
    summary.field("pipeline", cfg.pipeline.as_str());
    summary.field("consensus", if matches!(cfg.consensus, ConsensusSpec::Cft) { BACKEND_CFT } else { BACKEND_SOLO });
    summary.field("duration", cfg.duration);
    summary.field("reference_peer", &reference);
    summary.field("height", blocks.len());
    metrics.summarize(&mut summary);
    let halted: Vec<&str> = peers.iter().filter(|(p, _)| p.is_halted()).map(|(p, _)| p.id.as_str()).collect();
    summary.field("halted_peers", halted.len());
    summary.field("state_hash", reference_peer.state().state_hash().to_hex());
    summary.field("ledger_hash", blocks.last().expect("genesis").block_hash.to_hex());

    let agree = peers.iter().all(|(p, _)| {
        p.ledger()
            .blocks()
            .iter()
            .zip(&blocks)
            .all(|(a, b)| a.block_hash == b.block_hash)
    });
    let replayed = match cfg.pipeline {
        Pipeline::ExecuteOrderValidate => replay_state(&blocks).map(|s| s.state_hash()),
        Pipeline::OrderExecute => reexecute(&blocks, limit).map(|p| p.state().state_hash()),
    };
    let derived_blacklist: BTreeMap<String, Tick> =
        metrics.blacklist.iter().map(|r| (r.client.clone(), r.blacklisted_at)).collect();
    let blacklist_consistent = blacklisted == derived_blacklist && invalid == metrics.client_invalid;
    let mut artifacts = RunArtifacts {
        scenario: cfg.clone(),
        blocks,
        state_dump: reference_peer.state().dump(),
        verdicts_csv: reference_peer.verdict_csv(),
        trace: lines,
        metrics,
        summary,
        forks_csv: None,
    };
    artifacts.check_artifact_invariants();
    artifacts.summary.invariant("peers-agree", agree);
    artifacts
        .summary
        .invariant("replay-matches", replayed.as_ref() == Ok(&reference_peer.state().state_hash()));
    artifacts.summary.invariant("blacklist-consistent", blacklist_consistent);
    artifacts
}

/// Re-executes an order-execute ledger from its genesis block.
pub fn reexecute(blocks: &[Block], limit: ExecutionLimit) -> Result<Peer, String> {
    let genesis = blocks.first().ok_or("empty ledger")?;
    let mut peer = Peer::from_genesis("replay", genesis.clone()).map_err(|e| e.to_string())?;
    let registry = standard_registry();
    for b in &blocks[1..] {
        peer.execute_block(b.clone(), &registry, limit).map_err(|e| e.to_string())?;
    }
    Ok(peer)
}
