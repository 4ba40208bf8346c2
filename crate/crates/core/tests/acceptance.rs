//! Acceptance suite. Runs as a plain binary so every criterion prints a
//! PASS/FAIL line. Pass criterion numbers as arguments to run a subset:
//! `cargo test -p ledgersim --test acceptance -- 3 8`.

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use ledgersim::chaincode::{simulate_proposal, ChaincodeRegistry, Proposal, StepBudget};
use ledgersim::contracts::rental::{contract_address, Effect};
use ledgersim::contracts::token::{audit, token_invoke, TokenError, TokenStandard};
use ledgersim::crypto::{Hash32, KeyPair};
use ledgersim::endorsement::{collect_endorsements, endorse, Policy};
use ledgersim::harness::{self, presets, Pipeline, RunArtifacts};
use ledgersim::ledger::{build_genesis, Block, ChannelConfig, InvalidReason, Validity};
use ledgersim::lottery::sim::nothing_at_stake_pairs;
use ledgersim::lottery::{
    importance_score, pos_example, pow_example, run_lottery, select_validator_pos, ImportanceParams, SelectionMode,
    StakeLedger, Transfer,
};
use ledgersim::ordering::{safety_trial, TrialParams};
use ledgersim::script::corpus::{self, Pool};
use ledgersim::script::{
    compile, encode_witness, eval_clause, parse_and_typecheck, run_program, Duration, ScriptValue, SpendingContext,
    Time,
};
use ledgersim::state::{StateStore, Version};
use ledgersim::validation::Peer;

const SAFETY_TRIALS: u64 = 1000;
const SAFETY_MAX_SECS: u64 = 300;
const DOUBLE_SPEND_SEEDS: u64 = 100;
const SERIAL_BLOCKS: usize = 500;
const SERIAL_MAX_TXS: usize = 20;
const LOOP_AT: u64 = 100;
/// Ticks after the loop invocation in which an in-flight block may still commit.
const FREEZE_SLACK: u64 = 5;
const POW_TARGET: f64 = 10.0;
const POW_INTERVAL: (f64, f64) = (8.0, 12.0);
const POW_RETARGET_WINDOWS: u64 = 3;
const POW_MAX_DIFFICULTY: u32 = 16;
const POW_MAX_SECS: u64 = 60;
const POS_DRAWS: usize = 10_000;
const POS_TOLERANCE: f64 = 0.02;
const NOTHING_AT_STAKE_SEEDS: u64 = 50;
const FUZZ_CASES: usize = 10_000;
const RENT: u64 = 5;
const DEPOSIT: u64 = 1;
const MONTHS: u64 = 12;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("ordering safety", ordering_safety),
        ("mvcc double-spend", mvcc_double_spend),
        ("serializability", serializability),
        ("order-execute dos contrast", dos_contrast),
        ("pow convergence", pow_convergence),
        ("pos lottery fidelity", pos_fidelity),
        ("poi scoring", poi_scoring),
        ("script vm", script_vm),
        ("token differential", token_differential),
        ("rental lifecycle", rental_lifecycle),
        ("end-to-end determinism", determinism),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !wanted.is_empty() && !wanted.contains(&n) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} {name}: PASS ({detail}; {secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("criterion {n:>2} {name}: FAIL ({detail}; {secs:.1}s)");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn ordering_safety() -> Outcome {
    let cfg = presets::cft_crash(1);
    let genesis = build_genesis(harness::channel_setup(&cfg).0).map_err(|e| e.to_string())?;
    let params = TrialParams::default();
    ensure!(params.orderers == 3 && params.fault_horizon < params.duration, "trial shape {params:?}");
    let start = Instant::now();
    let bad: Vec<String> = (0..SAFETY_TRIALS)
        .into_par_iter()
        .filter_map(|seed| {
            let (report, _) = safety_trial(&genesis, "alice", &params, seed);
            (!(report.safe() && report.validity)).then(|| format!("seed {seed}: {report:?}"))
        })
        .collect();
    ensure!(bad.is_empty(), "{} violating runs, first {}", bad.len(), bad[0]);
    let secs = start.elapsed().as_secs();
    ensure!(secs < SAFETY_MAX_SECS, "took {secs}s");
    Ok(format!("{SAFETY_TRIALS} runs, 0 violations"))
}

fn mvcc_double_spend() -> Outcome {
    let bad: Vec<String> = (0..DOUBLE_SPEND_SEEDS)
        .into_par_iter()
        .filter_map(|seed| {
            let a = harness::run_scenario(&presets::double_spend(seed));
            let racing: Vec<Validity> = a
                .blocks
                .iter()
                .flat_map(|b| b.txs.iter().enumerate().map(move |(i, tx)| (tx, b.validity(i))))
                .filter(|(tx, _)| tx.invocation().is_some_and(|inv| inv.operation == "transferFrom"))
                .map(|(_, v)| v)
                .collect();
            let ok = a.passed()
                && racing.len() == 2
                && racing.iter().filter(|v| v.is_valid()).count() == 1
                && racing.contains(&Validity::Invalid(InvalidReason::MvccConflict));
            (!ok).then(|| format!("seed {seed}: {racing:?}"))
        })
        .collect();
    ensure!(bad.is_empty(), "{} failing seeds, first {}", bad.len(), bad[0]);
    Ok(format!("{DOUBLE_SPEND_SEEDS}/{DOUBLE_SPEND_SEEDS} seeds: one valid, one mvcc-conflict, both retained"))
}

fn kv_proposal(rng: &mut impl Rng, client: &str, nonce: u64) -> Proposal {
    let key = |rng: &mut dyn rand::RngCore| format!("k{}", rng.gen_range(0..6)).into_bytes();
    let (op, args) = match rng.gen_range(0..5) {
        0 | 1 => ("put", vec![key(rng), format!("v{}", rng.gen_range(0..100)).into_bytes()]),
        2 => ("swap", vec![key(rng), key(rng)]),
        3 => ("put_then_get", vec![key(rng), vec![rng.gen()]]),
        _ => ("del", vec![key(rng)]),
    };
    Proposal::new(client, nonce, "kv", op, args)
}

fn serializability() -> Outcome {
    let cfg = presets::token_happy_path(1);
    let (config, keys) = harness::channel_setup(&cfg);
    let registry = harness::standard_registry();
    let budget = StepBudget::new(harness::DEFAULT_ENDORSEMENT_BUDGET).expect("positive budget");
    let mut peer = Peer::from_genesis("peer", build_genesis(config.clone()).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mut oracle = StateStore::new();
    let mut previous = StateStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut nonce = 0;
    let (mut valid, mut conflicts) = (0usize, 0usize);
    for _ in 0..SERIAL_BLOCKS {
        let mut txs = Vec::new();
        for _ in 0..rng.gen_range(0..=SERIAL_MAX_TXS) {
            nonce += 1;
            let proposal = kv_proposal(&mut rng, "alice", nonce);
            // A fifth of the proposals are endorsed against the previous block's state.
            let view = if rng.gen_bool(0.2) { &previous } else { peer.state() };
            let responses = keys
                .iter()
                .map(|(id, key)| endorse(&id.id, key, &proposal, simulate_proposal(view, &registry, &config, &proposal, budget)));
            txs.push(collect_endorsements(&proposal, responses, &config).map_err(|e| e.to_string())?);
        }
        let seq = peer.ledger().next_seq();
        let block = Block::new(seq, peer.ledger().last_hash(), txs.clone());
        previous = peer.state().clone();
        peer.process_block(block).map_err(|e| e.to_string())?;
        let committed = peer.ledger().blocks().last().expect("just committed").clone();

        for (i, tx) in txs.iter().enumerate() {
            let endorsed = &tx.endorsements[0];
            let fresh = endorsed.read_set.entries.iter().all(|(k, v)| oracle.current_version(k) == *v);
            let expected = if fresh {
                Validity::Valid
            } else {
                Validity::Invalid(InvalidReason::MvccConflict)
            };
            ensure!(committed.validity(i) == expected, "block {seq} tx {i}: {:?} vs {expected:?}", committed.validity(i));
            if fresh {
                let proposal = Proposal::from_transaction(tx).expect("invocation");
                let serial = simulate_proposal(&oracle, &registry, &config, &proposal, budget).map_err(|e| e.to_string())?;
                ensure!(serial.write_set == endorsed.write_set, "block {seq} tx {i}: serial write set differs");
                oracle
                    .apply_writeset(&serial.write_set, Version::new(seq, i as u64), tx.tx_id)
                    .map_err(|e| e.to_string())?;
                valid += 1;
            } else {
                conflicts += 1;
            }
        }
        ensure!(peer.state().dump() == oracle.dump(), "block {seq}: state differs from serial execution");
        ensure!(peer.state().state_hash() == oracle.state_hash(), "block {seq}: state hash differs");
    }
    ensure!(conflicts > 0 && valid > 0, "workload exercised valid {valid} conflicts {conflicts}");
    Ok(format!("{SERIAL_BLOCKS} blocks, {valid} valid, {conflicts} conflicts, byte-exact"))
}

/// Commit lines of the reference peer as (tick, seq).
fn commits(a: &RunArtifacts) -> Vec<(u64, u64)> {
    let reference = harness::reference_peer(&a.scenario);
    a.trace
        .iter()
        .filter(|l| l.kind == "commit" && l.node == reference)
        .filter_map(|l| Some((l.tick, l.field("seq")?.parse().ok()?)))
        .collect()
}

fn progresses(a: &RunArtifacts) -> bool {
    let c = commits(a);
    c.windows(2).all(|w| w[1].1 > w[0].1) && c.iter().filter(|(t, _)| *t > LOOP_AT + FREEZE_SLACK).count() > 10
}

fn dos_contrast() -> Outcome {
    let frozen = harness::run_scenario(&presets::loop_contrast(1, Pipeline::OrderExecute, None));
    ensure!(frozen.passed(), "unbounded run invariants: {}", frozen.summary.render());
    let last = commits(&frozen).last().map_or(0, |c| c.0);
    ensure!(last <= LOOP_AT + FREEZE_SLACK, "unbounded order-execute committed at tick {last}");
    ensure!(frozen.trace.iter().any(|l| l.kind == "halt"), "no halt traced");
    let budgeted = harness::run_scenario(&presets::loop_contrast(1, Pipeline::OrderExecute, Some(100_000)));
    ensure!(budgeted.passed() && progresses(&budgeted), "budgeted order-execute stalled");
    let eov = harness::run_scenario(&presets::loop_contrast(1, Pipeline::ExecuteOrderValidate, None));
    ensure!(eov.passed() && progresses(&eov), "execute-order-validate stalled");
    Ok(format!(
        "frozen at height {}, budgeted {}, eov {}",
        frozen.summary.get("height").unwrap_or("?"),
        budgeted.summary.get("height").unwrap_or("?"),
        eov.summary.get("height").unwrap_or("?"),
    ))
}

fn pow_convergence() -> Outcome {
    let start = Instant::now();
    let cfg = pow_example(1);
    let ledgersim::lottery::LotteryMode::Pow(params) = &cfg.consensus else {
        return Err("example is not proof of work".into());
    };
    ensure!(params.target_interval as f64 == POW_TARGET, "target {}", params.target_interval);
    let run = run_lottery(&cfg);
    let from = POW_RETARGET_WINDOWS * params.retarget_window;
    let mean = run.mean_interval_from(from).ok_or("too few blocks")?;
    ensure!((POW_INTERVAL.0..=POW_INTERVAL.1).contains(&mean), "mean interval {mean}");
    let max_difficulty = run.observer.main_chain().iter().map(|b| b.difficulty).max().unwrap_or(0);
    ensure!(max_difficulty <= POW_MAX_DIFFICULTY, "difficulty {max_difficulty}");
    let secs = start.elapsed().as_secs();
    ensure!(secs < POW_MAX_SECS, "took {secs}s");
    Ok(format!("mean interval {mean:.2} ticks from height {from}, max difficulty {max_difficulty}"))
}

fn pos_fidelity() -> Outcome {
    let weights = [("a", 50u64), ("b", 30), ("c", 20)];
    let mut ledger = StakeLedger::new(10);
    for (id, coins) in weights {
        ledger.stake(id, coins, 10, 0, KeyPair::derive(id, 1).public_key());
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for draw in 0..POS_DRAWS as u64 {
        let chosen = select_validator_pos(&ledger, SelectionMode::RelativeValue, 0, draw).map_err(|e| format!("{e:?}"))?;
        *counts.entry(chosen).or_default() += 1;
    }
    for (id, coins) in weights {
        let freq = counts.get(id).copied().unwrap_or(0) as f64 / POS_DRAWS as f64;
        ensure!((freq - coins as f64 / 100.0).abs() <= POS_TOLERANCE, "{id}: {freq}");
    }

    let mut aged = StakeLedger::new(10);
    aged.stake("v", 100, 10, 0, KeyPair::derive("v", 1).public_key());
    let weight = aged.weight("v", SelectionMode::CoinAge, 30 * 10);
    ensure!(weight == 3000, "coin age {weight}");

    let pairs = nothing_at_stake_pairs(&pos_example(0), 0..NOTHING_AT_STAKE_SEEDS);
    let off = pairs.iter().map(|p| p.0).sum::<f64>() / pairs.len() as f64;
    let on = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
    ensure!(off > on, "persistence off {off} on {on}");
    Ok(format!("frequencies {counts:?}, coin age 3000, persistence off {off:.2} > on {on:.2}"))
}

fn transfer(from: &str, to: &str, amount: u64, day: u64) -> Transfer {
    Transfer {
        from: from.into(),
        to: to.into(),
        amount,
        day,
    }
}

fn poi_scoring() -> Outcome {
    let p = ImportanceParams::default();
    let base = importance_score("a", 200, &p, &[], 5).score;
    let wash = importance_score("a", 200, &p, &[transfer("a", "b", 50, 1), transfer("b", "a", 50, 2)], 5);
    ensure!(wash.net_partners == 0, "wash partners {}", wash.net_partners);
    ensure!(wash.score - base == p.w_volume * 50.0, "wash moved more than volume");

    let low = importance_score("a", p.min_vested_coins - 1, &p, &[transfer("a", "b", 500, 1)], 5);
    ensure!(!low.eligible && low.score == 0.0, "sub-minimum account scored {low:?}");
    let edge = importance_score("a", p.min_vested_coins, &p, &[], 5);
    ensure!(edge.eligible, "minimum vested account ineligible");

    let m = p.min_tx_size;
    let txs = [transfer("a", "b", m - 1, 1), transfer("a", "c", m, 1), transfer("a", "d", m + 5, 1)];
    let s = importance_score("a", 200, &p, &txs, 5);
    ensure!(s.qualifying_txs == 2 && s.qualifying_volume == 2 * m + 5, "qualifying {s:?}");
    Ok("wash pair 0 partners, sub-minimum ineligible, small transfers excluded".into())
}

fn script_vm() -> Outcome {
    let pool = Pool::new(17);
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let per_contract = FUZZ_CASES.div_ceil(corpus::CORPUS.len());
    let (mut cases, mut unlocked) = (0, 0);
    for (name, src) in corpus::CORPUS {
        let contract = parse_and_typecheck(src).map_err(|e| format!("{name}: {e:?}"))?;
        let program = compile(&contract);
        for _ in 0..per_contract {
            let case = corpus::random_case(&contract, &pool, &mut rng);
            let (direct, vm) = corpus::both_verdicts(&contract, &program, &case);
            ensure!(direct == vm, "{name} diverged on {case:?}");
            cases += 1;
            unlocked += usize::from(direct.is_unlocked());
        }
    }
    ensure!(cases >= FUZZ_CASES && unlocked > 0 && unlocked < cases, "{cases} cases, {unlocked} unlocked");

    let bound = "contract C(n: Number, val: Value) { clause a() { verify n == 2147483647 unlock val } }";
    ensure!(parse_and_typecheck(bound).is_ok(), "upper Number bound rejected");
    ensure!(parse_and_typecheck(&bound.replace("2147483647", "-2147483647")).is_ok(), "lower bound rejected");
    ensure!(parse_and_typecheck(&bound.replace("2147483647", "2147483648")).is_err(), "overflow accepted");
    ensure!(parse_and_typecheck(&bound.replace("2147483647", "-2147483648")).is_err(), "underflow accepted");

    let contract = parse_and_typecheck(corpus::MULTISIG_TIMELOCK).map_err(|e| format!("{e:?}"))?;
    let program = compile(&contract);
    let keys: Vec<KeyPair> = (0..3).map(|i| KeyPair::derive("signer", i)).collect();
    let check_order = |deadline: Time| -> Outcome {
        let params: Vec<ScriptValue> = keys
            .iter()
            .map(|k| ScriptValue::PublicKey(k.public_key()))
            .chain([ScriptValue::Time(deadline), ScriptValue::Value(1)])
            .collect();
        let instance = program.instantiate(&params).map_err(|e| format!("{e:?}"))?;
        let ctx = SpendingContext {
            tx_digest: b"spend".to_vec(),
            ..Default::default()
        };
        let sig = |i: usize| ScriptValue::Signature(keys[i].sign(b"spend"));
        for (sigs, expect) in [([0, 2], true), ([2, 0], false), ([1, 1], false), ([0, 1], true)] {
            let args = [sig(sigs[0]), sig(sigs[1])];
            let direct = eval_clause(&contract, &params, "cosign", &args, &ctx).map_err(|e| format!("{e:?}"))?;
            let vm = run_program(&instance, &encode_witness(0, &args), &ctx);
            ensure!(direct.is_unlocked() == expect && direct == vm, "multisig {sigs:?}: {direct:?} / {vm:?}");
        }
        Ok(String::new())
    };
    check_order(Time::Height(100))?;

    for deadline in [Time::Height(100), Time::Timestamp(600_000_000)] {
        let params: Vec<ScriptValue> = keys
            .iter()
            .map(|k| ScriptValue::PublicKey(k.public_key()))
            .chain([ScriptValue::Time(deadline), ScriptValue::Value(1)])
            .collect();
        let instance = program.instantiate(&params).map_err(|e| format!("{e:?}"))?;
        for delta in [-1i64, 0, 1] {
            let mut ctx = SpendingContext {
                tx_digest: b"d".to_vec(),
                ..Default::default()
            };
            match deadline {
                Time::Height(h) => ctx.height = (i64::from(h) + delta) as u64,
                Time::Timestamp(t) => ctx.time = (i64::from(t) + delta) as u64,
            }
            let args = [ScriptValue::Signature(keys[0].sign(b"d"))];
            let direct = eval_clause(&contract, &params, "recover", &args, &ctx).map_err(|e| format!("{e:?}"))?;
            let vm = run_program(&instance, &encode_witness(1, &args), &ctx);
            ensure!(direct.is_unlocked() == (delta >= 0) && direct == vm, "{deadline:?} at {delta:+}: {direct:?}");
        }
    }

    let vesting = parse_and_typecheck(corpus::RELATIVE_LOCK).map_err(|e| format!("{e:?}"))?;
    let params = [
        ScriptValue::PublicKey(vec![0; 32]),
        ScriptValue::Duration(Duration::Blocks(6)),
        ScriptValue::Value(1),
    ];
    let instance = compile(&vesting).instantiate(&params).map_err(|e| format!("{e:?}"))?;
    for (secs, time, expect) in [(1023, 500_000_100, false), (1024, 500_000_099, false), (1024, 500_000_100, true)] {
        let ctx = SpendingContext {
            utxo_age_seconds: secs,
            time,
            ..Default::default()
        };
        let direct = eval_clause(&vesting, &params, "sweep", &[], &ctx).map_err(|e| format!("{e:?}"))?;
        let vm = run_program(&instance, &encode_witness(1, &[]), &ctx);
        ensure!(direct.is_unlocked() == expect && direct == vm, "relative lock {secs}s at {time}");
    }
    Ok(format!("{cases} differential cases ({unlocked} unlocked), goldens and boundaries hold"))
}

fn s(v: &[&str]) -> Vec<String> {
    v.iter().map(|x| x.to_string()).collect()
}

type World = BTreeMap<String, Vec<u8>>;

fn token_world(standard: TokenStandard) -> Result<World, TokenError> {
    let mut w = World::new();
    token_invoke(&mut w, standard, "init", "A", &s(&["100"]))?;
    token_invoke(&mut w, standard, "declareAccount", "A", &s(&["C", "true", "false"]))?;
    Ok(w)
}

fn token_audit(w: &World) -> Result<ledgersim::contracts::token::TokenAudit, String> {
    audit(w.iter().map(|(k, v)| (k.as_str(), v.as_slice())))
}

fn token_differential() -> Outcome {
    let sequence = [("transfer", "A", s(&["C", "30"])), ("transfer", "A", s(&["B", "10"]))];

    let mut erc20 = token_world(TokenStandard::Erc20).map_err(|e| e.to_string())?;
    for (method, caller, args) in &sequence {
        token_invoke(&mut erc20, TokenStandard::Erc20, method, caller, args).map_err(|e| e.to_string())?;
    }
    let a20 = token_audit(&erc20)?;
    ensure!(a20.supply == 100 && a20.total_balance == 100, "erc20 supply {a20:?}");
    ensure!(a20.total_lost == 30, "erc20 lost {}", a20.total_lost);

    let mut erc223 = token_world(TokenStandard::Erc223).map_err(|e| e.to_string())?;
    let first = &sequence[0];
    let err = token_invoke(&mut erc223, TokenStandard::Erc223, first.0, first.1, &first.2);
    ensure!(err == Err(TokenError::NoFallback("C".into())), "erc223 accepted the stranded transfer: {err:?}");
    token_invoke(&mut erc223, TokenStandard::Erc223, sequence[1].0, sequence[1].1, &sequence[1].2)
        .map_err(|e| e.to_string())?;
    let a223 = token_audit(&erc223)?;
    ensure!(a223.total_lost == 0 && a223.total_balance == 100, "erc223 {a223:?}");

    let t = TokenStandard::Erc20;
    let mut w = token_world(t).map_err(|e| e.to_string())?;
    token_invoke(&mut w, t, "approve", "A", &s(&["S", "50"])).map_err(|e| e.to_string())?;
    let over = token_invoke(&mut w, t, "transferFrom", "S", &s(&["A", "B", "51"]));
    ensure!(over == Err(TokenError::AllowanceExceeded { allowed: 50, requested: 51 }), "over ceiling: {over:?}");
    token_invoke(&mut w, t, "transferFrom", "S", &s(&["A", "B", "50"])).map_err(|e| e.to_string())?;
    let rest = token_invoke(&mut w, t, "allowance", "x", &s(&["A", "S"])).map_err(|e| e.to_string())?;
    ensure!(rest == "0", "allowance left {rest}");
    ensure!(token_invoke(&mut w, t, "transferFrom", "S", &s(&["A", "B", "1"])).is_err(), "spent past the ceiling");
    Ok(format!("erc20 lost {} with supply conserved, erc223 rejected, ceiling exact", a20.total_lost))
}

/// Executes invocations one at a time against a single state, the way an
/// order-execute ledger would.
struct Chain {
    config: ChannelConfig,
    registry: ChaincodeRegistry,
    state: StateStore,
    nonces: BTreeMap<String, u64>,
    height: u64,
    events: Vec<String>,
}

impl Chain {
    fn new() -> Self {
        let config = ChannelConfig::builder("ch")
            .orderers(vec!["orderer0".into()])
            .modification_rules(Policy::org("org1"))
            .grant_invoke("rental", "token")
            .build();
        Chain {
            config,
            registry: harness::standard_registry(),
            state: StateStore::new(),
            nonces: BTreeMap::new(),
            height: 0,
            events: Vec::new(),
        }
    }

    fn call(&mut self, client: &str, cc: &str, op: &str, args: &[&str]) -> Result<Vec<u8>, String> {
        let nonce = self.nonces.entry(client.to_string()).or_default();
        *nonce += 1;
        let args = args.iter().map(|a| a.as_bytes().to_vec()).collect();
        let proposal = Proposal::new(client, *nonce, cc, op, args);
        let budget = StepBudget::new(harness::DEFAULT_ENDORSEMENT_BUDGET).expect("positive budget");
        let sim = simulate_proposal(&self.state, &self.registry, &self.config, &proposal, budget).map_err(|e| e.to_string())?;
        self.height += 1;
        self.state
            .apply_writeset(&sim.write_set, Version::new(self.height, 0), proposal.tx_id)
            .map_err(|e| e.to_string())?;
        self.events
            .extend(sim.events.iter().map(|e| format!("{}:{}", e.name, String::from_utf8_lossy(&e.payload))));
        Ok(sim.response)
    }

    fn rental(&mut self, client: &str, op: &str, lease: &str, paid: u64, args: &[&str]) -> Result<Vec<Effect>, String> {
        let paid = paid.to_string();
        let mut all = vec![lease, paid.as_str()];
        all.extend_from_slice(args);
        let out = self.call(client, "rental", op, &all)?;
        serde_json::from_slice(&out).map_err(|e| e.to_string())
    }

    fn get(&mut self, lease: &str, getter: &str) -> Result<String, String> {
        let out = self.call("viewer", "rental", getter, &[lease])?;
        Ok(String::from_utf8_lossy(&out).into_owned())
    }

    fn balance(&mut self, who: &str) -> Result<u64, String> {
        let out = self.call("viewer", "token", "balanceOf", &[who])?;
        String::from_utf8_lossy(&out).parse().map_err(|_| "non-numeric balance".to_string())
    }
}

fn pay(to: &str, amount: u64) -> Effect {
    Effect::Pay {
        to: to.into(),
        amount,
    }
}

fn event(name: &str, detail: &str) -> Effect {
    Effect::Event {
        name: name.into(),
        detail: detail.into(),
    }
}

const LANDLORD: &str = "landlord";
const TENANT: &str = "tenant";
const ORACLE: &str = "oracle";

fn leased_chain(lease: &str) -> Result<Chain, String> {
    let mut c = Chain::new();
    c.call("bank", "token", "init", &["1000"])?;
    c.call("bank", "token", "transfer", &[TENANT, "100"])?;
    c.call("bank", "token", "transfer", &[LANDLORD, "10"])?;
    let spender = "cc:rental";
    c.call(TENANT, "token", "approve", &[spender, "100"])?;
    c.call(LANDLORD, "token", "approve", &[spender, "10"])?;
    let (rent, deposit, months) = (RENT.to_string(), DEPOSIT.to_string(), MONTHS.to_string());
    c.call(LANDLORD, "rental", "create", &[lease, "12 Elm St", &rent, &deposit, &months, "0", ORACLE, "0"])?;
    Ok(c)
}

fn rental_lifecycle() -> Outcome {
    let lease = "lease1";
    let mut c = leased_chain(lease)?;
    let mut trace = Vec::new();
    trace.push(c.rental(TENANT, "beginLease", lease, DEPOSIT, &[])?);
    for _ in 0..MONTHS {
        trace.push(c.rental(TENANT, "payRent", lease, RENT, &[])?);
    }
    trace.push(c.rental(TENANT, "checkTerms", lease, 0, &[])?);
    trace.push(c.rental(ORACLE, "oracleCallback", lease, 0, &["false"])?);
    trace.push(c.rental(LANDLORD, "terminateContract", lease, DEPOSIT, &[])?);

    let mut expected = vec![vec![pay(LANDLORD, DEPOSIT), event("contractActive", "")]];
    expected.extend((0..MONTHS).map(|_| vec![pay(LANDLORD, RENT)]));
    expected.push(vec![event("LogNewOraclizeQuery", "query was sent, standing by for the answer")]);
    expected.push(vec![]);
    expected.push(vec![pay(TENANT, DEPOSIT), event("contractTerminated", "")]);
    ensure!(trace == expected, "happy path trace {trace:?}");

    let refunds = trace.iter().flatten().filter(|e| **e == pay(TENANT, DEPOSIT)).count();
    ensure!(refunds == 1, "deposit refunded {refunds} times");
    let rents: Vec<String> = (1..=MONTHS).map(|m| format!(r#"{{"month":{m},"amount":{RENT}}}"#)).collect();
    ensure!(c.get(lease, "getRentsPaid")? == format!("[{}]", rents.join(",")), "rents paid");
    ensure!(c.get(lease, "getStatus")? == "Terminated", "status");
    let spent = DEPOSIT + MONTHS * RENT;
    ensure!(c.balance(TENANT)? == 100 - spent + DEPOSIT, "tenant balance");
    ensure!(c.balance(LANDLORD)? == 10 + spent - DEPOSIT, "landlord balance");
    ensure!(c.balance(&contract_address("rental", lease))? == 0, "contract keeps funds");
    ensure!(
        c.events == ["contractActive:lease1:", "LogNewOraclizeQuery:lease1:query was sent, standing by for the answer", "contractTerminated:lease1:"],
        "events {:?}",
        c.events
    );
    ensure!(c.rental(LANDLORD, "terminateContract", lease, DEPOSIT, &[]).is_err(), "second termination accepted");
    ensure!(c.rental(TENANT, "payRent", lease, RENT, &[]).is_err(), "rent accepted after termination");

    let lease = "lease2";
    let mut b = leased_chain(lease)?;
    ensure!(b.rental(TENANT, "beginLease", lease, DEPOSIT, &[])? == expected[0], "breach path lease");
    ensure!(b.rental(ORACLE, "oracleCallback", lease, 0, &["true"])? == vec![event("termBreached", "")], "breach");
    let end = b.rental(LANDLORD, "terminateContract", lease, 0, &[])?;
    ensure!(end == vec![event("contractTerminated", "")], "breach termination {end:?}");
    ensure!(b.balance(TENANT)? == 100 - DEPOSIT, "deposit returned despite breach");

    let lease = "lease3";
    let mut g = leased_chain(lease)?;
    let violations: [(&str, &str, u64, &[&str]); 6] = [
        (LANDLORD, "beginLease", DEPOSIT, &[]),
        (TENANT, "beginLease", DEPOSIT + 1, &[]),
        (TENANT, "payRent", RENT, &[]),
        (TENANT, "terminateContract", 0, &[]),
        (TENANT, "oracleCallback", 0, &["true"]),
        (TENANT, "setLateFee", 0, &["2"]),
    ];
    let before = g.state.dump();
    for (caller, op, paid, args) in violations {
        ensure!(g.rental(caller, op, lease, paid, args).is_err(), "{caller} {op} accepted before lease");
    }
    ensure!(g.state.dump() == before, "rejected calls changed state");
    g.rental(TENANT, "beginLease", lease, DEPOSIT, &[])?;
    let active: [(&str, &str, u64, &[&str]); 6] = [
        ("stranger", "beginLease", DEPOSIT, &[]),
        (LANDLORD, "payRent", RENT, &[]),
        (TENANT, "payRent", RENT - 1, &[]),
        (TENANT, "payRent", RENT + 1, &[]),
        (TENANT, "terminateContract", 0, &[]),
        (LANDLORD, "setLateFee", 0, &["2"]),
    ];
    for (caller, op, paid, args) in active {
        ensure!(g.rental(caller, op, lease, paid, args).is_err(), "{caller} {op} accepted while active");
    }
    Ok(format!("{} happy-path calls match the hand trace, breach withholds, 12 guards hold", trace.len()))
}

fn determinism() -> Outcome {
    let scenarios = [
        presets::token_happy_path(11),
        presets::double_spend(11),
        presets::dos_blacklist(11),
        presets::loop_contrast(11, Pipeline::OrderExecute, Some(100_000)),
        presets::cft_crash(11),
        presets::byzantine_endorser(11),
        presets::lottery_pow(11),
    ];
    let digests: Vec<(String, Hash32, Hash32)> = scenarios
        .par_iter()
        .map(|cfg| {
            let (a, b) = (harness::run_scenario(cfg), harness::run_scenario(cfg));
            let same_files = a.files() == b.files();
            let ledger = a.summary.get("ledger_hash") == b.summary.get("ledger_hash");
            (cfg.name.clone(), a.digest(), if same_files && ledger { b.digest() } else { Hash32::ZERO })
        })
        .collect();
    for (name, a, b) in &digests {
        ensure!(a == b, "{name}: reruns differ");
    }
    Ok(format!("{} scenarios rerun with identical ledgers and metric files", digests.len()))
}
