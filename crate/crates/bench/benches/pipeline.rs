use criterion::{black_box, criterion_group, criterion_main, BatchSize, Criterion};

use ledgersim::chaincode::{simulate_proposal, Proposal, StepBudget};
use ledgersim::endorsement::{collect_endorsements, endorse};
use ledgersim::harness::{self, presets, Pipeline};
use ledgersim::ledger::{build_genesis, Block, Transaction};
use ledgersim::lottery::{pow_example, run_lottery};
use ledgersim::script::corpus::{self, Pool};
use ledgersim::script::{compile, parse_and_typecheck};
use ledgersim::validation::Peer;

/// A genesis-only peer and one block of endorsed key-value writes.
fn endorsed_block(txs: u64) -> (Peer, Block) {
    let cfg = presets::token_happy_path(1);
    let (config, keys) = harness::channel_setup(&cfg);
    let registry = harness::standard_registry();
    let peer = Peer::from_genesis("peer", build_genesis(config.clone()).unwrap()).unwrap();
    let budget = StepBudget::new(harness::DEFAULT_ENDORSEMENT_BUDGET).unwrap();
    let txs: Vec<Transaction> = (0..txs)
        .map(|n| {
            let key = format!("k{}", n % 8).into_bytes();
            let proposal = Proposal::new("alice", n + 1, "kv", "put", vec![key, n.to_be_bytes().to_vec()]);
            let responses = keys.iter().map(|(id, key)| {
                endorse(&id.id, key, &proposal, simulate_proposal(peer.state(), &registry, &config, &proposal, budget))
            });
            collect_endorsements(&proposal, responses, &config).unwrap()
        })
        .collect();
    let block = Block::new(peer.ledger().next_seq(), peer.ledger().last_hash(), txs);
    (peer, block)
}

fn validate_and_commit(c: &mut Criterion) {
    let (peer, block) = endorsed_block(20);
    c.bench_function("validate_commit_20_txs", |b| {
        b.iter_batched(
            || (peer.clone(), block.clone()),
            |(mut p, blk)| p.process_block(blk).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn scenarios(c: &mut Criterion) {
    let mut g = c.benchmark_group("scenario");
    g.sample_size(10);
    let eov = presets::loop_contrast(1, Pipeline::ExecuteOrderValidate, None).without_loop();
    let oe = presets::loop_contrast(1, Pipeline::OrderExecute, None).without_loop();
    g.bench_function("execute_order_validate", |b| b.iter(|| harness::run_scenario(black_box(&eov))));
    g.bench_function("order_execute", |b| b.iter(|| harness::run_scenario(black_box(&oe))));
    g.bench_function("cft_crash", |b| b.iter(|| harness::run_scenario(black_box(&presets::cft_crash(1)))));
    g.finish();
}

fn lottery(c: &mut Criterion) {
    let mut g = c.benchmark_group("lottery");
    g.sample_size(10);
    let cfg = pow_example(1);
    g.bench_function("pow_2000_ticks", |b| b.iter(|| run_lottery(black_box(&cfg))));
    g.finish();
}

fn script(c: &mut Criterion) {
    use rand::SeedableRng;
    let contract = parse_and_typecheck(corpus::MULTISIG_TIMELOCK).unwrap();
    let program = compile(&contract);
    let pool = Pool::new(1);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    let cases: Vec<_> = (0..64).map(|_| corpus::random_case(&contract, &pool, &mut rng)).collect();
    c.bench_function("script_differential_64_cases", |b| {
        b.iter(|| {
            for case in &cases {
                black_box(corpus::both_verdicts(&contract, &program, case));
            }
        })
    });
}

criterion_group!(benches, validate_and_commit, scenarios, lottery, script);
criterion_main!(benches);
