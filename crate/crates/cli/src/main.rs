use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ledgersim::harness::{self, presets, Pipeline, ScenarioConfig};
use ledgersim::ledger::read_ledger;
use ledgersim::script::{
    compile, encode_witness, eval_clause, parse_and_typecheck, run_program, ScriptContract, ScriptValue,
    SpendingContext, Verdict,
};

#[derive(Parser)]
#[command(name = "ledgersim", version, about = "Deterministic ledger simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files.
    Run(RunArgs),
    /// Check the hash chain and index of a ledger directory.
    VerifyChain { dir: PathBuf },
    /// Rebuild world state from a ledger directory.
    Replay { dir: PathBuf },
    /// Recompute metrics from a run directory and check them.
    Report { dir: PathBuf },
    /// Compile or evaluate spending-condition contracts.
    #[command(subcommand)]
    Script(ScriptCommand),
    /// Print a built-in scenario as JSON.
    Scenario {
        #[arg(value_enum)]
        preset: Preset,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(required = true)]
    scenarios: Vec<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, env = "LEDGERSIM_ARTIFACT_DIR", default_value = "ledgersim-runs")]
    out: PathBuf,
    /// Scenarios run in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<u64>,
    #[arg(long, value_enum)]
    pipeline: Option<PipelineArg>,
    /// Step budget per transaction.
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    blacklist_threshold: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    ExecuteOrderValidate,
    OrderExecute,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    TokenHappyPath,
    DoubleSpend,
    DosBlacklist,
    LoopOrderExecute,
    LoopExecuteOrderValidate,
    CftCrash,
    ByzantineEndorser,
    LotteryPow,
}

#[derive(Subcommand)]
enum ScriptCommand {
    /// Print the compiled program as hex.
    Compile {
        file: PathBuf,
        /// Contract parameters; the program is instantiated when given.
        #[arg(long, num_args = 1.., value_delimiter = ',')]
        params: Vec<String>,
    },
    /// Evaluate a clause with the interpreter and the compiled program.
    Eval(EvalArgs),
}

#[derive(Args)]
struct EvalArgs {
    file: PathBuf,
    #[arg(long)]
    clause: String,
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    args: Vec<String>,
    #[arg(long, num_args = 0.., value_delimiter = ',')]
    params: Vec<String>,
    #[arg(long, default_value_t = 0)]
    height: u64,
    #[arg(long, default_value_t = 0)]
    time: u64,
    #[arg(long, default_value_t = 0)]
    age_blocks: u64,
    #[arg(long, default_value_t = 0)]
    age_seconds: u64,
    /// Hex digest signatures are checked against.
    #[arg(long, default_value = "")]
    digest: String,
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::VerifyChain { dir } => verify_chain(&dir),
        Command::Replay { dir } => replay(&dir),
        Command::Report { dir } => report(&dir),
        Command::Script(ScriptCommand::Compile { file, params }) => script_compile(&file, &params),
        Command::Script(ScriptCommand::Eval(args)) => script_eval(&args),
        Command::Scenario { preset, seed } => {
            println!("{}", preset_config(preset, seed).to_json());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn status(ok: bool) -> ExitCode {
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn preset_config(preset: Preset, seed: u64) -> ScenarioConfig {
    match preset {
        Preset::TokenHappyPath => presets::token_happy_path(seed),
        Preset::DoubleSpend => presets::double_spend(seed),
        Preset::DosBlacklist => presets::dos_blacklist(seed),
        Preset::LoopOrderExecute => presets::loop_contrast(seed, Pipeline::OrderExecute, None),
        Preset::LoopExecuteOrderValidate => presets::loop_contrast(seed, Pipeline::ExecuteOrderValidate, None),
        Preset::CftCrash => presets::cft_crash(seed),
        Preset::ByzantineEndorser => presets::byzantine_endorser(seed),
        Preset::LotteryPow => presets::lottery_pow(seed),
    }
}

fn load_scenario(path: &Path, args: &RunArgs) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut cfg = ScenarioConfig::from_json(&text).with_context(|| format!("{}", path.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    if let Some(p) = args.pipeline {
        cfg.pipeline = match p {
            PipelineArg::ExecuteOrderValidate => Pipeline::ExecuteOrderValidate,
            PipelineArg::OrderExecute => Pipeline::OrderExecute,
        };
    }
    if args.budget.is_some() {
        cfg.execution_budget = args.budget;
    }
    if let Some(t) = args.blacklist_threshold {
        cfg.blacklist_threshold = t;
    }
    cfg.validate().with_context(|| format!("{}", path.display()))?;
    Ok(cfg)
}

/// Run directory names: the file stem, made unique across the batch.
fn run_dirs(out: &Path, scenarios: &[PathBuf]) -> Vec<PathBuf> {
    let mut used = BTreeSet::new();
    scenarios
        .iter()
        .map(|p| {
            let stem = p.file_stem().map_or("scenario".into(), |s| s.to_string_lossy().into_owned());
            let mut name = stem.clone();
            let mut i = 1;
            while !used.insert(name.clone()) {
                i += 1;
                name = format!("{stem}-{i}");
            }
            out.join(name)
        })
        .collect()
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let configs = args
        .scenarios
        .iter()
        .map(|p| load_scenario(p, &args))
        .collect::<Result<Vec<_>>>()?;
    let dirs = run_dirs(&args.out, &args.scenarios);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.max(1)).build()?;
    let results: Vec<Result<bool>> = pool.install(|| {
        configs
            .par_iter()
            .zip(&dirs)
            .map(|(cfg, dir)| {
                let artifacts = harness::run_scenario(cfg);
                artifacts.write_to(dir).with_context(|| format!("writing {}", dir.display()))?;
                Ok(artifacts.passed())
            })
            .collect()
    });
    let mut all = true;
    for ((cfg, dir), result) in configs.iter().zip(&dirs).zip(results) {
        let ok = result?;
        all &= ok;
        println!("{}: {} ({})", cfg.name, if ok { "pass" } else { "FAIL" }, dir.display());
        print!("{}", fs::read_to_string(dir.join(harness::SUMMARY_FILE))?);
    }
    Ok(status(all))
}

fn verify_chain(dir: &Path) -> Result<ExitCode> {
    let files = read_ledger(dir).with_context(|| format!("reading ledger in {}", dir.display()))?;
    match files.verify() {
        Ok(blocks) => {
            println!("ok: {} blocks", blocks.len());
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("invalid: {e}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn replay(dir: &Path) -> Result<ExitCode> {
    let r = harness::replay_dir(dir)?;
    println!("pipeline: {}", r.pipeline.as_str());
    println!("state_hash: {}", r.state_hash.to_hex());
    match r.matches_dump {
        Some(ok) => {
            println!("state.dump: {}", if ok { "match" } else { "MISMATCH" });
            Ok(status(ok))
        }
        None => {
            print!("{}", r.dump);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn report(dir: &Path) -> Result<ExitCode> {
    let r = harness::report_dir(dir)?;
    print!("{}", r.render());
    Ok(status(r.passed()))
}

fn load_contract(path: &Path) -> Result<ScriptContract> {
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_and_typecheck(&src).map_err(|diags| {
        let lines: Vec<String> = diags.iter().map(|d| format!("{}:{d}", path.display())).collect();
        anyhow::anyhow!(lines.join("\n"))
    })
}

fn typed_values(names: &[(String, ledgersim::script::ScriptType)], raw: &[String], what: &str) -> Result<Vec<ScriptValue>> {
    if names.len() != raw.len() {
        bail!("expected {} {what}, got {}", names.len(), raw.len());
    }
    names
        .iter()
        .zip(raw)
        .map(|((name, ty), text)| ScriptValue::parse_as(ty, text).map_err(|e| anyhow::anyhow!("{what} `{name}`: {e}")))
        .collect()
}

fn script_compile(file: &Path, params: &[String]) -> Result<ExitCode> {
    let contract = load_contract(file)?;
    let program = compile(&contract);
    if params.is_empty() {
        println!("{}", program.to_hex());
        return Ok(ExitCode::SUCCESS);
    }
    let sig: Vec<_> = contract.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect();
    let values = typed_values(&sig, params, "parameters")?;
    println!("{}", program.instantiate(&values).map_err(|e| anyhow::anyhow!("{e:?}"))?.to_hex());
    Ok(ExitCode::SUCCESS)
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Unlocked => "unlocked".into(),
        Verdict::Locked(reason) => format!("locked ({reason:?})"),
    }
}

/// Exit 0 when unlocked, 1 when locked, 2 when interpreter and VM disagree.
fn script_eval(a: &EvalArgs) -> Result<ExitCode> {
    let contract = load_contract(&a.file)?;
    let (index, clause) = contract
        .clause(&a.clause)
        .with_context(|| format!("unknown clause `{}`", a.clause))?;
    let param_sig: Vec<_> = contract.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect();
    let arg_sig: Vec<_> = clause.params.iter().map(|p| (p.name.clone(), p.ty.clone())).collect();
    let params = typed_values(&param_sig, &a.params, "parameters")?;
    let args = typed_values(&arg_sig, &a.args, "arguments")?;
    let ctx = SpendingContext {
        height: a.height,
        time: a.time,
        utxo_age_blocks: a.age_blocks,
        utxo_age_seconds: a.age_seconds,
        tx_digest: hex::decode(&a.digest).context("--digest")?,
        ..SpendingContext::default()
    };
    let direct = eval_clause(&contract, &params, &a.clause, &args, &ctx)?;
    let program = compile(&contract).instantiate(&params).map_err(|e| anyhow::anyhow!("{e:?}"))?;
    let vm = run_program(&program, &encode_witness(index, &args), &ctx);
    println!("interpreter: {}", verdict_text(&direct));
    println!("vm: {}", verdict_text(&vm));
    Ok(if direct != vm {
        ExitCode::from(2)
    } else {
        status(direct.is_unlocked())
    })
}
