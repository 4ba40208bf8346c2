//! Run artifacts, metrics derived from them, and the checks `report` runs
//! over a run directory.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Display, Write as _};
use std::fs;
use std::io;
use std::path::Path;

use super::config::{Pipeline, ScenarioConfig, ScenarioError};
use super::run::{execution_limit, reexecute, reference_peer};
use crate::crypto::{sha256_parts, Hash32};
use crate::ledger::{read_ledger, Block, BlockFileError, InvalidReason, LedgerFiles, Validity, BLOCKS_FILE, INDEX_FILE};
use crate::lottery::LotteryRun;
use crate::lottery::LotteryMode;
use crate::netsim::gossip::{gossip_disseminate, GossipConfig};
use crate::netsim::{Tick, TRACE_HEADER};
use crate::validation::{replay_state, ValidationVerdict, VERDICT_CSV_HEADER};

pub const STATE_FILE: &str = "state.dump";
pub const VERDICTS_FILE: &str = "verdicts.csv";
pub const TRACE_FILE: &str = "trace.log";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BLACKLIST_FILE: &str = "blacklist.csv";
pub const FORKS_FILE: &str = "forks.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const SCENARIO_FILE: &str = "scenario.json";

pub const METRICS_HEADER: &str = "window,committed_valid,committed_invalid,forks";
pub const BLACKLIST_HEADER: &str = "client,invalid_txs,blacklisted_at";
pub const FORKS_HEADER: &str = "start,end,blocks";

/// Blocks sampled for the gossip round estimate.
const GOSSIP_SAMPLE: usize = 16;
const GOSSIP_MAX_ROUNDS: Tick = 64;

/// One `tick,node,kind,detail` trace record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceLine {
    pub tick: Tick,
    pub node: String,
    pub kind: String,
    pub detail: String,
}

impl TraceLine {
    pub fn new(tick: Tick, node: &str, kind: &str, detail: &str) -> Self {
        TraceLine {
            tick,
            node: node.to_string(),
            kind: kind.to_string(),
            detail: detail.replace([',', '\n'], ";"),
        }
    }

    pub fn parse(line: &str) -> Option<TraceLine> {
        let mut parts = line.splitn(4, ',');
        let tick = parts.next()?.parse().ok()?;
        Some(TraceLine {
            tick,
            node: parts.next()?.to_string(),
            kind: parts.next()?.to_string(),
            detail: parts.next().unwrap_or("").to_string(),
        })
    }

    /// Value of `key=value` inside the detail field.
    pub fn field(&self, key: &str) -> Option<&str> {
        self.detail
            .split(' ')
            .find_map(|w| w.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
    }
}

impl Display for TraceLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.tick, self.node, self.kind, self.detail)
    }
}

pub fn parse_trace(text: &str) -> Vec<TraceLine> {
    text.lines().skip(1).filter_map(TraceLine::parse).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WindowRow {
    pub window: u64,
    pub committed_valid: u64,
    pub committed_invalid: u64,
    pub forks: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlacklistRow {
    pub client: String,
    pub invalid_txs: u64,
    pub blacklisted_at: Tick,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    pub windows: Vec<WindowRow>,
    pub committed_valid: u64,
    pub committed_invalid: u64,
    pub invalid_by_reason: BTreeMap<String, u64>,
    pub client_invalid: BTreeMap<String, u64>,
    pub blacklist: Vec<BlacklistRow>,
    pub fork_episodes: u64,
    pub fork_persistence: f64,
    pub gossip_rounds: f64,
}

impl Metrics {
    pub fn metrics_csv(&self) -> String {
        let mut out = format!("{METRICS_HEADER}\n");
        for w in &self.windows {
            let _ = writeln!(out, "{},{},{},{}", w.window, w.committed_valid, w.committed_invalid, w.forks);
        }
        out
    }

    pub fn blacklist_csv(&self) -> String {
        let mut out = format!("{BLACKLIST_HEADER}\n");
        for r in &self.blacklist {
            let _ = writeln!(out, "{},{},{}", r.client, r.invalid_txs, r.blacklisted_at);
        }
        out
    }

    pub fn summarize(&self, s: &mut Summary) {
        s.field("committed_valid", self.committed_valid);
        s.field("committed_invalid", self.committed_invalid);
        for (reason, n) in &self.invalid_by_reason {
            s.field(&format!("invalid.{reason}"), n);
        }
        for (client, n) in &self.client_invalid {
            s.field(&format!("client_invalid.{client}"), n);
        }
        s.field("blacklisted", self.blacklist.len());
        s.field("fork_episodes", self.fork_episodes);
        s.field("fork_persistence", format!("{:.3}", self.fork_persistence));
        s.field("gossip_rounds_mean", format!("{:.3}", self.gossip_rounds));
    }
}

fn window_count(cfg: &ScenarioConfig) -> u64 {
    cfg.duration.div_ceil(cfg.metrics_window)
}

fn empty_windows(cfg: &ScenarioConfig) -> Vec<WindowRow> {
    (0..window_count(cfg))
        .map(|window| WindowRow {
            window,
            committed_valid: 0,
            committed_invalid: 0,
            forks: 0,
        })
        .collect()
}

fn window_of(cfg: &ScenarioConfig, windows: usize, tick: Tick) -> Option<usize> {
    if windows == 0 {
        return None;
    }
    Some(((tick / cfg.metrics_window) as usize).min(windows - 1))
}

/// Recomputes every metric from a persisted ledger and trace.
pub fn derive_metrics(cfg: &ScenarioConfig, blocks: &[Block], trace: &[TraceLine]) -> Result<Metrics, String> {
    if cfg.is_lottery() {
        return Ok(derive_lottery_metrics(cfg, trace));
    }
    let reference = reference_peer(cfg);
    let mut commit_tick: BTreeMap<u64, Tick> = BTreeMap::new();
    for l in trace.iter().filter(|l| l.kind == "commit" && l.node == reference) {
        let seq = l.field("seq").and_then(|s| s.parse().ok()).ok_or_else(|| format!("bad commit record `{l}`"))?;
        commit_tick.entry(seq).or_insert(l.tick);
    }
    let mut m = Metrics {
        windows: empty_windows(cfg),
        invalid_by_reason: InvalidReason::ALL.iter().map(|r| (r.as_str().to_string(), 0)).collect(),
        ..Metrics::default()
    };
    let mut cumulative: BTreeMap<&str, u64> = BTreeMap::new();
    let mut blacklisted_at: BTreeMap<&str, Tick> = BTreeMap::new();
    for block in blocks.iter().filter(|b| !b.is_config()) {
        let tick = *commit_tick
            .get(&block.seq)
            .ok_or_else(|| format!("block {} has no commit record", block.seq))?;
        let w = window_of(cfg, m.windows.len(), tick);
        for (i, tx) in block.txs.iter().enumerate() {
            match block.validity(i) {
                Validity::Valid => {
                    m.committed_valid += 1;
                    if let Some(w) = w {
                        m.windows[w].committed_valid += 1;
                    }
                }
                Validity::Invalid(reason) => {
                    m.committed_invalid += 1;
                    if let Some(w) = w {
                        m.windows[w].committed_invalid += 1;
                    }
                    *m.invalid_by_reason.entry(reason.as_str().to_string()).or_default() += 1;
                    let n = cumulative.entry(tx.client.as_str()).or_default();
                    *n += 1;
                    if *n == cfg.blacklist_threshold {
                        blacklisted_at.entry(tx.client.as_str()).or_insert(tick);
                    }
                }
                Validity::Pending => return Err(format!("block {} tx {i} has no verdict", block.seq)),
            }
        }
    }
    m.client_invalid = cumulative.iter().map(|(c, n)| (c.to_string(), *n)).collect();
    m.blacklist = blacklisted_at
        .iter()
        .map(|(c, at)| BlacklistRow {
            client: c.to_string(),
            invalid_txs: cumulative[c],
            blacklisted_at: *at,
        })
        .collect();
    m.gossip_rounds = gossip_estimate(cfg, blocks, &reference);
    Ok(m)
}

/// Mean rounds to push a committed block from the reference peer to every
/// peer, over the first few transaction blocks.
fn gossip_estimate(cfg: &ScenarioConfig, blocks: &[Block], origin: &str) -> f64 {
    let peers: Vec<String> = cfg.roster.peers().into_iter().map(|(id, _)| id).collect();
    let gossip = GossipConfig {
        fanout: cfg.gossip_fanout.max(1),
        ..GossipConfig::default()
    };
    let rounds: Vec<Tick> = blocks
        .iter()
        .filter(|b| !b.is_config())
        .take(GOSSIP_SAMPLE)
        .map(|b| gossip_disseminate(&peers, origin, b.clone(), gossip, &[], cfg.seed ^ b.seq, GOSSIP_MAX_ROUNDS).rounds)
        .collect();
    if rounds.is_empty() {
        return 0.0;
    }
    rounds.iter().sum::<Tick>() as f64 / rounds.len() as f64
}

fn derive_lottery_metrics(cfg: &ScenarioConfig, trace: &[TraceLine]) -> Metrics {
    let mut m = Metrics {
        windows: empty_windows(cfg),
        ..Metrics::default()
    };
    let mut persistence = 0u64;
    for l in trace {
        let w = window_of(cfg, m.windows.len(), l.tick);
        match l.kind.as_str() {
            "main-block" => {
                m.committed_valid += 1;
                if let Some(w) = w {
                    m.windows[w].committed_valid += 1;
                }
            }
            "fork" => {
                m.fork_episodes += 1;
                persistence += l.field("blocks").and_then(|b| b.parse::<u64>().ok()).unwrap_or(0);
                if let Some(w) = w {
                    m.windows[w].forks += 1;
                }
            }
            _ => {}
        }
    }
    if m.fork_episodes > 0 {
        m.fork_persistence = persistence as f64 / m.fork_episodes as f64;
    }
    m
}

/// `key: value` lines followed by `invariant.<name>: pass|fail` lines.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Summary {
    pub fields: Vec<(String, String)>,
    pub invariants: Vec<(String, bool)>,
}

impl Summary {
    pub fn field(&mut self, key: &str, value: impl Display) {
        self.fields.push((key.to_string(), value.to_string()));
    }

    pub fn invariant(&mut self, name: &str, ok: bool) {
        self.invariants.push((name.to_string(), ok));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.fields.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn all_pass(&self) -> bool {
        self.invariants.iter().all(|(_, ok)| *ok)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.fields {
            let _ = writeln!(out, "{k}: {v}");
        }
        for (name, ok) in &self.invariants {
            let _ = writeln!(out, "invariant.{name}: {}", if *ok { "pass" } else { "fail" });
        }
        out
    }

    pub fn parse(text: &str) -> Summary {
        let mut s = Summary::default();
        for line in text.lines() {
            let Some((k, v)) = line.split_once(": ") else { continue };
            match k.strip_prefix("invariant.") {
                Some(name) => s.invariant(name, v == "pass"),
                None => s.field(k, v),
            }
        }
        s
    }
}

/// Everything a run persists.
#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub scenario: ScenarioConfig,
    pub blocks: Vec<Block>,
    pub state_dump: String,
    pub verdicts_csv: String,
    pub trace: Vec<TraceLine>,
    pub metrics: Metrics,
    pub summary: Summary,
    pub forks_csv: Option<String>,
}

fn verdicts_from_blocks(blocks: &[Block]) -> String {
    let mut out = format!("{VERDICT_CSV_HEADER}\n");
    for b in blocks.iter().filter(|b| !b.is_config()) {
        for (tx_seq, tx) in b.txs.iter().enumerate() {
            let v = ValidationVerdict {
                block: b.seq,
                tx_seq,
                tx_id: tx.tx_id,
                flag: b.validity(tx_seq),
            };
            let _ = writeln!(out, "{}", v.csv_line());
        }
    }
    out
}

fn mode_name(mode: &LotteryMode) -> &'static str {
    match mode {
        LotteryMode::Pow(_) => "lottery-pow",
        LotteryMode::Pos(_) => "lottery-pos",
        LotteryMode::Dpos(_) => "lottery-dpos",
        LotteryMode::Poi(_) => "lottery-poi",
    }
}

impl RunArtifacts {
    pub(crate) fn from_lottery(cfg: &ScenarioConfig, run: &LotteryRun) -> RunArtifacts {
        let mut trace: Vec<TraceLine> = run
            .observer
            .main_chain()
            .into_iter()
            .filter(|b| b.height > 0)
            .map(|b| TraceLine::new(b.timestamp, &b.producer, "main-block", &format!("height={}", b.height)))
            .collect();
        let mut forks = format!("{FORKS_HEADER}\n");
        for e in &run.episodes {
            let end = e.end.map_or("open".to_string(), |t| t.to_string());
            trace.push(TraceLine::new(e.start, "observer", "fork", &format!("blocks={} end={end}", e.blocks)));
            let _ = writeln!(forks, "{},{end},{}", e.start, e.blocks);
        }
        trace.sort_by_key(|l| l.tick);
        let metrics = derive_lottery_metrics(cfg, &trace);
        let mut summary = Summary::default();
        summary.field("scenario", &cfg.name);
        summary.field("seed", cfg.seed);
        if let super::config::ConsensusSpec::Lottery(l) = &cfg.consensus {
            summary.field("consensus", mode_name(&l.consensus));
        }
        summary.field("duration", cfg.duration);
        summary.field("blocks_produced", run.blocks_produced);
        summary.field("main_chain_height", run.observer.main_chain().len().saturating_sub(1));
        metrics.summarize(&mut summary);
        summary.field("missed_slots", run.missed_slots);
        summary.field("slashed", run.slashed.join(" "));
        summary.field("converged", run.converged());
        summary.field("log_digest", run.log_digest.to_hex());
        let mut a = RunArtifacts {
            scenario: cfg.clone(),
            blocks: Vec::new(),
            state_dump: String::new(),
            verdicts_csv: format!("{VERDICT_CSV_HEADER}\n"),
            trace,
            metrics,
            summary,
            forks_csv: Some(forks),
        };
        a.summary.invariant("audit-clean", run.audit.is_empty());
        let consistent = a.metrics.fork_episodes == run.episodes.len() as u64
            && (a.metrics.fork_persistence - run.mean_persistence()).abs() < 1e-9;
        let roundtrip = a.metrics_roundtrip();
        a.summary.invariant("metrics-consistent", consistent && roundtrip);
        a
    }

    /// Checks that only need the artifacts themselves.
    pub(crate) fn check_artifact_invariants(&mut self) {
        let files = LedgerFiles::encode(&self.blocks);
        self.summary.invariant("chain-verifies", files.verify().is_ok());
        let submitted: BTreeSet<&str> = self
            .trace
            .iter()
            .filter(|l| l.kind == "submit")
            .filter_map(|l| l.detail.split(' ').next())
            .collect();
        let no_creation = self
            .blocks
            .iter()
            .flat_map(|b| &b.txs)
            .all(|tx| submitted.contains(tx.tx_id.to_hex().as_str()));
        self.summary.invariant("no-creation", no_creation);
        self.summary
            .invariant("verdicts-match-ledger", verdicts_from_blocks(&self.blocks) == self.verdicts_csv);
        let roundtrip = self.metrics_roundtrip();
        self.summary.invariant("metrics-consistent", roundtrip);
    }

    /// Re-derives metrics from the serialized ledger and trace.
    fn metrics_roundtrip(&self) -> bool {
        let blocks = LedgerFiles::encode(&self.blocks).decode_blocks().unwrap_or_default();
        let trace = parse_trace(&self.trace_log());
        match derive_metrics(&self.scenario, &blocks, &trace) {
            Ok(m) => m.metrics_csv() == self.metrics.metrics_csv() && m.blacklist_csv() == self.metrics.blacklist_csv(),
            Err(_) => false,
        }
    }

    pub fn passed(&self) -> bool {
        self.summary.all_pass()
    }

    pub fn trace_log(&self) -> String {
        let mut out = format!("{TRACE_HEADER}\n");
        for l in &self.trace {
            let _ = writeln!(out, "{l}");
        }
        out
    }

    /// File name and contents, in a fixed order.
    pub fn files(&self) -> Vec<(&'static str, Vec<u8>)> {
        let ledger = LedgerFiles::encode(&self.blocks);
        let mut files = vec![
            (BLOCKS_FILE, ledger.blocks),
            (INDEX_FILE, ledger.index),
            (STATE_FILE, self.state_dump.clone().into_bytes()),
            (VERDICTS_FILE, self.verdicts_csv.clone().into_bytes()),
            (TRACE_FILE, self.trace_log().into_bytes()),
            (METRICS_FILE, self.metrics.metrics_csv().into_bytes()),
            (BLACKLIST_FILE, self.metrics.blacklist_csv().into_bytes()),
            (SUMMARY_FILE, self.summary.render().into_bytes()),
            (SCENARIO_FILE, self.scenario.to_json().into_bytes()),
        ];
        if let Some(f) = &self.forks_csv {
            files.push((FORKS_FILE, f.clone().into_bytes()));
        }
        files
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        fs::create_dir_all(dir)?;
        for (name, bytes) in self.files() {
            fs::write(dir.join(name), bytes)?;
        }
        Ok(())
    }

    /// Digest over every persisted file.
    pub fn digest(&self) -> Hash32 {
        let files = self.files();
        let parts: Vec<&[u8]> = files.iter().flat_map(|(n, b)| [n.as_bytes(), b.as_slice()]).collect();
        sha256_parts(&parts)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Ledger(#[from] BlockFileError),
    #[error("{SCENARIO_FILE}: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("{0}")]
    Malformed(String),
}

/// World state rebuilt from a ledger directory.
#[derive(Clone, Debug)]
pub struct Replay {
    pub pipeline: Pipeline,
    pub state_hash: Hash32,
    pub dump: String,
    /// Whether the rebuilt state equals `state.dump`, when that file exists.
    pub matches_dump: Option<bool>,
}

fn load_scenario(dir: &Path) -> Result<Option<ScenarioConfig>, ArtifactError> {
    let path = dir.join(SCENARIO_FILE);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(ScenarioConfig::from_json(&fs::read_to_string(path)?)?))
}

/// Rebuilds state from `blocks.dat`. The pipeline and step budget come from
/// `scenario.json` when present; otherwise endorsed write sets are replayed.
pub fn replay_dir(dir: &Path) -> Result<Replay, ArtifactError> {
    let blocks = read_ledger(dir)?.verify()?;
    let scenario = load_scenario(dir)?;
    let pipeline = scenario.as_ref().map_or(Pipeline::ExecuteOrderValidate, |s| s.pipeline);
    let state = match (pipeline, &scenario) {
        (Pipeline::OrderExecute, Some(s)) => reexecute(&blocks, execution_limit(s))
            .map_err(ArtifactError::Malformed)?
            .state()
            .clone(),
        _ => replay_state(&blocks).map_err(ArtifactError::Malformed)?,
    };
    let dump = state.dump();
    let path = dir.join(STATE_FILE);
    let matches_dump = if path.exists() { Some(fs::read_to_string(path)? == dump) } else { None };
    Ok(Replay {
        pipeline,
        state_hash: state.state_hash(),
        dump,
        matches_dump,
    })
}

/// Checks `report` runs over a run directory.
#[derive(Clone, Debug)]
pub struct Report {
    pub summary: Summary,
    pub metrics: Metrics,
    pub checks: Vec<(String, bool)>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok)
    }

    pub fn render(&self) -> String {
        let mut out = self.summary.render();
        for (name, ok) in &self.checks {
            let _ = writeln!(out, "check.{name}: {}", if *ok { "pass" } else { "fail" });
        }
        out
    }
}

/// Recomputes metrics from a run directory's ledger and trace and compares
/// them with the persisted tables.
pub fn report_dir(dir: &Path) -> Result<Report, ArtifactError> {
    let scenario = load_scenario(dir)?
        .ok_or_else(|| ArtifactError::Malformed(format!("{} missing from {}", SCENARIO_FILE, dir.display())))?;
    let summary = Summary::parse(&fs::read_to_string(dir.join(SUMMARY_FILE))?);
    let trace = parse_trace(&fs::read_to_string(dir.join(TRACE_FILE))?);
    let ledger = read_ledger(dir)?;
    let mut checks = Vec::new();
    let blocks = match ledger.verify() {
        Ok(b) => {
            checks.push(("ledger-verifies".to_string(), true));
            b
        }
        Err(_) => {
            checks.push(("ledger-verifies".to_string(), false));
            ledger.decode_blocks().unwrap_or_default()
        }
    };
    let metrics = derive_metrics(&scenario, &blocks, &trace).map_err(ArtifactError::Malformed)?;
    checks.push((
        "metrics-match".into(),
        fs::read_to_string(dir.join(METRICS_FILE))? == metrics.metrics_csv(),
    ));
    checks.push((
        "blacklist-match".into(),
        fs::read_to_string(dir.join(BLACKLIST_FILE))? == metrics.blacklist_csv(),
    ));
    checks.push((
        "verdicts-match".into(),
        fs::read_to_string(dir.join(VERDICTS_FILE))? == verdicts_from_blocks(&blocks),
    ));
    if !scenario.is_lottery() {
        let replayed = replay_dir(dir).map(|r| r.matches_dump == Some(true)).unwrap_or(false);
        checks.push(("replay-matches".into(), replayed));
    }
    for (name, ok) in &summary.invariants {
        checks.push((format!("invariant.{name}"), *ok));
    }
    Ok(Report {
        summary,
        metrics,
        checks,
    })
}
