use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::endorsement::Policy;
use crate::lottery::LotteryConfig;
use crate::netsim::{FaultKind, FaultSpec, LinkModel, Tick};

pub const DEFAULT_BLACKLIST_THRESHOLD: u64 = 10;
pub const DEFAULT_ENDORSEMENT_BUDGET: u64 = 100_000;

/// Chaincodes every permissioned scenario has installed.
pub const CHAINCODES: [&str; 7] = ["token", "token223", "token777", "registry", "rental", "kv", "loop"];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    #[default]
    ExecuteOrderValidate,
    OrderExecute,
}

impl Pipeline {
    pub fn as_str(self) -> &'static str {
        match self {
            Pipeline::ExecuteOrderValidate => "execute-order-validate",
            Pipeline::OrderExecute => "order-execute",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelSpec {
    #[serde(default = "default_channel")]
    pub id: String,
    #[serde(default = "default_batch")]
    pub batch_max_txs: usize,
    #[serde(default = "default_timeout")]
    pub batch_timeout: Tick,
    /// Applied to every installed chaincode. Defaults to a majority of
    /// the roster's organizations.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endorsement_policy: Option<Policy>,
}

fn default_channel() -> String {
    "ch".into()
}
fn default_batch() -> usize {
    10
}
fn default_timeout() -> Tick {
    5
}

impl Default for ChannelSpec {
    fn default() -> Self {
        ChannelSpec {
            id: default_channel(),
            batch_max_txs: default_batch(),
            batch_timeout: default_timeout(),
            endorsement_policy: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrgSpec {
    pub name: String,
    #[serde(default = "one")]
    pub peers: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClientSpec {
    pub id: String,
    pub org: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Roster {
    pub orgs: Vec<OrgSpec>,
    pub clients: Vec<ClientSpec>,
    #[serde(default = "one")]
    pub orderers: usize,
}

impl Default for Roster {
    fn default() -> Self {
        Roster {
            orgs: Vec::new(),
            clients: Vec::new(),
            orderers: 1,
        }
    }
}

impl Roster {
    /// Peer ids in roster order: `peer{i}.{org}`.
    pub fn peers(&self) -> Vec<(String, String)> {
        self.orgs
            .iter()
            .flat_map(|o| (0..o.peers).map(move |i| (format!("peer{i}.{}", o.name), o.name.clone())))
            .collect()
    }

    pub fn orderer_ids(&self) -> Vec<String> {
        (0..self.orderers).map(|i| format!("orderer{i}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ConsensusSpec {
    Solo,
    Cft,
    /// Permissionless chain; the roster, pipeline and workload are unused.
    Lottery(LotteryConfig),
}

impl Default for ConsensusSpec {
    fn default() -> Self {
        ConsensusSpec::Solo
    }
}

/// Argument templates may use `{n}` (repetition index) and `{client}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WorkloadItem {
    Invoke {
        at: Tick,
        client: String,
        chaincode: String,
        operation: String,
        #[serde(default)]
        args: Vec<String>,
    },
    Periodic {
        client: String,
        chaincode: String,
        operation: String,
        #[serde(default)]
        args: Vec<String>,
        every: Tick,
        #[serde(default)]
        from: Tick,
        #[serde(default)]
        until: Option<Tick>,
    },
    /// Seeded token transfers between the listed clients.
    RandomTransfers {
        clients: Vec<String>,
        #[serde(default = "default_token")]
        chaincode: String,
        every: Tick,
        max_amount: u64,
        #[serde(default)]
        from: Tick,
        #[serde(default)]
        until: Option<Tick>,
    },
}

fn default_token() -> String {
    "token".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration: Tick,
    #[serde(default)]
    pub pipeline: Pipeline,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub roster: Roster,
    #[serde(default)]
    pub consensus: ConsensusSpec,
    #[serde(default)]
    pub workload: Vec<WorkloadItem>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    /// Step budget per transaction. Order-execute without one runs
    /// unbounded; endorsement always uses a budget.
    #[serde(default)]
    pub execution_budget: Option<u64>,
    #[serde(default = "default_threshold")]
    pub blacklist_threshold: u64,
    #[serde(default = "default_window")]
    pub metrics_window: Tick,
    #[serde(default = "default_fanout")]
    pub gossip_fanout: usize,
    #[serde(default)]
    pub link: LinkModel,
}

fn default_threshold() -> u64 {
    DEFAULT_BLACKLIST_THRESHOLD
}
fn default_window() -> Tick {
    50
}
fn default_fanout() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{path}: {reason}")]
pub struct ScenarioError {
    pub path: String,
    pub reason: String,
}

fn err(path: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError {
        path: path.into(),
        reason: reason.into(),
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text).map_err(|e| err("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// The configured endorsement policy, or `KOF(n/2+1, orgs..)`.
    pub fn endorsement_policy(&self) -> Policy {
        if let Some(p) = &self.channel.endorsement_policy {
            return p.clone();
        }
        let orgs: Vec<Policy> = self.roster.orgs.iter().map(|o| Policy::org(&o.name)).collect();
        Policy::KOutOf(orgs.len() / 2 + 1, orgs)
    }

    pub fn is_lottery(&self) -> bool {
        matches!(self.consensus, ConsensusSpec::Lottery(_))
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.metrics_window == 0 {
            return Err(err("metrics_window", "must be positive"));
        }
        if let ConsensusSpec::Lottery(l) = &self.consensus {
            return l.validate().map_err(|e| err("consensus", e));
        }
        if self.channel.batch_max_txs == 0 {
            return Err(err("channel.batch_max_txs", "must be positive"));
        }
        if let Some(p) = &self.channel.endorsement_policy {
            p.validate().map_err(|e| err("channel.endorsement_policy", e.to_string()))?;
        }
        if self.blacklist_threshold == 0 {
            return Err(err("blacklist_threshold", "must be positive"));
        }
        if self.execution_budget == Some(0) {
            return Err(err("execution_budget", "must be positive when set"));
        }
        if self.roster.orgs.is_empty() {
            return Err(err("roster.orgs", "at least one organization is required"));
        }
        let mut orgs = BTreeSet::new();
        for (i, o) in self.roster.orgs.iter().enumerate() {
            if o.name.is_empty() || !orgs.insert(o.name.as_str()) {
                return Err(err(format!("roster.orgs[{i}].name"), "must be unique and non-empty"));
            }
            if o.peers == 0 {
                return Err(err(format!("roster.orgs[{i}].peers"), "must be positive"));
            }
        }
        if self.roster.orderers == 0 {
            return Err(err("roster.orderers", "must be positive"));
        }
        if matches!(self.consensus, ConsensusSpec::Solo) && self.roster.orderers != 1 {
            return Err(err("roster.orderers", "solo ordering runs exactly one orderer"));
        }
        let mut clients = BTreeSet::new();
        for (i, c) in self.roster.clients.iter().enumerate() {
            if !orgs.contains(c.org.as_str()) {
                return Err(err(format!("roster.clients[{i}].org"), format!("unknown organization `{}`", c.org)));
            }
            if !clients.insert(c.id.as_str()) {
                return Err(err(format!("roster.clients[{i}].id"), format!("duplicate client `{}`", c.id)));
            }
        }
        let client = |path: String, id: &str| {
            if clients.contains(id) {
                Ok(())
            } else {
                Err(err(path, format!("unknown client `{id}`")))
            }
        };
        let chaincode = |path: String, id: &str| {
            if CHAINCODES.contains(&id) {
                Ok(())
            } else {
                Err(err(path, format!("chaincode `{id}` is not installed")))
            }
        };
        for (i, w) in self.workload.iter().enumerate() {
            let p = |f: &str| format!("workload[{i}].{f}");
            match w {
                WorkloadItem::Invoke { client: c, chaincode: cc, .. } => {
                    client(p("client"), c)?;
                    chaincode(p("chaincode"), cc)?;
                }
                WorkloadItem::Periodic { client: c, chaincode: cc, every, .. } => {
                    client(p("client"), c)?;
                    chaincode(p("chaincode"), cc)?;
                    if *every == 0 {
                        return Err(err(p("every"), "must be positive"));
                    }
                }
                WorkloadItem::RandomTransfers { clients: cs, chaincode: cc, every, .. } => {
                    if cs.len() < 2 {
                        return Err(err(p("clients"), "needs at least two clients"));
                    }
                    for (j, c) in cs.iter().enumerate() {
                        client(format!("workload[{i}].clients[{j}]"), c)?;
                    }
                    chaincode(p("chaincode"), cc)?;
                    if *every == 0 {
                        return Err(err(p("every"), "must be positive"));
                    }
                }
            }
        }
        let peers: BTreeSet<String> = self.roster.peers().into_iter().map(|(id, _)| id).collect();
        let orderers: BTreeSet<String> = self.roster.orderer_ids().into_iter().collect();
        for (i, f) in self.faults.iter().enumerate() {
            let p = |f: &str| format!("faults[{i}].{f}");
            f.validate().map_err(|e| err(format!("faults[{i}]"), e))?;
            let known = peers.contains(&f.target) || orderers.contains(&f.target) || clients.contains(f.target.as_str());
            if !known {
                return Err(err(p("target"), format!("unknown node `{}`", f.target)));
            }
            match &f.kind {
                FaultKind::ByzantineEndorser { .. } if !peers.contains(&f.target) => {
                    return Err(err(p("target"), "byzantine endorser faults target peers"))
                }
                FaultKind::DosClient { .. } if !clients.contains(f.target.as_str()) => {
                    return Err(err(p("target"), "dos faults target clients"))
                }
                _ => {}
            }
        }
        Ok(())
    }
}
