//! Scenario runner: wires peers, orderers, clients and faults together,
//! runs a declarative workload and persists ledgers, traces and metrics.

mod artifacts;
mod config;
pub mod presets;
mod run;

pub use artifacts::{
    derive_metrics, parse_trace, replay_dir, report_dir, ArtifactError, BlacklistRow, Metrics, Replay, Report,
    RunArtifacts, Summary, TraceLine, WindowRow, BLACKLIST_FILE, BLACKLIST_HEADER, FORKS_FILE, FORKS_HEADER,
    METRICS_FILE, METRICS_HEADER, SCENARIO_FILE, STATE_FILE, SUMMARY_FILE, TRACE_FILE, VERDICTS_FILE,
};
pub use config::{
    ChannelSpec, ClientSpec, ConsensusSpec, OrgSpec, Pipeline, Roster, ScenarioConfig, ScenarioError, WorkloadItem,
    CHAINCODES, DEFAULT_BLACKLIST_THRESHOLD, DEFAULT_ENDORSEMENT_BUDGET,
};
pub use run::{channel_setup, execution_limit, reexecute, reference_peer, run_scenario, standard_registry};
