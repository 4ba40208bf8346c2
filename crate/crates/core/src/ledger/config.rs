use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use super::{Identity, Signature};
use crate::codec;
use crate::crypto::KeyPair;
use crate::endorsement::Policy;

pub const BACKEND_SOLO: &str = "solo";
pub const BACKEND_CFT: &str = "cft-replicated";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusParams {
    pub backend: String,
    pub batch_max_txs: usize,
    pub batch_timeout: u64,
    #[serde(default)]
    pub f_tolerated: usize,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            backend: BACKEND_SOLO.to_string(),
            batch_max_txs: 10,
            batch_timeout: 5,
            f_tolerated: 0,
        }
    }
}

/// Who may broadcast to and receive blocks from the ordering service. Each
/// rule is evaluated against the single requesting identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessRules {
    pub broadcast: Policy,
    pub deliver: Policy,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelConfig {
    pub channel_id: String,
    pub identities: Vec<Identity>,
    pub orderer_addresses: Vec<String>,
    pub consensus: ConsensusParams,
    pub access: Option<AccessRules>,
    pub modification_rules: Option<Policy>,
    #[serde(default)]
    pub endorsement_policies: BTreeMap<String, Policy>,
    /// Cross-chaincode call grants: caller chaincode → callees it may invoke.
    #[serde(default)]
    pub invoke_grants: BTreeMap<String, BTreeSet<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid channel config field `{field}`: {reason}")]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl ConfigError {
    fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub struct ChannelConfigBuilder(ChannelConfig);

impl ChannelConfigBuilder {
    pub fn identity(mut self, identity: Identity) -> Self {
        self.0.identities.push(identity);
        self
    }

    pub fn orderers(mut self, orderers: Vec<String>) -> Self {
        self.0.orderer_addresses = orderers;
        self
    }

    pub fn consensus(mut self, params: ConsensusParams) -> Self {
        self.0.consensus = params;
        self
    }

    pub fn access(mut self, rules: AccessRules) -> Self {
        self.0.access = Some(rules);
        self
    }

    pub fn modification_rules(mut self, policy: Policy) -> Self {
        self.0.modification_rules = Some(policy);
        self
    }

    pub fn endorsement_policy(mut self, chaincode: &str, policy: Policy) -> Self {
        self.0.endorsement_policies.insert(chaincode.to_string(), policy);
        self
    }

    pub fn grant_invoke(mut self, caller: &str, callee: &str) -> Self {
        self.0
            .invoke_grants
            .entry(caller.to_string())
            .or_default()
            .insert(callee.to_string());
        self
    }

    pub fn build(self) -> ChannelConfig {
        self.0
    }
}

impl ChannelConfig {
    pub fn builder(channel_id: &str) -> ChannelConfigBuilder {
        ChannelConfigBuilder(ChannelConfig {
            channel_id: channel_id.to_string(),
            identities: Vec::new(),
            orderer_addresses: Vec::new(),
            consensus: ConsensusParams::default(),
            access: None,
            modification_rules: None,
            endorsement_policies: BTreeMap::new(),
            invoke_grants: BTreeMap::new(),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.channel_id.is_empty() {
            return Err(ConfigError::new("channel_id", "must not be empty"));
        }
        let Some(rules) = &self.modification_rules else {
            return Err(ConfigError::new("modification_rules", "missing"));
        };
        rules
            .validate()
            .map_err(|e| ConfigError::new("modification_rules", e.to_string()))?;
        let mut seen = BTreeSet::new();
        for (i, identity) in self.identities.iter().enumerate() {
            if !seen.insert(identity.id.as_str()) {
                return Err(ConfigError::new(format!("identities[{i}].id"), format!("duplicate id {}", identity.id)));
            }
            if identity.public_key.is_empty() {
                return Err(ConfigError::new(format!("identities[{i}].public_key"), "must not be empty"));
            }
        }
        if self.orderer_addresses.is_empty() {
            return Err(ConfigError::new("orderer_addresses", "at least one orderer required"));
        }
        let c = &self.consensus;
        match c.backend.as_str() {
            BACKEND_SOLO => {
                if self.orderer_addresses.len() != 1 {
                    return Err(ConfigError::new("consensus.backend", "solo ordering uses exactly one orderer"));
                }
            }
            BACKEND_CFT => {
                if self.orderer_addresses.len() < 2 * c.f_tolerated + 1 {
                    return Err(ConfigError::new(
                        "consensus.f_tolerated",
                        format!(
                            "{} orderers cannot tolerate {} crash faults (need 2f+1)",
                            self.orderer_addresses.len(),
                            c.f_tolerated
                        ),
                    ));
                }
            }
            other => return Err(ConfigError::new("consensus.backend", format!("unknown backend {other:?}"))),
        }
        if c.batch_max_txs == 0 {
            return Err(ConfigError::new("consensus.batch_max_txs", "must be positive"));
        }
        if c.batch_timeout == 0 {
            return Err(ConfigError::new("consensus.batch_timeout", "must be positive"));
        }
        for (cc, policy) in &self.endorsement_policies {
            policy
                .validate()
                .map_err(|e| ConfigError::new(format!("endorsement_policies.{cc}"), e.to_string()))?;
        }
        Ok(())
    }

    pub fn identity(&self, id: &str) -> Option<&Identity> {
        self.identities.iter().find(|i| i.id == id)
    }

    pub fn may_broadcast(&self, client: &str) -> bool {
        self.access_check(client, |a| &a.broadcast)
    }

    pub fn may_deliver(&self, requester: &str) -> bool {
        self.access_check(requester, |a| &a.deliver)
    }

    fn access_check(&self, who: &str, rule: impl Fn(&AccessRules) -> &Policy) -> bool {
        let Some(identity) = self.identity(who) else {
            return false;
        };
        match &self.access {
            Some(access) => rule(access).evaluate(&[identity]),
            None => true,
        }
    }

    pub fn may_invoke(&self, caller: &str, callee: &str) -> bool {
        caller == callee
            || self
                .invoke_grants
                .get(caller)
                .is_some_and(|callees| callees.contains(callee))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfigChange {
    AddIdentity(Identity),
    RemoveIdentity(String),
    SetModificationRules(Policy),
    SetEndorsementPolicy { chaincode: String, policy: Policy },
    SetAccess(AccessRules),
    SetOrderers(Vec<String>),
    SetBatch { max_txs: usize, timeout: u64 },
    GrantInvoke { caller: String, callee: String },
}

/// A signed set of configuration changes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigUpdate {
    pub channel_id: String,
    pub changes: Vec<ConfigChange>,
    pub signatures: Vec<Signature>,
}

impl ConfigUpdate {
    pub fn new(channel_id: &str, changes: Vec<ConfigChange>) -> Self {
        ConfigUpdate {
            channel_id: channel_id.to_string(),
            changes,
            signatures: Vec::new(),
        }
    }

    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::encode(&("config-update", &self.channel_id, &self.changes))
    }

    pub fn sign(mut self, signer: &str, key: &KeyPair) -> Self {
        let bytes = key.sign(&self.signing_bytes());
        self.signatures.push(Signature {
            signer: signer.to_string(),
            bytes,
        });
        self
    }
}

/// Applies `update` if its verified signers satisfy the *current*
/// modification rules, returning the new configuration.
pub fn apply_config_update(current: &ChannelConfig, update: &ConfigUpdate) -> Result<ChannelConfig, ConfigError> {
    if update.channel_id != current.channel_id {
        return Err(ConfigError::new("channel_id", "update targets a different channel"));
    }
    let message = update.signing_bytes();
    let mut signers: Vec<&Identity> = Vec::new();
    for sig in &update.signatures {
        if let Some(identity) = current.identity(&sig.signer) {
            if sig.verify(identity, &message) && !signers.iter().any(|s| s.id == identity.id) {
                signers.push(identity);
            }
        }
    }
    let rules = current
        .modification_rules
        .as_ref()
        .ok_or_else(|| ConfigError::new("modification_rules", "missing"))?;
    if !rules.evaluate(&signers) {
        return Err(ConfigError::new("signatures", "update not authorized by modification rules"));
    }
    let mut next = current.clone();
    for change in &update.changes {
        match change.clone() {
            ConfigChange::AddIdentity(identity) => next.identities.push(identity),
            ConfigChange::RemoveIdentity(id) => next.identities.retain(|i| i.id != id),
            ConfigChange::SetModificationRules(p) => next.modification_rules = Some(p),
            ConfigChange::SetEndorsementPolicy { chaincode, policy } => {
                next.endorsement_policies.insert(chaincode, policy);
            }
            ConfigChange::SetAccess(rules) => next.access = Some(rules),
            ConfigChange::SetOrderers(orderers) => next.orderer_addresses = orderers,
            ConfigChange::SetBatch { max_txs, timeout } => {
                next.consensus.batch_max_txs = max_txs;
                next.consensus.batch_timeout = timeout;
            }
            ConfigChange::GrantInvoke { caller, callee } => {
                next.invoke_grants.entry(caller).or_default().insert(callee);
            }
        }
    }
    next.validate()?;
    Ok(next)
}
