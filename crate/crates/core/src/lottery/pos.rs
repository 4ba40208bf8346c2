use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::ChainBlock;
use crate::crypto::{verify, KeyPair};
use crate::netsim::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    /// Weight is the validator's share of all coins.
    RelativeValue,
    /// Weight is coins times whole days held.
    CoinAge,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validator {
    pub coins: u64,
    pub acquired_at: Tick,
    pub deposit: u64,
    pub slashed: bool,
    pub public_key: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum StakeError {
    #[error("no unslashed validator with positive weight")]
    NoEligible,
    #[error("unknown validator {0}")]
    Unknown(String),
    #[error("invalid evidence against {validator}: {reason}")]
    InvalidEvidence { validator: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StakeLedger {
    validators: BTreeMap<String, Validator>,
    /// Ticks per day for coin age.
    pub day_length: Tick,
    /// Rejected evidence and slashing events.
    pub audit: Vec<String>,
}

impl StakeLedger {
    pub fn new(day_length: Tick) -> Self {
        StakeLedger {
            validators: BTreeMap::new(),
            day_length: day_length.max(1),
            audit: Vec::new(),
        }
    }

    /// Registers a validator with its deposit locked.
    pub fn stake(&mut self, id: &str, coins: u64, deposit: u64, acquired_at: Tick, public_key: Vec<u8>) {
        self.validators.insert(
            id.to_string(),
            Validator {
                coins,
                acquired_at,
                deposit,
                slashed: false,
                public_key,
            },
        );
    }

    pub fn get(&self, id: &str) -> Option<&Validator> {
        self.validators.get(id)
    }

    pub fn validators(&self) -> impl Iterator<Item = (&String, &Validator)> {
        self.validators.iter()
    }

    pub fn total_coins(&self) -> u64 {
        self.validators.values().map(|v| v.coins).sum()
    }

    /// Lottery weight; zero for slashed validators.
    pub fn weight(&self, id: &str, mode: SelectionMode, now: Tick) -> u128 {
        let Some(v) = self.validators.get(id) else {
            return 0;
        };
        if v.slashed {
            return 0;
        }
        match mode {
            SelectionMode::RelativeValue => u128::from(v.coins),
            SelectionMode::CoinAge => {
                let days = now.saturating_sub(v.acquired_at) / self.day_length;
                u128::from(v.coins) * u128::from(days)
            }
        }
    }

    /// `coins / total coins`.
    pub fn relative_value(&self, id: &str) -> f64 {
        let total = self.total_coins();
        match (self.validators.get(id), total) {
            (Some(v), t) if t > 0 => v.coins as f64 / t as f64,
            _ => 0.0,
        }
    }

    pub fn select_with(&self, mode: SelectionMode, now: Tick, rng: &mut impl Rng) -> Result<String, StakeError> {
        let weights: Vec<(&String, u128)> = self
            .validators
            .keys()
            .map(|id| (id, self.weight(id, mode, now)))
            .filter(|(_, w)| *w > 0)
            .collect();
        let total: u128 = weights.iter().map(|(_, w)| w).sum();
        if total == 0 {
            return Err(StakeError::NoEligible);
        }
        let mut draw = rng.gen_range(0..total);
        for (id, w) in weights {
            if draw < w {
                return Ok(id.clone());
            }
            draw -= w;
        }
        unreachable!("draw is below the total weight")
    }

    /// Resets coin age and pays the fee on top of the returned deposit.
    pub fn reward(&mut self, id: &str, fee: u64, now: Tick) {
        if let Some(v) = self.validators.get_mut(id) {
            v.coins += fee;
            v.acquired_at = now;
        }
    }

    /// Forfeits the deposit of a validator that signed two blocks at one
    /// height on different parents. Bad evidence is only recorded.
    pub fn slash(&mut self, evidence: &DoubleSignEvidence) -> Result<u64, StakeError> {
        let id = &evidence.validator;
        let reject = |audit: &mut Vec<String>, reason: &str| {
            audit.push(format!("rejected evidence against {id}: {reason}"));
            Err(StakeError::InvalidEvidence {
                validator: id.clone(),
                reason: reason.to_string(),
            })
        };
        let Some(v) = self.validators.get(id) else {
            return reject(&mut self.audit, "unknown validator");
        };
        let (a, b) = (&evidence.first, &evidence.second);
        if a.block.producer != *id || b.block.producer != *id {
            return reject(&mut self.audit, "producer mismatch");
        }
        if !a.verify(&v.public_key) || !b.verify(&v.public_key) {
            return reject(&mut self.audit, "bad signature");
        }
        if a.block.height != b.block.height {
            return reject(&mut self.audit, "different heights");
        }
        if a.block.parent == b.block.parent {
            return reject(&mut self.audit, "same parent");
        }
        let v = self.validators.get_mut(id).expect("checked above");
        let forfeited = std::mem::take(&mut v.deposit);
        v.slashed = true;
        self.audit.push(format!("slashed {id} at height {}: {forfeited} forfeited", a.block.height));
        Ok(forfeited)
    }
}

/// Weighted draw from a seed.
pub fn select_validator_pos(ledger: &StakeLedger, mode: SelectionMode, now: Tick, seed: u64) -> Result<String, StakeError> {
    ledger.select_with(mode, now, &mut ChaCha8Rng::seed_from_u64(seed))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedHeader {
    pub block: ChainBlock,
    pub signature: Vec<u8>,
}

impl SignedHeader {
    pub fn sign(block: ChainBlock, key: &KeyPair) -> Self {
        let signature = key.sign(block.hash().as_bytes());
        SignedHeader { block, signature }
    }

    pub fn verify(&self, public_key: &[u8]) -> bool {
        verify(public_key, self.block.hash().as_bytes(), &self.signature)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DoubleSignEvidence {
    pub validator: String,
    pub first: SignedHeader,
    pub second: SignedHeader,
}
