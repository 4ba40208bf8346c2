//! Endorsement policies, endorsement signing and client-side collection.

mod collect;
mod policy;

pub use collect::{collect_endorsements, CollectionError, EndorsementCollector};
pub use policy::{evaluate_policy, Policy, PolicyError, Principal};

use serde::{Deserialize, Serialize};

use crate::chaincode::{Proposal, SimulationFailure, SimulationResult};
use crate::codec;
use crate::crypto::{Hash32, KeyPair};
use crate::ledger::{Identity, Signature};
use crate::state::{ReadSet, WriteSet};

/// An endorser's signed statement of a proposal's simulated effects.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Endorsement {
    pub endorser: String,
    pub read_set: ReadSet,
    pub write_set: WriteSet,
    #[serde(with = "hex::serde")]
    pub response: Vec<u8>,
    pub chaincode_id: String,
    pub tx_id: Hash32,
    pub signature: Signature,
}

#[derive(Serialize)]
struct SignedFields<'a> {
    domain: &'static str,
    endorser: &'a str,
    read_set: &'a ReadSet,
    write_set: &'a WriteSet,
    response: &'a [u8],
    chaincode_id: &'a str,
    tx_id: &'a Hash32,
}

impl Endorsement {
    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::encode(&SignedFields {
            domain: "endorsement",
            endorser: &self.endorser,
            read_set: &self.read_set,
            write_set: &self.write_set,
            response: &self.response,
            chaincode_id: &self.chaincode_id,
            tx_id: &self.tx_id,
        })
    }

    pub fn verify(&self, endorser: &Identity) -> bool {
        self.signature.signer == self.endorser && self.signature.verify(endorser, &self.signing_bytes())
    }

    /// Digest of the read and write sets; endorsements can only be combined
    /// into one transaction when these agree.
    pub fn rwset_digest(&self) -> Hash32 {
        codec::digest(&(&self.read_set, &self.write_set))
    }

    /// Re-signs after the fields were modified (used to model byzantine endorsers).
    pub fn resign(&mut self, key: &KeyPair) {
        self.signature.bytes = key.sign(&self.signing_bytes());
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResponseStatus {
    Ok(Endorsement),
    Failure(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalResponse {
    pub endorser: String,
    pub tx_id: Hash32,
    pub status: ResponseStatus,
}

impl ProposalResponse {
    pub fn endorsement(&self) -> Option<&Endorsement> {
        match &self.status {
            ResponseStatus::Ok(e) => Some(e),
            ResponseStatus::Failure(_) => None,
        }
    }
}

/// Default endorsement step: sign the simulation result with the endorser's
/// local identity. A failed simulation yields a failure response.
pub fn endorse(
    endorser: &str,
    key: &KeyPair,
    proposal: &Proposal,
    sim: Result<SimulationResult, SimulationFailure>,
) -> ProposalResponse {
    let status = match sim {
        Ok(sim) => {
            let mut endorsement = Endorsement {
                endorser: endorser.to_string(),
                read_set: sim.read_set,
                write_set: sim.write_set,
                response: sim.response,
                chaincode_id: proposal.chaincode_id.clone(),
                tx_id: proposal.tx_id,
                signature: Signature {
                    signer: endorser.to_string(),
                    bytes: Vec::new(),
                },
            };
            endorsement.resign(key);
            ResponseStatus::Ok(endorsement)
        }
        Err(failure) => ResponseStatus::Failure(failure.to_string()),
    };
    ProposalResponse {
        endorser: endorser.to_string(),
        tx_id: proposal.tx_id,
        status,
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::state::{Version, WriteSet};

    pub(crate) fn sample_sim() -> SimulationResult {
        let mut read_set = ReadSet::default();
        read_set.record(b"token\0a".to_vec(), Some(Version::new(1, 0)));
        let mut write_set = WriteSet::default();
        write_set.put(b"token\0a".to_vec(), b"5".to_vec());
        SimulationResult {
            read_set,
            write_set,
            response: b"ok".to_vec(),
            steps_used: 3,
            events: Vec::new(),
        }
    }

    #[test]
    fn endorsement_signature_verifies() {
        let (peer, key) = Identity::generate("peer0.org1", "org1", 1);
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let resp = endorse(&peer.id, &key, &proposal, Ok(sample_sim()));
        let e = resp.endorsement().unwrap();
        assert!(e.verify(&peer));
        assert_eq!(e.tx_id, proposal.tx_id);
    }

    #[test]
    fn tampering_after_signing_breaks_verification() {
        let (peer, key) = Identity::generate("peer0.org1", "org1", 1);
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let mut e = endorse(&peer.id, &key, &proposal, Ok(sample_sim())).endorsement().unwrap().clone();
        e.write_set.put(b"token\0a".to_vec(), b"6".to_vec());
        assert!(!e.verify(&peer));
    }

    #[test]
    fn identical_simulations_differ_only_in_endorser_and_signature() {
        let (p1, k1) = Identity::generate("peer0.org1", "org1", 1);
        let (p2, k2) = Identity::generate("peer0.org2", "org2", 1);
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let e1 = endorse(&p1.id, &k1, &proposal, Ok(sample_sim())).endorsement().unwrap().clone();
        let e2 = endorse(&p2.id, &k2, &proposal, Ok(sample_sim())).endorsement().unwrap().clone();
        assert_eq!(e1.rwset_digest(), e2.rwset_digest());
        assert_eq!(e1.response, e2.response);
        assert_ne!(e1.signature, e2.signature);
        let mut e2_relabeled = e2.clone();
        e2_relabeled.endorser = e1.endorser.clone();
        e2_relabeled.signature = e1.signature.clone();
        assert_eq!(e1, e2_relabeled);
    }

    #[test]
    fn failed_simulation_yields_failure_without_endorsement() {
        let (peer, key) = Identity::generate("peer0.org1", "org1", 1);
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let resp = endorse(&peer.id, &key, &proposal, Err(SimulationFailure::BudgetExhausted { max_steps: 10 }));
        assert!(resp.endorsement().is_none());
        assert!(matches!(resp.status, ResponseStatus::Failure(_)));
    }
}
