use std::collections::{BTreeMap, BTreeSet};

use super::{Endorsement, Policy, ProposalResponse};
use crate::chaincode::Proposal;
use crate::crypto::Hash32;
use crate::ledger::{ChannelConfig, Identity, Transaction};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CollectionError {
    #[error("endorsements disagree on read/write sets ({groups} distinct groups), policy unsatisfied")]
    Mismatch { groups: usize },
    #[error("endorsement policy not satisfied before timeout ({received} responses, {failures} failures)")]
    Timeout { received: usize, failures: usize },
    #[error("no endorsement policy for chaincode {0}")]
    NoPolicy(String),
}

/// Accumulates proposal responses in arrival order and yields an envelope
/// as soon as one group of endorsements with byte-identical read/write sets
/// satisfies the policy.
#[derive(Debug)]
pub struct EndorsementCollector<'a> {
    proposal: Proposal,
    policy: &'a Policy,
    config: &'a ChannelConfig,
    groups: BTreeMap<Hash32, Vec<Endorsement>>,
    seen: BTreeSet<String>,
    received: usize,
    failures: usize,
    rejected_signatures: usize,
}

impl<'a> EndorsementCollector<'a> {
    pub fn new(proposal: Proposal, config: &'a ChannelConfig) -> Result<Self, CollectionError> {
        let policy = config
            .endorsement_policies
            .get(&proposal.chaincode_id)
            .ok_or_else(|| CollectionError::NoPolicy(proposal.chaincode_id.clone()))?;
        Ok(EndorsementCollector {
            proposal,
            policy,
            config,
            groups: BTreeMap::new(),
            seen: BTreeSet::new(),
            received: 0,
            failures: 0,
            rejected_signatures: 0,
        })
    }

    pub fn rejected_signatures(&self) -> usize {
        self.rejected_signatures
    }

    /// Offers one response. Returns the ready-to-broadcast transaction when
    /// this response completes a policy-satisfying group.
    pub fn offer(&mut self, response: ProposalResponse) -> Option<Transaction> {
        self.received += 1;
        if response.tx_id != self.proposal.tx_id || !self.seen.insert(response.endorser.clone()) {
            return None;
        }
        let Some(endorsement) = response.endorsement() else {
            self.failures += 1;
            return None;
        };
        let verified = self
            .config
            .identity(&endorsement.endorser)
            .is_some_and(|id| endorsement.verify(id))
            && endorsement.tx_id == self.proposal.tx_id
            && endorsement.chaincode_id == self.proposal.chaincode_id;
        if !verified {
            self.rejected_signatures += 1;
            return None;
        }
        let digest = endorsement.rwset_digest();
        let group = self.groups.entry(digest).or_default();
        group.push(endorsement.clone());
        let signers: Vec<&Identity> = group
            .iter()
            .filter_map(|e| self.config.identity(&e.endorser))
            .collect();
        if !self.policy.evaluate(&signers) {
            return None;
        }
        let mut tx = self.proposal.to_transaction();
        tx.endorsements = group.clone();
        Some(tx)
    }

    /// Outcome when the timeout fires with no satisfying group.
    pub fn timeout(&self) -> CollectionError {
        if self.groups.len() > 1 {
            CollectionError::Mismatch {
                groups: self.groups.len(),
            }
        } else {
            CollectionError::Timeout {
                received: self.received,
                failures: self.failures,
            }
        }
    }
}

/// Synchronous collection over an already-gathered response list.
pub fn collect_endorsements(
    proposal: &Proposal,
    responses: impl IntoIterator<Item = ProposalResponse>,
    config: &ChannelConfig,
) -> Result<Transaction, CollectionError> {
    let mut collector = EndorsementCollector::new(proposal.clone(), config)?;
    for response in responses {
        if let Some(tx) = collector.offer(response) {
            return Ok(tx);
        }
    }
    Err(collector.timeout())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::endorsement::endorse;
    use crate::endorsement::tests::sample_sim;
    use crate::chaincode::SimulationResult;

    fn network() -> (ChannelConfig, Vec<(Identity, KeyPair)>) {
        let peers: Vec<(Identity, KeyPair)> = (1..=3)
            .map(|i| Identity::generate(&format!("peer0.org{i}"), &format!("org{i}"), 3))
            .collect();
        let mut b = ChannelConfig::builder("ch")
            .orderers(vec!["o".into()])
            .modification_rules("org1".parse().unwrap())
            .endorsement_policy("token", "KOF(2,org1,org2,org3)".parse().unwrap());
        for (id, _) in &peers {
            b = b.identity(id.clone());
        }
        (b.build(), peers)
    }

    fn respond(peer: &(Identity, KeyPair), proposal: &Proposal, sim: SimulationResult) -> ProposalResponse {
        endorse(&peer.0.id, &peer.1, proposal, Ok(sim))
    }

    #[test]
    fn consistent_endorsers_satisfy_two_of_three() {
        let (cfg, peers) = network();
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let responses: Vec<_> = peers.iter().map(|p| respond(p, &proposal, sample_sim())).collect();
        let tx = collect_endorsements(&proposal, responses, &cfg).unwrap();
        assert!(tx.endorsements.len() >= 2);
        assert_eq!(tx.tx_id, proposal.tx_id);
        let first = tx.endorsements[0].rwset_digest();
        assert!(tx.endorsements.iter().all(|e| e.rwset_digest() == first));
    }

    #[test]
    fn divergent_states_cause_mismatch() {
        let (cfg, peers) = network();
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let responses: Vec<_> = peers
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut sim = sample_sim();
                // Each endorser read at a different committed height.
                sim.read_set.entries.insert(b"token\0a".to_vec(), Some(crate::state::Version::new(i as u64, 0)));
                respond(p, &proposal, sim)
            })
            .collect();
        assert_eq!(collect_endorsements(&proposal, responses, &cfg), Err(CollectionError::Mismatch { groups: 3 }));
    }

    #[test]
    fn forged_writeset_is_outvoted_by_honest_majority() {
        let (cfg, peers) = network();
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let mut forged = sample_sim();
        forged.write_set.put(b"token\0mallory".to_vec(), b"1000000".to_vec());
        let responses = vec![
            respond(&peers[0], &proposal, forged),
            respond(&peers[1], &proposal, sample_sim()),
            respond(&peers[2], &proposal, sample_sim()),
        ];
        let tx = collect_endorsements(&proposal, responses, &cfg).unwrap();
        // Oracle: majority-matching filter over the endorsement multiset.
        let honest = sample_sim();
        assert_eq!(tx.endorsements.len(), 2);
        for e in &tx.endorsements {
            assert_eq!(e.write_set, honest.write_set);
            assert_ne!(e.endorser, "peer0.org1");
        }
    }

    #[test]
    fn bad_signatures_are_discarded_at_collection() {
        let (cfg, peers) = network();
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let mut bad = respond(&peers[0], &proposal, sample_sim());
        if let super::super::ResponseStatus::Ok(e) = &mut bad.status {
            e.signature.bytes[0] ^= 1;
        }
        let mut collector = EndorsementCollector::new(proposal.clone(), &cfg).unwrap();
        assert!(collector.offer(bad).is_none());
        assert!(collector.offer(respond(&peers[1], &proposal, sample_sim())).is_none());
        assert_eq!(collector.rejected_signatures(), 1);
        assert_eq!(collector.timeout(), CollectionError::Timeout { received: 2, failures: 0 });
        assert!(collector.offer(respond(&peers[2], &proposal, sample_sim())).is_some());
    }

    #[test]
    fn duplicate_responses_from_one_endorser_count_once() {
        let (cfg, peers) = network();
        let proposal = Proposal::new("alice", 1, "token", "transfer", vec![]);
        let r = respond(&peers[0], &proposal, sample_sim());
        assert!(collect_endorsements(&proposal, vec![r.clone(), r], &cfg).is_err());
    }
}
