use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub id: String,
    pub approval_stake: u64,
    pub reputation: i64,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DposError {
    #[error("{holder} already voted for {witness}")]
    DuplicateVote { holder: String, witness: String },
    #[error("unknown candidate {0}")]
    UnknownCandidate(String),
    #[error("unknown stakeholder {0}")]
    UnknownStakeholder(String),
}

/// Delegated witness election with a reputation floor.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WitnessRoster {
    candidates: BTreeMap<String, Candidate>,
    stakes: BTreeMap<String, u64>,
    votes: BTreeSet<(String, String)>,
    active: Vec<String>,
    pub witness_count: usize,
    pub epoch_length: u64,
    pub reputation_floor: i64,
    /// Elections that could not fill every seat.
    pub shortfalls: u64,
}

impl WitnessRoster {
    pub fn new(witness_count: usize, epoch_length: u64, reputation_floor: i64) -> Self {
        WitnessRoster {
            candidates: BTreeMap::new(),
            stakes: BTreeMap::new(),
            votes: BTreeSet::new(),
            active: Vec::new(),
            witness_count,
            epoch_length: epoch_length.max(1),
            reputation_floor,
            shortfalls: 0,
        }
    }

    pub fn add_candidate(&mut self, id: &str) {
        self.candidates.entry(id.to_string()).or_insert_with(|| Candidate {
            id: id.to_string(),
            approval_stake: 0,
            reputation: 0,
        });
    }

    pub fn set_stake(&mut self, holder: &str, coins: u64) {
        self.stakes.insert(holder.to_string(), coins);
    }

    pub fn candidate(&self, id: &str) -> Option<&Candidate> {
        self.candidates.get(id)
    }

    pub fn total_stake(&self) -> u64 {
        self.stakes.values().sum()
    }

    /// Adds the holder's stake to the witness's approval, once per pair.
    pub fn vote(&mut self, holder: &str, witness: &str) -> Result<(), DposError> {
        let stake = *self
            .stakes
            .get(holder)
            .ok_or_else(|| DposError::UnknownStakeholder(holder.to_string()))?;
        let candidate = self
            .candidates
            .get_mut(witness)
            .ok_or_else(|| DposError::UnknownCandidate(witness.to_string()))?;
        if !self.votes.insert((holder.to_string(), witness.to_string())) {
            return Err(DposError::DuplicateVote {
                holder: holder.to_string(),
                witness: witness.to_string(),
            });
        }
        candidate.approval_stake += stake;
        Ok(())
    }

    /// Drops candidates below the reputation floor, then seats the top
    /// `witness_count` by approval stake (ties by id).
    pub fn elect_witnesses(&mut self) -> &[String] {
        let floor = self.reputation_floor;
        self.candidates.retain(|_, c| c.reputation >= floor);
        let mut ranked: Vec<&Candidate> = self.candidates.values().collect();
        ranked.sort_by_key(|c| (Reverse(c.approval_stake), c.id.clone()));
        if ranked.len() < self.witness_count {
            self.shortfalls += 1;
        }
        self.active = ranked.iter().take(self.witness_count).map(|c| c.id.clone()).collect();
        &self.active
    }

    pub fn active(&self) -> &[String] {
        &self.active
    }

    /// Round-robin producer for a slot.
    pub fn scheduled(&self, slot: u64) -> Option<&String> {
        if self.active.is_empty() {
            return None;
        }
        self.active.get((slot % self.active.len() as u64) as usize)
    }

    pub fn is_epoch_boundary(&self, slot: u64) -> bool {
        slot % self.epoch_length == 0
    }

    /// A missed slot costs one reputation point.
    pub fn record_slot(&mut self, witness: &str, produced: bool) {
        if !produced {
            if let Some(c) = self.candidates.get_mut(witness) {
                c.reputation -= 1;
            }
        }
    }

    /// Changes the witness count when approving holders own more than half
    /// of all stake.
    pub fn propose_witness_count(&mut self, count: usize, approving: &[&str]) -> bool {
        let approving: BTreeSet<&str> = approving.iter().copied().collect();
        let approved: u64 = approving.iter().filter_map(|h| self.stakes.get(*h)).sum();
        if approved * 2 > self.total_stake() {
            self.witness_count = count;
            true
        } else {
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster() -> WitnessRoster {
        let mut r = WitnessRoster::new(3, 10, -2);
        for (i, id) in ["w1", "w2", "w3", "w4", "w5"].iter().enumerate() {
            r.add_candidate(id);
            r.set_stake(id, (i as u64 + 1) * 10);
            r.vote(id, id).unwrap();
        }
        r
    }

    #[test]
    fn top_three_by_stake() {
        let mut r = roster();
        assert_eq!(r.elect_witnesses(), ["w5", "w4", "w3"]);
        assert_eq!(r.scheduled(0).unwrap(), "w5");
        assert_eq!(r.scheduled(4).unwrap(), "w4");
    }

    #[test]
    fn one_vote_per_pair() {
        let mut r = roster();
        r.vote("w1", "w2").unwrap();
        assert!(matches!(r.vote("w1", "w2"), Err(DposError::DuplicateVote { .. })));
        assert_eq!(r.candidate("w2").unwrap().approval_stake, 30);
    }

    #[test]
    fn three_misses_below_floor_dropped_next_epoch() {
        let mut r = roster();
        r.elect_witnesses();
        for _ in 0..3 {
            r.record_slot("w5", false);
        }
        assert_eq!(r.active()[0], "w5", "still seated until the boundary");
        assert_eq!(r.elect_witnesses(), ["w4", "w3", "w2"]);
        assert!(r.candidate("w5").is_none());
    }

    #[test]
    fn too_few_candidates_seats_all() {
        let mut r = WitnessRoster::new(3, 10, -2);
        r.add_candidate("only");
        assert_eq!(r.elect_witnesses(), ["only"]);
        assert_eq!(r.shortfalls, 1);
    }

    #[test]
    fn witness_count_change_needs_majority_stake() {
        let mut r = roster();
        assert!(!r.propose_witness_count(4, &["w5", "w1"]));
        assert_eq!(r.witness_count, 3);
        assert!(r.propose_witness_count(4, &["w5", "w4"]));
        assert_eq!(r.elect_witnesses().len(), 4);
    }
}
