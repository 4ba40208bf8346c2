//! Endorsement policy trees and their prefix-form grammar.
//!
//! ```text
//! policy    := principal | AND(policy,...) | OR(policy,...) | KOF(k,policy,...)
//! principal := org-name | id:identity-id
//! ```
//!
//! A bare name matches any identity whose org is that name; `id:` names a
//! single identity. Whitespace between tokens is ignored.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

use crate::ledger::Identity;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Principal {
    Org(String),
    Member(String),
}

impl Principal {
    pub fn matches(&self, identity: &Identity) -> bool {
        match self {
            Principal::Org(org) => identity.org == *org,
            Principal::Member(id) => identity.id == *id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Policy {
    Principal(Principal),
    And(Vec<Policy>),
    Or(Vec<Policy>),
    KOutOf(usize, Vec<Policy>),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("KOF threshold {k} exceeds {n} sub-policies")]
    ThresholdTooLarge { k: usize, n: usize },
    #[error("{0} node has no sub-policies")]
    Empty(&'static str),
}

impl Policy {
    pub fn org(name: &str) -> Policy {
        Policy::Principal(Principal::Org(name.to_string()))
    }

    pub fn member(id: &str) -> Policy {
        Policy::Principal(Principal::Member(id.to_string()))
    }

    /// Checks the structural invariants: every K-of-N has k ≤ n and no
    /// combinator is empty.
    pub fn validate(&self) -> Result<(), PolicyError> {
        match self {
            Policy::Principal(_) => Ok(()),
            Policy::And(subs) | Policy::Or(subs) if subs.is_empty() => Err(PolicyError::Empty(
                if matches!(self, Policy::And(_)) { "AND" } else { "OR" },
            )),
            Policy::KOutOf(_, subs) if subs.is_empty() => Err(PolicyError::Empty("KOF")),
            Policy::KOutOf(k, subs) if *k > subs.len() => Err(PolicyError::ThresholdTooLarge {
                k: *k,
                n: subs.len(),
            }),
            Policy::And(subs) | Policy::Or(subs) | Policy::KOutOf(_, subs) => {
                subs.iter().try_for_each(Policy::validate)
            }
        }
    }

    /// True iff the signer set satisfies the tree. Callers pass only signers
    /// whose signatures already verified, deduplicated by identity.
    pub fn evaluate(&self, signers: &[&Identity]) -> bool {
        match self {
            Policy::Principal(p) => signers.iter().any(|id| p.matches(id)),
            Policy::And(subs) => subs.iter().all(|s| s.evaluate(signers)),
            Policy::Or(subs) => subs.iter().any(|s| s.evaluate(signers)),
            Policy::KOutOf(k, subs) => subs.iter().filter(|s| s.evaluate(signers)).count() >= *k,
        }
    }

    /// All principals mentioned anywhere in the tree, sorted and deduplicated.
    pub fn principals(&self) -> Vec<Principal> {
        fn walk(p: &Policy, out: &mut Vec<Principal>) {
            match p {
                Policy::Principal(pr) => out.push(pr.clone()),
                Policy::And(s) | Policy::Or(s) | Policy::KOutOf(_, s) => {
                    s.iter().for_each(|x| walk(x, out))
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out.sort();
        out.dedup();
        out
    }
}

/// Convenience wrapper over [`Policy::evaluate`].
pub fn evaluate_policy(policy: &Policy, signers: &[&Identity]) -> bool {
    policy.evaluate(signers)
}

impl fmt::Display for Principal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Principal::Org(o) => f.write_str(o),
            Principal::Member(id) => write!(f, "id:{id}"),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, subs: &[Policy]) -> fmt::Result {
            for (i, s) in subs.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{s}")?;
            }
            Ok(())
        }
        match self {
            Policy::Principal(p) => write!(f, "{p}"),
            Policy::And(s) => {
                f.write_str("AND(")?;
                list(f, s)?;
                f.write_str(")")
            }
            Policy::Or(s) => {
                f.write_str("OR(")?;
                list(f, s)?;
                f.write_str(")")
            }
            Policy::KOutOf(k, s) => {
                write!(f, "KOF({k},")?;
                list(f, s)?;
                f.write_str(")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T, PolicyError> {
        Err(PolicyError::Syntax {
            offset: self.pos,
            message: message.into(),
        })
    }

    fn skip_ws(&mut self) {
        while self.src[self.pos..].starts_with(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn eat(&mut self, c: char) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(c) {
            self.pos += c.len_utf8();
            true
        } else {
            false
        }
    }

    fn word(&mut self) -> &'a str {
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| !(c.is_alphanumeric() || matches!(c, '_' | '-' | '.' | ':' | '@')))
            .unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn policy(&mut self) -> Result<Policy, PolicyError> {
        let start = self.pos;
        let word = self.word();
        if word.is_empty() {
            return self.err("expected principal or combinator");
        }
        let combinator = matches!(word, "AND" | "OR" | "KOF");
        if combinator && self.eat('(') {
            let k = if word == "KOF" {
                let num = self.word();
                let Ok(k) = num.parse::<usize>() else {
                    return self.err(format!("expected threshold, found {num:?}"));
                };
                if !self.eat(',') {
                    return self.err("expected ',' after threshold");
                }
                Some(k)
            } else {
                None
            };
            let mut subs = vec![self.policy()?];
            while self.eat(',') {
                subs.push(self.policy()?);
            }
            if !self.eat(')') {
                return self.err("expected ')'");
            }
            return Ok(match (word, k) {
                ("AND", _) => Policy::And(subs),
                ("OR", _) => Policy::Or(subs),
                (_, Some(k)) => Policy::KOutOf(k, subs),
                _ => unreachable!(),
            });
        }
        match word.strip_prefix("id:") {
            Some("") => {
                self.pos = start;
                self.err("empty identity principal")
            }
            Some(id) => Ok(Policy::member(id)),
            None => Ok(Policy::org(word)),
        }
    }
}

impl FromStr for Policy {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = Parser { src: s, pos: 0 };
        let policy = p.policy()?;
        p.skip_ws();
        if p.pos != s.len() {
            return p.err("trailing input");
        }
        policy.validate()?;
        Ok(policy)
    }
}

impl Serialize for Policy {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Policy {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn ident(id: &str, org: &str) -> Identity {
        Identity::new(id, org, vec![1])
    }

    fn eval(policy: &str, orgs: &[&str]) -> bool {
        let ids: Vec<Identity> = orgs.iter().map(|o| ident(&format!("peer.{o}"), o)).collect();
        let refs: Vec<&Identity> = ids.iter().collect();
        policy.parse::<Policy>().unwrap().evaluate(&refs)
    }

    #[test]
    fn parses_nested_prefix_form() {
        let p: Policy = "AND(org1, KOF(2,org2,org3,org4))".parse().unwrap();
        assert_eq!(p.to_string(), "AND(org1,KOF(2,org2,org3,org4))");
        assert_eq!(
            p,
            Policy::And(vec![
                Policy::org("org1"),
                Policy::KOutOf(2, vec![Policy::org("org2"), Policy::org("org3"), Policy::org("org4")])
            ])
        );
        let m: Policy = "OR(id:admin1,org2)".parse().unwrap();
        assert_eq!(m.principals()[1], Principal::Member("admin1".into()));
    }

    #[test]
    fn rejects_malformed_policies() {
        assert!(matches!("KOF(4,a,b,c)".parse::<Policy>(), Err(PolicyError::ThresholdTooLarge { k: 4, n: 3 })));
        assert!("AND(a,b".parse::<Policy>().is_err());
        assert!("AND()".parse::<Policy>().is_err());
        assert!("a b".parse::<Policy>().is_err());
        assert!("KOF(x,a)".parse::<Policy>().is_err());
        assert!("id:".parse::<Policy>().is_err());
    }

    #[test]
    fn two_of_three() {
        assert!(eval("KOF(2,org1,org2,org3)", &["org1", "org3"]));
        assert!(!eval("KOF(2,org1,org2,org3)", &["org1"]));
    }

    /// Reference evaluator: expand the tree into its disjunctive normal form
    /// (a list of principal sets) and check whether any clause is covered.
    fn dnf(p: &Policy) -> Vec<BTreeSet<Principal>> {
        match p {
            Policy::Principal(pr) => vec![BTreeSet::from([pr.clone()])],
            Policy::Or(subs) => subs.iter().flat_map(dnf).collect(),
            Policy::And(subs) => subs.iter().fold(vec![BTreeSet::new()], |acc, s| {
                let d = dnf(s);
                acc.iter()
                    .flat_map(|a| d.iter().map(move |b| a.union(b).cloned().collect()))
                    .collect()
            }),
            Policy::KOutOf(k, subs) => {
                let n = subs.len();
                let mut out = Vec::new();
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() as usize == *k {
                        let chosen: Vec<Policy> =
                            (0..n).filter(|i| mask & (1 << i) != 0).map(|i| subs[i].clone()).collect();
                        out.extend(dnf(&Policy::And(chosen)));
                    }
                }
                if *k == 0 {
                    out.push(BTreeSet::new());
                }
                out
            }
        }
    }

    #[test]
    fn and_or_truth_table_matches_enumeration() {
        let p: Policy = "AND(org1,OR(org2,org3))".parse().unwrap();
        let orgs = ["org1", "org2", "org3"];
        let mut satisfying = Vec::new();
        for mask in 0..8u32 {
            let set: Vec<&str> = (0..3).filter(|i| mask & (1 << i) != 0).map(|i| orgs[i]).collect();
            if eval(&p.to_string(), &set) {
                satisfying.push(mask);
            }
        }
        // {org1,org2}, {org1,org3}, {org1,org2,org3}
        assert_eq!(satisfying, vec![0b011, 0b101, 0b111]);
        assert!(eval("AND(org1,OR(org2,org3))", &["org1", "org3"]));
        assert!(!eval("AND(org1,OR(org2,org3))", &["org2", "org3"]));
    }

    fn arb_policy() -> impl Strategy<Value = Policy> {
        let leaf = (0..5usize).prop_map(|i| Policy::org(&format!("org{i}")));
        leaf.prop_recursive(3, 16, 4, |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(Policy::And),
                prop::collection::vec(inner.clone(), 1..4).prop_map(Policy::Or),
                prop::collection::vec(inner, 1..4)
                    .prop_flat_map(|v| (0..=v.len(), Just(v)))
                    .prop_map(|(k, v)| Policy::KOutOf(k, v)),
            ]
        })
    }

    proptest! {
        #[test]
        fn evaluation_agrees_with_subset_enumeration(p in arb_policy()) {
            let ids: Vec<Identity> = (0..5).map(|i| ident(&format!("p{i}"), &format!("org{i}"))).collect();
            let clauses = dnf(&p);
            for mask in 0..32u32 {
                let signers: Vec<&Identity> = (0..5).filter(|i| mask & (1 << i) != 0).map(|i| &ids[i]).collect();
                let present: BTreeSet<Principal> = signers.iter().map(|s| Principal::Org(s.org.clone())).collect();
                let expected = clauses.iter().any(|c| c.is_subset(&present));
                prop_assert_eq!(p.evaluate(&signers), expected);
            }
        }

        #[test]
        fn adding_signers_never_unsatisfies(p in arb_policy(), a in 0..32u32, b in 0..32u32) {
            let ids: Vec<Identity> = (0..5).map(|i| ident(&format!("p{i}"), &format!("org{i}"))).collect();
            let pick = |m: u32| -> Vec<&Identity> { (0..5).filter(|i| m & (1 << i) != 0).map(|i| &ids[i]).collect() };
            if p.evaluate(&pick(a)) {
                prop_assert!(p.evaluate(&pick(a | b)));
            }
        }

        #[test]
        fn display_parse_round_trip(p in arb_policy()) {
            prop_assert_eq!(p.to_string().parse::<Policy>().unwrap(), p);
        }
    }
}
