use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceParams {
    pub min_vested_coins: u64,
    pub min_vest_days: u64,
    pub min_tx_size: u64,
    pub window_days: u64,
    pub w_vested: f64,
    pub w_partners: f64,
    pub w_volume: f64,
}

impl Default for ImportanceParams {
    fn default() -> Self {
        ImportanceParams {
            min_vested_coins: 100,
            min_vest_days: 10,
            min_tx_size: 10,
            window_days: 30,
            w_vested: 0.5,
            w_partners: 0.25,
            w_volume: 0.25,
        }
    }
}

impl ImportanceParams {
    pub fn validate(&self) -> Result<(), String> {
        let w = [self.w_vested, self.w_partners, self.w_volume];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || w.iter().sum::<f64>() <= 0.0 {
            return Err("weights must be non-negative with a positive sum".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transfer {
    pub from: String,
    pub to: String,
    pub amount: u64,
    pub day: u64,
}

/// Coins received on `day`; they vest after `min_vest_days`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Holding {
    pub coins: u64,
    pub day: u64,
}

pub fn vested_coins(holdings: &[Holding], today: u64, params: &ImportanceParams) -> u64 {
    holdings
        .iter()
        .filter(|h| today.saturating_sub(h.day) >= params.min_vest_days)
        .map(|h| h.coins)
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceScore {
    pub eligible: bool,
    pub score: f64,
    /// Partners the account sent more to than it received from.
    pub net_partners: usize,
    pub qualifying_txs: usize,
    pub qualifying_volume: u64,
}

/// Score of `account` over the transfers within the window ending `today`.
pub fn importance_score(
    account: &str,
    vested: u64,
    params: &ImportanceParams,
    transfers: &[Transfer],
    today: u64,
) -> ImportanceScore {
    if vested < params.min_vested_coins {
        return ImportanceScore {
            eligible: false,
            score: 0.0,
            net_partners: 0,
            qualifying_txs: 0,
            qualifying_volume: 0,
        };
    }
    let window: Vec<&Transfer> = transfers
        .iter()
        .filter(|t| t.day <= today && today - t.day < params.window_days)
        .collect();
    let mut net: BTreeMap<&str, i128> = BTreeMap::new();
    for t in &window {
        if t.from == account && t.to != account {
            *net.entry(&t.to).or_default() += i128::from(t.amount);
        } else if t.to == account && t.from != account {
            *net.entry(&t.from).or_default() -= i128::from(t.amount);
        }
    }
    let net_partners = net.values().filter(|v| **v > 0).count();
    let qualifying: Vec<u64> = window
        .iter()
        .filter(|t| t.from == account && t.amount >= params.min_tx_size)
        .map(|t| t.amount)
        .collect();
    let qualifying_volume: u64 = qualifying.iter().sum();
    let score = params.w_vested * (vested - params.min_vested_coins) as f64
        + params.w_partners * net_partners as f64
        + params.w_volume * qualifying_volume as f64;
    ImportanceScore {
        eligible: true,
        score,
        net_partners,
        qualifying_txs: qualifying.len(),
        qualifying_volume,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(from: &str, to: &str, amount: u64, day: u64) -> Transfer {
        Transfer {
            from: from.into(),
            to: to.into(),
            amount,
            day,
        }
    }

    #[test]
    fn below_vesting_minimum_is_ineligible() {
        let p = ImportanceParams::default();
        let s = importance_score("a", 99, &p, &[t("a", "b", 500, 1)], 5);
        assert!(!s.eligible);
        assert_eq!(s.score, 0.0);
    }

    #[test]
    fn vesting_needs_holding_period() {
        let p = ImportanceParams::default();
        let holdings = [Holding { coins: 80, day: 0 }, Holding { coins: 50, day: 25 }];
        assert_eq!(vested_coins(&holdings, 30, &p), 80);
        assert_eq!(vested_coins(&holdings, 35, &p), 130);
    }

    #[test]
    fn wash_trading_adds_no_partner() {
        let p = ImportanceParams::default();
        let s = importance_score("a", 200, &p, &[t("a", "b", 50, 1), t("b", "a", 50, 2)], 5);
        assert_eq!(s.net_partners, 0);
        let base = importance_score("a", 200, &p, &[], 5).score;
        assert_eq!(s.score - base, p.w_volume * 50.0, "only the volume factor moves");
    }

    #[test]
    fn small_transactions_excluded() {
        let p = ImportanceParams::default();
        let m = p.min_tx_size;
        let txs = [t("a", "b", m - 1, 1), t("a", "c", m, 1), t("a", "d", m + 5, 1)];
        let s = importance_score("a", 200, &p, &txs, 5);
        assert_eq!(s.qualifying_txs, 2);
        assert_eq!(s.qualifying_volume, 2 * m + 5);
        assert_eq!(s.net_partners, 3);
        let expected = 0.5 * 100.0 + 0.25 * 3.0 + 0.25 * (2 * m + 5) as f64;
        assert!((s.score - expected).abs() < 1e-9);
    }

    #[test]
    fn window_limits_history() {
        let p = ImportanceParams::default();
        let s = importance_score("a", 200, &p, &[t("a", "b", 50, 0)], 30);
        assert_eq!(s.qualifying_txs, 0);
    }
}
