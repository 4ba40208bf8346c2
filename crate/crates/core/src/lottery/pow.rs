use serde::{Deserialize, Serialize};

use crate::crypto::{sha256_parts, Hash32};
use crate::netsim::Tick;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowParams {
    /// Leading zero bits required at the start of the run.
    pub difficulty: u32,
    pub target_interval: Tick,
    /// Blocks per retarget window.
    pub retarget_window: u64,
    /// Largest adjustment ratio per retarget.
    pub clamp: u32,
}

impl Default for PowParams {
    fn default() -> Self {
        PowParams {
            difficulty: 8,
            target_interval: 10,
            retarget_window: 32,
            clamp: 4,
        }
    }
}

impl PowParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.difficulty < 1 {
            return Err("difficulty must be at least 1".into());
        }
        if self.clamp < 2 {
            return Err("clamp must be greater than 1".into());
        }
        if self.retarget_window < 2 || self.target_interval < 1 {
            return Err("retarget_window must be at least 2 and target_interval at least 1".into());
        }
        Ok(())
    }

    /// Largest per-retarget change in bits.
    pub fn max_step(&self) -> i64 {
        i64::from(self.clamp.max(2).ilog2())
    }
}

pub fn pow_hash(header: &[u8], nonce: u64) -> Hash32 {
    sha256_parts(&[header, &nonce.to_be_bytes()])
}

pub fn pow_attempt(header: &[u8], nonce: u64, difficulty: u32) -> bool {
    pow_hash(header, nonce).leading_zero_bits() >= difficulty
}

/// New difficulty from the timestamps of one window, oldest first:
/// `d + round(log2(target / actual))`, clamped and never below 1.
pub fn retarget_difficulty(params: &PowParams, window_timestamps: &[Tick]) -> u32 {
    let n = window_timestamps.len();
    if n < 2 {
        return params.difficulty.max(1);
    }
    let actual = window_timestamps[n - 1].saturating_sub(window_timestamps[0]).max(1) as f64;
    let target = (params.target_interval * (n as u64 - 1)) as f64;
    let step = (target / actual).log2().round() as i64;
    let step = step.clamp(-params.max_step(), params.max_step());
    (i64::from(params.difficulty) + step).max(1) as u32
}

/// Attempts until the first solving nonce, starting at `start`.
pub fn mine(header: &[u8], difficulty: u32, start: u64) -> (u64, u64) {
    let mut nonce = start;
    let mut attempts = 0;
    loop {
        attempts += 1;
        if pow_attempt(header, nonce, difficulty) {
            return (nonce, attempts);
        }
        nonce = nonce.wrapping_add(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(difficulty: u32) -> PowParams {
        PowParams {
            difficulty,
            target_interval: 10,
            retarget_window: 4,
            clamp: 4,
        }
    }

    fn window(total: Tick) -> Vec<Tick> {
        (0..=4).map(|i| i * total / 4).collect()
    }

    #[test]
    fn retarget_examples() {
        assert_eq!(retarget_difficulty(&params(10), &window(40)), 10);
        assert_eq!(retarget_difficulty(&params(10), &window(10)), 12);
        assert_eq!(retarget_difficulty(&params(10), &window(320)), 8);
        assert_eq!(retarget_difficulty(&params(1), &window(320)), 1);
    }

    #[test]
    fn difficulty_one_takes_two_attempts_on_average() {
        let header = b"header";
        let total: u64 = (0..1000u64).map(|t| mine(header, 1, t << 32).1).sum();
        let mean = total as f64 / 1000.0;
        assert!((1.8..=2.2).contains(&mean), "{mean}");
    }

    #[test]
    fn difficulty_eight_success_rate() {
        let hits = (0..100_000u64).filter(|&n| pow_attempt(b"h", n, 8)).count();
        let p = hits as f64 / 100_000.0;
        assert!((p - 1.0 / 256.0).abs() < 0.0008, "{p}");
    }

    #[test]
    fn solutions_reverify() {
        for d in 1..10 {
            let (nonce, _) = mine(b"block", d, 0);
            assert!(pow_attempt(b"block", nonce, d));
        }
    }
}
