use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackoffConfig {
    pub base_ms: u64,
    pub factor: f64,
    pub cap_ms: u64,
    pub seed: u64,
}

impl Default for BackoffConfig {
    fn default() -> Self {
        Self { base_ms: 1000, factor: 2.0, cap_ms: 60_000, seed: 0 }
    }
}

/// Exponential backoff with equal jitter: retry `n` waits a uniform time in
/// `[c/2, c]` where `c = min(cap, base * factor^n)`.
#[derive(Debug, Clone)]
pub struct Backoff {
    cfg: BackoffConfig,
    rng: ChaCha8Rng,
}

impl Backoff {
    pub fn new(cfg: BackoffConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self { cfg, rng }
    }

    pub fn config(&self) -> &BackoffConfig {
        &self.cfg
    }

    pub fn ceiling_ms(&self, retry: u32) -> u64 {
        let c = self.cfg.base_ms as f64 * self.cfg.factor.powi(retry.min(64) as i32);
        c.min(self.cfg.cap_ms as f64) as u64
    }

    pub fn delay(&mut self, retry: u32) -> Duration {
        let c = self.ceiling_ms(retry);
        let half = c / 2;
        Duration::from_millis(half + self.rng.random_range(0..=c - half))
    }
}
