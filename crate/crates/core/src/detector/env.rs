use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::pam::{CharacteristicMessage, EnvValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvSample {
    pub timestamp_ms: u64,
    pub temperature_c: f64,
    pub humidity_pct: f64,
    pub pressure_pa: f64,
}

impl EnvSample {
    pub fn messages(&self) -> [CharacteristicMessage; 3] {
        let t = self.timestamp_ms;
        [
            CharacteristicMessage::Environment { timestamp_ms: t, value: EnvValue::temperature_c(self.temperature_c) },
            CharacteristicMessage::Environment { timestamp_ms: t, value: EnvValue::humidity_pct(self.humidity_pct) },
            CharacteristicMessage::Environment { timestamp_ms: t, value: EnvValue::pressure_pa(self.pressure_pa) },
        ]
    }
}

/// One channel: `baseline + drift·hours + noise·N(0,1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvChannel {
    pub baseline: f64,
    pub drift_per_hour: f64,
    pub noise_std: f64,
}

impl EnvChannel {
    pub fn constant(baseline: f64) -> Self {
        Self { baseline, drift_per_hour: 0.0, noise_std: 0.0 }
    }

    fn at(&self, hours: f64, z: f64) -> f64 {
        self.baseline + self.drift_per_hour * hours + self.noise_std * z
    }
}

/// Simulated bedroom sensor sampled every `period_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvModel {
    pub temperature: EnvChannel,
    pub humidity: EnvChannel,
    pub pressure: EnvChannel,
    pub period_ms: u64,
    pub seed: u64,
}

impl Default for EnvModel {
    fn default() -> Self {
        Self {
            temperature: EnvChannel { baseline: 21.0, drift_per_hour: -0.3, noise_std: 0.05 },
            humidity: EnvChannel { baseline: 45.0, drift_per_hour: 0.5, noise_std: 0.2 },
            pressure: EnvChannel { baseline: 101_325.0, drift_per_hour: -10.0, noise_std: 2.0 },
            period_ms: 60_000,
            seed: 0,
        }
    }
}

impl EnvModel {
    /// Sample number `index`, taken at `index · period_ms`. Each index has
    /// its own RNG stream, so samples do not depend on what came before.
    pub fn sample(&self, index: u64) -> EnvSample {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        let mut z = || -> f64 { StandardNormal.sample(&mut rng) };
        let timestamp_ms = index * self.period_ms;
        let hours = timestamp_ms as f64 / 3_600_000.0;
        let (zt, zh, zp) = (z(), z(), z());
        EnvSample {
            timestamp_ms,
            temperature_c: self.temperature.at(hours, zt),
            humidity_pct: self.humidity.at(hours, zh).clamp(0.0, 100.0),
            pressure_pa: self.pressure.at(hours, zp).max(1.0),
        }
    }

    /// Samples due at or before `t_ms`, starting from index `from`.
    pub fn due(&self, from: u64, t_ms: u64) -> std::ops::Range<u64> {
        let last = t_ms.checked_div(self.period_ms).map_or(from, |q| q + 1);
        from..last.max(from)
    }
}
