use serde::{Deserialize, Serialize};

use super::DetectorConfig;
use crate::pam::CharacteristicMessage;
use crate::SnoreClass;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlertState {
    pub active: bool,
    /// Drive frequency; 0 while inactive.
    pub pwm_freq_hz: f64,
    pub intensity: f64,
    /// Time of the last activation or deactivation.
    pub since_ms: u64,
}

impl AlertState {
    pub fn idle() -> Self {
        Self { active: false, pwm_freq_hz: 0.0, intensity: 0.0, since_ms: 0 }
    }

    pub fn message(&self, t_ms: u64) -> CharacteristicMessage {
        CharacteristicMessage::alerting(t_ms, self.active, self.intensity)
    }
}

/// Hysteresis automaton driving the haptic alert.
///
/// Activates at `pwm_freq_min` once `alert_on_count` consecutive smoothed
/// windows are snoring; every further snoring window while active raises the
/// frequency by `intensity_ramp_step` up to `pwm_freq_max`. Deactivates after
/// `alert_off_count` consecutive non-snoring windows.
#[derive(Debug, Clone)]
pub struct AlertMachine {
    on_count: u32,
    off_count: u32,
    freq_min: f64,
    freq_max: f64,
    step: f64,
    state: AlertState,
    snore_run: u32,
    quiet_run: u32,
}

impl AlertMachine {
    pub fn new(cfg: &DetectorConfig) -> Self {
        Self {
            on_count: cfg.alert_on_count,
            off_count: cfg.alert_off_count,
            freq_min: cfg.pwm_freq_min,
            freq_max: cfg.pwm_freq_max,
            step: cfg.intensity_ramp_step,
            state: AlertState::idle(),
            snore_run: 0,
            quiet_run: 0,
        }
    }

    pub fn state(&self) -> AlertState {
        self.state
    }

    fn intensity(&self, freq: f64) -> f64 {
        ((freq - self.freq_min) / (self.freq_max - self.freq_min)).clamp(0.0, 1.0)
    }

    fn set_freq(&mut self, freq: f64) {
        self.state.pwm_freq_hz = freq;
        self.state.intensity = if self.state.active { self.intensity(freq) } else { 0.0 };
    }

    /// Feeds one smoothed window; returns the Alerting message to publish, if any.
    pub fn update(&mut self, smoothed: SnoreClass, t_ms: u64) -> Option<CharacteristicMessage> {
        if smoothed.is_snoring() {
            self.snore_run = self.snore_run.saturating_add(1);
            self.quiet_run = 0;
            if !self.state.active {
                if self.snore_run >= self.on_count {
                    self.state.active = true;
                    self.state.since_ms = t_ms;
                    self.set_freq(self.freq_min);
                    return Some(self.state.message(t_ms));
                }
            } else {
                let next = (self.state.pwm_freq_hz + self.step).min(self.freq_max);
                if next != self.state.pwm_freq_hz {
                    self.set_freq(next);
                    return Some(self.state.message(t_ms));
                }
            }
        } else {
            self.quiet_run = self.quiet_run.saturating_add(1);
            self.snore_run = 0;
            if self.state.active && self.quiet_run >= self.off_count {
                self.state.active = false;
                self.state.since_ms = t_ms;
                self.set_freq(0.0);
                return Some(self.state.message(t_ms));
            }
        }
        None
    }
}
