//! The device loop: window → features → CNN → smoothing → alert policy.

mod alert;
mod env;
mod session;
mod smoothing;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use alert::{AlertMachine, AlertState};
pub use env::{EnvChannel, EnvModel, EnvSample};
pub use session::{
    read_trace_csv, run_session, run_session_with, snore_intervals, write_trace_csv, SessionReport, SessionSink,
    TraceRow,
};
pub use smoothing::MajorityVote;

use crate::audio::{AudioError, FrameWindow};
use crate::features::{FeatureError, FeatureExtractor, InputSide, SpectrogramConfig};
use crate::nn::{Classify, ModelParams, NnError, Prediction};
use crate::pam::CharacteristicMessage;
use crate::SnoreClass;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("invalid detector configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error("trace file: {0}")]
    Trace(String),
    #[error(transparent)]
    Link(#[from] crate::pam::PamError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub window_len_ms: u64,
    pub hop_ms: u64,
    pub smoothing_k: usize,
    pub alert_on_count: u32,
    pub alert_off_count: u32,
    pub pwm_freq_min: f64,
    pub pwm_freq_max: f64,
    pub intensity_ramp_step: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window_len_ms: 1000,
            hop_ms: 333,
            smoothing_k: 3,
            alert_on_count: 9,
            alert_off_count: 15,
            pwm_freq_min: 50.0,
            pwm_freq_max: 250.0,
            intensity_ramp_step: 10.0,
        }
    }
}

impl DetectorConfig {
    // Negated comparisons so NaN fails.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), DetectorError> {
        let bad = |m: &str| Err(DetectorError::Config(m.to_string()));
        if self.hop_ms == 0 || self.window_len_ms < self.hop_ms {
            return bad("need window_len_ms >= hop_ms > 0");
        }
        if self.smoothing_k & 1 == 0 {
            return bad("smoothing_k must be odd");
        }
        if self.alert_on_count == 0 || self.alert_off_count == 0 {
            return bad("alert on/off counts must be at least 1");
        }
        if !(self.pwm_freq_min < self.pwm_freq_max) || self.pwm_freq_min < 0.0 {
            return bad("need 0 <= pwm_freq_min < pwm_freq_max");
        }
        if !(self.intensity_ramp_step >= 0.0) {
            return bad("intensity_ramp_step must be non-negative");
        }
        Ok(())
    }
}

/// A message with its position in the device's single ordered log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedMessage {
    pub seq: u64,
    pub message: CharacteristicMessage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub prediction: Prediction,
    pub raw_class: SnoreClass,
    pub smoothed_class: SnoreClass,
    pub alert: AlertState,
    pub messages: Vec<LoggedMessage>,
}

/// Streaming detector state for one session.
pub struct Detector<M: Classify = ModelParams> {
    model: M,
    extractor: FeatureExtractor,
    cfg: DetectorConfig,
    smoother: MajorityVote,
    alert: AlertMachine,
    env: Option<EnvModel>,
    next_env: u64,
    next_seq: u64,
    previous: Option<SnoreClass>,
    episodes: u32,
}

impl Detector<ModelParams> {
    /// Detector for a trained network; the feature image side follows the model.
    pub fn new(params: ModelParams, cfg: DetectorConfig, env: Option<EnvModel>) -> Result<Self, DetectorError> {
        let side = InputSide::try_from(params.input_side())?;
        let extractor = FeatureExtractor::new(SpectrogramConfig::default(), crate::audio::CANONICAL_SAMPLE_RATE, side)?;
        Self::with_model(params, extractor, cfg, env)
    }
}

impl<M: Classify> Detector<M> {
    pub fn with_model(
        model: M,
        extractor: FeatureExtractor,
        cfg: DetectorConfig,
        env: Option<EnvModel>,
    ) -> Result<Self, DetectorError> {
        cfg.validate()?;
        Ok(Self {
            model,
            extractor,
            smoother: MajorityVote::new(cfg.smoothing_k),
            alert: AlertMachine::new(&cfg),
            cfg,
            env,
            next_env: 0,
            next_seq: 0,
            previous: None,
            episodes: 0,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn extractor(&self) -> &FeatureExtractor {
        &self.extractor
    }

    pub fn alert_state(&self) -> AlertState {
        self.alert.state()
    }

    pub fn episodes(&self) -> u32 {
        self.episodes
    }

    fn log(&mut self, out: &mut Vec<LoggedMessage>, message: CharacteristicMessage) {
        out.push(LoggedMessage { seq: self.next_seq, message });
        self.next_seq += 1;
    }

    /// Environment samples due at `t_ms`, in order.
    pub fn sample_environment(&mut self, t_ms: u64) -> Vec<LoggedMessage> {
        let mut out = Vec::new();
        let Some(env) = self.env else { return out };
        for i in env.due(self.next_env, t_ms) {
            for m in env.sample(i).messages() {
                self.log(&mut out, m);
            }
            self.next_env = i + 1;
        }
        out
    }

    /// Classifies one window and applies smoothing and the alert policy.
    /// Environment messages due at the window start come first.
    pub fn step(&mut self, window: &FrameWindow) -> Result<StepOutcome, DetectorError> {
        let t = window.start_ms;
        let mut messages = self.sample_environment(t);

        let image = self.extractor.extract(window)?;
        let prediction = self.model.classify(&image)?;
        let raw_class = prediction.inferred_class;
        let smoothed_class = self.smoother.push(raw_class);

        self.log(&mut messages, CharacteristicMessage::instantaneous(t, prediction.p_snore));
        if self.previous != Some(smoothed_class) {
            if smoothed_class.is_snoring() {
                self.episodes += 1;
            }
            let summary = CharacteristicMessage::ActivitySummary {
                window_start_ms: t,
                window_end_ms: t + self.cfg.window_len_ms,
                inferred_class: smoothed_class,
                episode_count: self.episodes,
            };
            self.log(&mut messages, summary);
            self.previous = Some(smoothed_class);
        }
        if let Some(m) = self.alert.update(smoothed_class, t) {
            self.log(&mut messages, m);
        }
        Ok(StepOutcome { prediction, raw_class, smoothed_class, alert: self.alert.state(), messages })
    }
}
