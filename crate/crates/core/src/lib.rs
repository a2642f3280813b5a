//! Snore detection pipeline core.
//!
//! The crate is organised the same way the data flows on the device:
//!
//! * [`audio`] loads, synthesises and buffers PCM audio,
//! * [`features`] turns a window of audio into a normalized log-mel image,
//! * [`nn`] is a small CNN with training, evaluation and a weights file format,
//! * [`detector`] is the device loop (smoothing, alerting, environment sensing),
//! * [`pam`] encodes what the device publishes and simulates the radio link,
//! * [`event`] is the JSON event schema shared by the gateway and the cloud service,
//! * [`api`] holds the bodies of the ingest HTTP API.

pub mod api;
pub mod audio;
pub mod detector;
pub mod event;
pub mod features;
pub mod nn;
pub mod pam;

mod class;

pub use class::SnoreClass;
