//! The gateway: receives characteristic messages over the link, turns them
//! into JSON events, keeps the last minute of audio, and uploads events and
//! episode clips to the ingest service.

mod api;
mod backoff;
mod clip;
mod http;
mod pipeline;
mod relay;
mod spool;
mod upload;

pub use api::{ApiError, IngestApi};
pub use backoff::{Backoff, BackoffConfig};
pub use clip::{clip_episode, ClipError, EpisodeClip, EpisodeTracker, EPISODE_PAD_MS, RING_RETENTION_MS};
pub use http::HttpClient;
pub use pipeline::{run_pipeline, ClipRecord, GatewayError, PipelineConfig, PipelineReport, QUEUE_CAPACITY};
pub use relay::{relay, Relay};
pub use spool::{Spool, SpoolSession};
pub use upload::{open_session, Receipt, UploadConfig, UploadError, UploadStats, Uploader, DEFAULT_BATCH_SIZE};
