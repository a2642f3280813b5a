//! Ingest service for sleep sessions: a durable append-only store, an HTTP
//! API in front of it, and analytics computed from the stored events.

pub mod analytics;
mod http;
mod server;
mod store;

pub use http::{router, AppState, FaultInjector, BODY_LIMIT};
pub use server::{run, spawn, ServeError, ServerConfig, ServerHandle};
pub use store::{Snapshot, Store, StoreError};
