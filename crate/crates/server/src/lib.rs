//! HTTP service over the authoring engine: sessions, stage operations,
//! suggestions, guided testing and shared simulations, with every
//! session persisted as an append-only journal.

mod api;
mod config;
mod store;

pub use api::{router, ApiError, AppState, SessionEnvelope};
pub use config::{ConfigError, ServerConfig};
pub use store::{FileStore, MemoryStore, ShareRecord, Store, StoreError};
