//! Streaming middleware between a tracking source and display clients.

pub mod config;
pub mod hub;
pub mod outbox;
pub mod replay;
pub mod session;
pub mod source;
pub mod stats;

pub use config::{load_config, parse_config, ServerConfig, SessionConfig, SourceConfig};
pub use hub::{run, start, ServerError, ServerHandle};
pub use stats::StatsSnapshot;
