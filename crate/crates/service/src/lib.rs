//! HTTP facade, persistence and operator commands for the media retrieval
//! engine in `egomedia-core`.

pub mod app;
pub mod commands;
pub mod config;
pub mod persist;

pub use app::{router, AppState};
pub use config::ServiceConfig;
pub use persist::DataDir;
