//! Real-time session host: a WebSocket endpoint that drives the assist
//! controller at 100 Hz from a browser pointer.
//!
//! [`state`] holds the deterministic per-session simulation, [`protocol`]
//! the JSON frames and [`server`] the axum wiring.

pub mod protocol;
pub mod server;
pub mod state;

pub use server::{router, serve, ServerConfig};
pub use state::{session_tick, SessionState};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] softnash_core::Error),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
