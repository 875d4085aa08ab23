//! Network front end for kernel sessions: a WebSocket endpoint speaking the
//! `oikos/1` protocol and a small static HTTP server on the same port.

pub mod client;
mod http;
pub mod protocol;
pub mod server;
pub mod snapshot;

pub use client::{Client, ClientError};
pub use protocol::{ClientMsg, ErrorCode, Role, ServerMsg, PROTOCOL};
pub use server::{serve, BridgeError, ServeConfig, ServerHandle, SessionSource};
pub use snapshot::{apply, diff, Delta, Snapshot};
