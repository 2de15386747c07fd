//! Live skill graph sessions over HTTP and WebSocket.
//!
//! Each session runs a scheduler and tracker in its own owner thread.
//! Commands, disturbances and e-stops are queued and applied at the next tick
//! boundary; every tick is published as an `sgapi/1` snapshot to all stream
//! subscribers.

pub mod api;
pub mod server;
pub mod session;

pub use api::{CreateSession, SessionSpec, StateSnapshot, StreamMessage};
pub use server::{serve, ApiError, Service, ServiceConfig};
pub use session::{replay, Action, SessionCore, SessionError};
