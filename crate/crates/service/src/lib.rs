//! Session service: hosts tracking sessions over a WebSocket and streams
//! states, events and optional server-rendered frames back to each client.

// `!(a > b)` is how NaN gets rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod outbox;
pub mod protocol;
pub mod registry;
pub mod server;
pub mod session;

pub use server::{router, serve, ServerConfig};
pub use session::{Session, SessionError};
