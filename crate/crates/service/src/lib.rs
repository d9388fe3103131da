//! Session service, chat endpoint and batch tooling around `fuzzkb-core`.
//!
//! The HTTP API lives in [`api`], the chat message flow in [`chat`], and the
//! batch pipeline and sensitivity sweeps in [`pipeline`] and [`sweep`].

pub mod api;
pub mod chat;
pub mod eda;
pub mod error;
pub mod pipeline;
pub mod session;
pub mod sweep;

pub use error::{Result, ServiceError};
