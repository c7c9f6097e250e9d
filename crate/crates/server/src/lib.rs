//! Network and disk side of flowclass: the HTTP protocol with live event
//! push, the append-only journal, the classroom simulator and batch grading.
//! `PROTOCOL.md` at the repository root documents the wire format.

pub mod api;
pub mod client;
pub mod config;
pub mod error;
pub mod events;
pub mod grade;
mod server;
pub mod simulate;
pub mod store;

pub use config::ServerConfig;
pub use server::{start, RunningServer};
