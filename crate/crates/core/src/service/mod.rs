//! Network front end: engine, broker placement, wire protocol, TCP server
//! and client, and the operator command line.

pub mod cli;
mod client;
mod engine;
mod placement;
mod server;
pub mod wire;

pub use client::Client;
pub use engine::{Engine, EngineConfig};
pub use placement::BrokerPool;
pub use server::{handle, Server};
