//! Process plumbing for the ledger-backed OAuth system: configuration
//! files, HTTP servers for each role, HTTP clients, and demo scenarios.

pub mod config;
pub mod demo;
pub mod node;
pub mod remote;
pub mod server;
pub mod wire;
