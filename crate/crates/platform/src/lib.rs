//! Persistence, HTTP service and operator CLI around the `gpa_core` engine.

pub mod archive;
pub mod cli;
pub mod config;
pub mod server;
