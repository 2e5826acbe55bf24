//! Configuration loading and the staged pipeline behind the `decum` binary.

pub mod config;
pub mod error;
pub mod pipeline;
