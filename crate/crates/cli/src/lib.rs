//! Library surface of the experiment runner, exposing the config schema and
//! pipeline stages to the binary and to integration tests.

pub mod config;
pub mod pipeline;
