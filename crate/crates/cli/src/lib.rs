//! Experiment runner library: configuration, on-disk formats, and the
//! pipeline stages behind the `rdtf` binary.

pub mod config;
pub mod io;
pub mod pipeline;
