//! HTTP service, event log and command line for the crowd rule pipeline.

pub mod api;
pub mod commands;
pub mod config;
pub mod payload;
pub mod store;
