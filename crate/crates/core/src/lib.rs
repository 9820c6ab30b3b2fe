//! Crowdsourced specification of action constraints.
//!
//! Workers either judge individual (state, action) pairs or build rules with
//! a guided dropdown grammar. This crate holds the domain model, the rule
//! engine, the rule builder state machine, task orchestration, analysis and
//! a seeded worker simulator.

pub mod analytics;
pub mod builder;
pub mod dataset;
pub mod demo;
pub mod model;
pub mod orchestration;
pub mod rule;
pub mod sim;
