//! Self-contained lab for studying clean-label backdoor poisoning of
//! imitation-learned driving policies.
//!
//! The pipeline: a deterministic track simulator ([`env`]) and a scripted
//! expert ([`expert`]) produce demonstration datasets ([`data`]); an attacker
//! stamps visual triggers onto a slice of the target-action frames without
//! touching labels; a small CNN ([`nn`], [`policy`]) is cloned from the data;
//! test-time trigger schedules ([`attack`]) and the evaluation harness
//! ([`eval`], [`report`]) measure what the backdoor bought.
//!
//! Everything is seeded and reproducible: two runs from one config produce
//! byte-identical datasets, checkpoints, CSVs, and charts. The `parallel`
//! feature (on by default) runs data-parallel inner loops on rayon; results
//! are bit-identical with the feature off because all reductions happen in a
//! fixed shard order.

pub mod attack;
pub mod config;
pub mod data;
pub mod env;
pub mod error;
pub mod eval;
pub mod expert;
pub mod nn;
pub mod policy;
pub mod report;
pub mod seeding;

mod par;

pub use error::{Error, Result};
