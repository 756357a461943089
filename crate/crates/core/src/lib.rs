//! Feint behaviors for two-player and multi-player combat games: generation,
//! composition, reward shaping, diversity metrics, a small combat arena and
//! a self-play learning harness.

pub mod catalog;
pub mod compose;
pub mod config;
pub mod diversity;
pub mod env;
pub mod error;
pub mod harness;
pub mod lp;
pub mod occupancy;
pub mod policy;
pub mod reward;
pub mod scripted;
pub mod templates;

pub use error::{Error, Result};
