//! Asynchronous push-pull gradient tracking with running-sum robustification.
//!
//! The crate is organised bottom-up: [`graph`] and [`weights`] describe the
//! network, [`problems`] the objectives, [`node`] the per-agent protocol,
//! [`sim`] the deterministic asynchrony simulator, [`augmented`] the
//! global-view linear recursions used as an oracle, and [`harness`] the
//! experiment runner behind the `rfast` binary.

pub mod augmented;
pub mod error;
pub mod graph;
pub mod harness;
pub mod node;
pub mod problems;
pub mod sim;
pub mod stats;
pub mod vecops;
pub mod weights;

pub use error::{Error, Result};
