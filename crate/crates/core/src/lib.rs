// SPDX-License-Identifier: MIT OR Apache-2.0

//! Test-time detoxification by reward-guided representation editing.
//!
//! The pipeline operates on sequences of final-layer hidden vectors:
//!
//! - [`transition`] extracts a non-toxic direction from paired annotations
//!   and densifies them into interpolated transition trajectories;
//! - [`rewardnet`] trains a token-level reward MLP on those trajectories;
//! - [`editor`] steers and refines each token representation during
//!   decoding;
//! - [`plantedlm`] is a small generator with a known toxicity direction used
//!   to exercise every stage end to end;
//! - [`eval`] wires the stages together and produces reports.

pub mod checkpoint;
pub mod editor;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod plantedlm;
pub mod reprstore;
pub mod rewardnet;
pub mod transition;

pub use error::{Error, Result};
