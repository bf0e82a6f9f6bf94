//! Simulator for satellite-ground collaborative object counting under energy
//! and downlink budgets.
//!
//! A synthetic (or manifest-loaded) ground track is cut into tiles, counted
//! onboard by a cheap model, filtered, deduplicated by color-moment
//! clustering, and throttled onto a contact window where a stronger ground
//! model recounts what was sent. Energy is charged per activity against a
//! budget, and accuracy is scored with the count mean absolute error.

// NaN-rejecting checks are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dedup;
pub mod detector;
pub mod downlink;
pub mod energy;
pub mod error;
pub mod pipeline;
pub mod rng;
pub mod scene;
pub mod tiling;

pub use error::{Error, Result};
