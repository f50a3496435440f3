//! Evaluation engine for crowd-sourced context notes written by people and
//! by language models.
//!
//! The crate loads note and rating exports, scores notes with a bridging
//! matrix factorization, builds equal-exposure samples, fits the regression
//! and paired-comparison models used to compare note authors, computes
//! descriptive statistics, and simulates the rating platform to study how
//! note timing biases scores.

// `!(x > 0.0)` style checks reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod descriptives;
pub mod error;
pub mod exposure;
pub mod inference;
pub mod report;
pub mod scoring;
pub mod simulator;

pub use error::{Error, Result};
