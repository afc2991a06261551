//! Traceable fingerprints for tabular data by inserting groups of fake
//! tuples under a sparse-priority codebook.
//!
//! The pipeline is: [`codebook::assign`] users to watermarks,
//! [`fakegen::generate`] the fake tuple groups, [`watermark::embed`] one copy
//! per user, and after a leak [`watermark::extract`] plus
//! [`watermark::identify`]. [`analytics`] holds the closed-form predictions
//! and [`experiments`] checks them by simulation against the
//! [`baseline`] combination scheme.

pub mod analytics;
pub mod attacks;
pub mod baseline;
pub mod codebook;
pub mod error;
pub mod experiments;
pub mod fakegen;
pub mod rng;
pub mod sample;
pub mod store;
pub mod watermark;

pub use error::{Error, Result};

/// Double-precision theory point, the form used by the CLI and experiments.
pub type TheoryPoint = analytics::TheoryPoint<f64>;
/// Single-precision theory point.
pub type TheoryPoint32 = analytics::TheoryPoint<f32>;
