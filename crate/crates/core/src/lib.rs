//! Attrition analysis for online-course cohorts.
//!
//! The crate turns raw course artifacts (event logs, threaded forum dumps,
//! outcome tables) into weekly per-student feature tables, builds student
//! interaction graphs under two reply-attribution rules, and runs three
//! families of analysis on top:
//!
//! - Cox proportional-hazards survival models of time-to-disengagement
//!   ([`survival`]),
//! - Gini-importance feature selection plus nested cross-validated
//!   logistic-regression / linear-SVM classifiers ([`models`]),
//! - cross-course model transfer over a shared behavioral feature subset
//!   ([`pipeline`]).
//!
//! Real course exports are not bundled; [`synth`] generates cohorts with a
//! known hazard model so every stage can be validated against ground truth.
//!
//! All randomized steps take explicit seeds and every reduction order is
//! fixed, so outputs are byte-identical across runs and across the
//! `parallel` feature (rayon) vs the sequential fallback.

pub mod error;
pub mod featurize;
pub mod forum_graph;
pub mod graph_metrics;
pub mod ingest;
pub mod models;
pub mod parallel;
pub mod pipeline;
pub mod seeds;
pub mod survival;
pub mod synth;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
