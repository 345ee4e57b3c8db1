//! Simulation library for classical-shadow state estimation under adversarial
//! measurement corruption.
//!
//! The crate generates randomized-basis measurement data from synthetic quantum
//! states, lets configurable worst-case adversaries tamper with a bounded
//! fraction of the outcome stream, and recovers observable expectations (and,
//! through a selection step over a covering net, full states) with estimators
//! that either break or survive the corruption:
//!
//! - [`quantum`] — states, observables, unitaries, Haar sampling, Born-rule
//!   measurement, and metric primitives.
//! - [`moments`] — closed-form moments of measured overlaps under the
//!   uniform (Haar) POVM, used as exact oracles for the samplers.
//! - [`robust_stats`] — truncated means, median-of-means, quantiles, discrete
//!   outcome laws, and worst-case mass-removal analysis.
//! - [`shadows`] — shadow-sample collection, per-sample linear estimators, and
//!   the naive direct-measurement baseline.
//! - [`adversary`] — corruption models: sample replacement, bit flips, and
//!   total-variation-optimal coupling attacks with hard instances.
//! - [`tomography`] — covering nets, two-outcome distinguishing observables,
//!   and selection-based full-state estimation.
//! - [`experiments`] — reproducible experiment runners with CSV/JSON output.
//!
//! All randomness flows through explicitly derived [`seeding`] streams, so
//! every run is reproducible bit-for-bit regardless of thread count; the
//! `parallel` feature (on by default) switches the data-parallel loops between
//! rayon and sequential execution without changing results.

pub mod adversary;
mod error;
pub mod experiments;
pub mod moments;
pub mod parallel;
pub mod quantum;
pub mod robust_stats;
pub mod seeding;
pub mod shadows;
pub mod tomography;

pub use error::{Error, Result};
