//! Membership inference auditing.
//!
//! Score-based membership inference attacks against small feed-forward
//! classifiers, difficulty calibration of those scores with reference models
//! (trained from scratch or by continuing training from the target), and the
//! evaluation machinery used to compare attacks: ROC/AUC, precision-recall,
//! accuracy at a selected threshold, PPV and TPR at fixed FPR.
//!
//! The [`harness`] module ties everything into a repeatable experiment
//! protocol with versioned JSON reports.

pub mod calibration;
pub mod data;
pub mod error;
pub mod evaluation;
mod float_serde;
pub mod harness;
pub mod model;
pub mod rng;
pub mod scores;

pub use error::{Error, Result};
