//! Gradual distributional shifts of dialogue response-ranking data and the
//! accuracy / calibration metrics used to evaluate rankers under them.
//!
//! Word-level shifts replace context words with synonyms that never occurred
//! in training ([`shift_uw`]); sentence-level shifts delete the earliest
//! context turns ([`shift_ic`]). Predictions come from any [`harness::Scorer`]
//! or from a predictions file, optionally temperature scaled
//! ([`calibration`]), and are scored with R@1, Brier, and ECE ([`metrics`]).

pub mod calibration;
pub mod corpus;
pub mod demo;
pub mod error;
pub mod harness;
pub mod importance;
pub mod io;
pub mod lexicon;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod seed;
pub mod shift_ic;
pub mod shift_uw;
pub mod synth;

pub use error::{Error, Result};
