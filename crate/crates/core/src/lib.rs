//! Matched-pair randomization inference for continuous and time-varying
//! treatment doses.

// `!(x > 0.0)` is written on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod episim;
pub mod error;
pub mod inference;
pub mod interference;
pub mod io;
pub mod longitudinal;
pub mod matching;
pub mod model;
pub mod rng;
pub mod sensitivity;

pub use error::{Error, Result};
