//! Semantic channel equalization between agents with mismatched languages.
//!
//! The crate learns a codebook of affine maps (one per source-language atom)
//! by jointly optimizing a Kantorovich coupling and a linear transformation,
//! selects a map per message with a Bayes decision rule, and simulates the
//! end-to-end link over an AWGN channel against classical and learned
//! baselines.
//!
//! Module map:
//! - [`semlang`]: semantic symbols, languages, partitions, posteriors.
//! - [`ot`]: cost matrices, exact and entropic couplings, the joint map solver.
//! - [`codebook`]: codebook construction, information transfer, entropy, I/O.
//! - [`equalizer`]: risk, transformation selection, pre/post equalization.
//! - [`channel`]: power normalization, AWGN, QAM modem, feature quantizer.
//! - [`baselines`]: ClassCom A/B, no-EQ, gradient-trained equalizers.
//! - [`harness`]: experiment configs, sweeps, CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod channel;
pub mod cli;
pub mod codebook;
pub mod equalizer;
pub mod error;
pub mod fixtures;
pub mod harness;
pub mod linalg;
pub mod ot;
pub mod rng;
pub mod semlang;

pub use error::{Error, Result};
pub use num_complex::Complex64;
