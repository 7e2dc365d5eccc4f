//! Solver toolkit for multi-blank multiple-choice sentence-completion questions.
//!
//! The pipeline: generate synthetic questions ([`syngen`]), parse and expand
//! them into filled candidate sentences ([`qdata`]), tokenize ([`tokenizer`]),
//! pretrain a miniature encoder-decoder on a denoising objective and fine-tune
//! a binary right/wrong-option head ([`seq2seq`], [`training`]), then answer
//! questions by argmax over per-option correct-probabilities with optional
//! threshold abstention ([`solver`]) and evaluate ([`evalkit`]).
//!
//! All numeric code is generic over the scalar type via [`tensorcore::Scalar`]
//! (f32 for training, f64 for gradient checks).

pub mod error;
pub mod evalkit;
pub mod qdata;
pub mod seq2seq;
pub mod solver;
pub mod syngen;
pub mod tensorcore;
pub mod tokenizer;
pub mod training;

pub use error::{Error, Result};

/// Default training scalar type.
pub type Scalar32 = f32;
/// Scalar type used by the finite-difference gradient checks.
pub type Scalar64 = f64;

pub type Graph32 = tensorcore::Graph<f32>;
pub type Graph64 = tensorcore::Graph<f64>;
pub type Model32 = seq2seq::Model<f32>;
pub type Model64 = seq2seq::Model<f64>;
