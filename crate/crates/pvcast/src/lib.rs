//! Day-ahead photovoltaic power forecasting.
//!
//! The crate pairs a small LSTM regressor with a drift-aware online
//! adaptation loop: a model is pretrained offline on historical data, then
//! replayed against a stream of new days. Each day the pretrained snapshot
//! is fine-tuned on a supplementary set of adjacent and similar days before
//! forecasting the next day, while a sliding-window detector watches the
//! frozen model's daily error for concept drift.
//!
//! Numeric code is generic over the scalar type through [`num::Scalar`];
//! the aliases below fix the precision used by the command line tools.

pub mod adapt;
pub mod baselines;
pub mod cli;
pub mod data;
pub mod drift;
pub mod error;
pub mod metrics;
pub mod nnet;
pub mod num;
pub mod simdays;

pub use error::{Error, Result};

/// Scalar type used by the binary and the file formats.
pub type Real = f64;

/// Double precision LSTM parameter block.
pub type LstmParams64 = nnet::LstmParams<f64>;

/// Single precision LSTM parameter block.
pub type LstmParams32 = nnet::LstmParams<f32>;
