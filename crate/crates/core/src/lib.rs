//! Group rating prediction with a from-scratch attention model.
//!
//! The crate trains a small neural network to predict the overall rating a
//! group gives an item, from the group and item identities plus optional
//! context variables and per-criterion ratings. Every field becomes an
//! embedded token; multi-head attention mixes the tokens; a dense head
//! produces the scalar rating. Training is plain reverse-mode gradients with
//! Adagrad and MSE, all in f64 and bit-reproducible under fixed seeds.
//!
//! Modules:
//! - [`tensor`]: row-major f64 matrices and the seeded RNG.
//! - [`layers`]: embedding, attention, layer norm, dense, grad checking.
//! - [`model`]: schema/scenarios, the assembled network, checkpoints, a
//!   ridge baseline.
//! - [`optim`]: MSE loss, Adagrad, the training loop with early stopping.
//! - [`data`]: ratings CSV loading, vocabularies, splits, synthetic data.
//! - [`eval`]: RMSE/MAE, test evaluation, top-K ranking, the scenario
//!   experiment runner.
//! - [`cli`]: the `grouprec` command-line entry points.

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod layers;
pub mod model;
pub mod optim;
pub mod tensor;

pub use error::{Error, Result};
