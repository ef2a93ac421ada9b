//! Offensive-language classification for tweets.
//!
//! The crate covers the whole pipeline, each stage in its own module:
//!
//! * [`corpus`]: OLID parsing, tweet cleaning, vocabulary and fixed-length encoding
//! * [`resample`]: over/under-sampling to equal class sizes, controlled by `p_u`
//! * [`embeddings`]: CBOW word embeddings with hashed character n-grams, plus a
//!   loader for GloVe-style text vectors
//! * [`nn`]: dense, LSTM, BiLSTM, conv1d, pooling, dropout, losses and Adam, all
//!   with hand-written backward passes
//! * [`model`]: the embedding/BiLSTM/conv/FFNN classifier, early stopping,
//!   transfer of the shared trunk to tasks B and C, model files
//! * [`baseline`]: bag-of-words random forest and cross-validated choice of `p_u`
//! * [`hpo`]: Gaussian-process Bayesian optimisation with expected improvement
//! * [`eval`]: confusion matrices, per-class precision/recall/F1, macro-F1
//! * [`cli`]: the batch driver behind the `offlang` binary
//!
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod baseline;
pub mod cli;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod hash;
pub mod hpo;
pub mod model;
pub mod nn;
pub mod resample;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
