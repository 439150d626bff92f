//! Semi-supervised and open-set GAN training under one experimental protocol.
//!
//! Two GAN families are implemented side by side: the feature-matching GAN,
//! whose classifier treats a fixed zero logit as the "fake" category, and the
//! adversarial reciprocal-point GAN, whose classifier scores samples by their
//! distance to learned reciprocal points. Supervised softmax and
//! reciprocal-point baselines share the same optimiser and data pipeline.

pub mod cli;
pub mod data;
pub mod nets;
pub mod error;
pub mod eval;
pub mod losses;
pub mod training;

pub use error::{Error, Result};
