//! Importance-aware multi-source adversarial domain adaptation for
//! drug-response prediction.
//!
//! K labeled source expression domains and one unlabeled target domain are
//! encoded by a shared autoencoder. A weight generator turns the
//! source/target embedding differences into per-dimension importance
//! weights, a discriminator behind a gradient-reversal layer aligns the
//! weighted embeddings, and a predictor trained on the labeled sources
//! scores the target samples.

pub mod checkpoint;
pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
