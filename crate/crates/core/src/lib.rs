//! Patient user embeddings learned from clinical notes by contrasting each
//! patient's note snippets and medical concepts against counterfactuals.
//!
//! The numeric core is generic over the float type; the aliases below fix it
//! to `f64` (training and gradient checks) or `f32` (storage-light inference).

pub mod baselines;
pub mod concepts;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod io;
pub mod nn;
pub mod scalar;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type EmbeddingTable64 = nn::EmbeddingTable<f64>;
pub type EmbeddingTable32 = nn::EmbeddingTable<f32>;
pub type Encoder64 = nn::Encoder<f64>;
pub type BiGru64 = nn::BiGru<f64>;
pub type ModelParams64 = training::ModelParams<f64>;
pub type ModelParams32 = training::ModelParams<f32>;
pub type TrainState64 = training::TrainState<f64>;
