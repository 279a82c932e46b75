//! Image caption generation with a three-layer LSTM decoder.
//!
//! Two decoder variants share one code path: an encoder-decoder model that
//! sees the image only through its initial states, and a soft-attention
//! model that also receives a per-step context vector. Around them sit a
//! small reverse-mode autodiff engine, geometric augmentation, the `ICFE`
//! feature and `ICKP` checkpoint formats, and BLEU/CIDEr/METEOR-style
//! metrics.
//!
//! Model code is generic over [`Scalar`]; the aliases below fix it to
//! `f64`, which is what training and gradient checking use.

pub mod attention;
pub mod augment;
pub mod captioner;
pub mod error;
pub mod features;
pub mod gradcheck;
pub mod lstm;
pub mod metrics;
pub mod scalar;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor = tensor::Tensor<f64>;
pub type Graph = tensor::Graph<f64>;
pub type FeatureSet = features::FeatureSet<f64>;
pub type CaptionModel = captioner::CaptionModel<f64>;
pub type Trainer = train::Trainer<f64>;
pub type Checkpoint = train::Checkpoint<f64>;
