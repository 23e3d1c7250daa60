//! Unified slice/volume CT tokenization with organ-level token enhancement, a small causal
//! decoder trained with a staged autoregressive objective, and lexical benchmark scoring.

pub mod config;
pub mod error;
pub mod eval;
pub mod init;
pub mod json;
pub mod linalg;
pub mod lm;
pub mod omct;
pub mod ose;
pub mod pipeline;
pub mod prng;
pub mod sce;
pub mod tensor;
pub mod volume;

pub use config::{Modality, PipelineConfig};
pub use error::{Error, ErrorClass, Result};
pub use prng::Prng;
pub use tensor::Tensor;
