//! Toy language model: byte vocabulary, causal decoder, masked next-token loss, gradient
//! checking and the two-stage trainer.

pub mod checkpoint;
pub mod data;
pub mod decoder;
pub mod gradcheck;
pub mod loss;
pub mod model;
pub mod optim;
pub mod train;
pub mod vocab;

pub use decoder::{decoder_forward, Decoder, DecoderCache};
pub use loss::{ar_loss, ar_loss_grad, log_softmax};
pub use model::{embed_text, Group, OrganPath, ParamSpec, PreparedSample, Trainable};
pub use train::{train, TrainConfig, TrainOutcome};
pub use vocab::{decode_text, encode_text, BOS, EOS, PAD, VOCAB_SIZE};
