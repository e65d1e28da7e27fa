//! Minimal neural building blocks with hand-written backward passes.
//!
//! Every layer exposes `forward`, returning its output plus whatever it needs
//! to differentiate, and `backward`, which accumulates parameter gradients into
//! a [`ParamStore`] and returns the gradient with respect to its input.

pub mod attention;
pub mod char_cnn;
pub mod dropout;
pub mod embedding;
pub mod gradcheck;
pub mod linear;
pub mod lstm;
pub mod matrix;
pub mod optim;
pub mod params;
pub mod vectors;

pub use attention::MultiHeadAttention;
pub use char_cnn::CharCnn;
pub use dropout::{dropout, dropout_apply, DropoutMask, Mode};
pub use embedding::{embed_lookup, Embedding};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use linear::{linear_forward, Linear};
pub use lstm::{BiLstm, LstmCell};
pub use matrix::Matrix;
pub use optim::Adam;
pub use params::{Param, ParamStore};
pub use vectors::WordVectors;
