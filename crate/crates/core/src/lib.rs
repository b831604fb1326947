//! Face frontalization with a Boundary Equilibrium GAN.
//!
//! The pipeline trains an auto-encoder-discriminator GAN on posed faces,
//! inverts a side-pose image and its mirror into latent embeddings, and walks
//! the great-circle arc between the two embeddings with Slerp. The centre of
//! that arc decodes to an approximately frontal face.
//!
//! Everything runs in double precision on the CPU through a small
//! reverse-mode autodiff tape ([`autodiff`]).

// Range checks are written as `!(a < b)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod inversion;
pub mod models;
pub mod pipeline;
pub mod rng;
pub mod slerp;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
pub use tensor::Tensor;
