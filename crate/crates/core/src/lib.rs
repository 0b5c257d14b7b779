//! Latent-space frame compression and retrieval.
//!
//! Trains convolutional autoencoders (classical and variational) to compress
//! frame corpora into small latent indexes, retrieves candidates for a query
//! by exact L2 nearest-neighbour search, and re-ranks candidates with a
//! weight-shared Siamese network trained on a contrastive loss.
//!
//! Layering, bottom to top:
//!
//! - [`tensor`]: dense tensors with reverse-mode autodiff.
//! - [`nn`]: layers, losses, optimizers, weight initialization.
//! - [`dataio`]: frame corpora, the synthetic corpus generator, pair sampling.
//! - [`models`]: the AE, VAE and Siamese networks and their trainers.
//! - [`index`]: offline latent indexing of a target corpus.
//! - [`retrieval`]: query encoding, k-NN candidate search, Siamese re-ranking.
//! - [`eval`]: precision evaluation, compression reports, the HTML gallery.

pub mod dataio;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod index;
pub mod models;
pub mod nn;
pub mod retrieval;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tape, Tensor};
