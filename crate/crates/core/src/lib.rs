//! Text-to-facial-expression synthesis for sign language avatars.
//!
//! The library generates 64-frame sequences of 69 2D facial landmarks from a
//! text sentence, conditioned on sentence semantics and sentiment. It is
//! organized around five stages:
//!
//! 1. [`topology`] — the 69-vertex face graph (detector landmarks plus a
//!    centroid root), its k-NN augmentation, and a five-level graph pyramid
//!    (1 → 7 → 16 → 43 → 69 vertices) with geodesic inter-level masks.
//! 2. [`decoder`] — a residual spatio-temporal graph-convolutional decoder
//!    mapping a unit-sphere latent code to an expression sequence by
//!    alternating temporal and spatial upsampling over the pyramid.
//! 3. [`glo`] — generative latent optimization: decoder parameters and one
//!    free latent per training sample are optimized jointly under an l1
//!    reconstruction loss, latents re-projected to the unit sphere after
//!    every step.
//! 4. [`sampler`] — a small fully connected network regressing a latent code
//!    from concatenated semantic and sentiment sentence embeddings
//!    ([`text`]), trained with cosine distance against the optimized
//!    latents.
//! 5. [`eval`] — a Fréchet expression distance built on a temporal
//!    autoencoder feature space, plus region-wise landmark distances.
//!
//! [`preprocess`] conditions raw landmark tracks (frontalization, adaptive
//! smoothing, uniform resampling, bounding-box normalization) and generates
//! the synthetic datasets used by the test suite; [`pipeline`] orchestrates
//! whole runs behind the CLI; [`render`] draws landmark animations and
//! plots. All numerics are `f64`, single-threaded, and bit-reproducible
//! under a fixed seed.

pub mod ablation;
pub mod checkpoint;
pub mod decoder;
pub mod error;
pub mod eval;
pub mod glo;
pub mod nn;
pub mod pipeline;
pub mod preprocess;
pub mod render;
pub mod sampler;
pub mod text;
pub mod topology;

pub use error::{Error, Result};
