//! Learned image codec built on binary spherical quantization.
//!
//! The pipeline: an image is cut into patches, embedded and run through a
//! transformer encoder; each position is projected onto the unit sphere and
//! sign-quantized into an `L`-bit token ([`bsq`], [`model`]). Token grids are
//! packed raw or range coded under an adaptive context model ([`entropy`]),
//! then wrapped in a small container with an optional JPEG fallback
//! ([`container`]). [`metrics`], [`freq`] and [`stats`] cover quality
//! metrics and losses, frequency-domain enhancement blocks, and token
//! statistics.

pub mod bsq;
pub mod cli;
pub mod codec;
pub mod config;
pub mod container;
pub mod entropy;
pub mod error;
pub mod freq;
pub mod grid;
pub mod image;
pub mod io;
pub mod metrics;
pub mod model;
pub mod stats;
pub mod transformer;
pub mod weights;

pub use codec::{decode_bytes, encode_image};
pub use container::CodingMode;
pub use error::{CodecError, Result};
pub use grid::TokenGrid;
pub use image::Image;
pub use model::{ModelConfig, Tokenizer};
pub use weights::ModelWeights;
