//! Endless panoramas from a fixed-capacity token generator.
//!
//! A panorama is a [`TokenGrid`] grown one crop at a time: the generator sees
//! a window of already committed tokens and continues it, so every crop is
//! conditioned on its neighbour instead of being stitched afterwards. Grids
//! are rendered and re-encoded through a [`Codebook`], and seams are scored
//! with total variation, SSIM and a normalized composite.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root pick a precision.

pub mod error;
pub mod formats;
pub mod generators;
pub mod grid;
pub mod image;
pub mod metrics;
pub mod scalar;
pub mod scheduler;
pub mod tokenizer;

pub use error::{Error, Result};
pub use generators::{
    encode_prompt, ConditioningContext, MarkovGenerator, PromptEmbedding, SamplingParams, StreamKey, TinyGenerator,
    TokenGenerator,
};
pub use grid::{hconcat, raster_index, vconcat, TokenGrid, TokenId};
pub use image::PixelImage;
pub use scalar::Scalar;
pub use scheduler::{Direction, ExpansionPlan, GenerationTrace, LayoutSpec, NextCrop};

pub type Codebook64 = tokenizer::Codebook<f64>;
pub type Codebook32 = tokenizer::Codebook<f32>;
pub type TinyModel64 = generators::TinyCausalModel<f64>;
pub type TinyModel32 = generators::TinyCausalModel<f32>;
