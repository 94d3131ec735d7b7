//! Core of the `fidel` toolkit: a small dense tensor engine, the alphabet grid,
//! augmentation transforms, the shared-trunk three-head network and the
//! weighted multi-task training objective.
//!
//! The crate is `no_std` (with `alloc`) when built without the default `std`
//! feature. All file formats, image decoding and the command line live in the
//! companion `fidel` crate.
//!
//! Randomness is drawn from ChaCha8 streams (see [`rng::RngStream`]); a seed
//! and a stream id fully determine every draw on every platform.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod augment;
pub mod error;
pub mod glyph;
pub mod gradcheck;
pub mod grid;
pub mod model;
pub mod ops;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use glyph::{GlyphImage, LabelTriple};
pub use grid::AlphabetGrid;
pub use model::{ModelConfig, MultiHeadOutput, Network};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use tensor::{ParamRole, ParamTensor, Tensor};
pub use train::{TrainConfig, TrainState};
