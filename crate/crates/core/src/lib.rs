//! Multi-domain super-resolution: degradation synthesis, corpus sampling and
//! augmentation, a label-conditioned generator with a dual-head
//! discriminator, training, and full-reference evaluation.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix the usual choices.

pub mod augment;
pub mod container;
pub mod corpus;
pub mod degradation;
pub mod domain;
pub mod evalkit;
mod error;
pub mod image;
pub mod losses;
pub mod models;
pub mod trainer;

pub use domain::{encode_label, Domain, NUM_DOMAINS};
pub use error::{Error, Result};
pub use image::{load_image, save_image, BitDepth, Image};
pub use multisr_tensor::{Scalar, Tensor};

pub type Image32 = Image<f32>;
pub type Image64 = Image<f64>;
pub type Generator32 = models::Generator<f32>;
pub type Generator64 = models::Generator<f64>;
pub type Discriminator32 = models::Discriminator<f32>;
pub type Discriminator64 = models::Discriminator<f64>;
