//! Conditional generator, dual-head discriminator and frozen feature backbones.

mod backbone;
mod discriminator;
mod generator;

pub use backbone::{ConvStack, FeatureBackbone, Provenance};
pub use discriminator::{BoundDiscriminator, Discriminator, DiscriminatorConfig, DiscriminatorOutput};
pub use generator::{projection_apply, BoundGenerator, Generator, GeneratorConfig, MIN_GENERATOR_SIDE};

use multisr_tensor::{ParamSet, Scalar, Tensor};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::container::Container;
use crate::{Error, Result};

/// Number of trainable scalars in a parameter set.
pub fn count_params<T: Scalar>(params: &ParamSet<T>) -> usize {
    params.count()
}

pub(crate) fn gaussian<T: Scalar, R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Tensor<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| T::lit(dist.sample(rng)))
}

/// Copies every array of `params` into `out` under `prefix`.
pub fn export_params<T: Scalar>(params: &ParamSet<T>, prefix: &str, out: &mut Container) {
    for p in params.iter() {
        out.push(format!("{prefix}{}", p.name), p.value());
    }
}

/// Overwrites `params` from `src`; every name must be present with a matching shape.
pub fn import_params<T: Scalar>(params: &mut ParamSet<T>, prefix: &str, src: &Container) -> Result<()> {
    for p in params.iter_mut() {
        let key = format!("{prefix}{}", p.name);
        let t = src
            .tensor::<T>(&key)
            .ok_or_else(|| Error::Config(format!("missing array {key}")))?;
        if t.shape() != p.value().shape() {
            return Err(Error::Shape(format!(
                "array {key}: stored {:?}, model expects {:?}",
                t.shape(),
                p.value().shape()
            )));
        }
        p.set(t);
    }
    Ok(())
}
