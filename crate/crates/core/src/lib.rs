//! Skeleton extraction from binary shape masks, end to end: dataset split and
//! rotation augmentation, an encoder-decoder network with coordinate channels,
//! squeeze-and-excitation gating and deeply supervised side outputs, a BCE +
//! Dice training objective with Adam and plateau learning-rate decay, and
//! pixel-F1 evaluation with side/fused ensembling.
//!
//! The crate is `no_std` (with `alloc`) and generic over the float type:
//! training runs in `f32`, while `f64` exists for finite-difference gradient
//! verification. Everything is single-threaded and deterministic given the
//! seeds carried in the configs; the companion CLI crate adds file formats
//! and the command-line surface.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod coord;
pub mod data;
pub mod error;
pub mod loss;
pub mod mask;
pub mod metrics;
pub mod network;
pub mod nn;
pub mod optim;
pub mod synth;
pub mod tensor;
pub mod train;

pub use error::Error;
pub use mask::{Mask, Pair};
pub use network::{Model, NetworkConfig, PredictionSet};
pub use tensor::Tensor;

/// Float scalar the numerics are generic over. Implemented for `f32` and
/// `f64`; all random initialization draws in `f64` and converts, so both
/// instantiations consume identical random streams.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + core::fmt::Debug
    + core::fmt::Display
    + Default
    + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `f64` → `T`, infallible for float targets.
#[inline]
pub fn s<T: Scalar>(v: f64) -> T {
    <T as num_traits::FromPrimitive>::from_f64(v).expect("f64 converts to scalar")
}

/// `T` → `f64`, infallible for float sources.
#[inline]
pub fn to64<T: Scalar>(v: T) -> f64 {
    <T as num_traits::ToPrimitive>::to_f64(&v).expect("scalar converts to f64")
}
