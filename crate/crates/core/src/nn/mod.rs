//! Minimal f64 reverse-mode autodiff and the layers built on it.
//!
//! Single-threaded and fully deterministic: the only randomness comes from
//! RNGs passed in explicitly. Gradients are exact (verified against central
//! finite differences in the test suite).

pub mod layers;
pub mod optim;
pub mod params;
pub mod tape;

pub use params::ParamStore;
pub use tape::{Tape, Var};

pub type TensorD = ndarray::ArrayD<f64>;

/// Shorthand for a dynamic-dim array from a shape and fill value.
pub fn full(shape: &[usize], v: f64) -> TensorD {
    ndarray::ArrayD::from_elem(ndarray::IxDyn(shape), v)
}

pub fn zeros(shape: &[usize]) -> TensorD {
    full(shape, 0.0)
}
