//! Unified multi-skeleton gesture synthesis.
//!
//! The pipeline unifies motion from heterogeneous skeletons into a shared
//! 7-node primal latent space, generates speech-conditioned gestures with a
//! guided diffusion model, discretizes upper-body motion through a VQ
//! codebook, refines the generator with a learned reward model and REINFORCE,
//! and evaluates the results with CCA / FGD / diversity / kinematic metrics.

pub mod bvh;
pub mod ckpt;
pub mod error;
pub mod nn;
pub mod retarget;
pub mod rot;
pub mod skeleton;
pub mod synth;

pub use error::{Error, Result};
