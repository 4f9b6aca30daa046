//! Multi-view conditional VAE toolkit.
//!
//! Learns identity-invariant latent representations from paired
//! image+keypoint data. The crate bundles:
//!
//! - [`tensor`]: a reverse-mode autodiff engine with 2-D convolutions;
//! - [`nn`]: layers, initializers, Adam, and the VAE loss primitives;
//! - [`models`]: the identity-conditioned image CVAE baseline, the keypoint
//!   CVAE, two multi-view training variants, and the retargeting /
//!   interpolation / new-identity procedures;
//! - [`synthgen`]: a deterministic procedural face dataset with ground-truth
//!   shared semantics;
//! - [`train`]: the mini-batch training loop and checkpoints;
//! - [`eval`]: AE error, classification error, correspondence L2, latent
//!   probes, and PCA embedding export;
//! - [`cli`]: the `mvcvae` command-line pipeline.
//!
//! See the crate examples for runnable walkthroughs of each capability.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod models;
pub mod nn;
pub mod pgm;
pub mod rng;
pub mod synthgen;
pub mod train;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{grad_check, no_grad, Tensor};

use std::sync::OnceLock;

/// Cap rayon's worker pool from `MVD_THREADS`. Results are bitwise
/// identical at any thread count. First call wins; later calls are no-ops,
/// as are calls after rayon self-initializes.
pub fn configure_threads_from_env() {
    static DONE: OnceLock<()> = OnceLock::new();
    DONE.get_or_init(|| {
        if let Some(n) = std::env::var("MVD_THREADS")
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&n| n >= 1)
        {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    });
}
