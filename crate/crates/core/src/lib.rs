//! Learning under spectral risks.
//!
//! A spectral risk weights the quantiles of a loss distribution by a
//! nondecreasing density `σ` on `[0, 1]`. This crate holds the allocation-only
//! numerical core:
//!
//! * [`spectra`]: spectral densities (exponential, CVaR, uniform) and their calculus.
//! * [`dist`]: loss-CDF models (empirical step function, folded normal) and the DKW band.
//! * [`risk`]: plug-in and smoothed spectral risks, the Catoni M-estimator and error bounds.
//! * [`losses`]: multiclass logistic regression and synthetic convex losses.
//! * [`optim`]: derivative-free stochastic mirror descent and its first-order variants.
//! * [`boost`]: confidence boosting over independent weak candidates.
//! * [`data`]: in-memory datasets, unit-interval scaling, splits and synthetic tasks.
//!
//! File formats, the experiment driver and the command-line tool live in the
//! `spectral-lab` companion crate.
#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod boost;
pub mod data;
pub mod dist;
mod error;
pub mod losses;
pub mod optim;
pub mod risk;
pub mod spectra;

pub use error::{Error, Result};
pub use losses::{Example, LossModel, Target};
pub use spectra::Spectrum;

/// Seeded generator used throughout the crate.
pub type Rng64 = rand_chacha::ChaCha8Rng;

/// Derives an independent generator for a sub-run (a trial, a boosting
/// candidate) from a master seed and an index.
pub fn derive_rng(seed: u64, index: u64) -> Rng64 {
    use rand::SeedableRng;
    let mut rng = Rng64::seed_from_u64(seed);
    rng.set_stream(index.wrapping_add(1));
    rng
}
