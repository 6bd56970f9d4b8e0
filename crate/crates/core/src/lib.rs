//! Hyperspectral band selection.
//!
//! The pipeline reduces a cube of hundreds of narrow bands to `k` salient
//! wavelengths:
//!
//! 1. [`datacube`]: load cubes, correct to reflectance, bin, cut labeled
//!    patches, standardise.
//! 2. [`collinearity`]: pairwise VIFs and the inter-band redundancy scan,
//!    whose local minima are the candidate bands.
//! 3. [`saliency`]: rank candidates by histogram entropy.
//! 4. [`selection`]: greedy wrapper search scored by a [`classifier`] under
//!    5×2 stratified cross-validation, plus threshold sweeps.
//! 5. [`sensorsim`]: simulate the resulting multispectral sensor with
//!    Gaussian filters.

pub mod classifier;
pub mod collinearity;
pub mod datacube;
pub mod error;
pub mod regression;
pub mod saliency;
pub mod selection;
pub mod sensorsim;
pub mod synthetic;

pub use error::{Error, Result};
