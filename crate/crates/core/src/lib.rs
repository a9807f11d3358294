//! Confidence sets for the level set `{x ∈ K : x̃ᵀβ ≥ λ}` of a linear (or
//! linear-predictor) regression function, built from simultaneous
//! confidence bands whose critical constants are calibrated by Monte Carlo.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: datasets, basis expansion, covariate boxes, least squares.
//! - [`band`]: pivot simulation, critical constants, band evaluation.
//! - [`level_set`]: the four confidence sets, sublevel sets, GLM adapter.
//! - [`coverage`]: simulation checks of the coverage guarantees.
//! - [`cli`]: file formats, caching and the command-line front end.

pub mod band;
pub mod cache;
pub mod cli;
pub mod contour;
pub mod coverage;
pub mod distributions;
pub mod error;
pub mod level_set;
pub mod model;
pub mod report;
pub mod rng;

pub use band::{
    band_at, critical_constant, critical_constants, sup_ratio, BandSpec, ConstantSet, CriticalConstant,
    MonteCarloConfig, Shape, Side,
};
pub use error::{Error, Result};
pub use level_set::{
    confidence_set, glm_confidence_set, glm_confidence_sets, nesting_check, sublevel_set, LevelSetEstimate,
    LinkAdapter, LinkDirection, SetKind,
};
pub use model::{band_width_factor, expand_basis, fit_ols, BasisMap, BoxRegion, Dataset, Dof, RegressionFit};
