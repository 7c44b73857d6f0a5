//! Karhunen-Loeve decomposition of covariance operators on quadrature
//! grids, sample-path synthesis from the expansion, and spectral analysis
//! of path regularity.
//!
//! The pipeline: a [`grid::Grid`] discretizes a measure on an interval; a
//! [`kernel::KernelSpec`] supplies the covariance function; [`spectral`]
//! computes eigenvalues and L2-orthonormal eigenfunctions of the weighted
//! Gram matrix; [`sampling`] draws paths `X = sum_i sqrt(mu_i) xi_i e_i`
//! with interchangeable coefficient laws; [`powerspace`] measures paths in
//! fractional norms; [`analysis`] fits eigenvalue decay, certifies Besov
//! smoothness, and estimates truncation and small-ball behavior.
//!
//! The `kls` binary exposes the pipeline as subcommands (`eig`, `sample`,
//! `truncation`, `smallball`, `certify`, `probe`) driven by JSON configs.

// Negated comparisons like `!(x > 0.0)` are deliberate throughout: they
// treat NaN as a validation failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bessel;
pub mod cli;
pub mod config;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod powerspace;
pub mod report;
pub mod sampling;
pub mod spectral;

#[cfg(test)]
pub(crate) mod testutil;

pub use analysis::{
    dichotomy_probe, fit_decay, pointwise_variance_residual, small_ball_estimate,
    smoothness_certificate, truncation_error_curve, DecayFit, DichotomyOptions, DichotomyReport,
    NormTag, SmallBallReport, SmoothnessCertificate, TruncationReport,
};
pub use error::{KlError, Result};
pub use grid::{Grid, RuleTag};
pub use kernel::KernelSpec;
pub use powerspace::{
    fourier_coeffs, power_kernel, power_norm, summability, CoeffVector, PowerExponent,
    SummabilityReport, Verdict,
};
pub use sampling::{
    replicate_rng, sample_batch, sample_coefficients, synthesize_path, CoefficientLaw, SamplePath,
};
pub use spectral::{decompose, DecomposeOptions, MercerResidual, SpectralDecomposition};
