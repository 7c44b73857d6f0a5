//! Shared unit-test fixtures.

use crate::grid::Grid;
use crate::spectral::SpectralDecomposition;

/// Decomposition carrying a prescribed eigenvalue sequence and no usable
/// eigenfunctions, for exercising spectrum-only routines (power norms on
/// explicit coefficients, decay fits, summability, dichotomy probes) with
/// synthetic spectra whose rank exceeds any reasonable grid size.
pub(crate) fn synthetic_dec(mu: Vec<f64>) -> SpectralDecomposition {
    let grid = Grid::uniform(0.0, 1.0, 1).unwrap();
    let efuns = vec![vec![0.0]; mu.len()];
    SpectralDecomposition::from_parts(grid, mu, efuns, "synthetic".into(), 0.0).unwrap()
}
