//! Power-space norms, fractional kernels, Fourier coefficients, and
//! eigenvalue summability verdicts.
//!
//! For a decomposition with eigenvalues `mu_i` and eigenfunctions `e_i`, the
//! power space of exponent `gamma` consists of sums `sum_i a_i mu_i^{gamma/2} e_i`
//! with square-summable coefficients; the norm of `sum_i z_i e_i` is
//! `(sum_i mu_i^{-gamma} z_i^2)^{1/2}`. Exponent 1 recovers the reproducing
//! kernel space of the (range-restricted) kernel, exponent 0 the plain L2
//! norm by Parseval.

use serde::{Deserialize, Serialize};

use crate::analysis::DecayFit;
use crate::error::{KlError, Result};
use crate::kernel::KernelSpec;
use crate::spectral::SpectralDecomposition;

/// Exponent in `(0, 1]` selecting a power space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct PowerExponent(f64);

impl PowerExponent {
    pub fn new(beta: f64) -> Result<PowerExponent> {
        if beta.is_finite() && beta > 0.0 && beta <= 1.0 {
            Ok(PowerExponent(beta))
        } else {
            Err(KlError::InvalidArgument(format!(
                "power exponent must lie in (0, 1], got {beta}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for PowerExponent {
    type Error = KlError;
    fn try_from(v: f64) -> Result<PowerExponent> {
        PowerExponent::new(v)
    }
}

impl From<PowerExponent> for f64 {
    fn from(p: PowerExponent) -> f64 {
        p.0
    }
}

/// Coefficients of a path against the eigenfunction family, aligned with a
/// decomposition's eigenvalue order.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffVector {
    z: Vec<f64>,
}

impl CoeffVector {
    pub fn new(z: Vec<f64>, dec: &SpectralDecomposition) -> Result<CoeffVector> {
        if z.len() != dec.rank() {
            return Err(KlError::InvalidArgument(format!(
                "coefficient length {} does not match rank {}",
                z.len(),
                dec.rank()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(KlError::InvalidArgument(
                "coefficients must be finite".into(),
            ));
        }
        Ok(CoeffVector { z })
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }
}

/// Quadrature Fourier coefficients `z_i = sum_j w_j path(t_j) e_i(t_j)`.
pub fn fourier_coeffs(path_vals: &[f64], dec: &SpectralDecomposition) -> Result<CoeffVector> {
    let grid = dec.grid();
    if path_vals.len() != grid.len() {
        return Err(KlError::InvalidArgument(format!(
            "path length {} does not match grid length {}",
            path_vals.len(),
            grid.len()
        )));
    }
    let w = grid.weights();
    let z = dec
        .efuns()
        .iter()
        .map(|row| {
            row.iter()
                .zip(path_vals.iter().zip(w))
                .map(|(e, (x, wj))| wj * x * e)
                .sum()
        })
        .collect();
    CoeffVector::new(z, dec)
}

/// Power-space norm `(sum_i mu_i^{-gamma} z_i^2)^{1/2}` of `sum_i z_i e_i`.
pub fn power_norm(
    z: &CoeffVector,
    dec: &SpectralDecomposition,
    gamma: PowerExponent,
) -> Result<f64> {
    if z.len() != dec.rank() {
        return Err(KlError::InvalidArgument(
            "coefficients are not aligned with this decomposition".into(),
        ));
    }
    let g = gamma.value();
    let mut acc = 0.0;
    for (zi, mu) in z.values().iter().zip(dec.mu()) {
        acc += mu.powf(-g) * zi * zi;
    }
    if acc.is_finite() {
        Ok(acc.sqrt())
    } else {
        Err(KlError::NumericError(
            "power norm overflowed the floating range".into(),
        ))
    }
}

/// Fractional kernel `k^gamma(s, t) = sum_i mu_i^gamma e_i(s) e_i(t)` over the
/// retained rank. Off-grid points need the source kernel for the Nystrom
/// extension; at grid nodes the stored values are used.
pub fn power_kernel(
    dec: &SpectralDecomposition,
    spec: Option<&KernelSpec>,
    gamma: PowerExponent,
    s: f64,
    t: f64,
) -> Result<f64> {
    let es = efun_values(dec, spec, s)?;
    let et = if s == t {
        es.clone()
    } else {
        efun_values(dec, spec, t)?
    };
    let g = gamma.value();
    let mut acc = 0.0;
    for ((mu, a), b) in dec.mu().iter().zip(&es).zip(&et) {
        acc += mu.powf(g) * a * b;
    }
    Ok(acc)
}

fn efun_values(dec: &SpectralDecomposition, spec: Option<&KernelSpec>, t: f64) -> Result<Vec<f64>> {
    if let Some(j) = dec.grid().node_index(t) {
        return Ok(dec.efuns().iter().map(|row| row[j]).collect());
    }
    match spec {
        Some(spec) => dec.nystrom_extend(spec, t),
        None => Err(KlError::UnsupportedPoint(format!(
            "{t} is not a grid node and no source kernel was given"
        ))),
    }
}

/// Summability verdict for `sum_i mu_i^beta`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Finite,
    Infinite,
    Indeterminate,
}

/// Partial sum plus extrapolated tail bracket for `sum_i mu_i^beta`.
#[derive(Debug, Clone, Serialize)]
pub struct SummabilityReport {
    pub beta: f64,
    /// `sum_{i <= rank} mu_i^beta` over the retained eigenvalues.
    pub partial: f64,
    /// Lower end of the extrapolated tail (from the steep end of the fit band).
    pub tail_low: f64,
    /// Upper end of the extrapolated tail (infinite when the flat end diverges).
    pub tail_high: f64,
    pub verdict: Verdict,
}

/// Decides `sum mu_i^beta < infinity` from the retained spectrum plus a fitted
/// power law `mu_i ~ C i^{-alpha}`: the tail integral
/// `C^beta r^{1 - alpha beta} / (alpha beta - 1)` brackets the remainder when
/// `alpha beta > 1`; `alpha beta <= 1` diverges by the integral test; a fit
/// band straddling 1 is indeterminate. With `beta` replaced by `1 - beta`
/// this answers the nuclear-dominance question for the power kernel pair.
pub fn summability(
    dec: &SpectralDecomposition,
    beta: f64,
    fit: &DecayFit,
) -> Result<SummabilityReport> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(KlError::InvalidArgument(format!(
            "beta must be positive, got {beta}"
        )));
    }
    let partial: f64 = dec.mu().iter().map(|m| m.powf(beta)).sum();
    let r = dec.rank() as f64;
    let c = fit.log_c_hat.exp();
    let (alpha_lo, alpha_hi) = fit.alpha_ci;

    let tail_at = |alpha: f64| -> f64 {
        let ab = alpha * beta;
        if ab <= 1.0 {
            f64::INFINITY
        } else {
            c.powf(beta) * r.powf(1.0 - ab) / (ab - 1.0)
        }
    };

    // The +-2 RMS band around the fitted exponent decides indeterminacy:
    // the series is called finite or infinite only when the whole band
    // sits on one side of the integral-test boundary alpha beta = 1.
    let verdict = if alpha_lo * beta > 1.0 {
        Verdict::Finite
    } else if alpha_hi * beta <= 1.0 {
        Verdict::Infinite
    } else {
        Verdict::Indeterminate
    };
    Ok(SummabilityReport {
        beta,
        partial,
        tail_low: tail_at(alpha_hi),
        tail_high: tail_at(alpha_lo),
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::fit_decay;
    use crate::grid::Grid;
    use crate::spectral::{decompose, DecomposeOptions};
    use approx::assert_abs_diff_eq;

    use crate::testutil::synthetic_dec;

    fn bm_dec(n: usize) -> (KernelSpec, SpectralDecomposition) {
        let grid = Grid::uniform(0.0, 1.0, n).unwrap();
        let spec = KernelSpec::BrownianMotion { sigma2: 1.0 };
        let dec = decompose(&spec, &grid, DecomposeOptions::default()).unwrap();
        (spec, dec)
    }

    #[test]
    fn fourier_coeffs_recover_unit_vectors() {
        let (_, dec) = bm_dec(64);
        for i in [0usize, 3, 17] {
            let z = fourier_coeffs(dec.eigenfunction(i), &dec).unwrap();
            for (k, &v) in z.values().iter().enumerate() {
                let want = if k == i { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(v, want, epsilon = 1e-10);
            }
        }
        let zero = fourier_coeffs(&vec![0.0; 64], &dec).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fourier_coeffs_round_trip_random_combination() {
        use rand::{Rng, SeedableRng};
        let (_, dec) = bm_dec(64);
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(3);
        let c: Vec<f64> = (0..dec.rank())
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        let n = dec.grid().len();
        let mut path = vec![0.0; n];
        for (i, ci) in c.iter().enumerate() {
            for (j, e) in dec.eigenfunction(i).iter().enumerate() {
                path[j] += ci * e;
            }
        }
        let z = fourier_coeffs(&path, &dec).unwrap();
        for (zi, ci) in z.values().iter().zip(&c) {
            assert_abs_diff_eq!(zi, ci, epsilon = 1e-10);
        }
    }

    #[test]
    fn power_norm_basics() {
        let (_, dec) = bm_dec(32);
        let gamma = PowerExponent::new(1.0).unwrap();

        // A single coefficient sqrt(mu_1) on e_1 has unit power-1 norm.
        let mut z = vec![0.0; dec.rank()];
        z[0] = dec.mu()[0].sqrt();
        let z = CoeffVector::new(z, &dec).unwrap();
        assert_abs_diff_eq!(power_norm(&z, &dec, gamma).unwrap(), 1.0, epsilon = 1e-12);

        // Coefficients of e_1 itself give mu_1^{-1/2}.
        let z = fourier_coeffs(dec.eigenfunction(0), &dec).unwrap();
        assert_abs_diff_eq!(
            power_norm(&z, &dec, gamma).unwrap(),
            dec.mu()[0].powf(-0.5),
            epsilon = 1e-9
        );
    }

    #[test]
    fn power_norm_synthetic_zeta_value() {
        // mu_i = i^{-2}, z_i = mu_i, gamma = 1: norm = (sum_{i<=r} i^{-2})^{1/2}.
        let r = 10_000;
        let mu: Vec<f64> = (1..=r).map(|i| (i as f64).powi(-2)).collect();
        let dec = synthetic_dec(mu.clone());
        let z = CoeffVector::new(mu, &dec).unwrap();
        let got = power_norm(&z, &dec, PowerExponent::new(1.0).unwrap()).unwrap();
        // Partial sum of zeta(2) through r = 1e4; frozen from the direct sum.
        assert_abs_diff_eq!(got, 1.2825108, epsilon = 1e-4);
        assert_abs_diff_eq!(got, 1.28255, epsilon = 1e-4);
    }

    #[test]
    fn power_norm_is_monotone_in_gamma_when_mu_below_one() {
        let (_, dec) = bm_dec(32);
        assert!(dec.mu().iter().all(|&m| m <= 1.0));
        let z = CoeffVector::new(vec![0.1; dec.rank()], &dec).unwrap();
        let mut prev = 0.0;
        for g in [0.2, 0.5, 0.8, 1.0] {
            let v = power_norm(&z, &dec, PowerExponent::new(g).unwrap()).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn power_norm_overflow_is_numeric_error() {
        let dec = synthetic_dec(vec![1e-300, 1e-305]);
        let z = CoeffVector::new(vec![1e100, 1e100], &dec).unwrap();
        assert!(matches!(
            power_norm(&z, &dec, PowerExponent::new(1.0).unwrap()),
            Err(KlError::NumericError(_))
        ));
    }

    #[test]
    fn power_kernel_reduces_to_reconstruction_at_gamma_one() {
        let grid = Grid::uniform(0.0, 1.0, 64).unwrap();
        let spec = KernelSpec::OrnsteinUhlenbeck { a: 1.0, sigma: 1.0 };
        let dec = decompose(&spec, &grid, DecomposeOptions::default()).unwrap();
        let gamma = PowerExponent::new(1.0).unwrap();
        for (i, j) in [(0usize, 0usize), (5, 40), (63, 12)] {
            let s = grid.nodes()[i];
            let t = grid.nodes()[j];
            let got = power_kernel(&dec, Some(&spec), gamma, s, t).unwrap();
            let want = spec.eval(s, t).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 1e-8);
        }
        // Diagonal values are sums of squares.
        for &t in grid.nodes().iter().step_by(7) {
            for g in [0.3, 0.7, 1.0] {
                let v = power_kernel(&dec, None, PowerExponent::new(g).unwrap(), t, t).unwrap();
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn power_kernel_off_grid_matches_brownian_value() {
        let grid = Grid::uniform(0.0, 1.0, 512).unwrap();
        let spec = KernelSpec::BrownianMotion { sigma2: 1.0 };
        let dec = decompose(
            &spec,
            &grid,
            DecomposeOptions {
                max_rank: Some(200),
                drop_tol: 1e-12,
            },
        )
        .unwrap();
        let got = power_kernel(
            &dec,
            Some(&spec),
            PowerExponent::new(1.0).unwrap(),
            0.3,
            0.7,
        )
        .unwrap();
        assert_abs_diff_eq!(got, 0.3, epsilon = 5e-3);
    }

    #[test]
    fn power_kernel_without_source_refuses_off_grid() {
        let (_, dec) = bm_dec(32);
        assert!(matches!(
            power_kernel(&dec, None, PowerExponent::new(1.0).unwrap(), 0.123, 0.5),
            Err(KlError::UnsupportedPoint(_))
        ));
    }

    #[test]
    fn diagonal_power_kernel_defect_shrinks_with_rank() {
        let grid = Grid::uniform(0.0, 1.0, 128).unwrap();
        let spec = KernelSpec::BrownianMotion { sigma2: 1.0 };
        let gamma = PowerExponent::new(1.0).unwrap();
        let t = grid.nodes()[64];
        let k_tt = spec.eval(t, t).unwrap();
        let mut prev_defect = f64::INFINITY;
        for m in [8usize, 32, 128] {
            let dec = decompose(
                &spec,
                &grid,
                DecomposeOptions {
                    max_rank: Some(m),
                    drop_tol: 0.0,
                },
            )
            .unwrap();
            let defect = k_tt - power_kernel(&dec, Some(&spec), gamma, t, t).unwrap();
            assert!(defect >= -1e-10);
            assert!(defect <= prev_defect + 1e-12);
            prev_defect = defect;
        }
    }

    /// Direct-summation oracle with a two-sided integral tail bracket:
    /// encloses `sum_{i=1}^inf i^{-s}` between
    /// `partial + integral_{N+1}^inf` and `partial + integral_N^inf`.
    fn zeta_by_summation(s: f64, n: u64) -> (f64, f64) {
        let mut partial = 0.0;
        for i in (1..=n).rev() {
            partial += (i as f64).powf(-s);
        }
        let tail_lo = ((n + 1) as f64).powf(1.0 - s) / (s - 1.0);
        let tail_hi = (n as f64).powf(1.0 - s) / (s - 1.0);
        (partial + tail_lo, partial + tail_hi)
    }

    #[test]
    fn summability_synthetic_examples() {
        let r = 4000;
        let mu: Vec<f64> = (1..=r).map(|i| (i as f64).powi(-2)).collect();
        let dec = synthetic_dec(mu);
        let fit = fit_decay(&dec, Some((10, 2000))).unwrap();

        // beta = 0.6: alpha beta = 1.2 > 1, finite, value near zeta(1.2).
        let rep = summability(&dec, 0.6, &fit).unwrap();
        assert_eq!(rep.verdict, Verdict::Finite);
        let zeta12 = 5.59158244117775;
        let (lo, hi) = zeta_by_summation(1.2, 1_000_000);
        assert!(lo <= zeta12 && zeta12 <= hi, "oracle bracket {lo}..{hi}");
        let estimate = rep.partial + 0.5 * (rep.tail_low + rep.tail_high);
        assert!(
            (estimate - zeta12).abs() < 0.01 * zeta12,
            "estimate {estimate}"
        );

        // beta = 0.4: alpha beta = 0.8 <= 1, infinite.
        let rep = summability(&dec, 0.4, &fit).unwrap();
        assert_eq!(rep.verdict, Verdict::Infinite);
        assert!(rep.tail_high.is_infinite());

        assert!(summability(&dec, 0.0, &fit).is_err());
        assert!(summability(&dec, -1.0, &fit).is_err());
    }

    #[test]
    fn summability_straddling_band_is_indeterminate() {
        use rand::{Rng, SeedableRng};
        // Noisy power law: the fit band has positive width, and a beta
        // placed inside it must come back indeterminate.
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(8);
        let mut mu: Vec<f64> = (1..=400)
            .map(|i| (i as f64).powi(-2) * (0.4 * rng.random_range(-1.0..1.0_f64)).exp())
            .collect();
        mu.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let dec = synthetic_dec(mu);
        let fit = fit_decay(&dec, Some((1, 400))).unwrap();
        let (lo, hi) = fit.alpha_ci;
        assert!(hi > lo, "band must have width");
        let beta = 2.0 / (lo + hi);
        let rep = summability(&dec, beta, &fit).unwrap();
        assert_eq!(rep.verdict, Verdict::Indeterminate);
        assert!(rep.tail_high.is_infinite());
        assert!(rep.tail_low.is_finite());
    }

    #[test]
    fn summability_brownian_motion_is_finite_at_three_quarters() {
        let (_, dec) = bm_dec(512);
        let fit = fit_decay(&dec, None).unwrap();
        let rep = summability(&dec, 0.75, &fit).unwrap();
        assert_eq!(rep.verdict, Verdict::Finite);
    }

    #[test]
    fn summability_verdicts_are_monotone_in_beta() {
        let (_, dec) = bm_dec(256);
        let fit = fit_decay(&dec, None).unwrap();
        let mut seen_finite = false;
        for b in [0.3, 0.45, 0.55, 0.6, 0.75, 0.9, 1.0] {
            let rep = summability(&dec, b, &fit).unwrap();
            match rep.verdict {
                Verdict::Finite => seen_finite = true,
                Verdict::Infinite | Verdict::Indeterminate => {
                    assert!(
                        !seen_finite,
                        "verdict regressed at beta = {b} after a finite verdict"
                    );
                }
            }
        }
        assert!(seen_finite);
    }
}
