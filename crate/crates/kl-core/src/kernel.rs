//! Covariance kernel catalog: pointwise evaluation, Gram assembly, trace.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bessel::{bessel_k, gamma};
use crate::error::{KlError, Result};
use crate::grid::Grid;

/// Covariance function of a centered second-order process.
///
/// Closed catalog plus a tabulated Gram matrix for everything else.
/// All variants are symmetric and positive semi-definite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `k(s, t) = sigma2 * min(s, t)` on `[0, inf)`.
    BrownianMotion { sigma2: f64 },
    /// `k(s, t) = sigma2 * (min(s, t) - s t)` on `[0, 1]`.
    BrownianBridge { sigma2: f64 },
    /// `k(s, t) = a * exp(-sigma |s - t|)`.
    OrnsteinUhlenbeck { a: f64, sigma: f64 },
    /// `k(s, t) = a * (sigma r)^alpha K_alpha(sigma r)` with `r = |s - t|`,
    /// diagonal value `a * 2^(alpha - 1) * Gamma(alpha)`. The dimension `d`
    /// only enters the smoothness bookkeeping, not the evaluation.
    Matern {
        a: f64,
        sigma: f64,
        alpha: f64,
        d: u32,
    },
    /// Gram matrix tabulated on a fixed grid; evaluable only at its nodes.
    Tabulated { grid: Grid, gram: Vec<Vec<f64>> },
}

impl KernelSpec {
    /// Builds a tabulated kernel, symmetrizing the table as `(G + G^T)/2`.
    ///
    /// Returns the maximal absolute asymmetry alongside the kernel so callers
    /// can warn when it exceeds their tolerance (the CLI warns above 1e-8).
    pub fn tabulated(grid: Grid, gram: Vec<Vec<f64>>) -> Result<(KernelSpec, f64)> {
        let n = grid.len();
        if gram.len() != n || gram.iter().any(|row| row.len() != n) {
            return Err(KlError::InvalidArgument(format!(
                "gram must be {n}x{n} to match its grid"
            )));
        }
        if gram.iter().any(|row| row.iter().any(|v| !v.is_finite())) {
            return Err(KlError::InvalidArgument(
                "gram entries must be finite".into(),
            ));
        }
        let mut asymmetry = 0.0_f64;
        let mut sym = gram.clone();
        for i in 0..n {
            for j in (i + 1)..n {
                asymmetry = asymmetry.max((gram[i][j] - gram[j][i]).abs());
                let avg = 0.5 * (gram[i][j] + gram[j][i]);
                sym[i][j] = avg;
                sym[j][i] = avg;
            }
        }
        Ok((KernelSpec::Tabulated { grid, gram: sym }, asymmetry))
    }

    /// Pointwise evaluation `k(s, t)`.
    pub fn eval(&self, s: f64, t: f64) -> Result<f64> {
        if !s.is_finite() || !t.is_finite() {
            return Err(KlError::InvalidArgument(format!(
                "kernel arguments must be finite, got ({s}, {t})"
            )));
        }
        self.check_domain(s)?;
        self.check_domain(t)?;
        match self {
            KernelSpec::BrownianMotion { sigma2 } => Ok(sigma2 * s.min(t)),
            KernelSpec::BrownianBridge { sigma2 } => Ok(sigma2 * (s.min(t) - s * t)),
            KernelSpec::OrnsteinUhlenbeck { a, sigma } => Ok(a * (-sigma * (s - t).abs()).exp()),
            KernelSpec::Matern {
                a, sigma, alpha, ..
            } => eval_matern(*a, *sigma, *alpha, (s - t).abs()),
            KernelSpec::Tabulated { grid, gram } => {
                let i = grid.node_index(s).ok_or_else(|| {
                    KlError::UnsupportedPoint(format!("{s} is not a node of the tabulated grid"))
                })?;
                let j = grid.node_index(t).ok_or_else(|| {
                    KlError::UnsupportedPoint(format!("{t} is not a node of the tabulated grid"))
                })?;
                Ok(gram[i][j])
            }
        }
    }

    /// Gram matrix `G[i][j] = k(t_i, t_j)`; symmetric by construction.
    pub fn gram(&self, grid: &Grid) -> Result<DMatrix<f64>> {
        self.validate()?;
        if grid.is_empty() {
            return Err(KlError::InvalidArgument("grid is empty".into()));
        }
        if let KernelSpec::Tabulated {
            grid: own_grid,
            gram,
        } = self
        {
            if own_grid != grid {
                return Err(KlError::GridMismatch(
                    "tabulated kernel evaluated on a different grid".into(),
                ));
            }
            let n = grid.len();
            return Ok(DMatrix::from_fn(n, n, |i, j| gram[i][j]));
        }
        let n = grid.len();
        let nodes = grid.nodes();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = self.eval(nodes[i], nodes[j])?;
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        Ok(g)
    }

    /// Quadrature trace `sum_j w_j k(t_j, t_j)`, the discrete form of the
    /// diagonal integral; equals the eigenvalue sum of the discretized
    /// operator up to round-off.
    pub fn trace_nu(&self, grid: &Grid) -> Result<f64> {
        self.validate()?;
        if grid.is_empty() {
            return Err(KlError::InvalidArgument("grid is empty".into()));
        }
        let mut acc = 0.0;
        for (&t, &w) in grid.nodes().iter().zip(grid.weights()) {
            acc += w * self.eval(t, t)?;
        }
        Ok(acc)
    }

    /// Short human-readable description used in decomposition metadata.
    pub fn tag(&self) -> String {
        match self {
            KernelSpec::BrownianMotion { sigma2 } => format!("brownian_motion(sigma2={sigma2})"),
            KernelSpec::BrownianBridge { sigma2 } => format!("brownian_bridge(sigma2={sigma2})"),
            KernelSpec::OrnsteinUhlenbeck { a, sigma } => {
                format!("ornstein_uhlenbeck(a={a},sigma={sigma})")
            }
            KernelSpec::Matern {
                a, sigma, alpha, d, ..
            } => format!("matern(a={a},sigma={sigma},alpha={alpha},d={d})"),
            KernelSpec::Tabulated { grid, .. } => format!("tabulated(n={})", grid.len()),
        }
    }

    /// Parameter sanity for the closed-form variants.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(KlError::InvalidArgument(what.into()));
        match self {
            KernelSpec::BrownianMotion { sigma2 } | KernelSpec::BrownianBridge { sigma2 } => {
                if !(*sigma2 > 0.0) || !sigma2.is_finite() {
                    return bad("sigma2 must be positive and finite");
                }
            }
            KernelSpec::OrnsteinUhlenbeck { a, sigma } => {
                if !(*a > 0.0) || !(*sigma > 0.0) || !a.is_finite() || !sigma.is_finite() {
                    return bad("a and sigma must be positive and finite");
                }
            }
            KernelSpec::Matern {
                a, sigma, alpha, d, ..
            } => {
                if !(*a > 0.0) || !(*sigma > 0.0) || !(*alpha > 0.0) {
                    return bad("a, sigma, alpha must be positive");
                }
                if !a.is_finite() || !sigma.is_finite() || !alpha.is_finite() {
                    return bad("a, sigma, alpha must be finite");
                }
                if *d == 0 {
                    return bad("d must be a positive integer");
                }
            }
            KernelSpec::Tabulated { grid, gram } => {
                let n = grid.len();
                if gram.len() != n || gram.iter().any(|row| row.len() != n) {
                    return bad("gram size must match its grid");
                }
                for (i, row) in gram.iter().enumerate() {
                    for (j, v) in row.iter().enumerate().skip(i + 1) {
                        if (v - gram[j][i]).abs() > 1e-12 {
                            return bad("tabulated gram must be symmetric within 1e-12");
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether `t` lies in the kernel's index set.
    pub fn domain_contains(&self, t: f64) -> bool {
        t.is_finite() && self.check_domain(t).is_ok()
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let ok = match self {
            KernelSpec::BrownianMotion { .. } => t >= 0.0,
            KernelSpec::BrownianBridge { .. } => (0.0..=1.0).contains(&t),
            KernelSpec::OrnsteinUhlenbeck { .. } | KernelSpec::Matern { .. } => true,
            // Tabulated membership is resolved by node lookup in eval.
            KernelSpec::Tabulated { .. } => true,
        };
        if ok {
            Ok(())
        } else {
            Err(KlError::InvalidArgument(format!(
                "{t} is outside the kernel domain"
            )))
        }
    }
}

/// `a (sigma r)^alpha K_alpha(sigma r)`, with the analytic diagonal limit
/// `a 2^(alpha-1) Gamma(alpha)` at `r = 0` (the raw formula is 0 * inf there).
fn eval_matern(a: f64, sigma: f64, alpha: f64, r: f64) -> Result<f64> {
    let x = sigma * r;
    if x == 0.0 {
        return Ok(a * 2.0_f64.powf(alpha - 1.0) * gamma(alpha));
    }
    let k = bessel_k(alpha, x)?;
    if k == 0.0 {
        // K underflowed; the kernel value is below f64 resolution.
        return Ok(0.0);
    }
    let value = a * x.powf(alpha) * k;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(KlError::NumericError(format!(
            "matern evaluation overflowed at r = {r}"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;
    use std::f64::consts::PI;

    fn catalog() -> Vec<KernelSpec> {
        vec![
            KernelSpec::BrownianMotion { sigma2: 1.0 },
            KernelSpec::BrownianBridge { sigma2: 1.0 },
            KernelSpec::OrnsteinUhlenbeck { a: 1.0, sigma: 1.0 },
            KernelSpec::Matern {
                a: 1.0,
                sigma: 1.0,
                alpha: 1.5,
                d: 1,
            },
        ]
    }

    #[test]
    fn eval_examples() {
        let bm = KernelSpec::BrownianMotion { sigma2: 1.0 };
        assert_abs_diff_eq!(bm.eval(0.3, 0.7).unwrap(), 0.3, epsilon = 1e-15);

        let ou = KernelSpec::OrnsteinUhlenbeck { a: 1.0, sigma: 1.0 };
        for t in [0.0, 0.37, 5.0] {
            assert_abs_diff_eq!(ou.eval(t, t).unwrap(), 1.0, epsilon = 1e-15);
        }

        // K_{1/2}(x) = sqrt(pi/(2x)) e^{-x} makes the Matern(1/2) kernel
        // sqrt(pi/2) * e^{-r}.
        let m = KernelSpec::Matern {
            a: 1.0,
            sigma: 1.0,
            alpha: 0.5,
            d: 1,
        };
        let want = (PI / 2.0_f64).sqrt() * (-1.0_f64).exp();
        assert_abs_diff_eq!(m.eval(0.0, 1.0).unwrap(), want, epsilon = 1e-12);
        assert_abs_diff_eq!(m.eval(0.0, 1.0).unwrap(), 0.46107, epsilon = 1e-5);
    }

    #[test]
    fn matern_diagonal_is_the_analytic_limit() {
        for alpha in [0.5, 1.0, 1.5, 2.7] {
            let m = KernelSpec::Matern {
                a: 2.0,
                sigma: 3.0,
                alpha,
                d: 1,
            };
            let want = 2.0 * 2.0_f64.powf(alpha - 1.0) * gamma(alpha);
            assert_abs_diff_eq!(m.eval(0.4, 0.4).unwrap(), want, epsilon = 1e-12 * want);
            // Approach from r > 0.
            let near = m.eval(0.4, 0.4 + 1e-8).unwrap();
            assert!((near - want).abs() < 1e-4 * want);
        }
    }

    #[test]
    fn matern_half_matches_scaled_ou_on_random_pairs() {
        let m = KernelSpec::Matern {
            a: 1.3,
            sigma: 2.1,
            alpha: 0.5,
            d: 1,
        };
        let ou = KernelSpec::OrnsteinUhlenbeck { a: 1.3, sigma: 2.1 };
        let scale = (PI / 2.0_f64).sqrt();
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let s: f64 = rng.random_range(-3.0..3.0);
            let t: f64 = rng.random_range(-3.0..3.0);
            let got = m.eval(s, t).unwrap();
            let want = scale * ou.eval(s, t).unwrap();
            assert!(
                (got - want).abs() <= 1e-10 * want.abs(),
                "({s},{t}): {got} vs {want}"
            );
        }
    }

    #[test]
    fn eval_symmetry_on_random_pairs() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        for spec in catalog() {
            for _ in 0..10_000 {
                let (lo, hi) = match spec {
                    KernelSpec::BrownianMotion { .. } => (0.0, 10.0),
                    KernelSpec::BrownianBridge { .. } => (0.0, 1.0),
                    _ => (-5.0, 5.0),
                };
                let s: f64 = rng.random_range(lo..hi);
                let t: f64 = rng.random_range(lo..hi);
                assert_eq!(spec.eval(s, t).unwrap(), spec.eval(t, s).unwrap());
            }
        }
    }

    #[test]
    fn gram_example_and_transpose() {
        let grid = Grid::from_parts(
            0.0,
            1.0,
            vec![0.25, 0.75],
            vec![0.5, 0.5],
            crate::grid::RuleTag::Weighted,
        )
        .unwrap();
        let bm = KernelSpec::BrownianMotion { sigma2: 1.0 };
        let g = bm.gram(&grid).unwrap();
        assert_eq!(g[(0, 0)], 0.25);
        assert_eq!(g[(0, 1)], 0.25);
        assert_eq!(g[(1, 0)], 0.25);
        assert_eq!(g[(1, 1)], 0.75);

        for spec in catalog() {
            let grid = Grid::uniform(0.0, 1.0, 17).unwrap();
            let g = spec.gram(&grid).unwrap();
            assert_eq!(g, g.transpose());
        }
    }

    /// Cyclic Jacobi eigenvalue iteration, used as an independent oracle for
    /// positive semi-definiteness of weighted Gram matrices.
    fn jacobi_eigenvalues(mut m: DMatrix<f64>) -> Vec<f64> {
        let n = m.nrows();
        for _sweep in 0..60 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += m[(p, q)].abs();
                }
            }
            if off < 1e-14 {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    if m[(p, q)].abs() < 1e-300 {
                        continue;
                    }
                    let theta = 0.5 * (m[(q, q)] - m[(p, p)]) / m[(p, q)];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[(k, p)];
                        let mkq = m[(k, q)];
                        m[(k, p)] = c * mkp - s * mkq;
                        m[(k, q)] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[(p, k)];
                        let mqk = m[(q, k)];
                        m[(p, k)] = c * mpk - s * mqk;
                        m[(q, k)] = s * mpk + c * mqk;
                    }
                }
            }
        }
        (0..n).map(|i| m[(i, i)]).collect()
    }

    #[test]
    fn weighted_gram_is_psd_by_jacobi_oracle() {
        let grid = Grid::uniform(0.0, 1.0, 64).unwrap();
        let ou = KernelSpec::OrnsteinUhlenbeck { a: 1.0, sigma: 1.0 };
        let g = ou.gram(&grid).unwrap();
        let n = grid.len();
        let b = DMatrix::from_fn(n, n, |i, j| {
            (grid.weights()[i] * grid.weights()[j]).sqrt() * g[(i, j)]
        });
        let eig = jacobi_eigenvalues(b);
        let max = eig.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min >= -1e-10 * max, "min {min}, max {max}");
    }

    #[test]
    fn trace_examples() {
        let grid = Grid::uniform(0.0, 1.0, 256).unwrap();
        let bm = KernelSpec::BrownianMotion { sigma2: 1.0 };
        // integral of t over [0,1]; midpoint rule is exact for linear integrands
        assert_abs_diff_eq!(bm.trace_nu(&grid).unwrap(), 0.5, epsilon = 1e-12);

        let ou = KernelSpec::OrnsteinUhlenbeck { a: 1.0, sigma: 1.0 };
        assert_abs_diff_eq!(ou.trace_nu(&grid).unwrap(), 1.0, epsilon = 1e-13);

        let bb = KernelSpec::BrownianBridge { sigma2: 1.0 };
        assert_abs_diff_eq!(bb.trace_nu(&grid).unwrap(), 1.0 / 6.0, epsilon = 1e-5);
    }

    #[test]
    fn scaling_multiplies_gram_and_trace() {
        let grid = Grid::uniform(0.0, 1.0, 32).unwrap();
        let c = 2.5;
        let pairs = [
            (
                KernelSpec::BrownianMotion { sigma2: 1.0 },
                KernelSpec::BrownianMotion { sigma2: c },
            ),
            (
                KernelSpec::OrnsteinUhlenbeck { a: 1.0, sigma: 0.7 },
                KernelSpec::OrnsteinUhlenbeck { a: c, sigma: 0.7 },
            ),
            (
                KernelSpec::Matern {
                    a: 1.0,
                    sigma: 1.0,
                    alpha: 1.5,
                    d: 1,
                },
                KernelSpec::Matern {
                    a: c,
                    sigma: 1.0,
                    alpha: 1.5,
                    d: 1,
                },
            ),
        ];
        for (base, scaled) in pairs {
            let g0 = base.gram(&grid).unwrap();
            let g1 = scaled.gram(&grid).unwrap();
            for i in 0..grid.len() {
                for j in 0..grid.len() {
                    assert_abs_diff_eq!(g1[(i, j)], c * g0[(i, j)], epsilon = 1e-13);
                }
            }
            assert_abs_diff_eq!(
                scaled.trace_nu(&grid).unwrap(),
                c * base.trace_nu(&grid).unwrap(),
                epsilon = 1e-13
            );
        }
    }

    #[test]
    fn tabulated_symmetrizes_and_reports_asymmetry() {
        let grid = Grid::uniform(0.0, 1.0, 2).unwrap();
        let (spec, asym) =
            KernelSpec::tabulated(grid.clone(), vec![vec![1.0, 0.5], vec![0.3, 1.0]]).unwrap();
        assert_abs_diff_eq!(asym, 0.2, epsilon = 1e-15);
        let nodes = grid.nodes();
        assert_abs_diff_eq!(spec.eval(nodes[0], nodes[1]).unwrap(), 0.4, epsilon = 1e-15);
        assert_eq!(
            spec.eval(nodes[0], nodes[1]).unwrap(),
            spec.eval(nodes[1], nodes[0]).unwrap()
        );

        // Off-grid evaluation is refused.
        assert!(matches!(
            spec.eval(0.1, nodes[0]),
            Err(KlError::UnsupportedPoint(_))
        ));
        // Wrong grid is refused for gram assembly.
        let other = Grid::uniform(0.0, 1.0, 3).unwrap();
        assert!(matches!(spec.gram(&other), Err(KlError::GridMismatch(_))));
    }

    #[test]
    fn domain_violations_rejected() {
        let bm = KernelSpec::BrownianMotion { sigma2: 1.0 };
        assert!(bm.eval(-0.1, 0.5).is_err());
        let bb = KernelSpec::BrownianBridge { sigma2: 1.0 };
        assert!(bb.eval(0.5, 1.2).is_err());
        assert!(bm.eval(f64::NAN, 0.5).is_err());
    }

    #[test]
    fn kernel_spec_json_round_trip() {
        let m = KernelSpec::Matern {
            a: 1.0,
            sigma: 2.0,
            alpha: 1.5,
            d: 2,
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"variant\":\"matern\""));
        let back: KernelSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
