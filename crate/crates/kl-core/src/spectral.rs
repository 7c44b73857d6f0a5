//! Spectral decomposition of the discretized covariance operator.
//!
//! The integral operator on L2(nu) is discretized by the grid's quadrature
//! rule. With `D = diag(weights)` and Gram matrix `G`, the symmetric
//! similarity `B = D^{1/2} G D^{1/2}` has the same spectrum as the Nystrom
//! matrix `G D`, and its orthonormal eigenvectors `v_i` give eigenfunctions
//! `e_i(t_j) = v_ij / sqrt(w_j)` that are orthonormal in the discrete L2(nu)
//! pairing. Eigenvalue/eigenfunction families are ordered by decreasing
//! eigenvalue with a deterministic sign convention.

use nalgebra::DMatrix;

use crate::error::{KlError, Result};
use crate::grid::Grid;
use crate::kernel::KernelSpec;

/// Options for [`decompose`].
#[derive(Debug, Clone, Copy)]
pub struct DecomposeOptions {
    /// Keep at most this many eigenpairs (`None` keeps all above `drop_tol`).
    pub max_rank: Option<usize>,
    /// Relative cutoff: eigenvalues `<= drop_tol * lambda_max` are dropped.
    pub drop_tol: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            max_rank: None,
            drop_tol: 1e-12,
        }
    }
}

/// Eigenvalues and grid-sampled eigenfunctions of the discretized operator.
///
/// Immutable; safe to share across threads.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: Grid,
    mu: Vec<f64>,
    /// Row `i` holds `e_i(t_j)` for every grid node `j`.
    efuns: Vec<Vec<f64>>,
    kernel_tag: String,
    drop_tol: f64,
}

/// Reconstruction residuals reported by [`SpectralDecomposition::mercer_residual`].
#[derive(Debug, Clone, Copy)]
pub struct MercerResidual {
    /// Max over probes of `|k(s,t) - sum_i mu_i e_i(s) e_i(t)|`.
    pub max_abs: f64,
    /// Max over diagonal probes of the defect relative to `k(t,t)`
    /// (probes with `k(t,t) = 0` are skipped; 0 when none qualify).
    pub max_rel_diag: f64,
}

/// Tolerance beyond which negative round-off eigenvalues signal a non-PSD input.
const PSD_TOL: f64 = 1e-8;

/// Computes the retained eigenpairs of `B = D^{1/2} G D^{1/2}`.
pub fn decompose(
    spec: &KernelSpec,
    grid: &Grid,
    opts: DecomposeOptions,
) -> Result<SpectralDecomposition> {
    if !(opts.drop_tol >= 0.0) {
        return Err(KlError::InvalidArgument(
            "drop_tol must be nonnegative".into(),
        ));
    }
    let gram = spec.gram(grid)?;
    let n = grid.len();
    let w = grid.weights();
    let sqrt_w: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = sqrt_w[i] * sqrt_w[j] * gram[(i, j)];
            b[(i, j)] = v;
            b[(j, i)] = v;
        }
    }

    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap()
            .then(i.cmp(&j))
    });

    let lambda_max = eig.eigenvalues[order[0]];
    if !lambda_max.is_finite() {
        return Err(KlError::NumericError(
            "eigensolver produced non-finite eigenvalues".into(),
        ));
    }
    if lambda_max <= 0.0 {
        return Err(KlError::DegenerateKernel(
            "no positive eigenvalues in the discretized operator".into(),
        ));
    }
    let lambda_min = eig.eigenvalues[order[n - 1]];
    if lambda_min < -PSD_TOL * lambda_max {
        return Err(KlError::NumericError(format!(
            "eigenvalue {lambda_min:e} below -{PSD_TOL:e} * lambda_max; input is not positive semi-definite"
        )));
    }

    let cutoff = opts.drop_tol * lambda_max;
    let cap = opts.max_rank.unwrap_or(n);
    let mut mu = Vec::new();
    let mut efuns = Vec::new();
    for &idx in &order {
        if mu.len() >= cap {
            break;
        }
        let lambda = eig.eigenvalues[idx];
        if lambda <= cutoff || lambda <= 0.0 {
            break;
        }
        let col = eig.eigenvectors.column(idx);
        let mut row: Vec<f64> = (0..n).map(|j| col[j] / sqrt_w[j]).collect();
        fix_sign(&mut row);
        mu.push(lambda);
        efuns.push(row);
    }
    if mu.is_empty() {
        return Err(KlError::DegenerateKernel(
            "all eigenvalues fell below the drop tolerance".into(),
        ));
    }

    Ok(SpectralDecomposition {
        grid: grid.clone(),
        mu,
        efuns,
        kernel_tag: spec.tag(),
        drop_tol: opts.drop_tol,
    })
}

/// Makes the entry of largest magnitude positive (ties: lowest node index).
fn fix_sign(row: &mut [f64]) {
    let mut best = 0;
    for (j, v) in row.iter().enumerate() {
        if v.abs() > row[best].abs() {
            best = j;
        }
    }
    if row[best] < 0.0 {
        for v in row.iter_mut() {
            *v = -*v;
        }
    }
}

impl SpectralDecomposition {
    /// Rebuilds a decomposition from stored parts (deserialization path);
    /// shape-checks only, numerical invariants can be re-run via [`Self::validate`].
    pub fn from_parts(
        grid: Grid,
        mu: Vec<f64>,
        efuns: Vec<Vec<f64>>,
        kernel_tag: String,
        drop_tol: f64,
    ) -> Result<Self> {
        if mu.is_empty() || mu.len() != efuns.len() {
            return Err(KlError::InvalidArgument(
                "mu and efuns must be nonempty with matching rank".into(),
            ));
        }
        if efuns.iter().any(|row| row.len() != grid.len()) {
            return Err(KlError::InvalidArgument(
                "each eigenfunction row must match the grid length".into(),
            ));
        }
        if mu.windows(2).any(|p| p[1] > p[0]) || mu.iter().any(|m| !(*m > 0.0)) {
            return Err(KlError::InvalidArgument(
                "mu must be positive and nonincreasing".into(),
            ));
        }
        Ok(SpectralDecomposition {
            grid,
            mu,
            efuns,
            kernel_tag,
            drop_tol,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn rank(&self) -> usize {
        self.mu.len()
    }

    /// `e_i(t_j)` for all nodes `j`.
    pub fn eigenfunction(&self, i: usize) -> &[f64] {
        &self.efuns[i]
    }

    pub fn efuns(&self) -> &[Vec<f64>] {
        &self.efuns
    }

    pub fn kernel_tag(&self) -> &str {
        &self.kernel_tag
    }

    pub fn drop_tol(&self) -> f64 {
        self.drop_tol
    }

    /// Off-grid eigenfunction values
    /// `e_i(t) = mu_i^{-1} sum_j w_j k(t, t_j) e_i(t_j)` for every retained `i`.
    pub fn nystrom_extend(&self, spec: &KernelSpec, t: f64) -> Result<Vec<f64>> {
        if matches!(spec, KernelSpec::Tabulated { .. }) {
            return Err(KlError::Unsupported(
                "nystrom extension needs a closed-form kernel".into(),
            ));
        }
        if spec.tag() != self.kernel_tag {
            return Err(KlError::InvalidArgument(format!(
                "kernel {} does not match decomposition source {}",
                spec.tag(),
                self.kernel_tag
            )));
        }
        if !spec.domain_contains(t) {
            return Err(KlError::InvalidArgument(format!(
                "{t} is outside the kernel domain"
            )));
        }
        let w = self.grid.weights();
        let nodes = self.grid.nodes();
        let mut kt = Vec::with_capacity(nodes.len());
        for (&tj, &wj) in nodes.iter().zip(w) {
            kt.push(wj * spec.eval(t, tj)?);
        }
        Ok(self
            .efuns
            .iter()
            .zip(&self.mu)
            .map(|(row, mu)| row.iter().zip(&kt).map(|(e, k)| e * k).sum::<f64>() / mu)
            .collect())
    }

    /// Eigenfunction values at `t`: the stored column when `t` is a grid
    /// node, otherwise the Nystrom extension.
    fn efun_values_at(&self, spec: &KernelSpec, t: f64) -> Result<Vec<f64>> {
        if let Some(j) = self.grid.node_index(t) {
            return Ok(self.efuns.iter().map(|row| row[j]).collect());
        }
        self.nystrom_extend(spec, t)
    }

    /// Kernel reconstruction residuals over the given probe pairs.
    pub fn mercer_residual(
        &self,
        spec: &KernelSpec,
        probes: &[(f64, f64)],
    ) -> Result<MercerResidual> {
        let mut max_abs = 0.0_f64;
        let mut max_rel_diag = 0.0_f64;
        for &(s, t) in probes {
            let es = self.efun_values_at(spec, s)?;
            let et = if t == s {
                es.clone()
            } else {
                self.efun_values_at(spec, t)?
            };
            let recon: f64 = self
                .mu
                .iter()
                .zip(es.iter().zip(&et))
                .map(|(mu, (a, b))| mu * a * b)
                .sum();
            let k = spec.eval(s, t)?;
            let defect = k - recon;
            max_abs = max_abs.max(defect.abs());
            if s == t && k > 0.0 {
                max_rel_diag = max_rel_diag.max(defect / k);
            }
        }
        Ok(MercerResidual {
            max_abs,
            max_rel_diag,
        })
    }

    /// Re-checks the numerical invariants: quadrature orthonormality (1e-10),
    /// the eigen-relation against the kernel (1e-8 * mu_1), the trace bound,
    /// and the sign convention.
    pub fn validate(&self, spec: &KernelSpec) -> Result<()> {
        let n = self.grid.len();
        let r = self.rank();
        let w = self.grid.weights();

        // Orthonormality: E diag(w) E^T = I.
        let e = DMatrix::from_fn(r, n, |i, j| self.efuns[i][j]);
        let ew = DMatrix::from_fn(n, r, |j, i| w[j] * self.efuns[i][j]);
        let m = &e * &ew;
        for i in 0..r {
            for k in 0..r {
                let want = if i == k { 1.0 } else { 0.0 };
                if (m[(i, k)] - want).abs() > 1e-10 {
                    return Err(KlError::NumericError(format!(
                        "orthonormality defect {:e} at pair ({i}, {k})",
                        (m[(i, k)] - want).abs()
                    )));
                }
            }
        }

        // Eigen-relation: G diag(w) e_i = mu_i e_i at every node.
        let gram = spec.gram(&self.grid)?;
        let ge = &gram * &ew;
        let tol = 1e-8 * self.mu[0];
        for i in 0..r {
            for l in 0..n {
                let resid = (ge[(l, i)] - self.mu[i] * self.efuns[i][l]).abs();
                if resid > tol {
                    return Err(KlError::NumericError(format!(
                        "eigen-relation residual {resid:e} exceeds {tol:e} for pair {i} at node {l}"
                    )));
                }
            }
        }

        // Eigenvalue sum is bounded by the quadrature trace.
        let trace = spec.trace_nu(&self.grid)?;
        let sum: f64 = self.mu.iter().sum();
        if sum > trace + 1e-8 * trace.abs() {
            return Err(KlError::NumericError(format!(
                "eigenvalue sum {sum} exceeds trace {trace}"
            )));
        }

        // Sign convention.
        for (i, row) in self.efuns.iter().enumerate() {
            let mut best = 0;
            for (j, v) in row.iter().enumerate() {
                if v.abs() > row[best].abs() {
                    best = j;
                }
            }
            if row[best] < 0.0 {
                return Err(KlError::NumericError(format!(
                    "sign convention violated in row {i}"
                )));
            }
        }
        Ok(())
    }
}
