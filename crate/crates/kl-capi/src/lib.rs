//! C ABI over the decomposition and sampling pipeline.
//!
//! All objects are opaque handles created and destroyed by these functions;
//! every fallible call returns a [`KlStatus`] and writes results through out
//! pointers. Output buffers are caller-allocated; sizes come from the
//! `*_len`/`*_rank` accessors. A human-readable message for the most recent
//! failure on the calling thread is available from `kl_last_error_message`.
//!
//! Handles are immutable after creation and may be shared across threads;
//! the last-error message is thread-local.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use kl_core::{
    decompose, fit_decay, power_norm, sample_batch, CoeffVector, CoefficientLaw, DecomposeOptions,
    Grid, KernelSpec, KlError, PowerExponent, SpectralDecomposition,
};

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlStatus {
    Ok = 0,
    /// A precondition on an argument was violated.
    InvalidArgument = 1,
    /// Overflow, non-convergence, or a violated numerical invariant.
    NumericError = 2,
    /// The operator has no usable positive spectrum.
    DegenerateKernel = 3,
    /// The operation is not defined for this input.
    Unsupported = 4,
    /// A hypothesis required by the estimated quantity fails.
    HypothesisViolated = 5,
    /// Too little usable data to form the estimate.
    InsufficientData = 6,
    /// A required pointer argument was null.
    NullPointer = 7,
    /// A panic was caught at the boundary.
    Internal = 8,
}

/// Coefficient laws for `kl_sample_batch`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KlLaw {
    Gaussian = 0,
    Rademacher = 1,
    /// Uses the `student_dof` argument; requires dof > 4.
    StudentT = 2,
}

/// Opaque quadrature grid.
pub struct KlGrid(Grid);
/// Opaque covariance kernel.
pub struct KlKernel(KernelSpec);
/// Opaque spectral decomposition.
pub struct KlDecomposition(SpectralDecomposition);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(cleaned).unwrap_or_default();
    });
}

fn status_of(err: &KlError) -> KlStatus {
    match err {
        KlError::InvalidArgument(_)
        | KlError::InvalidDensity(_)
        | KlError::DegenerateMeasure(_)
        | KlError::GridMismatch(_)
        | KlError::InsufficientRank(_) => KlStatus::InvalidArgument,
        KlError::NumericError(_) => KlStatus::NumericError,
        KlError::DegenerateKernel(_) => KlStatus::DegenerateKernel,
        KlError::Unsupported(_) | KlError::UnsupportedPoint(_) => KlStatus::Unsupported,
        KlError::HypothesisViolated(_) => KlStatus::HypothesisViolated,
        KlError::InsufficientData(_) => KlStatus::InsufficientData,
    }
}

fn guard(body: impl FnOnce() -> KlStatus) -> KlStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            KlStatus::Internal
        }
    }
}

fn complete<T>(result: Result<T, KlError>, sink: impl FnOnce(T)) -> KlStatus {
    match result {
        Ok(v) => {
            sink(v);
            KlStatus::Ok
        }
        Err(e) => {
            set_error(&e.to_string());
            status_of(&e)
        }
    }
}

/// Message for the most recent failure on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn kl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

// --- grids -----------------------------------------------------------------

/// Composite midpoint grid for Lebesgue measure on `[a, b]`.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_grid_uniform(
    a: f64,
    b: f64,
    n: usize,
    out: *mut *mut KlGrid,
) -> KlStatus {
    guard(|| {
        if out.is_null() {
            return KlStatus::NullPointer;
        }
        complete(Grid::uniform(a, b, n), |g| unsafe {
            *out = Box::into_raw(Box::new(KlGrid(g)));
        })
    })
}

/// Gauss-Legendre grid on `[a, b]`.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_grid_gauss_legendre(
    a: f64,
    b: f64,
    n: usize,
    out: *mut *mut KlGrid,
) -> KlStatus {
    guard(|| {
        if out.is_null() {
            return KlStatus::NullPointer;
        }
        complete(Grid::gauss_legendre(a, b, n), |g| unsafe {
            *out = Box::into_raw(Box::new(KlGrid(g)));
        })
    })
}

/// Number of nodes; 0 for a null grid.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_grid_len(grid: *const KlGrid) -> usize {
    if grid.is_null() {
        return 0;
    }
    unsafe { &*grid }.0.len()
}

/// Copies the nodes into `buf`; `len` is the buffer capacity and must be at
/// least `kl_grid_len`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_grid_nodes(grid: *const KlGrid, buf: *mut f64, len: usize) -> KlStatus {
    copy_grid_field(grid, buf, len, |g| g.nodes())
}

/// Copies the weights into `buf`; `len` must be at least `kl_grid_len`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_grid_weights(
    grid: *const KlGrid,
    buf: *mut f64,
    len: usize,
) -> KlStatus {
    copy_grid_field(grid, buf, len, |g| g.weights())
}

fn copy_into(src: &[f64], buf: *mut f64, len: usize) -> KlStatus {
    if len < src.len() {
        set_error(&format!(
            "buffer capacity {len} is below the required {}",
            src.len()
        ));
        return KlStatus::InvalidArgument;
    }
    unsafe { std::ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len()) };
    KlStatus::Ok
}

fn copy_grid_field(
    grid: *const KlGrid,
    buf: *mut f64,
    len: usize,
    field: impl Fn(&Grid) -> &[f64],
) -> KlStatus {
    guard(|| {
        if grid.is_null() || buf.is_null() {
            return KlStatus::NullPointer;
        }
        let g = unsafe { &*grid };
        copy_into(field(&g.0), buf, len)
    })
}

/// Releases a grid handle; null is ignored.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_grid_free(grid: *mut KlGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

// --- kernels ---------------------------------------------------------------

fn new_kernel(spec: KernelSpec, out: *mut *mut KlKernel) -> KlStatus {
    guard(|| {
        if out.is_null() {
            return KlStatus::NullPointer;
        }
        complete(spec.validate().map(|()| spec), |s| unsafe {
            *out = Box::into_raw(Box::new(KlKernel(s)));
        })
    })
}

/// `k(s, t) = sigma2 * min(s, t)` on `[0, inf)`.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_brownian_motion(
    sigma2: f64,
    out: *mut *mut KlKernel,
) -> KlStatus {
    new_kernel(KernelSpec::BrownianMotion { sigma2 }, out)
}

/// `k(s, t) = sigma2 * (min(s, t) - s t)` on `[0, 1]`.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_brownian_bridge(
    sigma2: f64,
    out: *mut *mut KlKernel,
) -> KlStatus {
    new_kernel(KernelSpec::BrownianBridge { sigma2 }, out)
}

/// `k(s, t) = a * exp(-sigma |s - t|)`.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_ornstein_uhlenbeck(
    a: f64,
    sigma: f64,
    out: *mut *mut KlKernel,
) -> KlStatus {
    new_kernel(KernelSpec::OrnsteinUhlenbeck { a, sigma }, out)
}

/// `k(s, t) = a (sigma r)^alpha K_alpha(sigma r)` with the analytic value on
/// the diagonal; `d` is the nominal domain dimension used by smoothness
/// bookkeeping.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_matern(
    a: f64,
    sigma: f64,
    alpha: f64,
    d: u32,
    out: *mut *mut KlKernel,
) -> KlStatus {
    new_kernel(KernelSpec::Matern { a, sigma, alpha, d }, out)
}

/// Tabulated kernel from a row-major `n x n` table over `grid`; the table is
/// symmetrized as `(G + G^T)/2`.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_tabulated(
    grid: *const KlGrid,
    gram_row_major: *const f64,
    out: *mut *mut KlKernel,
) -> KlStatus {
    guard(|| {
        if grid.is_null() || gram_row_major.is_null() || out.is_null() {
            return KlStatus::NullPointer;
        }
        let g = unsafe { &*grid }.0.clone();
        let n = g.len();
        let flat = unsafe { std::slice::from_raw_parts(gram_row_major, n * n) };
        let rows: Vec<Vec<f64>> = flat.chunks(n).map(|c| c.to_vec()).collect();
        complete(KernelSpec::tabulated(g, rows), |(spec, _)| unsafe {
            *out = Box::into_raw(Box::new(KlKernel(spec)));
        })
    })
}

/// Pointwise kernel value.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_eval(
    kernel: *const KlKernel,
    s: f64,
    t: f64,
    out: *mut f64,
) -> KlStatus {
    guard(|| {
        if kernel.is_null() || out.is_null() {
            return KlStatus::NullPointer;
        }
        let k = unsafe { &*kernel };
        complete(k.0.eval(s, t), |v| unsafe { *out = v })
    })
}

/// Quadrature trace `sum_j w_j k(t_j, t_j)`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_trace(
    kernel: *const KlKernel,
    grid: *const KlGrid,
    out: *mut f64,
) -> KlStatus {
    guard(|| {
        if kernel.is_null() || grid.is_null() || out.is_null() {
            return KlStatus::NullPointer;
        }
        let k = unsafe { &*kernel };
        let g = unsafe { &*grid };
        complete(k.0.trace_nu(&g.0), |v| unsafe { *out = v })
    })
}

/// Releases a kernel handle; null is ignored.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_kernel_free(kernel: *mut KlKernel) {
    if !kernel.is_null() {
        drop(unsafe { Box::from_raw(kernel) });
    }
}

// --- decomposition ----------------------------------------------------------

/// Decomposes the weighted Gram operator. `max_rank = 0` keeps everything
/// above the tolerance; `drop_tol < 0` selects the default 1e-12.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_decompose(
    kernel: *const KlKernel,
    grid: *const KlGrid,
    max_rank: usize,
    drop_tol: f64,
    out: *mut *mut KlDecomposition,
) -> KlStatus {
    guard(|| {
        if kernel.is_null() || grid.is_null() || out.is_null() {
            return KlStatus::NullPointer;
        }
        let k = unsafe { &*kernel };
        let g = unsafe { &*grid };
        let opts = DecomposeOptions {
            max_rank: if max_rank == 0 { None } else { Some(max_rank) },
            drop_tol: if drop_tol < 0.0 { 1e-12 } else { drop_tol },
        };
        complete(decompose(&k.0, &g.0, opts), |dec| unsafe {
            *out = Box::into_raw(Box::new(KlDecomposition(dec)));
        })
    })
}

/// Retained rank; 0 for a null handle.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_decomposition_rank(dec: *const KlDecomposition) -> usize {
    if dec.is_null() {
        return 0;
    }
    unsafe { &*dec }.0.rank()
}

/// Number of grid nodes backing the decomposition.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_decomposition_grid_len(dec: *const KlDecomposition) -> usize {
    if dec.is_null() {
        return 0;
    }
    unsafe { &*dec }.0.grid().len()
}

/// Copies the eigenvalues (descending) into `buf`; `len` must be at least
/// `kl_decomposition_rank`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_decomposition_eigenvalues(
    dec: *const KlDecomposition,
    buf: *mut f64,
    len: usize,
) -> KlStatus {
    guard(|| {
        if dec.is_null() || buf.is_null() {
            return KlStatus::NullPointer;
        }
        let d = unsafe { &*dec };
        copy_into(d.0.mu(), buf, len)
    })
}

/// Copies eigenfunction `i` at all grid nodes into `buf`; `len` must be at
/// least `kl_decomposition_grid_len`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_decomposition_eigenfunction(
    dec: *const KlDecomposition,
    i: usize,
    buf: *mut f64,
    len: usize,
) -> KlStatus {
    guard(|| {
        if dec.is_null() || buf.is_null() {
            return KlStatus::NullPointer;
        }
        let d = unsafe { &*dec };
        if i >= d.0.rank() {
            set_error("eigenfunction index out of range");
            return KlStatus::InvalidArgument;
        }
        copy_into(d.0.eigenfunction(i), buf, len)
    })
}

/// Eigenfunction values at an off-grid point by the Nystrom formula; `len`
/// must be at least `kl_decomposition_rank`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_decomposition_nystrom(
    dec: *const KlDecomposition,
    kernel: *const KlKernel,
    t: f64,
    buf: *mut f64,
    len: usize,
) -> KlStatus {
    guard(|| {
        if dec.is_null() || kernel.is_null() || buf.is_null() {
            return KlStatus::NullPointer;
        }
        let d = unsafe { &*dec };
        let k = unsafe { &*kernel };
        if len < d.0.rank() {
            set_error(&format!(
                "buffer capacity {len} is below the rank {}",
                d.0.rank()
            ));
            return KlStatus::InvalidArgument;
        }
        complete(d.0.nystrom_extend(&k.0, t), |vals| unsafe {
            std::ptr::copy_nonoverlapping(vals.as_ptr(), buf, vals.len());
        })
    })
}

/// Power-space norm of explicit coefficients against this decomposition;
/// `gamma` in `(0, 1]`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_power_norm(
    dec: *const KlDecomposition,
    coeffs: *const f64,
    len: usize,
    gamma: f64,
    out: *mut f64,
) -> KlStatus {
    guard(|| {
        if dec.is_null() || coeffs.is_null() || out.is_null() {
            return KlStatus::NullPointer;
        }
        let d = unsafe { &*dec };
        let z = unsafe { std::slice::from_raw_parts(coeffs, len) };
        let result = PowerExponent::new(gamma).and_then(|g| {
            let z = CoeffVector::new(z.to_vec(), &d.0)?;
            power_norm(&z, &d.0, g)
        });
        complete(result, |v| unsafe { *out = v })
    })
}

/// Least-squares decay exponent of `mu_i ~ C i^{-alpha}` over the 1-based
/// inclusive window `[lo, hi]`; `lo = hi = 0` selects the default window.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_fit_decay_alpha(
    dec: *const KlDecomposition,
    lo: usize,
    hi: usize,
    alpha_out: *mut f64,
) -> KlStatus {
    guard(|| {
        if dec.is_null() || alpha_out.is_null() {
            return KlStatus::NullPointer;
        }
        let d = unsafe { &*dec };
        let range = if lo == 0 && hi == 0 {
            None
        } else {
            Some((lo, hi))
        };
        complete(fit_decay(&d.0, range), |fit| unsafe {
            *alpha_out = fit.alpha_hat;
        })
    })
}

/// Draws `replicates` paths truncated at rank `m` (`m = 0` keeps the full
/// rank) into a caller buffer of capacity `values_len >= replicates * grid_len`
/// doubles, row-major by replicate. Deterministic in `(seed, replicates)`.
///
/// # Safety
/// Handles must be live pointers from this library or null; `buf` must be
/// writable for the stated capacity.
#[no_mangle]
pub unsafe extern "C" fn kl_sample_batch(
    dec: *const KlDecomposition,
    law: KlLaw,
    student_dof: f64,
    m: usize,
    replicates: u64,
    seed: u64,
    values_out: *mut f64,
    values_len: usize,
) -> KlStatus {
    guard(|| {
        if dec.is_null() || values_out.is_null() {
            return KlStatus::NullPointer;
        }
        let d = unsafe { &*dec };
        let needed = replicates as usize * d.0.grid().len();
        if values_len < needed {
            set_error(&format!(
                "buffer capacity {values_len} is below the required {needed}"
            ));
            return KlStatus::InvalidArgument;
        }
        let law = match law {
            KlLaw::Gaussian => CoefficientLaw::Gaussian,
            KlLaw::Rademacher => CoefficientLaw::Rademacher,
            KlLaw::StudentT => CoefficientLaw::StudentT { dof: student_dof },
        };
        let m = if m == 0 { d.0.rank() } else { m };
        let n = d.0.grid().len();
        complete(sample_batch(&d.0, law, m, replicates, seed), |batch| {
            for (r, path) in batch.iter().enumerate() {
                unsafe {
                    std::ptr::copy_nonoverlapping(path.values().as_ptr(), values_out.add(r * n), n);
                }
            }
        })
    })
}

/// Releases a decomposition handle; null is ignored.
///
/// # Safety
/// Handles must be live pointers from this library or null.
#[no_mangle]
pub unsafe extern "C" fn kl_decomposition_free(dec: *mut KlDecomposition) {
    if !dec.is_null() {
        drop(unsafe { Box::from_raw(dec) });
    }
}
