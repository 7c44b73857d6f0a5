#ifndef KL_CAPI_H
#define KL_CAPI_H

/* Generated by cbindgen from kl-capi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum {
  KL_STATUS_OK = 0,
  /**
   * A precondition on an argument was violated.
   */
  KL_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Overflow, non-convergence, or a violated numerical invariant.
   */
  KL_STATUS_NUMERIC_ERROR = 2,
  /**
   * The operator has no usable positive spectrum.
   */
  KL_STATUS_DEGENERATE_KERNEL = 3,
  /**
   * The operation is not defined for this input.
   */
  KL_STATUS_UNSUPPORTED = 4,
  /**
   * A hypothesis required by the estimated quantity fails.
   */
  KL_STATUS_HYPOTHESIS_VIOLATED = 5,
  /**
   * Too little usable data to form the estimate.
   */
  KL_STATUS_INSUFFICIENT_DATA = 6,
  /**
   * A required pointer argument was null.
   */
  KL_STATUS_NULL_POINTER = 7,
  /**
   * A panic was caught at the boundary.
   */
  KL_STATUS_INTERNAL = 8,
} KlStatus;

/**
 * Coefficient laws for `kl_sample_batch`.
 */
typedef enum {
  KL_LAW_GAUSSIAN = 0,
  KL_LAW_RADEMACHER = 1,
  /**
   * Uses the `student_dof` argument; requires dof > 4.
   */
  KL_LAW_STUDENT_T = 2,
} KlLaw;

/**
 * Opaque spectral decomposition.
 */
typedef struct KlDecomposition KlDecomposition;

/**
 * Opaque quadrature grid.
 */
typedef struct KlGrid KlGrid;

/**
 * Opaque covariance kernel.
 */
typedef struct KlKernel KlKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *kl_last_error_message(void);

/**
 * Composite midpoint grid for Lebesgue measure on `[a, b]`.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_grid_uniform(double a, double b, uintptr_t n, KlGrid **out);

/**
 * Gauss-Legendre grid on `[a, b]`.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_grid_gauss_legendre(double a, double b, uintptr_t n, KlGrid **out);

/**
 * Number of nodes; 0 for a null grid.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
uintptr_t kl_grid_len(const KlGrid *grid);

/**
 * Copies the nodes into `buf`; `len` is the buffer capacity and must be at
 * least `kl_grid_len`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_grid_nodes(const KlGrid *grid, double *buf, uintptr_t len);

/**
 * Copies the weights into `buf`; `len` must be at least `kl_grid_len`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_grid_weights(const KlGrid *grid, double *buf, uintptr_t len);

/**
 * Releases a grid handle; null is ignored.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
void kl_grid_free(KlGrid *grid);

/**
 * `k(s, t) = sigma2 * min(s, t)` on `[0, inf)`.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_kernel_brownian_motion(double sigma2, KlKernel **out);

/**
 * `k(s, t) = sigma2 * (min(s, t) - s t)` on `[0, 1]`.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_kernel_brownian_bridge(double sigma2, KlKernel **out);

/**
 * `k(s, t) = a * exp(-sigma |s - t|)`.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_kernel_ornstein_uhlenbeck(double a, double sigma, KlKernel **out);

/**
 * `k(s, t) = a (sigma r)^alpha K_alpha(sigma r)` with the analytic value on
 * the diagonal; `d` is the nominal domain dimension used by smoothness
 * bookkeeping.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_kernel_matern(double a, double sigma, double alpha, uint32_t d, KlKernel **out);

/**
 * Tabulated kernel from a row-major `n x n` table over `grid`; the table is
 * symmetrized as `(G + G^T)/2`.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_kernel_tabulated(const KlGrid *grid, const double *gram_row_major, KlKernel **out);

/**
 * Pointwise kernel value.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_kernel_eval(const KlKernel *kernel, double s, double t, double *out);

/**
 * Quadrature trace `sum_j w_j k(t_j, t_j)`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_kernel_trace(const KlKernel *kernel, const KlGrid *grid, double *out);

/**
 * Releases a kernel handle; null is ignored.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
void kl_kernel_free(KlKernel *kernel);

/**
 * Decomposes the weighted Gram operator. `max_rank = 0` keeps everything
 * above the tolerance; `drop_tol < 0` selects the default 1e-12.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
KlStatus kl_decompose(const KlKernel *kernel,
                      const KlGrid *grid,
                      uintptr_t max_rank,
                      double drop_tol,
                      KlDecomposition **out);

/**
 * Retained rank; 0 for a null handle.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
uintptr_t kl_decomposition_rank(const KlDecomposition *dec);

/**
 * Number of grid nodes backing the decomposition.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
uintptr_t kl_decomposition_grid_len(const KlDecomposition *dec);

/**
 * Copies the eigenvalues (descending) into `buf`; `len` must be at least
 * `kl_decomposition_rank`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_decomposition_eigenvalues(const KlDecomposition *dec, double *buf, uintptr_t len);

/**
 * Copies eigenfunction `i` at all grid nodes into `buf`; `len` must be at
 * least `kl_decomposition_grid_len`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_decomposition_eigenfunction(const KlDecomposition *dec,
                                        uintptr_t i,
                                        double *buf,
                                        uintptr_t len);

/**
 * Eigenfunction values at an off-grid point by the Nystrom formula; `len`
 * must be at least `kl_decomposition_rank`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_decomposition_nystrom(const KlDecomposition *dec,
                                  const KlKernel *kernel,
                                  double t,
                                  double *buf,
                                  uintptr_t len);

/**
 * Power-space norm of explicit coefficients against this decomposition;
 * `gamma` in `(0, 1]`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_power_norm(const KlDecomposition *dec,
                       const double *coeffs,
                       uintptr_t len,
                       double gamma,
                       double *out);

/**
 * Least-squares decay exponent of `mu_i ~ C i^{-alpha}` over the 1-based
 * inclusive window `[lo, hi]`; `lo = hi = 0` selects the default window.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_fit_decay_alpha(const KlDecomposition *dec,
                            uintptr_t lo,
                            uintptr_t hi,
                            double *alpha_out);

/**
 * Draws `replicates` paths truncated at rank `m` (`m = 0` keeps the full
 * rank) into a caller buffer of capacity `values_len >= replicates * grid_len`
 * doubles, row-major by replicate. Deterministic in `(seed, replicates)`.
 *
 * # Safety
 * Handles must be live pointers from this library or null; `buf` must be
 * writable for the stated capacity.
 */
KlStatus kl_sample_batch(const KlDecomposition *dec,
                         KlLaw law,
                         double student_dof,
                         uintptr_t m,
                         uint64_t replicates,
                         uint64_t seed,
                         double *values_out,
                         uintptr_t values_len);

/**
 * Releases a decomposition handle; null is ignored.
 *
 * # Safety
 * Handles must be live pointers from this library or null.
 */
void kl_decomposition_free(KlDecomposition *dec);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KL_CAPI_H */
