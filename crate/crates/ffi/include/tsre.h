#ifndef TSRE_H
#define TSRE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

#define TSRE_CENTERING_COVARIANCE 0

#define TSRE_CENTERING_RAW 1

#define TSRE_METHOD_RATIO 0

#define TSRE_METHOD_IVW_FE 2

#define TSRE_METHOD_IVW_RE 3

#define TSRE_METHOD_EGGER 4

#define TSRE_METHOD_SIMPLE_MEDIAN 5

#define TSRE_METHOD_WEIGHTED_MEDIAN 6

typedef enum TsreStatus {
  TSRE_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  TSRE_STATUS_NULL = 1,
  /**
   * Invalid argument or method code.
   */
  TSRE_STATUS_USAGE = 2,
  /**
   * Malformed, mismatched or too-small data.
   */
  TSRE_STATUS_DATA = 3,
  /**
   * Numerical failure such as a weak genetic signal.
   */
  TSRE_STATUS_NUMERIC = 4,
  /**
   * An internal panic was caught.
   */
  TSRE_STATUS_PANIC = 5,
} TsreStatus;

/**
 * Column-standardized genotype matrix.
 */
typedef struct TsreGenotypes TsreGenotypes;

/**
 * Genetic relationship matrix.
 */
typedef struct TsreGrm TsreGrm;

typedef struct TsreFitResult {
  double theta_hat;
  double se;
  double eta_hat;
  double delta_hat;
  double tau2_hat;
  size_t n;
  size_t m;
} TsreFitResult;

typedef struct TsreVariantSummary {
  double gamma_x;
  double se_x;
  double gamma_y;
  double se_y;
  double p_x;
} TsreVariantSummary;

/**
 * `intercept` and `overdispersion` are NaN when the method has none.
 */
typedef struct TsreEstimate {
  double theta_hat;
  double se;
  double intercept;
  double overdispersion;
  size_t n_iv;
} TsreEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or "" after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tsre_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tsre_version(void);

/**
 * Standardizes an n×m row-major matrix of allele counts (0, 1 or 2).
 * Monomorphic variants are dropped.
 *
 * # Safety
 * `dosages` must point to `n * m` bytes; `out` must be writable.
 */
enum TsreStatus tsre_genotypes_new(const uint8_t *dosages,
                                   size_t n,
                                   size_t m,
                                   struct TsreGenotypes **out);

/**
 * # Safety
 * `g` must come from [`tsre_genotypes_new`] and not be used afterwards.
 */
void tsre_genotypes_free(struct TsreGenotypes *g);

/**
 * Individuals and retained variants.
 *
 * # Safety
 * `g` must be a live handle; `n` and `m` may be null.
 */
enum TsreStatus tsre_genotypes_shape(const struct TsreGenotypes *g, size_t *n, size_t *m);

/**
 * # Safety
 * `g` must be a live handle; `out` must be writable.
 */
enum TsreStatus tsre_grm_compute(const struct TsreGenotypes *g, struct TsreGrm **out);

/**
 * # Safety
 * `a` must come from [`tsre_grm_compute`] and not be used afterwards.
 */
void tsre_grm_free(struct TsreGrm *a);

/**
 * # Safety
 * `a` must be a live handle; `n` must be writable.
 */
enum TsreStatus tsre_grm_size(const struct TsreGrm *a, size_t *n);

/**
 * Entry A_ij (symmetric).
 *
 * # Safety
 * `a` must be a live handle; `out` must be writable.
 */
enum TsreStatus tsre_grm_get(const struct TsreGrm *a, size_t i, size_t j, double *out);

/**
 * TS-RE estimate from a GRM and `n` exposure and outcome values.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` must be writable.
 */
enum TsreStatus tsre_estimate_grm(const struct TsreGrm *a,
                                  const double *x,
                                  const double *y,
                                  size_t n,
                                  int32_t centering_code,
                                  struct TsreFitResult *out);

/**
 * TS-RE estimate straight from genotypes, without materializing the GRM
 * when the variant count is small.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` must be writable.
 */
enum TsreStatus tsre_estimate_genotypes(const struct TsreGenotypes *g,
                                        const double *x,
                                        const double *y,
                                        size_t n,
                                        int32_t centering_code,
                                        struct TsreFitResult *out);

/**
 * Summary-statistics estimator over `len` variants. `resamples` and
 * `seed` drive the median bootstrap and are ignored otherwise.
 *
 * # Safety
 * `summaries` must point to `len` records; `out` must be writable.
 */
enum TsreStatus tsre_estimate_summary(int32_t method_code,
                                      const struct TsreVariantSummary *summaries,
                                      size_t len,
                                      size_t resamples,
                                      uint64_t seed,
                                      struct TsreEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TSRE_H */
