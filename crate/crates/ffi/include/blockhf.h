#ifndef BLOCKHF_H
#define BLOCKHF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BhfStatus {
  BHF_STATUS_OK = 0,
  BHF_STATUS_NULL_POINTER = 1,
  /**
   * Bad shapes, lengths, names or values.
   */
  BHF_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A NaN or infinity appeared during computation.
   */
  BHF_STATUS_NUMERICAL = 3,
  BHF_STATUS_CONFIG = 4,
  BHF_STATUS_DATA_MISSING = 5,
  BHF_STATUS_IO = 6,
  /**
   * The call completed but a verification check failed.
   */
  BHF_STATUS_VERIFY_FAILED = 7,
  BHF_STATUS_PANIC = 8,
} BhfStatus;

/**
 * Opaque network handle.
 */
typedef struct BhfModel BhfModel;

typedef struct BhfRunResult {
  size_t updates;
  bool stopped_early;
  /**
   * Last logged training loss, NaN when nothing was logged.
   */
  double final_train_loss;
  double final_eval_loss;
} BhfRunResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *bhf_last_error(void);

/**
 * NUL-terminated crate version.
 */
const char *bhf_version(void);

/**
 * Builds a preset network (`autoencoder-mnist`, `lstm3x10`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum BhfStatus bhf_model_preset(const char *name, struct BhfModel **out);

/**
 * Builds an autoencoder with encoder sizes `layers[0..n_layers]`.
 *
 * # Safety
 * `layers` must point to `n_layers` readable values; `out` must be writable.
 */
enum BhfStatus bhf_model_autoencoder(const size_t *layers, size_t n_layers, struct BhfModel **out);

/**
 * # Safety
 * `model` must come from a `bhf_model_*` constructor and not be freed yet.
 * NULL is ignored.
 */
void bhf_model_free(struct BhfModel *model);

/**
 * Number of parameters, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t bhf_model_param_count(const struct BhfModel *model);

/**
 * Columns of one input row, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t bhf_model_input_width(const struct BhfModel *model);

/**
 * Columns of one target row, 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t bhf_model_target_width(const struct BhfModel *model);

/**
 * Writes the seeded initial parameters into `w[0..n]`.
 *
 * # Safety
 * `model` must be a live handle and `w` must point to `n` writable doubles.
 */
enum BhfStatus bhf_model_init_params(const struct BhfModel *model,
                                     uint64_t seed,
                                     double *w,
                                     size_t n);

/**
 * Mean loss over `rows` samples. `x` is `rows × input_width`, `y` is
 * `rows × target_width`, `w` has `n` parameters.
 *
 * # Safety
 * Pointers must be readable for the stated sizes; `out` must be writable.
 */
enum BhfStatus bhf_model_loss(const struct BhfModel *model,
                              const double *x,
                              const double *y,
                              size_t rows,
                              const double *w,
                              size_t n,
                              double *out);

/**
 * Gradient of the mean loss, written to `grad[0..n]`.
 *
 * # Safety
 * As [`bhf_model_loss`]; `grad` must point to `n` writable doubles.
 */
enum BhfStatus bhf_model_grad(const struct BhfModel *model,
                              const double *x,
                              const double *y,
                              size_t rows,
                              const double *w,
                              size_t n,
                              double *grad);

/**
 * Gauss-Newton product `G v`, written to `out[0..n]`.
 *
 * # Safety
 * As [`bhf_model_loss`]; `v` and `out` must each hold `n` doubles.
 */
enum BhfStatus bhf_model_ggn_vp(const struct BhfModel *model,
                                const double *x,
                                const double *y,
                                size_t rows,
                                const double *w,
                                const double *v,
                                size_t n,
                                double *out);

/**
 * Parses `config` (the CLI's config text), trains, and writes the CSV it
 * names. `result` may be NULL.
 *
 * # Safety
 * `config` must be NUL-terminated; `result` must be NULL or writable.
 */
enum BhfStatus bhf_run_config(const char *config, struct BhfRunResult *result);

/**
 * Runs a verification suite (`autodiff`, `cg`, `optimizer`, `all`).
 * Returns `BHF_STATUS_VERIFY_FAILED` when any check fails; the last error
 * then holds the full report. `checks` (may be NULL) receives the number
 * of checks run.
 *
 * # Safety
 * `suite` must be NUL-terminated; `checks` must be NULL or writable.
 */
enum BhfStatus bhf_verify(const char *suite, uint64_t seed, size_t *checks);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BLOCKHF_H */
