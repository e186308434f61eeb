#ifndef GREMLAB_H
#define GREMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GremlabStatus {
  GREMLAB_STATUS_OK = 0,
  GREMLAB_STATUS_NULL_POINTER = 1,
  GREMLAB_STATUS_INVALID_UTF8 = 2,
  GREMLAB_STATUS_INVALID_MODEL = 3,
  GREMLAB_STATUS_INVALID_ARGUMENT = 4,
  GREMLAB_STATUS_BUDGET_EXCEEDED = 5,
  GREMLAB_STATUS_NUMERIC = 6,
  GREMLAB_STATUS_PANIC = 7,
} GremlabStatus;

/**
 * Opaque model handle. Create with [`gremlab_model_from_json`], release
 * with [`gremlab_model_free`].
 */
typedef struct GremlabModel GremlabModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parses a model from a NUL-terminated JSON string.
 *
 * # Safety
 * `json` must be a valid C string; `out` must be writable.
 */
enum GremlabStatus gremlab_model_from_json(const char *json, struct GremlabModel **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must come from [`gremlab_model_from_json`] and not be freed twice.
 */
void gremlab_model_free(struct GremlabModel *model);

/**
 * Number of species `n`, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t gremlab_model_species(const struct GremlabModel *model);

/**
 * Global Parisi minimum over all chains. `chain_out` receives the winning
 * permutation (species numbered from 1) and `m_out` its optimal `m`; both
 * must hold `n` entries and either may be null.
 *
 * # Safety
 * `model` must be a live handle; non-null buffers must hold `n` elements.
 */
enum GremlabStatus gremlab_parisi_global_min(const struct GremlabModel *model,
                                             double *value_out,
                                             size_t *chain_out,
                                             double *m_out,
                                             size_t n);

/**
 * Parisi functional of the chain `perm` at `m`, both of length `n`.
 *
 * # Safety
 * `model` must be a live handle; `perm` and `m` must hold `n` elements.
 */
enum GremlabStatus gremlab_parisi_value(const struct GremlabModel *model,
                                        const size_t *perm,
                                        const double *m,
                                        size_t n,
                                        double *value_out);

/**
 * Value `g` of the entropy-capped Gibbs principle; `certified_out` may be
 * null.
 *
 * # Safety
 * `model` must be a live handle; out-pointers must be writable.
 */
enum GremlabStatus gremlab_solve_gibbs(const struct GremlabModel *model,
                                       double *value_out,
                                       bool *certified_out);

/**
 * Exact finite-volume free energy `F_N` for one disorder seed.
 *
 * # Safety
 * `model` must be a live handle; `value_out` must be writable.
 */
enum GremlabStatus gremlab_free_energy(const struct GremlabModel *model,
                                       size_t volume,
                                       uint64_t seed,
                                       double *value_out);

/**
 * Runs the full verification and returns the JSON report in `json_out`
 * (release with [`gremlab_string_free`]) and the CLI exit code in
 * `exit_code_out`.
 *
 * # Safety
 * `model` must be a live handle; `volumes` must hold `count` elements.
 */
enum GremlabStatus gremlab_verify_json(const struct GremlabModel *model,
                                       const size_t *volumes,
                                       size_t count,
                                       uint64_t seed,
                                       char **json_out,
                                       int *exit_code_out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void gremlab_string_free(char *s);

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *gremlab_last_error(void);

/**
 * Library version as a static C string.
 */
const char *gremlab_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GREMLAB_H */
