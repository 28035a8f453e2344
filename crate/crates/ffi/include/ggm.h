#ifndef GGM_H
#define GGM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum GgmStatus {
  GGM_STATUS_OK = 0,
  GGM_STATUS_NULL_POINTER = 1,
  GGM_STATUS_INVALID_ARGUMENT = 2,
  GGM_STATUS_INVALID_CONFIG = 3,
  GGM_STATUS_SHAPE_MISMATCH = 4,
  GGM_STATUS_CAP_EXCEEDED = 5,
  GGM_STATUS_NUMERIC = 6,
  GGM_STATUS_DEGENERATE = 7,
  GGM_STATUS_PARSE = 8,
  GGM_STATUS_IO = 9,
  GGM_STATUS_BUFFER_TOO_SMALL = 10,
  GGM_STATUS_CERTIFICATION_FAILED = 11,
  GGM_STATUS_PANIC = 12,
} GgmStatus;

/**
 * A probability table over `X^L`.
 */
typedef struct GgmInstance GgmInstance;

/**
 * A reverse-chain sampler with its own seeded stream of chains.
 */
typedef struct GgmSampler GgmSampler;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message (NUL-terminated, truncated
 * to fit) and returns the full message length in bytes, excluding the NUL.
 *
 * # Safety
 * `buffer` must be null or valid for `capacity` bytes.
 */
size_t ggm_last_error_message(char *buffer, size_t capacity);

/**
 * Static, NUL-terminated crate version.
 */
const char *ggm_version(void);

/**
 * Parses `{"L": .., "V": .., "probs": [..]}` (optionally wrapped under `"instance"`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum GgmStatus ggm_instance_from_json(const char *json, struct GgmInstance **out);

/**
 * Seeded random target with exponential weights.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GgmStatus ggm_instance_random(size_t len,
                                   size_t vocab,
                                   uint64_t seed,
                                   struct GgmInstance **out);

/**
 * # Safety
 * `instance` must be null or a handle from this library that was not freed yet.
 */
void ggm_instance_free(struct GgmInstance *instance);

/**
 * Writes `V^L`.
 *
 * # Safety
 * `instance` must be a live handle; `out` must be valid for writes.
 */
enum GgmStatus ggm_instance_num_states(const struct GgmInstance *instance, size_t *out);

/**
 * Copies the probability table (row-major, position 0 most significant).
 *
 * # Safety
 * `instance` must be a live handle; `probs` must be valid for `capacity` doubles.
 */
enum GgmStatus ggm_instance_probs(const struct GgmInstance *instance,
                                  double *probs,
                                  size_t capacity);

/**
 * Total variation distance between two tables of the same shape.
 *
 * # Safety
 * Both handles must be live; `out` must be valid for writes.
 */
enum GgmStatus ggm_instance_tv(const struct GgmInstance *a,
                               const struct GgmInstance *b,
                               double *out);

/**
 * Sampler driven by the exact oracle of `instance`, with the identity scan,
 * uniform token noise and stay probability `stay_prob`. The instance is copied.
 *
 * # Safety
 * `instance` must be a live handle; `out` must be valid for writes.
 */
enum GgmStatus ggm_sampler_new_oracle(const struct GgmInstance *instance,
                                      size_t horizon,
                                      double stay_prob,
                                      uint64_t seed,
                                      struct GgmSampler **out);

/**
 * Sampler driven by a trained model file's JSON text. `horizon = 0` uses the
 * horizon the model was trained with.
 *
 * # Safety
 * `model_json` must be a NUL-terminated string; `out` must be valid for writes.
 */
enum GgmStatus ggm_sampler_new_model(const char *model_json,
                                     size_t horizon,
                                     double stay_prob,
                                     uint64_t seed,
                                     struct GgmSampler **out);

/**
 * # Safety
 * `sampler` must be null or a live handle.
 */
void ggm_sampler_free(struct GgmSampler *sampler);

/**
 * Sets top-p truncation and temperature for later draws.
 *
 * # Safety
 * `sampler` must be a live handle.
 */
enum GgmStatus ggm_sampler_configure(struct GgmSampler *sampler, double top_p, double temperature);

/**
 * Draws the next chain's sequence into `tokens`. Chain `k` of a sampler
 * seeded with `s` matches sample `k` of `ggm sample --seed s`.
 *
 * # Safety
 * `sampler` must be a live handle; `tokens` must be valid for `capacity` values.
 */
enum GgmStatus ggm_sampler_sample(struct GgmSampler *sampler, uint32_t *tokens, size_t capacity);

/**
 * Like [`ggm_sampler_sample`] with `positions[k]` held at `values[k]`.
 *
 * # Safety
 * `positions` and `values` must be valid for `count` elements; otherwise as above.
 */
enum GgmStatus ggm_sampler_infill(struct GgmSampler *sampler,
                                  const size_t *positions,
                                  const uint32_t *values,
                                  size_t count,
                                  uint32_t *tokens,
                                  size_t capacity);

/**
 * Exact propagation from `Π(·|X)^⊗L`; writes the TV to the target and returns
 * `CertificationFailed` when it exceeds `delta`. `target` may be null for
 * oracle samplers, which use their own instance.
 *
 * # Safety
 * `sampler` must be a live handle, `target` null or live, `tv` valid for writes.
 */
enum GgmStatus ggm_sampler_certify(const struct GgmSampler *sampler,
                                   const struct GgmInstance *target,
                                   double delta,
                                   double *tv);

/**
 * `⌈L·ln(L/δ)/ln(1/(1−p))⌉`, floored at zero.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GgmStatus ggm_theorem1_min_steps(size_t len, double p, double delta, size_t *out);

/**
 * `min(1, L·(1−ε)^⌊T/L⌋)`.
 *
 * # Safety
 * `out` must be valid for writes.
 */
enum GgmStatus ggm_lemma1_bound(size_t len, double eps, size_t horizon, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GGM_H */
