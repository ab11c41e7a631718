#ifndef AFLOW_H
#define AFLOW_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum AflowStatus {
  AFLOW_STATUS_OK = 0,
  AFLOW_STATUS_NULL_POINTER = 1,
  AFLOW_STATUS_INVALID_ARGUMENT = 2,
  AFLOW_STATUS_CONTRACT = 3,
  AFLOW_STATUS_DOMAIN = 4,
  AFLOW_STATUS_DIVERGENCE = 5,
  AFLOW_STATUS_OPTIMIZATION = 6,
  AFLOW_STATUS_REJECTED_INPUT = 7,
  AFLOW_STATUS_FACTORIZATION = 8,
  AFLOW_STATUS_DEGENERATE_ESTIMATE = 9,
  AFLOW_STATUS_PARSE = 10,
  AFLOW_STATUS_VALIDATION = 11,
  AFLOW_STATUS_INCOMPATIBLE = 12,
  AFLOW_STATUS_INVARIANT = 13,
  AFLOW_STATUS_IO = 14,
  AFLOW_STATUS_PANIC = 15,
} AflowStatus;

// Opaque classifier handle.
typedef struct AflowClassifier AflowClassifier;

// Opaque normalizing-flow handle.
typedef struct AflowFlow AflowFlow;

// Settings of an attack call. `target < 0` selects the untargeted goal.
typedef struct AflowAttackParams {
  // L-infinity budget in pixel units (`1.0 / 255.0` for one gray level).
  double epsilon;
  size_t max_queries;
  double lr;
  double kappa;
  int64_t target;
} AflowAttackParams;

typedef struct AflowAttackOutcome {
  bool success;
  size_t iterations_used;
  double achieved_linf;
} AflowAttackOutcome;

typedef struct AflowMetrics {
  double ssim;
  // `INFINITY` for identical images.
  double psnr_db;
  double l2;
  double uqi;
  double scc;
} AflowMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *aflow_last_error(void);

// Library version as a static NUL-terminated string.
const char *aflow_version(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum AflowStatus aflow_flow_load(const char *path_ptr, struct AflowFlow **out);

// Identity-initialized flow with alternating masks.
//
// # Safety
// `out` must be a valid pointer.
enum AflowStatus aflow_flow_identity(size_t dim,
                                     size_t layers,
                                     size_t hidden,
                                     uint64_t seed_value,
                                     struct AflowFlow **out);

// Flow whose output heads are uniform in `[-limit, limit]`.
//
// # Safety
// `out` must be a valid pointer.
enum AflowStatus aflow_flow_random(size_t dim,
                                   size_t layers,
                                   size_t hidden,
                                   double limit,
                                   uint64_t seed_value,
                                   struct AflowFlow **out);

// # Safety
// `flow` must be a live handle and `path` a NUL-terminated string.
enum AflowStatus aflow_flow_save(const struct AflowFlow *flow, const char *path_ptr);

// # Safety
// `flow` must be null or a handle not yet freed.
void aflow_flow_free(struct AflowFlow *flow);

// Input dimension, or 0 for a null handle.
//
// # Safety
// `flow` must be null or a live handle.
size_t aflow_flow_dim(const struct AflowFlow *flow);

// Map `x` (length `dim`) to its latent `z_out` and write `log|det dz/dx|`.
//
// # Safety
// Buffers must hold `dim` values; `log_det_out` may be null.
enum AflowStatus aflow_flow_encode(const struct AflowFlow *flow,
                                   const double *x,
                                   size_t dim,
                                   double *z_out,
                                   double *log_det_out);

// # Safety
// Buffers must hold `dim` values.
enum AflowStatus aflow_flow_decode(const struct AflowFlow *flow,
                                   const double *z,
                                   size_t dim,
                                   double *x_out);

// # Safety
// `x` must hold `dim` values and `out` be valid.
enum AflowStatus aflow_flow_log_prob(const struct AflowFlow *flow,
                                     const double *x,
                                     size_t dim,
                                     double *out);

// # Safety
// `path` must be NUL-terminated and `out` valid.
enum AflowStatus aflow_classifier_load(const char *path_ptr, struct AflowClassifier **out);

// Glorot-initialized classifier `dim -> hidden[0] -> ... -> classes`.
//
// # Safety
// `hidden` must hold `hidden_len` values (or be null when `hidden_len == 0`); `out` valid.
enum AflowStatus aflow_classifier_random(size_t dim,
                                         const size_t *hidden,
                                         size_t hidden_len,
                                         size_t classes,
                                         uint64_t seed_value,
                                         struct AflowClassifier **out);

// # Safety
// `clf` must be live and `path` NUL-terminated.
enum AflowStatus aflow_classifier_save(const struct AflowClassifier *clf, const char *path_ptr);

// # Safety
// `clf` must be null or a handle not yet freed.
void aflow_classifier_free(struct AflowClassifier *clf);

// # Safety
// `clf` must be null or live.
size_t aflow_classifier_input_dim(const struct AflowClassifier *clf);

// # Safety
// `clf` must be null or live.
size_t aflow_classifier_num_classes(const struct AflowClassifier *clf);

// Write `classes` logits for input `x` of length `dim`.
//
// # Safety
// `x` must hold `dim` values and `logits_out` `classes` values.
enum AflowStatus aflow_classifier_logits(const struct AflowClassifier *clf,
                                         const double *x,
                                         size_t dim,
                                         double *logits_out,
                                         size_t classes);

// Latent-space attack of `x` (pixels in `[0, 1]`, length `dim`) with true label `label`.
//
// # Safety
// Handles must be live; `x` and `x_adv_out` must hold `dim` values; `params`
// must be valid; `outcome` may be null.
enum AflowStatus aflow_attack(const struct AflowFlow *flow,
                              const struct AflowClassifier *clf,
                              const double *x,
                              size_t dim,
                              size_t label,
                              const struct AflowAttackParams *params,
                              double *x_adv_out,
                              struct AflowAttackOutcome *outcome);

// Single-step signed-gradient attack; `target < 0` is untargeted.
//
// # Safety
// `clf` must be live; `x` and `x_adv_out` must hold `dim` values; `outcome` may be null.
enum AflowStatus aflow_fgsm(const struct AflowClassifier *clf,
                            const double *x,
                            size_t dim,
                            size_t label,
                            double epsilon,
                            int64_t target,
                            double *x_adv_out,
                            struct AflowAttackOutcome *outcome);

// SSIM, PSNR, L2, UQI and SCC between two `height x width` images.
//
// # Safety
// Both images must hold `height * width` values and `out` be valid.
enum AflowStatus aflow_metrics(const double *reference,
                               const double *candidate,
                               size_t height,
                               size_t width,
                               struct AflowMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AFLOW_H */
