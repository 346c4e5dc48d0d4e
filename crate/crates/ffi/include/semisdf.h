#ifndef SEMISDF_H
#define SEMISDF_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SemisdfStatus {
  SEMISDF_STATUS_OK = 0,
  SEMISDF_STATUS_NULL_POINTER = 1,
  SEMISDF_STATUS_INVALID_ARGUMENT = 2,
  SEMISDF_STATUS_SHAPE = 3,
  SEMISDF_STATUS_NON_FINITE = 4,
  SEMISDF_STATUS_IO = 5,
  SEMISDF_STATUS_FORMAT = 6,
  SEMISDF_STATUS_PRECONDITION = 7,
  SEMISDF_STATUS_PANIC = 99,
} SemisdfStatus;

/**
 * Opaque network handle.
 */
typedef struct SemisdfNet SemisdfNet;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length in bytes
 * excluding the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t semisdf_last_error(char *buf, size_t len);

/**
 * Creates a freshly initialized SDF network reading `cells x cells` pooled
 * image features, with `n_hidden` ReLU layers of the given widths.
 *
 * # Safety
 * `hidden` must be valid for `n_hidden` values; `out` must be writable.
 */
enum SemisdfStatus semisdf_net_new(size_t cells,
                                   const size_t *hidden,
                                   size_t n_hidden,
                                   uint64_t seed,
                                   struct SemisdfNet **out);

/**
 * Loads a network from a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SemisdfStatus semisdf_net_load(const char *path, struct SemisdfNet **out);

/**
 * Writes the network as a checkpoint file.
 *
 * # Safety
 * `net` must come from this library; `path` must be NUL-terminated.
 */
enum SemisdfStatus semisdf_net_save(const struct SemisdfNet *net, const char *path);

/**
 * Releases a handle. Null is a no-op.
 *
 * # Safety
 * `net` must be null or a handle from this library not yet freed.
 */
void semisdf_net_free(struct SemisdfNet *net);

/**
 * # Safety
 * `net` must come from this library; `out` must be writable.
 */
enum SemisdfStatus semisdf_net_param_count(const struct SemisdfNet *net, size_t *out);

/**
 * # Safety
 * `net` must be a live handle; `out` must be writable.
 */
enum SemisdfStatus semisdf_net_input_dim(const struct SemisdfNet *net, size_t *out);

/**
 * Copies the flat parameter vector into `buf`; `len` must equal the
 * parameter count.
 *
 * # Safety
 * `buf` must be valid for `len` values.
 */
enum SemisdfStatus semisdf_net_get_params(const struct SemisdfNet *net, double *buf, size_t len);

/**
 * Replaces the flat parameter vector.
 *
 * # Safety
 * `net` must be a live handle; `buf` must be valid for `len` values.
 */
enum SemisdfStatus semisdf_net_set_params(struct SemisdfNet *net, const double *buf, size_t len);

/**
 * Predicts signed distances at `n_points` points (`xy` interleaved) for an
 * RGB image of `height x width` pixels in row-major HWC order.
 *
 * # Safety
 * `pixels` must hold `height * width * 3` values, `xy` `2 * n_points`, and
 * `out` `n_points`.
 */
enum SemisdfStatus semisdf_net_predict(const struct SemisdfNet *net,
                                       const float *pixels,
                                       size_t height,
                                       size_t width,
                                       const double *xy,
                                       size_t n_points,
                                       double *out);

/**
 * `clip(1 - alpha cons - beta var, 0, 1)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SemisdfStatus semisdf_pseudo_weight(double cons,
                                         double var,
                                         double alpha,
                                         double beta,
                                         double *out);

/**
 * Cosine-annealed base momentum at step `t` of `total`.
 *
 * # Safety
 * `out` must be writable.
 */
enum SemisdfStatus semisdf_base_momentum(size_t t, size_t total, double m0, double *out);

/**
 * In place: `teacher += (1 - m) (student - teacher)`.
 *
 * # Safety
 * `teacher` and `student` must be valid for `n` values.
 */
enum SemisdfStatus semisdf_ema_update_fixed(double *teacher,
                                            const double *student,
                                            size_t n,
                                            double m);

/**
 * In place: `teacher += (1 - m) / (1 + eta omega) (student - teacher)`.
 *
 * # Safety
 * All arrays must be valid for `n` values.
 */
enum SemisdfStatus semisdf_ema_update_regularized(double *teacher,
                                                  const double *student,
                                                  const double *omega,
                                                  size_t n,
                                                  double m,
                                                  double eta);

/**
 * Unscaled L1 Chamfer distance between two point sets (`xy` interleaved).
 *
 * # Safety
 * `a` must hold `2 * n_a` values and `b` `2 * n_b`.
 */
enum SemisdfStatus semisdf_chamfer_l1(const double *a,
                                      size_t n_a,
                                      const double *b,
                                      size_t n_b,
                                      double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMISDF_H */
