#ifndef HENET_H
#define HENET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Build, data, numeric and I/O errors match the CLI exit codes.
 */
typedef enum HenetStatus {
  HENET_STATUS_OK = 0,
  HENET_STATUS_NULL_POINTER = 1,
  HENET_STATUS_INVALID_ARGUMENT = 2,
  HENET_STATUS_BUILD = 3,
  HENET_STATUS_DATA = 4,
  HENET_STATUS_NUMERIC = 5,
  HENET_STATUS_IO = 6,
  HENET_STATUS_BUFFER_TOO_SMALL = 7,
  HENET_STATUS_PANIC = 8,
} HenetStatus;

typedef enum HenetFamily {
  HENET_FAMILY_HENET = 0,
  HENET_FAMILY_SHUFFLENET = 1,
} HenetFamily;

/**
 * Opaque model handle.
 */
typedef struct HenetModel HenetModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a model with the default stage layout. `family` is a `HenetFamily` value;
 * `num_classes` and `input_size` of 0 keep the defaults.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum HenetStatus henet_model_build(uint32_t family_code,
                                   uint32_t repeat,
                                   uint32_t input_size,
                                   uint32_t num_classes,
                                   uint64_t seed,
                                   struct HenetModel **out);

/**
 * Builds a model from `key = value` config text.
 *
 * # Safety
 * `config` must be a NUL-terminated string; `out` as for [`henet_model_build`].
 */
enum HenetStatus henet_model_from_config(uint32_t family_code,
                                         const char *config,
                                         uint64_t seed,
                                         struct HenetModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` as for [`henet_model_build`].
 */
enum HenetStatus henet_model_load(const char *path, struct HenetModel **out);

/**
 * # Safety
 * `model` must come from this library and not be freed; `path` as for [`henet_model_load`].
 */
enum HenetStatus henet_model_save(const struct HenetModel *model, const char *path);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `model` must be null or a live handle from this library; it is invalid afterwards.
 */
void henet_model_free(struct HenetModel *model);

/**
 * Channels, height and width of one input sample.
 *
 * # Safety
 * `model` must be a live handle; the out pointers must be writable.
 */
enum HenetStatus henet_model_input_shape(const struct HenetModel *model,
                                         size_t *channels,
                                         size_t *height,
                                         size_t *width);

/**
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum HenetStatus henet_model_num_classes(const struct HenetModel *model, size_t *out);

/**
 * Inference-mode forward pass over `batch` samples laid out `N·C·H·W`.
 * `input` holds `batch·C·H·W` floats; `scores` receives `batch·num_classes`.
 *
 * # Safety
 * The buffers must be valid for the lengths given.
 */
enum HenetStatus henet_model_forward(const struct HenetModel *model,
                                     const float *input,
                                     size_t input_len,
                                     size_t batch,
                                     float *scores,
                                     size_t scores_len);

/**
 * Parameter total; batch-norm gamma/beta are included when `include_bn` is nonzero.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum HenetStatus henet_model_param_count(const struct HenetModel *model,
                                         uint8_t include_bn,
                                         uint64_t *out);

/**
 * Multiply-accumulates of one batch-1 forward pass.
 *
 * # Safety
 * `model` must be a live handle; `out` must be writable.
 */
enum HenetStatus henet_model_mac_count(const struct HenetModel *model, uint64_t *out);

/**
 * `m·n = channels` with `m > n` and `m − n` minimal.
 *
 * # Safety
 * `m` and `n` must be writable.
 */
enum HenetStatus henet_nearest_divisor_pair(size_t channels, size_t *m, size_t *n);

/**
 * Message for the last failed call on this thread, or null. Valid until the next call on this thread.
 */
const char *henet_last_error_message(void);

/**
 * Library version, NUL-terminated, static.
 */
const char *henet_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HENET_H */
