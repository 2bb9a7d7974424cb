#ifndef ACLNET_H
#define ACLNET_H

/* Generated by cbindgen from the aclnet-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AclnetStatus {
  ACLNET_STATUS_OK = 0,
  ACLNET_STATUS_NULL_ARGUMENT = 1,
  ACLNET_STATUS_INVALID_ARGUMENT = 2,
  ACLNET_STATUS_CONFIG = 3,
  ACLNET_STATUS_IO = 4,
  ACLNET_STATUS_FORMAT = 5,
  ACLNET_STATUS_SHAPE = 6,
  ACLNET_STATUS_NUMERIC = 7,
  ACLNET_STATUS_BUFFER_TOO_SMALL = 8,
  ACLNET_STATUS_PANIC = 9,
} AclnetStatus;

typedef enum AclnetConvType {
  ACLNET_CONV_TYPE_STANDARD = 0,
  ACLNET_CONV_TYPE_SEPARABLE = 1,
} AclnetConvType;

/**
 * Opaque model handle.
 */
typedef struct AclnetModel AclnetModel;

/**
 * Parameter and multiply-add counts of one configuration.
 */
typedef struct AclnetComplexity {
  uint64_t llf_params;
  uint64_t hlf_params;
  uint64_t total_params;
  uint64_t llf_macs;
  uint64_t hlf_macs;
  uint64_t total_macs;
} AclnetComplexity;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *aclnet_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aclnet_version(void);

/**
 * Creates a freshly initialized model with the default front-end
 * settings for `sample_rate` and `conv_type`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum AclnetStatus aclnet_model_new(uint32_t sample_rate,
                                   enum AclnetConvType conv_type,
                                   uint32_t wm_num,
                                   uint32_t wm_den,
                                   uint32_t num_classes,
                                   uint64_t seed,
                                   struct AclnetModel **out);

/**
 * Loads a model file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for one write.
 */
enum AclnetStatus aclnet_model_load(const char *path, struct AclnetModel **out);

/**
 * Writes a model file atomically.
 *
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
enum AclnetStatus aclnet_model_save(const struct AclnetModel *model, const char *path);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void aclnet_model_free(struct AclnetModel *model);

/**
 * Number of output classes, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
uint32_t aclnet_model_num_classes(const struct AclnetModel *model);

/**
 * Expected input sample rate in Hz, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
uint32_t aclnet_model_sample_rate(const struct AclnetModel *model);

/**
 * Shortest accepted input, one 10 ms frame, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t aclnet_model_min_input_len(const struct AclnetModel *model);

/**
 * Class distribution for a whole waveform of any length of at least one
 * frame. The waveform is normalized to zero mean and unit variance first.
 * The first class-count entries of `probs` receive the distribution;
 * `probs_len` must be at least the class count.
 *
 * # Safety
 * `samples` must point to `len` floats and `probs` to `probs_len` floats.
 */
enum AclnetStatus aclnet_model_infer(const struct AclnetModel *model,
                                     const float *samples,
                                     size_t len,
                                     float *probs,
                                     size_t probs_len);

/**
 * Parameter and multiply-add counts for a configuration over a window of
 * `window_seconds`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum AclnetStatus aclnet_analyze(uint32_t sample_rate,
                                 enum AclnetConvType conv_type,
                                 uint32_t wm_num,
                                 uint32_t wm_den,
                                 double window_seconds,
                                 struct AclnetComplexity *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ACLNET_H */
