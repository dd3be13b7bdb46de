#ifndef FANET_H
#define FANET_H

#pragma once

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum FanetStatus {
  FANET_STATUS_OK = 0,
  FANET_STATUS_NULL_POINTER = 1,
  FANET_STATUS_INVALID_ARGUMENT = 2,
  FANET_STATUS_CONFIG = 3,
  FANET_STATUS_DIMENSION = 4,
  FANET_STATUS_CHECKPOINT = 5,
  FANET_STATUS_IO = 6,
  FANET_STATUS_LABEL = 7,
  FANET_STATUS_EMPTY = 8,
  FANET_STATUS_NUMERIC = 9,
  FANET_STATUS_PANIC = 10,
} FanetStatus;

/**
 * Opaque confusion matrix.
 */
typedef struct FanetConfusion FanetConfusion;

/**
 * Opaque single-precision network.
 */
typedef struct FanetModel FanetModel;

/**
 * Summary metrics, fractions in `[0, 1]`.
 */
typedef struct FanetMetrics {
  double pixel_acc;
  double mean_acc;
  double mean_iu;
  double fw_iu;
} FanetMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static nul-terminated string.
 */
const char *fanet_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library from the same thread.
 */
const char *fanet_last_error_message(void);

/**
 * Builds a model from an architecture spec in JSON, e.g.
 * `{"variant": "fanet", "base_width": 8, "input_size": 96}`.
 *
 * # Safety
 * `spec_json` must be a nul-terminated string; `out` must be writable.
 */
enum FanetStatus fanet_model_new(const char *spec_json, uint64_t seed, struct FanetModel **out);

/**
 * Builds a model of a named variant (`unet`, `unet-se`, `fanet-s`,
 * `fanet-i`, `fanet`) with default settings apart from width and size.
 *
 * # Safety
 * `variant` must be a nul-terminated string; `out` must be writable.
 */
enum FanetStatus fanet_model_new_variant(const char *variant,
                                         size_t base_width,
                                         size_t input_size,
                                         uint64_t seed,
                                         struct FanetModel **out);

/**
 * Loads a checkpoint written by the library or the CLI.
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum FanetStatus fanet_model_load(const char *path, struct FanetModel **out);

/**
 * # Safety
 * `model` must be a live handle; `path` a nul-terminated string.
 */
enum FanetStatus fanet_model_save(const struct FanetModel *model, const char *path);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from a `fanet_model_*` constructor and not be used
 * afterwards.
 */
void fanet_model_free(struct FanetModel *model);

/**
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum FanetStatus fanet_model_param_count(const struct FanetModel *model, size_t *out);

/**
 * Spatial input size `S` and number of classes `K` of the model.
 *
 * # Safety
 * `model` must be a live handle; both outputs writable.
 */
enum FanetStatus fanet_model_shape(const struct FanetModel *model,
                                   size_t *input_size,
                                   size_t *num_classes);

/**
 * Eval-mode logits, `N×K×S×S` planar.
 *
 * # Safety
 * `images` must hold `images_len` floats and `logits` `logits_len` floats.
 */
enum FanetStatus fanet_model_forward(const struct FanetModel *model,
                                     const float *images,
                                     size_t images_len,
                                     size_t batch,
                                     float *logits,
                                     size_t logits_len);

/**
 * Per-pixel class ids, `N×S×S`.
 *
 * # Safety
 * `images` must hold `images_len` floats and `classes` `classes_len` bytes.
 */
enum FanetStatus fanet_model_predict(const struct FanetModel *model,
                                     const float *images,
                                     size_t images_len,
                                     size_t batch,
                                     uint8_t *classes,
                                     size_t classes_len);

/**
 * Applies the excitation rule to `x: N×C×HW`: `y = s·x` where `x > g`,
 * else `x`, with `s` and `g` of length `N·C`.
 *
 * # Safety
 * `x` and `out` must hold `n·c·hw` floats; `s` and `g` `n·c` floats.
 */
enum FanetStatus fanet_excite(const float *x,
                              size_t n,
                              size_t c,
                              size_t hw,
                              const float *s,
                              const float *g,
                              float *out);

/**
 * # Safety
 * `out` must be writable.
 */
enum FanetStatus fanet_confusion_new(size_t classes, struct FanetConfusion **out);

/**
 * Adds `len` pixels of predictions against ground truth.
 *
 * # Safety
 * `cm` must be a live handle; `pred` and `gt` must hold `len` bytes.
 */
enum FanetStatus fanet_confusion_accumulate(struct FanetConfusion *cm,
                                            const uint8_t *pred,
                                            const uint8_t *gt,
                                            size_t len);

/**
 * Copies the `K×K` counts, row = ground truth, column = prediction.
 *
 * # Safety
 * `cm` must be a live handle; `counts` must hold `counts_len` values.
 */
enum FanetStatus fanet_confusion_counts(const struct FanetConfusion *cm,
                                        uint64_t *counts,
                                        size_t counts_len);

/**
 * # Safety
 * `cm` must be a live handle; `out` writable.
 */
enum FanetStatus fanet_confusion_metrics(const struct FanetConfusion *cm, struct FanetMetrics *out);

/**
 * Releases a confusion matrix. Null is ignored.
 *
 * # Safety
 * `cm` must come from [`fanet_confusion_new`] and not be used afterwards.
 */
void fanet_confusion_free(struct FanetConfusion *cm);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FANET_H */
