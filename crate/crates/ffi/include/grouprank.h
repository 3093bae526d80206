/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef GROUPRANK_H
#define GROUPRANK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum GrkStatus {
  GRK_STATUS_OK = 0,
  GRK_STATUS_NULL_POINTER = 1,
  GRK_STATUS_INVALID_ARGUMENT = 2,
  GRK_STATUS_IO = 3,
  GRK_STATUS_MODEL_FORMAT = 4,
  GRK_STATUS_IMAGE = 5,
  GRK_STATUS_NUMERIC = 6,
  GRK_STATUS_PANIC = 7,
} GrkStatus;

// Pooling rule for [`grk_ranker_new_pool`].
typedef enum GrkPool {
  GRK_POOL_MEAN = 0,
  GRK_POOL_MAX = 1,
} GrkPool;

typedef struct GrkAestheticsModel GrkAestheticsModel;

typedef struct GrkEmotionModel GrkEmotionModel;

typedef struct GrkQualityModel GrkQualityModel;

typedef struct GrkRanker GrkRanker;

// Aggregated ranking metrics.
typedef struct GrkMetrics {
  double bim;
  double psp;
  double rho;
  size_t n_sets;
} GrkMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *grk_last_error(void);

// Library version as a static NUL-terminated string.
const char *grk_version(void);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum GrkStatus grk_quality_model_load(const char *path, struct GrkQualityModel **out);

// # Safety
// `model` must come from [`grk_quality_model_load`] or be NULL.
void grk_quality_model_free(struct GrkQualityModel *model);

// Quality channel score in `[0, 1]`.
//
// # Safety
// `pixels` must hold `width * height * channels` bytes; `out` must be valid.
enum GrkStatus grk_quality_score(const struct GrkQualityModel *model,
                                 const uint8_t *pixels,
                                 size_t width,
                                 size_t height,
                                 size_t channels,
                                 double *out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum GrkStatus grk_emotion_model_load(const char *path, struct GrkEmotionModel **out);

// # Safety
// `model` must come from [`grk_emotion_model_load`] or be NULL.
void grk_emotion_model_free(struct GrkEmotionModel *model);

// Group-happiness channel score in `[0, 1]`.
//
// # Safety
// `pixels` must hold `width * height * channels` bytes; `out` must be valid.
enum GrkStatus grk_emotion_score(const struct GrkEmotionModel *model,
                                 const uint8_t *pixels,
                                 size_t width,
                                 size_t height,
                                 size_t channels,
                                 double *out);

// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum GrkStatus grk_aesthetics_model_load(const char *path, struct GrkAestheticsModel **out);

// # Safety
// `model` must come from [`grk_aesthetics_model_load`] or be NULL.
void grk_aesthetics_model_free(struct GrkAestheticsModel *model);

// Aesthetics channel score in `[0, 1]`.
//
// # Safety
// `pixels` must hold `width * height * channels` bytes; `out` must be valid.
enum GrkStatus grk_aesthetics_score(const struct GrkAestheticsModel *model,
                                    const uint8_t *pixels,
                                    size_t width,
                                    size_t height,
                                    size_t channels,
                                    double *out);

// Loads a trained ranker file (rank SVM, rank network or pooling).
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum GrkStatus grk_ranker_load(const char *path, struct GrkRanker **out);

// A pooling ranker that needs no model file.
//
// # Safety
// `out` must be a valid pointer.
enum GrkStatus grk_ranker_new_pool(enum GrkPool pool, struct GrkRanker **out);

// # Safety
// `ranker` must come from a `grk_ranker_*` constructor or be NULL.
void grk_ranker_free(struct GrkRanker *ranker);

// Ranks `n` images given their `(emotion, aesthetics, quality)` scores,
// laid out as `n` consecutive triples. Writes ranks (1 = best) to
// `ranks_out[0..n]`.
//
// # Safety
// `scores` must hold `3 * n` doubles and `ranks_out` room for `n` values.
enum GrkStatus grk_ranker_rank(const struct GrkRanker *ranker,
                               const double *scores,
                               size_t n,
                               size_t *ranks_out);

// Writes the fusion vector `[e, e^2, a, a^2, q, q^2]` to `out[0..6]`.
//
// # Safety
// `out` must have room for 6 doubles.
enum GrkStatus grk_fuse(double emotion, double aesthetics, double quality, double *out);

// Metrics over `n_sets` sets. Set `s` has `set_sizes[s]` images; the rank
// arrays concatenate the sets in order.
//
// # Safety
// `set_sizes` must hold `n_sets` values and both rank arrays
// `sum(set_sizes)` values.
enum GrkStatus grk_metrics(const size_t *true_ranks,
                           const size_t *predicted_ranks,
                           const size_t *set_sizes,
                           size_t n_sets,
                           struct GrkMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GROUPRANK_H */
