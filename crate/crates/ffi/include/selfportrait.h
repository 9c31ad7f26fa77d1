#ifndef SELFPORTRAIT_H
#define SELFPORTRAIT_H

#pragma once

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_ARGUMENT = 2,
  SP_STATUS_DIMENSION_MISMATCH = 3,
  SP_STATUS_ZERO_VECTOR = 4,
  SP_STATUS_DEGENERATE_GROUPS = 5,
  SP_STATUS_NUMERICAL = 6,
  SP_STATUS_PROVIDER = 7,
  SP_STATUS_PANIC = 8,
} SpStatus;

typedef enum SpEditClass {
  SP_EDIT_CLASS_RETAINED = 0,
  SP_EDIT_CLASS_REWORDED = 1,
  SP_EDIT_CLASS_PRUNED = 2,
} SpEditClass;

/**
 * Group codes for [`sp_ancova`]: 0 no edits, 1 one edit, 2 more.
 */
typedef enum SpGroup {
  SP_GROUP_REFLECTED = 0,
  SP_GROUP_INTERACTED = 1,
  SP_GROUP_COLLABORATED = 2,
} SpGroup;

/**
 * Result of [`sp_ancova`].
 */
typedef struct SpAncova SpAncova;

/**
 * Deterministic offline embedder.
 */
typedef struct SpEmbedder SpEmbedder;

typedef struct SpPolicy {
  double fraction_threshold;
  uint64_t absolute_threshold;
  int64_t cadence_seconds;
} SpPolicy;

typedef struct SpPair {
  enum SpGroup group_a;
  enum SpGroup group_b;
  double mean_difference;
  double p_adjusted;
} SpPair;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; valid until the next call on this thread.
 */
const char *sp_last_error(void);

/**
 * Cosine similarity of two `dim`-vectors.
 *
 * # Safety
 * `a` and `b` point to `dim` doubles; `out_value` is writable.
 */
enum SpStatus sp_cosine(const double *a, const double *b, size_t dim, double *out_value);

/**
 * Intra-list similarity of `n` row-major `dim`-vectors: the mean pairwise
 * cosine with negatives clamped to zero.
 *
 * # Safety
 * `vectors` points to `n * dim` doubles; `out_value` is writable.
 */
enum SpStatus sp_ils(const double *vectors, size_t n, size_t dim, double *out_value);

/**
 * A deterministic offline embedder, or null when `dim < 2`.
 */
struct SpEmbedder *sp_mock_embedder_new(size_t dim, uint64_t seed);

/**
 * # Safety
 * `embedder` is null or came from [`sp_mock_embedder_new`] and is not used
 * afterwards.
 */
void sp_embedder_free(struct SpEmbedder *embedder);

/**
 * Class of the edit `before -> after`: retained at similarity 0.95 and
 * above, reworded from 0.60, pruned below or when `after` is blank.
 *
 * # Safety
 * `embedder` is a live handle; the strings are nul-terminated; the outputs
 * are writable.
 */
enum SpStatus sp_classify_edit(const struct SpEmbedder *embedder,
                               const char *before,
                               const char *after,
                               enum SpEditClass *class_out,
                               double *similarity_out);

/**
 * The default policy: 10% or 10 ratings, checked daily.
 */
struct SpPolicy sp_default_policy(void);

/**
 * Whether a portrait generated at `base_count` ratings should be rebuilt
 * now that the user has `current_count`. Times are Unix seconds.
 *
 * # Safety
 * `policy` and `out_value` are valid pointers.
 */
enum SpStatus sp_should_regenerate(const struct SpPolicy *policy,
                                   uint64_t base_count,
                                   uint64_t current_count,
                                   int64_t now,
                                   int64_t last_check,
                                   bool *out_value);

/**
 * ANCOVA of `outcome` on group with `covariate` as a control. On success
 * `*result` owns a handle to release with [`sp_ancova_free`].
 *
 * # Safety
 * The arrays hold `n` elements; `result` is writable.
 */
enum SpStatus sp_ancova(const double *outcome,
                        const double *covariate,
                        const int32_t *groups,
                        size_t n,
                        struct SpAncova **result);

/**
 * # Safety
 * `result` is null or came from [`sp_ancova`] and is not used afterwards.
 */
void sp_ancova_free(struct SpAncova *result);

/**
 * F statistic of the group term, or NaN for a null handle.
 *
 * # Safety
 * `result` is null or a live handle.
 */
double sp_ancova_f(const struct SpAncova *result);

/**
 * # Safety
 * `result` is null or a live handle.
 */
double sp_ancova_p(const struct SpAncova *result);

/**
 * Partial eta squared of the group term.
 *
 * # Safety
 * `result` is null or a live handle.
 */
double sp_ancova_eta_squared(const struct SpAncova *result);

/**
 * Number of pairwise comparisons.
 *
 * # Safety
 * `result` is null or a live handle.
 */
size_t sp_ancova_pair_count(const struct SpAncova *result);

/**
 * Tukey-adjusted comparison `index`, in group order.
 *
 * # Safety
 * `result` is a live handle; `pair` is writable.
 */
enum SpStatus sp_ancova_pair(const struct SpAncova *result, size_t index, struct SpPair *pair);

/**
 * CDF of the studentized range for `k` means and `df` degrees of freedom
 * (pass infinity for the normal limit).
 *
 * # Safety
 * `out_value` is writable.
 */
enum SpStatus sp_studentized_range_cdf(double q, size_t k, double df, double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SELFPORTRAIT_H */
