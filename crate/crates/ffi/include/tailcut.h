#ifndef TAILCUT_H
#define TAILCUT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum TcStatus {
  TC_STATUS_OK = 0,
  TC_STATUS_INVALID_ARGUMENT = 1,
  TC_STATUS_NULL_POINTER = 2,
  TC_STATUS_PARSE = 3,
  TC_STATUS_DATA = 4,
  TC_STATUS_NUMERIC = 5,
  TC_STATUS_SINGULAR_OBJECTIVE = 6,
  TC_STATUS_RANK_DEFICIENT = 7,
  TC_STATUS_DEGENERATE_COMPONENT = 8,
  TC_STATUS_UNKNOWN_INSTANCE = 9,
  TC_STATUS_TRAINING = 10,
  TC_STATUS_IO = 11,
  TC_STATUS_JSON = 12,
  TC_STATUS_PANIC = 13,
} TcStatus;

typedef enum TcAlgorithm {
  TC_ALGORITHM_K_MEANS = 0,
  TC_ALGORITHM_EM = 1,
} TcAlgorithm;

/**
 * `Wall` measures time; `Iterations` counts one unit per iteration.
 */
typedef enum TcClock {
  TC_CLOCK_WALL = 0,
  TC_CLOCK_ITERATIONS = 1,
} TcClock;

/**
 * A dataset of `len` points in `dim` dimensions.
 */
typedef struct TcDataset TcDataset;

/**
 * A trained stop-threshold predictor.
 */
typedef struct TcPredictor TcPredictor;

/**
 * The report and trace of one clustering run.
 */
typedef struct TcRun TcRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Owned by the
 * library; valid until the next failing call on the same thread.
 */
const char *tc_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *tc_version(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from a `tc_*` function that documents a caller-owned string.
 */
void tc_string_free(char *s);

/**
 * Copies `n * dim` row-major values into a new dataset.
 *
 * # Safety
 * `values` must point to `n * dim` readable doubles; `id` may be NULL.
 */
enum TcStatus tc_dataset_new(const double *values,
                             size_t n,
                             size_t dim,
                             const char *id,
                             struct TcDataset **out_dataset);

/**
 * Loads a CSV file, one point per row.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string.
 */
enum TcStatus tc_dataset_load_csv(const char *path,
                                  bool has_header,
                                  struct TcDataset **out_dataset);

/**
 * # Safety
 * `dataset` must be a live handle or NULL.
 */
size_t tc_dataset_len(const struct TcDataset *dataset);

/**
 * # Safety
 * `dataset` must be a live handle or NULL.
 */
size_t tc_dataset_dim(const struct TcDataset *dataset);

/**
 * # Safety
 * `dataset` must come from this library and not be used afterwards.
 */
void tc_dataset_free(struct TcDataset *dataset);

/**
 * Rand Index of two labelings of the same `n` points.
 *
 * # Safety
 * `a` and `b` must each point to `n` readable labels.
 */
enum TcStatus tc_rand_index(const size_t *a, const size_t *b, size_t n, double *out_value);

/**
 * `max(0, beta0 + beta1 r + beta2 r^2)` at `target`.
 */
double tc_threshold_for_accuracy(double beta0, double beta1, double beta2, double target);

/**
 * Dollar cost of `seconds` at `price_per_hour`.
 *
 * # Safety
 * `out_dollars` must be writable.
 */
enum TcStatus tc_computation_cost(double price_per_hour, double seconds, double *out_dollars);

/**
 * Splits `dataset` into random groups of `group_size` points and trains a
 * predictor on the first `training_groups` of them (0 means all).
 *
 * # Safety
 * `dataset` must be a live handle; `out_predictor` must be writable.
 */
enum TcStatus tc_predictor_train(const struct TcDataset *dataset,
                                 enum TcAlgorithm algorithm,
                                 size_t k,
                                 size_t group_size,
                                 size_t training_groups,
                                 uint64_t seed,
                                 enum TcClock clock,
                                 struct TcPredictor **out_predictor);

/**
 * Parses a predictor from its JSON form.
 *
 * # Safety
 * `json` must be a NUL-terminated UTF-8 string.
 */
enum TcStatus tc_predictor_from_json(const char *json, struct TcPredictor **out_predictor);

/**
 * JSON form of a predictor; free the result with `tc_string_free`.
 *
 * # Safety
 * `predictor` must be a live handle; `out_json` must be writable.
 */
enum TcStatus tc_predictor_to_json(const struct TcPredictor *predictor, char **out_json);

/**
 * Writes `[beta0, beta1, beta2]`.
 *
 * # Safety
 * `out_coefficients` must have room for three doubles.
 */
enum TcStatus tc_predictor_coefficients(const struct TcPredictor *predictor,
                                        double *out_coefficients);

/**
 * # Safety
 * `predictor` must be a live handle; `out_threshold` must be writable.
 */
enum TcStatus tc_predictor_threshold(const struct TcPredictor *predictor,
                                     double target,
                                     double *out_threshold);

/**
 * # Safety
 * `predictor` must come from this library and not be used afterwards.
 */
void tc_predictor_free(struct TcPredictor *predictor);

/**
 * Clusters `dataset`. With a predictor the run stops once the objective
 * change rate falls below the threshold for `target_accuracy`; with NULL it
 * runs to convergence and `target_accuracy` is ignored. The predictor's
 * algorithm and `k` are used when one is given.
 *
 * # Safety
 * `dataset` must be a live handle, `predictor` a live handle or NULL.
 */
enum TcStatus tc_run(const struct TcDataset *dataset,
                     enum TcAlgorithm algorithm,
                     size_t k,
                     uint64_t seed,
                     const struct TcPredictor *predictor,
                     double target_accuracy,
                     enum TcClock clock,
                     struct TcRun **out_run);

/**
 * Number of iterations performed.
 *
 * # Safety
 * `run` must be a live handle or NULL.
 */
size_t tc_run_iterations(const struct TcRun *run);

/**
 * True when the stop rule ended the run before convergence.
 *
 * # Safety
 * `run` must be a live handle or NULL.
 */
bool tc_run_stopped_early(const struct TcRun *run);

/**
 * Objective value at 1-based `iteration`.
 *
 * # Safety
 * `run` must be a live handle; `out_value` must be writable.
 */
enum TcStatus tc_run_objective(const struct TcRun *run, size_t iteration, double *out_value);

/**
 * Copies the final labels into `out_labels`, which must hold `capacity`
 * entries; `capacity` must be at least the dataset length.
 *
 * # Safety
 * `run` must be a live handle; `out_labels` must have room for `capacity` values.
 */
enum TcStatus tc_run_labels(const struct TcRun *run, size_t *out_labels, size_t capacity);

/**
 * # Safety
 * `run` must come from this library and not be used afterwards.
 */
void tc_run_free(struct TcRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAILCUT_H */
