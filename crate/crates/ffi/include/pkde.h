#ifndef PKDE_H
#define PKDE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PkdeBandwidthRule {
  PKDE_BANDWIDTH_RULE_SCOTT = 0,
  PKDE_BANDWIDTH_RULE_SCOTT_SQUARED = 1,
} PkdeBandwidthRule;

// Status codes; the non-zero data values match the CLI exit codes.
typedef enum PkdeStatus {
  PKDE_STATUS_OK = 0,
  PKDE_STATUS_INVALID_ARGUMENT = 1,
  PKDE_STATUS_DATA_ERROR = 2,
  PKDE_STATUS_NUMERICAL_ERROR = 3,
  PKDE_STATUS_NULL_POINTER = 4,
  PKDE_STATUS_PANIC = 5,
} PkdeStatus;

// Opaque dataset handle.
typedef struct PkdeDataset PkdeDataset;

// Opaque detection result handle.
typedef struct PkdeResult PkdeResult;

// Detector settings. Zero in `fixed_dim` or `neighbors` means "unset".
typedef struct PkdeConfig {
  double contamination;
  double variance_threshold;
  size_t fixed_dim;
  enum PkdeBandwidthRule bandwidth_rule;
  size_t neighbors;
} PkdeConfig;

typedef struct PkdeF1 {
  size_t tp;
  size_t fp;
  size_t fn_;
  size_t tn;
  double precision;
  double recall;
  double f1;
} PkdeF1;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer
// stays valid until the next failing call on this thread.
const char *pkde_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *pkde_version(void);

struct PkdeConfig pkde_config_default(void);

// Copies a row-major `rows × cols` array. `labels` may be null; otherwise
// it must hold `rows` values, each 0 or 1.
enum PkdeStatus pkde_dataset_from_rows(const double *data,
                                       size_t rows,
                                       size_t cols,
                                       const uint8_t *labels,
                                       struct PkdeDataset **out);

// Loads a CSV file. `label_column` may be null (no labels), "last",
// "auto", or a header name.
enum PkdeStatus pkde_dataset_load_csv(const char *path,
                                      bool has_header,
                                      const char *label_column,
                                      struct PkdeDataset **out);

// Generates a synthetic dataset with default shape parameters. `kind` is
// one of "gaussian", "gaussian-cov", "dual-density", "gaussian-planted".
enum PkdeStatus pkde_dataset_synth(const char *kind,
                                   size_t n_normal,
                                   size_t n_outlier,
                                   size_t dim,
                                   uint64_t seed,
                                   struct PkdeDataset **out);

size_t pkde_dataset_rows(const struct PkdeDataset *ds);

size_t pkde_dataset_cols(const struct PkdeDataset *ds);

bool pkde_dataset_has_labels(const struct PkdeDataset *ds);

// Copies the ground-truth labels into `out`, which must hold `len` bytes
// with `len == rows`.
enum PkdeStatus pkde_dataset_labels(const struct PkdeDataset *ds, uint8_t *out, size_t len);

void pkde_dataset_free(struct PkdeDataset *ds);

// Runs the named detector ("pkde", "mahalanobis", "knn-dist", "lof").
enum PkdeStatus pkde_detect(const char *detector,
                            const struct PkdeDataset *ds,
                            const struct PkdeConfig *config,
                            struct PkdeResult **out);

size_t pkde_result_len(const struct PkdeResult *res);

size_t pkde_result_k_used(const struct PkdeResult *res);

size_t pkde_result_reduced_dim(const struct PkdeResult *res);

// Seconds spent fitting, or a negative value for a null handle.
double pkde_result_fit_time(const struct PkdeResult *res);

double pkde_result_score_time(const struct PkdeResult *res);

// Copies anomaly scores (higher = more anomalous) into `out[0..len]`.
enum PkdeStatus pkde_result_scores(const struct PkdeResult *res, double *out, size_t len);

// Copies 0/1 outlier labels into `out[0..len]`.
enum PkdeStatus pkde_result_labels(const struct PkdeResult *res, uint8_t *out, size_t len);

void pkde_result_free(struct PkdeResult *res);

// Precision, recall and F1 of `predicted` against `truth`, both `len`
// bytes of 0/1.
enum PkdeStatus pkde_f1_score(const uint8_t *predicted,
                              const uint8_t *truth,
                              size_t len,
                              struct PkdeF1 *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PKDE_H */
