#ifndef PC3_H
#define PC3_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Pc3ErrorCode {
  PC3_ERROR_CODE_OK = 0,
  PC3_ERROR_CODE_VALIDATION = 1,
  PC3_ERROR_CODE_NUMERIC = 2,
  PC3_ERROR_CODE_IO = 3,
  PC3_ERROR_CODE_NULL_POINTER = 4,
  PC3_ERROR_CODE_PANIC = 5,
} Pc3ErrorCode;

// Calibrated labels and the per-epoch loss trace.
typedef struct Pc3Calibration Pc3Calibration;

// Calibration hyperparameters.
typedef struct Pc3Config Pc3Config;

// Feature rows, one per item.
typedef struct Pc3FeatureTable Pc3FeatureTable;

// Agreement between two label vectors.
typedef struct Pc3Metrics {
  double srcc;
  double plcc;
  double krocc;
  double mse;
} Pc3Metrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pc3_version(void);

// Message of the last failure on this thread, or NULL. Free with
// [`pc3_string_free`].
char *pc3_last_error_message(void);

// # Safety
// `s` must come from [`pc3_last_error_message`] and not have been freed.
void pc3_string_free(char *s);

// Default configuration (alpha 0.1, beta 1/9, lambda 1e-4, one warm-up epoch).
//
// # Safety
// `out` must be valid for writes.
enum Pc3ErrorCode pc3_config_new(struct Pc3Config **out);

// Parses a flat JSON configuration; omitted keys keep their defaults.
//
// # Safety
// `json` must be a NUL-terminated string and `out` valid for writes.
enum Pc3ErrorCode pc3_config_from_json(const char *json, struct Pc3Config **out);

// # Safety
// `config` must be a live handle from `pc3_config_new` or NULL.
void pc3_config_free(struct Pc3Config *config);

// MOS update step size, in [0, 1].
//
// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_alpha(struct Pc3Config *config, double value);

// Weight of the constancy constraint term, >= 0.
//
// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_beta(struct Pc3Config *config, double value);

// Adam learning rate, >= 0.
//
// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_lambda(struct Pc3Config *config, double value);

// Epochs during which the MOS estimate is pinned to the input labels.
//
// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_warmup_epochs(struct Pc3Config *config, size_t value);

// Number of alternating iterations, >= 1.
//
// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_total_epochs(struct Pc3Config *config, size_t value);

// Mini-batch size, >= 1.
//
// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_batch_size(struct Pc3Config *config, size_t value);

// Seed for initialization, reference sampling and shuffling.
//
// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_seed(struct Pc3Config *config, uint64_t value);

// # Safety
// `config` must be a live handle.
enum Pc3ErrorCode pc3_config_set_hidden_dims(struct Pc3Config *config, size_t first, size_t second);

// Copies a row-major `n_items x dim` matrix. Items get ids `"0"`, `"1"`, ...
//
// # Safety
// `data` must point to `n_items * dim` doubles; `out` must be valid for writes.
enum Pc3ErrorCode pc3_features_new(const double *data,
                                   size_t n_items,
                                   size_t dim,
                                   struct Pc3FeatureTable **out);

// Loads a features CSV (`item_id,f0,...`).
//
// # Safety
// `path` must be NUL-terminated; `out` must be valid for writes.
enum Pc3ErrorCode pc3_features_read_csv(const char *path, struct Pc3FeatureTable **out);

// Number of items, or 0 for NULL.
//
// # Safety
// `table` must be a live handle or NULL.
size_t pc3_features_len(const struct Pc3FeatureTable *table);

// Feature dimension, or 0 for NULL.
//
// # Safety
// `table` must be a live handle or NULL.
size_t pc3_features_dim(const struct Pc3FeatureTable *table);

// # Safety
// `table` must be a live handle or NULL.
void pc3_features_free(struct Pc3FeatureTable *table);

// Calibrates `n` raw single opinion scores aligned with the table rows.
//
// # Safety
// Handles must be live; `sos` must point to `n` doubles; `out` must be valid
// for writes.
enum Pc3ErrorCode pc3_calibrate(const struct Pc3FeatureTable *features,
                                const double *sos,
                                size_t n,
                                const struct Pc3Config *config,
                                struct Pc3Calibration **out);

// # Safety
// `result` must be a live handle or NULL.
size_t pc3_calibration_len(const struct Pc3Calibration *result);

// Copies the calibrated labels (raw scale) into `out`, which holds `len` doubles.
//
// # Safety
// `result` must be live; `out` must be valid for `len` writes.
enum Pc3ErrorCode pc3_calibration_labels(const struct Pc3Calibration *result,
                                         double *out,
                                         size_t len);

// Number of epochs in the trace.
//
// # Safety
// `result` must be a live handle or NULL.
size_t pc3_calibration_epochs(const struct Pc3Calibration *result);

// Loss terms recorded for `epoch`. Any output pointer may be NULL.
//
// # Safety
// `result` must be live; non-NULL outputs must be valid for writes.
enum Pc3ErrorCode pc3_calibration_epoch_loss(const struct Pc3Calibration *result,
                                             size_t epoch,
                                             double *data_fit,
                                             double *constraint,
                                             double *total);

// # Safety
// `result` must be a live handle or NULL.
void pc3_calibration_free(struct Pc3Calibration *result);

// SRCC, PLCC, KROCC and MSE between `pred` and `truth`.
//
// # Safety
// `pred` and `truth` must point to `n` doubles; `out` must be valid for writes.
enum Pc3ErrorCode pc3_evaluate(const double *pred,
                               const double *truth,
                               size_t n,
                               struct Pc3Metrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PC3_H */
