#ifndef AMA_FFI_H
#define AMA_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes mirroring the CLI exit codes, plus argument errors.
 */
typedef enum AmaStatus {
  AmaOk = 0,
  AmaConfigError = 1,
  AmaRuntimeError = 2,
  AmaIoError = 3,
  AmaInvalidArgument = 4,
} AmaStatus;

/**
 * Opaque handle to a parameter vector.
 */
typedef struct AmaParams AmaParams;

/**
 * Opaque handle to a completed training run.
 */
typedef struct AmaTrainResult AmaTrainResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent error on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *ama_last_error_message(void);

/**
 * Runs the full pipeline from a JSON config file; artifacts are written
 * to the configured output directory and the result handle is returned.
 *
 * # Safety
 * `config_path` must be a NUL-terminated string and `out_result` a valid
 * pointer.
 */
enum AmaStatus ama_run_from_config(const char *config_path, struct AmaTrainResult **out_result);

/**
 * # Safety
 * `result` must come from `ama_run_from_config` and not be freed twice.
 */
void ama_train_result_free(struct AmaTrainResult *result);

/**
 * Number of tasks in the run, or 0 for a null handle.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
size_t ama_train_result_num_tasks(const struct AmaTrainResult *result);

/**
 * Samples drawn from one task over the run, or -1 for a bad handle/index.
 *
 * # Safety
 * `result` must be a live handle or null.
 */
int64_t ama_train_result_sample_count(const struct AmaTrainResult *result, size_t task);

/**
 * Copies the final parameters into a fresh `AmaParams` handle.
 *
 * # Safety
 * `result` must be a live handle; `out_params` a valid pointer.
 */
enum AmaStatus ama_train_result_final_params(const struct AmaTrainResult *result,
                                             struct AmaParams **out_params);

/**
 * Loads a params binary into a handle.
 *
 * # Safety
 * `path` must be NUL-terminated; `out_params` a valid pointer.
 */
enum AmaStatus ama_params_load(const char *path, struct AmaParams **out_params);

/**
 * Writes a params handle to a binary file.
 *
 * # Safety
 * `params` must be a live handle; `path` NUL-terminated.
 */
enum AmaStatus ama_params_save(const struct AmaParams *params, const char *path);

/**
 * # Safety
 * `params` must come from this library and not be freed twice.
 */
void ama_params_free(struct AmaParams *params);

/**
 * Dimension of a parameter vector, or 0 for a null handle.
 *
 * # Safety
 * `params` must be a live handle or null.
 */
size_t ama_params_dim(const struct AmaParams *params);

/**
 * Copies the parameter values into a caller-owned buffer of length `len`
 * (which must equal the dimension).
 *
 * # Safety
 * `buffer` must point to at least `len` doubles.
 */
enum AmaStatus ama_params_copy_values(const struct AmaParams *params, double *buffer, size_t len);

/**
 * Mean per-task preference accuracy of saved params on a JSONL dataset.
 *
 * # Safety
 * Both paths must be NUL-terminated; `out_accuracy` a valid pointer.
 */
enum AmaStatus ama_evaluate(const char *params_path,
                            const char *dataset_path,
                            double *out_accuracy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AMA_FFI_H */
