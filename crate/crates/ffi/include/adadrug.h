#ifndef ADADRUG_H
#define ADADRUG_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdaVariant {
  ADA_VARIANT_FULL = 0,
  ADA_VARIANT_BASELINE = 1,
  ADA_VARIANT_NO_MDA = 2,
  ADA_VARIANT_NO_IND = 3,
  ADA_VARIANT_NO_AWG = 4,
} AdaVariant;

typedef enum AdaStatus {
  ADA_STATUS_OK = 0,
  ADA_STATUS_NULL_POINTER = 1,
  ADA_STATUS_INVALID_ARGUMENT = 2,
  ADA_STATUS_SHAPE = 3,
  ADA_STATUS_DATA = 4,
  ADA_STATUS_CONFIG = 5,
  ADA_STATUS_CHECKPOINT = 6,
  ADA_STATUS_IO = 7,
  ADA_STATUS_PANIC = 8,
} AdaStatus;

/**
 * A trained model with the configuration it was trained under.
 */
typedef struct AdaModel AdaModel;

/**
 * Generated synthetic domains.
 */
typedef struct AdaSynth AdaSynth;

/**
 * Synthetic benchmark parameters.
 */
typedef struct AdaSynthConfig {
  size_t k;
  size_t n_per_domain;
  size_t n_target;
  size_t genes;
  size_t signal_dim;
  double sigma_shift;
  double sigma_noise;
  double rho;
  uint64_t seed;
} AdaSynthConfig;

/**
 * The subset of training settings exposed over the C interface; the rest
 * keep their library defaults.
 */
typedef struct AdaTrainOptions {
  size_t latent_dim;
  size_t ae_hidden;
  size_t head_hidden;
  size_t batch_size;
  size_t epochs;
  double learning_rate;
  uint64_t seed;
  enum AdaVariant variant;
} AdaTrainOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ada_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ada_last_error(void);

struct AdaSynthConfig ada_synth_config_default(void);

/**
 * Settings used by the synthetic benchmark, full variant.
 */
struct AdaTrainOptions ada_train_options_default(void);

/**
 * # Safety
 * `cfg` must point to a valid config and `out` to writable storage.
 */
enum AdaStatus ada_synth_generate(const struct AdaSynthConfig *cfg, struct AdaSynth **out);

/**
 * # Safety
 * `s` must be NULL or a handle from `ada_synth_generate` not yet freed.
 */
void ada_synth_free(struct AdaSynth *s);

/**
 * Number of target samples, 0 for NULL.
 *
 * # Safety
 * `s` must be NULL or a live handle.
 */
size_t ada_synth_n_target(const struct AdaSynth *s);

/**
 * Number of genes, 0 for NULL.
 *
 * # Safety
 * `s` must be NULL or a live handle.
 */
size_t ada_synth_genes(const struct AdaSynth *s);

/**
 * Copies the hidden target labels into `out` (length `n_target`).
 *
 * # Safety
 * `out` must hold `len` bytes.
 */
enum AdaStatus ada_synth_target_labels(const struct AdaSynth *s, uint8_t *out, size_t len);

/**
 * Copies the target expression matrix, row-major, into `out`
 * (length `n_target * genes`).
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum AdaStatus ada_synth_target_matrix(const struct AdaSynth *s, double *out, size_t len);

/**
 * Trains on the synthetic sources and unlabeled target.
 *
 * # Safety
 * Pointers must be valid; `out` receives a new model handle.
 */
enum AdaStatus ada_train_synth(const struct AdaSynth *s,
                               const struct AdaTrainOptions *opts,
                               struct AdaModel **out);

/**
 * # Safety
 * `m` must be NULL or a live model handle.
 */
void ada_model_free(struct AdaModel *m);

/**
 * Input gene count of the model, 0 for NULL.
 *
 * # Safety
 * `m` must be NULL or a live handle.
 */
size_t ada_model_genes(const struct AdaModel *m);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string.
 */
enum AdaStatus ada_model_save(const struct AdaModel *m, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` receives a new handle.
 */
enum AdaStatus ada_model_load(const char *path, struct AdaModel **out);

/**
 * Scores `rows` target samples given as a row-major `rows × genes` matrix.
 * `refs` (row-major `ref_rows × genes`) supplies the source samples whose
 * weights are averaged at inference; it is required for models trained
 * with the weight generator and may be NULL otherwise.
 *
 * # Safety
 * Buffers must hold the stated number of doubles; `out` holds `rows`.
 */
enum AdaStatus ada_model_predict(const struct AdaModel *m,
                                 const double *x,
                                 size_t rows,
                                 size_t genes,
                                 const double *refs,
                                 size_t ref_rows,
                                 uint64_t seed,
                                 double *out);

/**
 * Scores the synthetic target, using every source domain as reference,
 * exactly as the benchmark does.
 *
 * # Safety
 * `out` must hold `len` doubles, `len` equal to the target size.
 */
enum AdaStatus ada_model_predict_synth(const struct AdaModel *m,
                                       const struct AdaSynth *s,
                                       double *out,
                                       size_t len);

/**
 * # Safety
 * `scores` and `labels` must hold `n` items; `out` one double.
 */
enum AdaStatus ada_auroc(const double *scores, const uint8_t *labels, size_t n, double *out);

/**
 * # Safety
 * `scores` and `labels` must hold `n` items; `out` one double.
 */
enum AdaStatus ada_aupr(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADADRUG_H */
