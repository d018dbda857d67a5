/* C interface to the multi-fidelity surrogate library.
 *
 * All functions return an mfsf_status. On failure a thread-local message is
 * available from mfsf_last_error() until the next call on the same thread.
 * Handles are opaque and must be released with the matching *_free call.
 * Arrays are row-major.
 */
#ifndef MFSF_H
#define MFSF_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define MFSF_API __declspec(dllexport)
#else
#define MFSF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mfsf_status {
  MFSF_OK = 0,
  MFSF_ERR_INVALID_ARGUMENT = 1,
  MFSF_ERR_DIMENSION = 2,
  MFSF_ERR_NON_FINITE = 3,
  MFSF_ERR_CONFIG = 4,
  MFSF_ERR_MISSING_ARTIFACT = 5,
  MFSF_ERR_IO = 6,
  MFSF_ERR_RUNTIME = 7
} mfsf_status;

typedef struct mfsf_experiment mfsf_experiment;
typedef struct mfsf_model mfsf_model;

MFSF_API const char* mfsf_version(void);
MFSF_API const char* mfsf_last_error(void);
MFSF_API const char* mfsf_status_name(mfsf_status status);
/* 0 for MFSF_OK, 2 for configuration/validation failures, 1 otherwise. */
MFSF_API int mfsf_exit_code(mfsf_status status);

/* ---- experiments ------------------------------------------------------ */

MFSF_API mfsf_status mfsf_experiment_load(const char* config_path, mfsf_experiment** out);
MFSF_API mfsf_status mfsf_experiment_from_json(const char* json_text, mfsf_experiment** out);
/* Built-in preset with no overrides ("case1", "case2", "desk_small"). */
MFSF_API mfsf_status mfsf_experiment_from_preset(const char* preset, mfsf_experiment** out);
MFSF_API void mfsf_experiment_free(mfsf_experiment* exp);

MFSF_API mfsf_status mfsf_experiment_set_seed(mfsf_experiment* exp, uint64_t seed);
MFSF_API mfsf_status mfsf_experiment_set_out_dir(mfsf_experiment* exp, const char* dir);
MFSF_API mfsf_status mfsf_experiment_set_threads(mfsf_experiment* exp, int threads);

/* Copies the resolved configuration as JSON into buf (NUL-terminated).
 * *needed receives the required size including the terminator; pass
 * buf = NULL, cap = 0 to query it. */
MFSF_API mfsf_status mfsf_experiment_config_json(const mfsf_experiment* exp, char* buf,
                                                 size_t cap, size_t* needed);

MFSF_API mfsf_status mfsf_experiment_generate(mfsf_experiment* exp);
/* stage: "lf", "mf" or "hf-only". Outputs may be NULL. */
MFSF_API mfsf_status mfsf_experiment_train(mfsf_experiment* exp, const char* stage,
                                           double* best_val_nll, size_t* epochs_run);
/* Runs the configured scenario grid. medians (may be NULL) receives one
 * value per scenario, up to cap entries; *n_scenarios the scenario count. */
MFSF_API mfsf_status mfsf_experiment_ablate(mfsf_experiment* exp, double* medians, size_t cap,
                                            size_t* n_scenarios);
MFSF_API mfsf_status mfsf_experiment_evaluate(mfsf_experiment* exp, const char* stage,
                                              double* median_rel_l2, double* coverage);

/* Writes plot_<i>.csv and summary.json for n_queries rows of theta (each
 * of width m) into out_dir. */
MFSF_API mfsf_status mfsf_predict_files(const char* checkpoint_dir, const double* theta,
                                        size_t n_queries, size_t m, size_t n_samples,
                                        double alpha, uint64_t seed, const char* out_dir);

/* ---- models ----------------------------------------------------------- */

MFSF_API mfsf_status mfsf_model_load(const char* checkpoint_dir, mfsf_model** out);
MFSF_API void mfsf_model_free(mfsf_model* model);
/* Series length W, parameter count m and base dimension. */
MFSF_API mfsf_status mfsf_model_dims(const mfsf_model* model, size_t* series_length,
                                     size_t* cond_dim, size_t* base_dim);
/* log density of y (data units) given theta, one value per row. */
MFSF_API mfsf_status mfsf_model_log_likelihood(const mfsf_model* model, const double* y,
                                               const double* theta, size_t n_rows,
                                               double* out);
/* n draws (n x W, data units) at one theta. */
MFSF_API mfsf_status mfsf_model_sample(const mfsf_model* model, const double* theta, size_t n,
                                       uint64_t seed, double* out);
/* Per-step mean, std and empirical (alpha/2, 1 - alpha/2) quantiles, each
 * of length W. Any output pointer may be NULL. */
MFSF_API mfsf_status mfsf_model_predict(const mfsf_model* model, const double* theta,
                                        size_t n_samples, double alpha, uint64_t seed,
                                        double* mean, double* std, double* ci_lo, double* ci_hi);

/* ---- metrics ---------------------------------------------------------- */

MFSF_API mfsf_status mfsf_relative_l2(const double* pred, const double* truth, size_t n,
                                      double* out);
MFSF_API mfsf_status mfsf_r_squared(const double* pred, const double* truth, size_t n,
                                    double* out);

#ifdef __cplusplus
}
#endif

#endif /* MFSF_H */
