#ifndef KCRL_KCRL_H
#define KCRL_KCRL_H

/* C interface to the kcrl library. All objects are opaque handles; every
 * fallible call returns a kcrl_status and leaves a thread-local message for
 * kcrl_last_error(). Functions that produce text write into a caller buffer
 * and report the size required (including the terminating NUL) through
 * `needed`; a too-small buffer returns KCRL_BUFFER_TOO_SMALL. */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define KCRL_API __declspec(dllexport)
#else
#define KCRL_API __attribute__((visibility("default")))
#endif

typedef enum kcrl_status {
  KCRL_OK = 0,
  KCRL_INVALID_ARGUMENT = 1,
  KCRL_DATA_QUALITY = 2,
  KCRL_STEP_UNDERFLOW = 3,
  KCRL_NUMERIC = 4,
  KCRL_INFEASIBLE_MARGIN = 5,
  KCRL_INFEASIBLE_BATCH = 6,
  KCRL_INFEASIBLE_RESULT = 7,
  KCRL_ROLLOUT_DIVERGENCE = 8,
  KCRL_DIVERGENCE = 9,
  KCRL_INVALID_CONFIG = 10,
  KCRL_PARSE = 11,
  KCRL_IO = 12,
  KCRL_BUFFER_TOO_SMALL = 13,
  KCRL_INTERNAL = 99
} kcrl_status;

KCRL_API const char* kcrl_status_string(kcrl_status status);
KCRL_API const char* kcrl_last_error(void);
KCRL_API const char* kcrl_version(void);

/* Random Fourier feature map for the Gaussian kernel. */
typedef struct kcrl_feature_map kcrl_feature_map;

KCRL_API kcrl_status kcrl_feature_map_create(int input_dim, int feature_count,
                                             double bandwidth, uint64_t seed,
                                             kcrl_feature_map** out);
KCRL_API void kcrl_feature_map_free(kcrl_feature_map* map);
KCRL_API kcrl_status kcrl_feature_map_featurize(const kcrl_feature_map* map,
                                                const double* phi, size_t phi_len,
                                                double* out, size_t out_len);

/* Ridge-regression dynamics model over a feature map. The model keeps its
 * own copy of the map. */
typedef struct kcrl_model kcrl_model;

KCRL_API kcrl_status kcrl_model_create(const kcrl_feature_map* map, int state_dim,
                                       double regularizer, kcrl_model** out);
KCRL_API void kcrl_model_free(kcrl_model* model);
/* state and next_state have state_dim entries, action input_dim - state_dim. */
KCRL_API kcrl_status kcrl_model_absorb(kcrl_model* model, const double* state,
                                       const double* action, const double* next_state);
KCRL_API kcrl_status kcrl_model_predict(const kcrl_model* model, const double* state,
                                        const double* action, double* next_state);
KCRL_API kcrl_status kcrl_model_sample_count(const kcrl_model* model, int64_t* out);

typedef enum kcrl_margin_mode {
  KCRL_MARGIN_MODEL_ERROR = 0,
  KCRL_MARGIN_BUDGET_SPLIT = 1,
  KCRL_MARGIN_FIXED = 2
} kcrl_margin_mode;

typedef struct kcrl_margin_inputs {
  double lipschitz_policy;
  double lipschitz_dynamics;
  double jacobian_error;
  const double* metric; /* n x n, row-major */
  int metric_dim;
  double g_grad_bound;
  double fill_distance;
  double margin_assumed;
  kcrl_margin_mode mode;
  double fixed_margin;
  double batch_margin_override; /* negative: computed */
} kcrl_margin_inputs;

typedef struct kcrl_margins {
  double margin_model;
  double margin_batch;
  double g_bound;
  double metric_norm;
  int feasible;
} kcrl_margins;

KCRL_API kcrl_status kcrl_compute_margins(const kcrl_margin_inputs* in,
                                          kcrl_margins* out);

/* Experiment configuration. */
typedef struct kcrl_config kcrl_config;

KCRL_API kcrl_status kcrl_config_load(const char* path, kcrl_config** out);
KCRL_API kcrl_status kcrl_config_parse(const char* text, kcrl_config** out);
KCRL_API void kcrl_config_free(kcrl_config* cfg);
KCRL_API kcrl_status kcrl_config_dump(const kcrl_config* cfg, char* buf, size_t cap,
                                      size_t* needed);
/* Human-readable margin preview (eps_J = 0). `feasible` may be NULL. */
KCRL_API kcrl_status kcrl_config_margins(const kcrl_config* cfg, int* feasible,
                                         char* buf, size_t cap, size_t* needed);

typedef struct kcrl_run_options {
  const char* resume_path;      /* NULL: fresh run */
  int stop_after_epoch;         /* negative: run all epochs */
  const char* output_directory; /* NULL: env KCRL_OUTPUT_DIR, then config */
  int verbose;
} kcrl_run_options;

typedef struct kcrl_run_result {
  int exit_code; /* 0 ok, 1 final epoch not certified or not settled, 2 stopped */
  int epochs_completed;
  int final_feasible;
  double final_max_dist;
} kcrl_run_result;

KCRL_API void kcrl_run_options_init(kcrl_run_options* options);
KCRL_API kcrl_status kcrl_run(const kcrl_config* cfg, const kcrl_run_options* options,
                              kcrl_run_result* out);

/* Itemized checkpoint audit; `passed` is 1 when every item holds. */
KCRL_API kcrl_status kcrl_verify_checkpoint(const char* path, int* passed, char* buf,
                                            size_t cap, size_t* needed);

/* Built-in plants with their declared constants and audit results. */
KCRL_API kcrl_status kcrl_plants_describe(char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif
