/* Public C interface of the clap library.
 *
 * Every function returns a clap_status. On failure the message of the last
 * error on the calling thread is available through clap_last_error(). Handles
 * are opaque and owned by the caller; release them with the matching _free
 * function (passing NULL is allowed). Model and agent handles use 32-bit
 * floats internally.
 */
#ifndef CLAP_CLAP_H
#define CLAP_CLAP_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CLAP_API __declspec(dllexport)
#else
#define CLAP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum clap_status {
  CLAP_OK = 0,
  CLAP_ERR_USAGE = 1,     /* invalid configuration, argument or call order */
  CLAP_ERR_DATA = 2,      /* missing or malformed dataset / checkpoint, io failure */
  CLAP_ERR_NUMERICAL = 3, /* non-finite values during training */
  CLAP_ERR_INTERNAL = 4
} clap_status;

typedef struct clap_config clap_config;
typedef struct clap_dataset clap_dataset;
typedef struct clap_model clap_model;
typedef struct clap_agent clap_agent;

CLAP_API const char* clap_version(void);
/* Message of the most recent failure on this thread ("" if none). */
CLAP_API const char* clap_last_error(void);

/* Copies `text` into `buf` (always NUL terminated when cap > 0); `needed`
 * receives the full length without the terminator. Functions that produce
 * strings use this convention. */

/* ---- configuration ---- */

CLAP_API clap_status clap_config_new(clap_config** out);
CLAP_API void clap_config_free(clap_config* config);
/* key = value text with [section] headers and '#' comments. */
CLAP_API clap_status clap_config_load_file(clap_config* config, const char* path);
/* "section.key=value"; unknown keys fail and list the valid ones. */
CLAP_API clap_status clap_config_set(clap_config* config, const char* assignment);
CLAP_API clap_status clap_config_get(const clap_config* config, const char* key, char* buf, size_t cap,
                                     size_t* needed);
/* Resolved values of every key in the file format accepted above. */
CLAP_API clap_status clap_config_snapshot(const clap_config* config, char* buf, size_t cap, size_t* needed);

/* ---- datasets ---- */

typedef struct clap_dataset_info {
  int64_t episodes;
  int64_t steps;
  int64_t obs_dim;
  int64_t action_dim;
  double mean_return;
} clap_dataset_info;

/* Rolls out a scripted behavior policy ("expert", "medium", "replay",
 * "random") in the point-mass environment described by `config`. */
CLAP_API clap_status clap_dataset_generate(const clap_config* config, const char* policy, int64_t episodes,
                                           uint64_t seed, clap_dataset** out);
CLAP_API clap_status clap_dataset_load(const char* path, clap_dataset** out);
CLAP_API clap_status clap_dataset_save(const clap_dataset* data, const char* path);
CLAP_API void clap_dataset_free(clap_dataset* data);
CLAP_API clap_status clap_dataset_info_get(const clap_dataset* data, clap_dataset_info* out);
/* Mean undiscounted return and mean over episodes of the largest discounted
 * return-to-go. */
CLAP_API clap_status clap_dataset_reference_values(const clap_dataset* data, double discount, double* average_return,
                                                   double* average_max_value);

/* ---- environment references ---- */

/* Mean returns of the random and expert behavior policies, used to normalize
 * returns to [random = 0, expert = 100]. */
CLAP_API clap_status clap_reference_returns(const clap_config* config, double* random_return,
                                            double* expert_return);

/* ---- world model ---- */

/* Fresh model sized from `config` and the dataset's dimensions. The
 * dataset's observation statistics are stored with the model. */
CLAP_API clap_status clap_model_new(const clap_config* config, const clap_dataset* data, uint64_t seed,
                                    clap_model** out);
/* Runs until model_train.steps updates have been applied. One CSV row per
 * update goes to `metrics_csv` when it is not NULL. */
CLAP_API clap_status clap_model_train(clap_model* model, const clap_dataset* data, const char* metrics_csv);
CLAP_API clap_status clap_model_save(const clap_model* model, const char* path);
CLAP_API clap_status clap_model_load(const char* path, clap_model** out);
CLAP_API void clap_model_free(clap_model* model);
CLAP_API int64_t clap_model_step(const clap_model* model);
CLAP_API int clap_model_has_latent_actions(const clap_model* model);

/* ---- agent ---- */

CLAP_API clap_status clap_agent_new(const clap_config* config, const clap_model* model, uint64_t seed,
                                    clap_agent** out);
CLAP_API clap_status clap_agent_save(const clap_agent* agent, const char* path);
CLAP_API clap_status clap_agent_load(const char* path, clap_agent** out);
CLAP_API void clap_agent_free(clap_agent* agent);
CLAP_API int64_t clap_agent_step(const clap_agent* agent);

typedef struct clap_curve_point {
  int64_t step;
  double raw_return;
  double normalized_return;
  double mean_value;
} clap_curve_point;

/* Trains until agent_train.steps updates (the model stays frozen),
 * evaluating every agent_train.eval_every steps. `curve_csv` receives the
 * evaluation rows labeled with `arm`, `metrics_csv` one row per update;
 * either may be NULL. `last` (optional) receives the final evaluation. */
CLAP_API clap_status clap_agent_train(clap_agent* agent, clap_model* model, const clap_dataset* data,
                                      const clap_config* config, const char* arm, const char* curve_csv,
                                      const char* metrics_csv, clap_curve_point* last);

typedef struct clap_evaluation {
  double mean_return;
  double std_return;
  double normalized_return;
} clap_evaluation;

/* Deterministic episodes in the environment. `returns` (optional) must hold
 * `episodes` entries. */
CLAP_API clap_status clap_evaluate(const clap_config* config, const clap_model* model, const clap_agent* agent,
                                   int64_t episodes, uint64_t seed, clap_evaluation* out, double* returns);

/* Mean min-critic value over posterior beliefs of sampled dataset windows. */
CLAP_API clap_status clap_mean_value(const clap_agent* agent, const clap_model* model, const clap_dataset* data,
                                     int64_t windows, uint64_t seed, double* out);

/* ---- analyses ---- */

typedef struct clap_sweep_arm {
  double epsilon;
  double final_return;
  double peak_return;
} clap_sweep_arm;

/* One agent per value of analysis.epsilons, all from `seed`, sharing the
 * frozen model. Each arm writes <out_dir>/eps_<value>/curve.csv. `arms`
 * (optional) receives up to `capacity` summaries; `count` the arm count. */
CLAP_API clap_status clap_epsilon_sweep(const clap_config* config, clap_model* model, const clap_dataset* data,
                                        uint64_t seed, const char* out_dir, clap_sweep_arm* arms, size_t capacity,
                                        size_t* count);

typedef struct clap_action_summary {
  double within_range;             /* share of decoded actions inside the neighbours' min/max */
  double mean_abs_mean_difference; /* mean |dataset-fit mean - decoded-fit mean| */
  int64_t rows;
} clap_action_summary;

/* k-nearest-neighbour comparison of dataset actions and actions decoded
 * from the latent action prior; per-step rows go to `out_csv` if given. */
CLAP_API clap_status clap_action_study(const clap_model* model, const clap_dataset* data, int64_t k,
                                       int64_t query_episodes, uint64_t seed, const char* out_csv,
                                       clap_action_summary* out);

/* Concatenates every `file_name` below `root` into `out_csv` (one header). */
CLAP_API clap_status clap_merge_csv(const char* root, const char* file_name, const char* out_csv, size_t* files);

#ifdef __cplusplus
}
#endif

#endif /* CLAP_CLAP_H */
