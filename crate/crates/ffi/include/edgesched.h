#ifndef EDGESCHED_H
#define EDGESCHED_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum EsStatus {
  ES_STATUS_OK = 0,
  ES_STATUS_NULL_POINTER = 1,
  ES_STATUS_INVALID_ARGUMENT = 2,
  ES_STATUS_PARSE = 3,
  ES_STATUS_CONSTRAINT = 4,
  ES_STATUS_LIMIT_EXCEEDED = 5,
  ES_STATUS_NUMERIC = 6,
  ES_STATUS_IO = 7,
  ES_STATUS_CHECKSUM = 8,
  ES_STATUS_INTERNAL = 99,
} EsStatus;

/**
 * Baseline scheduler selector.
 */
typedef enum EsBaseline {
  ES_BASELINE_RANDOM = 0,
  ES_BASELINE_GREEDY = 1,
  ES_BASELINE_ORACLE = 2,
} EsBaseline;

/**
 * Opaque server environment.
 */
typedef struct EsEnvironment EsEnvironment;

/**
 * Opaque trained policy with the config it was trained under.
 */
typedef struct EsPolicy EsPolicy;

/**
 * Opaque set of DAG applications.
 */
typedef struct EsWorkload EsWorkload;

/**
 * Application cost figures.
 */
typedef struct EsCosts {
  /**
   * Seconds along the critical path.
   */
  double response_time;
  /**
   * Joules.
   */
  double energy;
  /**
   * Currency units.
   */
  double monetary;
  /**
   * Normalized weighted cost in [0, 1].
   */
  double weighted;
} EsCosts;

/**
 * Mean costs of a greedy pass over a workload.
 */
typedef struct EsEvaluation {
  struct EsCosts costs;
  size_t apps;
  size_t failures;
} EsEvaluation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *es_last_error(void);

/**
 * Library version as a static string.
 */
const char *es_version(void);

/**
 * The bundled three-server environment.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EsStatus es_environment_desk(struct EsEnvironment **out);

/**
 * Parses an environment from JSON.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum EsStatus es_environment_from_json(const char *json, struct EsEnvironment **out);

/**
 * # Safety
 * `env` must come from this library or be null.
 */
void es_environment_free(struct EsEnvironment *env);

/**
 * # Safety
 * Pointers must be valid.
 */
enum EsStatus es_environment_server_count(const struct EsEnvironment *env, size_t *out);

/**
 * The four preset applications at problem-size `label`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum EsStatus es_workload_presets(uint32_t label, struct EsWorkload **out);

/**
 * Parses a workload from JSON.
 *
 * # Safety
 * `json` must be a nul-terminated string and `out` a valid pointer.
 */
enum EsStatus es_workload_from_json(const char *json, struct EsWorkload **out);

/**
 * # Safety
 * `workload` must come from this library or be null.
 */
void es_workload_free(struct EsWorkload *workload);

/**
 * # Safety
 * Pointers must be valid.
 */
enum EsStatus es_workload_app_count(const struct EsWorkload *workload, size_t *out);

/**
 * Number of tasks of application `app`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EsStatus es_workload_task_count(const struct EsWorkload *workload, size_t app, size_t *out);

/**
 * Costs of placing application `app` per `assignment` (one server index
 * per task).
 *
 * # Safety
 * `assignment` must point to `len` values; other pointers must be valid.
 */
enum EsStatus es_app_costs(const struct EsEnvironment *env,
                           const struct EsWorkload *workload,
                           size_t app,
                           const size_t *assignment,
                           size_t len,
                           struct EsCosts *out);

/**
 * Schedules application `app` with a baseline. `assignment_out` receives
 * one server index per task and must hold `len` values.
 *
 * # Safety
 * Pointers must be valid; `assignment_out` must hold `len` values.
 */
enum EsStatus es_baseline(const struct EsEnvironment *env,
                          const struct EsWorkload *workload,
                          size_t app,
                          enum EsBaseline kind,
                          uint64_t seed,
                          size_t *assignment_out,
                          size_t len,
                          struct EsCosts *out);

/**
 * Trains a policy. `config_json` may be null for the desk defaults;
 * `out_dir` may be null to skip writing files.
 *
 * # Safety
 * Strings must be nul-terminated or null; other pointers must be valid.
 */
enum EsStatus es_train(const struct EsEnvironment *env,
                       const struct EsWorkload *workload,
                       const char *config_json,
                       const char *out_dir,
                       struct EsPolicy **out);

/**
 * Loads a checkpoint written by training. `config_json` must describe the
 * same network; null means the desk defaults.
 *
 * # Safety
 * Strings must be nul-terminated or null; other pointers must be valid.
 */
enum EsStatus es_policy_load(const struct EsEnvironment *env,
                             const char *config_json,
                             const char *checkpoint_path,
                             struct EsPolicy **out);

/**
 * # Safety
 * `policy` must come from this library or be null.
 */
void es_policy_free(struct EsPolicy *policy);

/**
 * Parameter version of a policy.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EsStatus es_policy_version(const struct EsPolicy *policy, uint64_t *out);

/**
 * Greedy evaluation of `policy` over every application of `workload`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum EsStatus es_policy_evaluate(const struct EsPolicy *policy,
                                 const struct EsEnvironment *env,
                                 const struct EsWorkload *workload,
                                 struct EsEvaluation *out);

/**
 * Emissions in kg CO2e for `energy_kwh` under a bundled mix (`"AU"`,
 * `"US"`, `"DE"`) or a mix given as JSON.
 *
 * # Safety
 * `mix` must be nul-terminated; `out` must be valid.
 */
enum EsStatus es_ghe(double energy_kwh, const char *mix, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDGESCHED_H */
