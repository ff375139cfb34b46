#ifndef MILE_H
#define MILE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MileStatus {
  MILE_STATUS_OK = 0,
  MILE_STATUS_NULL_POINTER = 1,
  MILE_STATUS_INVALID_ARGUMENT = 2,
  MILE_STATUS_DIMENSION_MISMATCH = 3,
  MILE_STATUS_IO = 4,
  MILE_STATUS_BUFFER_TOO_SMALL = 5,
  MILE_STATUS_INTERNAL = 6,
} MileStatus;

// An environment instance.
typedef struct MileEnv MileEnv;

// A policy network loaded from a checkpoint.
typedef struct MilePolicy MilePolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. Valid
// until the next call on the same thread.
const char *mile_last_error_message(void);

// GridNav with the built-in 8x8 map.
enum MileStatus mile_env_new_gridnav(struct MileEnv **out);

// ReachGap2D with default geometry.
enum MileStatus mile_env_new_reachgap(struct MileEnv **out);

// An environment from its JSON spec, e.g. `{"kind":"gridnav","map":"..."}`.
//
// # Safety
// `json` must be a NUL-terminated string.
enum MileStatus mile_env_new_from_json(const char *json, struct MileEnv **out);

// # Safety
// `env` must come from a `mile_env_new_*` call and not be used afterwards.
void mile_env_free(struct MileEnv *env);

// Stacked observation length, number of discrete actions (0 if
// continuous) and continuous action dimension (0 if discrete).
//
// # Safety
// `env` must be a live handle; outputs may be null.
enum MileStatus mile_env_dims(const struct MileEnv *env,
                              size_t *obs_dim,
                              size_t *n_actions,
                              size_t *action_dim);

// Starts an episode; writes the first stacked observation.
//
// # Safety
// `env` must be a live handle and `obs_out` point to `obs_len` doubles.
enum MileStatus mile_env_reset(struct MileEnv *env, uint64_t seed, double *obs_out, size_t obs_len);

// One step with a discrete action. Output pointers may be null.
//
// # Safety
// `env` must be a live handle; `obs_out`, if not null, must hold `obs_len` doubles.
enum MileStatus mile_env_step_discrete(struct MileEnv *env,
                                       size_t action,
                                       double *obs_out,
                                       size_t obs_len,
                                       double *reward,
                                       bool *done,
                                       bool *success);

// One step with a continuous action of `action_len` components.
//
// # Safety
// As `mile_env_step_discrete`; `action` must hold `action_len` doubles.
enum MileStatus mile_env_step_continuous(struct MileEnv *env,
                                         const double *action,
                                         size_t action_len,
                                         double *obs_out,
                                         size_t obs_len,
                                         double *reward,
                                         bool *done,
                                         bool *success);

// Loads `<dir>/<stem>.bin` + `<stem>.json`, as written by checkpoints
// (stem `policy` or `mental`).
//
// # Safety
// `dir` and `stem` must be NUL-terminated strings.
enum MileStatus mile_policy_load(const char *dir, const char *stem, struct MilePolicy **out);

// # Safety
// `policy` must come from `mile_policy_load` and not be used afterwards.
void mile_policy_free(struct MilePolicy *policy);

// Input length and output length of `mile_policy_forward`.
//
// # Safety
// `policy` must be a live handle; outputs may be null.
enum MileStatus mile_policy_dims(const struct MilePolicy *policy,
                                 size_t *input_dim,
                                 size_t *output_dim);

// Categorical heads write action probabilities; gaussian heads write the
// mean followed by the variance.
//
// # Safety
// `obs` must hold `obs_len` doubles and `out` `out_len` doubles.
enum MileStatus mile_policy_forward(const struct MilePolicy *policy,
                                    const double *obs,
                                    size_t obs_len,
                                    double *out,
                                    size_t out_len);

// Φ((delta − c)/sigma).
//
// # Safety
// `out` must be writable.
enum MileStatus mile_probit_gate(double delta, double c, double sigma, double *out);

// Exact p(ν=1|s) for the human policy `pi_h` and mental model `pi_hat`,
// both of length `n`.
//
// # Safety
// `pi_h` and `pi_hat` must hold `n` doubles; `out` must be writable.
enum MileStatus mile_intervene_prob_discrete(const double *pi_h,
                                             const double *pi_hat,
                                             size_t n,
                                             double c,
                                             double sigma,
                                             double *out);

// p(ν=1|s) with the human written as softmax(`q`).
//
// # Safety
// `q` and `pi_hat` must hold `n` doubles; `out` must be writable.
enum MileStatus mile_q_form_intervene_prob(const double *q,
                                           const double *pi_hat,
                                           size_t n,
                                           double c,
                                           double sigma,
                                           double *out);

// The `n + 1` class probabilities: P(a_h = a, ν=1) per action, then P(ν=0).
//
// # Safety
// `pi_h` and `pi_hat` must hold `n` doubles, `out` `out_len` doubles.
enum MileStatus mile_joint_action_distribution(const double *pi_h,
                                               const double *pi_hat,
                                               size_t n,
                                               double c,
                                               double sigma,
                                               double *out,
                                               size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MILE_H */
