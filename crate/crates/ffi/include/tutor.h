#ifndef TUTOR_H
#define TUTOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TutorStatus {
  TUTOR_STATUS_OK = 0,
  TUTOR_STATUS_NULL_POINTER = 1,
  TUTOR_STATUS_INVALID_ARGUMENT = 2,
  TUTOR_STATUS_UNKNOWN_TASK = 3,
  TUTOR_STATUS_PARSE_ERROR = 4,
  TUTOR_STATUS_IO_ERROR = 5,
  TUTOR_STATUS_DIMENSION_MISMATCH = 6,
  TUTOR_STATUS_POLICY_ERROR = 7,
  TUTOR_STATUS_PANIC = 99,
} TutorStatus;

typedef struct TutorModel TutorModel;

/**
 * Teacher program with its episode-local step counter.
 */
typedef struct TutorPolicy TutorPolicy;

/**
 * Simulator plus the current episode state.
 */
typedef struct TutorSim TutorSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library from this thread.
 */
const char *tutor_last_error(void);

/**
 * Length of the agent feature vector.
 */
size_t tutor_feature_dim(void);

/**
 * Creates a simulator for a built-in task, reset with `seed`.
 *
 * # Safety
 * `task` must be a NUL-terminated string; `out` must be writable.
 */
enum TutorStatus tutor_sim_new(const char *task, uint64_t seed, struct TutorSim **out);

/**
 * Starts a new episode.
 *
 * # Safety
 * `sim` must come from [`tutor_sim_new`].
 */
enum TutorStatus tutor_sim_reset(struct TutorSim *sim, uint64_t seed);

/**
 * Applies one action; `success_out` receives 1 when the task is solved.
 *
 * # Safety
 * `translation` points to 3 doubles; `success_out` may be null.
 */
enum TutorStatus tutor_sim_step(struct TutorSim *sim,
                                const double *translation,
                                int close,
                                int *success_out);

/**
 * Writes the agent features of the current state into `out[0..len]`;
 * `len` must equal [`tutor_feature_dim`].
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum TutorStatus tutor_sim_features(const struct TutorSim *sim, double *out, size_t len);

/**
 * Current state as JSON; release with [`tutor_string_free`].
 *
 * # Safety
 * `out` must be writable.
 */
enum TutorStatus tutor_sim_state_json(const struct TutorSim *sim, char **out);

/**
 * # Safety
 * `sim` must come from [`tutor_sim_new`] or be null.
 */
void tutor_sim_free(struct TutorSim *sim);

/**
 * The hand-authored teacher for a built-in task.
 *
 * # Safety
 * `task` must be a NUL-terminated string; `out` must be writable.
 */
enum TutorStatus tutor_policy_scripted(const char *task, struct TutorPolicy **out);

/**
 * Parses a program in the JSON policy language and checks it against `task`.
 *
 * # Safety
 * `json` and `task` must be NUL-terminated strings; `out` must be writable.
 */
enum TutorStatus tutor_policy_from_json(const char *json,
                                        const char *task,
                                        struct TutorPolicy **out);

/**
 * Rewinds the plan to its first step.
 *
 * # Safety
 * `policy` must come from a `tutor_policy_*` constructor.
 */
enum TutorStatus tutor_policy_reset(struct TutorPolicy *policy);

/**
 * The teacher's action for the simulator's current state; advances the plan.
 *
 * # Safety
 * Handles must be live; `translation_out` holds 3 doubles.
 */
enum TutorStatus tutor_policy_act(struct TutorPolicy *policy,
                                  const struct TutorSim *sim,
                                  double *translation_out,
                                  int *close_out);

/**
 * # Safety
 * `policy` must come from a `tutor_policy_*` constructor or be null.
 */
void tutor_policy_free(struct TutorPolicy *policy);

/**
 * Whether the agent's action would earn evaluative feedback at threshold
 * `beta_deg`.
 *
 * # Safety
 * `a` and `b` each point to 3 doubles; `out` must be writable.
 */
enum TutorStatus tutor_similar(const double *a,
                               int a_close,
                               const double *b,
                               int b_close,
                               double beta_deg,
                               int *out);

/**
 * Loads an agent checkpoint written by `tutor train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum TutorStatus tutor_model_load(const char *path, struct TutorModel **out);

/**
 * Mean action of the agent for a feature vector of length
 * [`tutor_feature_dim`], clipped to the default per-step limit.
 *
 * # Safety
 * `features` holds `len` doubles; `translation_out` holds 3.
 */
enum TutorStatus tutor_model_act(const struct TutorModel *model,
                                 const double *features,
                                 size_t len,
                                 double *translation_out,
                                 int *close_out);

/**
 * # Safety
 * `model` must come from [`tutor_model_load`] or be null.
 */
void tutor_model_free(struct TutorModel *model);

/**
 * # Safety
 * `s` must be a string returned by this library, or null.
 */
void tutor_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TUTOR_H */
