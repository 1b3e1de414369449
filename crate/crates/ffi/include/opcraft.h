#ifndef OPCRAFT_H
#define OPCRAFT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum OpcraftStatus {
  OPCRAFT_STATUS_OK = 0,
  OPCRAFT_STATUS_NULL_POINTER = 1,
  OPCRAFT_STATUS_INVALID_ARGUMENT = 2,
  OPCRAFT_STATUS_UNKNOWN_ENV = 3,
  OPCRAFT_STATUS_LEARN_FAILED = 4,
  OPCRAFT_STATUS_IO = 5,
  OPCRAFT_STATUS_BUFFER_TOO_SMALL = 6,
  OPCRAFT_STATUS_PANIC = 7,
} OpcraftStatus;

/**
 * A simulated environment.
 */
typedef struct OpcraftEnv OpcraftEnv;

/**
 * Operators and samplers learned on one environment.
 */
typedef struct OpcraftModel OpcraftModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *opcraft_last_error(void);

/**
 * # Safety
 * `name` must be a valid C string and `out` a valid pointer.
 */
enum OpcraftStatus opcraft_env_new(const char *name, struct OpcraftEnv **out);

/**
 * # Safety
 * `env` must come from `opcraft_env_new` and not be used afterwards.
 */
void opcraft_env_free(struct OpcraftEnv *env);

/**
 * Generates `num_demos` demonstrations for `seed` and learns operators and
 * samplers from them. `method` is `"ours"` or `"cluster_intersect"`.
 *
 * # Safety
 * Pointers must be valid; `method` a C string.
 */
enum OpcraftStatus opcraft_learn(const struct OpcraftEnv *env,
                                 const char *method,
                                 uintptr_t num_demos,
                                 uint64_t seed,
                                 struct OpcraftModel **out);

/**
 * # Safety
 * `model` must come from `opcraft_learn` and not be used afterwards.
 */
void opcraft_model_free(struct OpcraftModel *model);

/**
 * # Safety
 * Pointers must be valid.
 */
enum OpcraftStatus opcraft_model_operator_count(const struct OpcraftModel *model, uintptr_t *out);

/**
 * Fraction of demonstrated transitions the operators explain, in [0, 1].
 *
 * # Safety
 * Pointers must be valid.
 */
enum OpcraftStatus opcraft_model_coverage(const struct OpcraftModel *model, double *out);

/**
 * Writes the operators as text. Call with a null `buf` to learn the size.
 *
 * # Safety
 * `buf` must hold `len` bytes or be null; `needed` may be null.
 */
enum OpcraftStatus opcraft_model_operators_text(const struct OpcraftModel *model,
                                                char *buf,
                                                uintptr_t len,
                                                uintptr_t *needed);

/**
 * Plans `num_tasks` fresh evaluation tasks for `seed` and reports the
 * percentage solved.
 *
 * # Safety
 * Pointers must be valid.
 */
enum OpcraftStatus opcraft_model_evaluate(const struct OpcraftModel *model,
                                          uintptr_t num_tasks,
                                          uint64_t seed,
                                          double timeout_secs,
                                          double *success_rate);

/**
 * Saves operators, samplers and a learning summary into `dir`.
 *
 * # Safety
 * Pointers must be valid; `dir` a C string.
 */
enum OpcraftStatus opcraft_model_save(const struct OpcraftModel *model, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPCRAFT_H */
