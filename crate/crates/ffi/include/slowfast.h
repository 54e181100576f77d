#ifndef SLOWFAST_H
#define SLOWFAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Status codes.
 */
typedef enum SfStatus {
  SF_STATUS_OK = 0,
  /*
   A required pointer was null.
   */
  SF_STATUS_NULL_ARGUMENT = 1,
  /*
   An argument was out of range or malformed.
   */
  SF_STATUS_INVALID_ARGUMENT = 2,
  /*
   The scenario could not be parsed or loaded.
   */
  SF_STATUS_PARSE = 3,
  /*
   A modelling assumption does not hold.
   */
  SF_STATUS_ASSUMPTION = 4,
  /*
   A numerical stage failed.
   */
  SF_STATUS_NUMERICAL = 5,
  /*
   An internal panic was caught.
   */
  SF_STATUS_PANIC = 6,
} SfStatus;

/*
 A limit evolution built from a scenario.
 */
typedef struct SfEvolution SfEvolution;

/*
 A scenario together with its tolerances.
 */
typedef struct SfScenario SfScenario;

/*
 One ε-flow trajectory.
 */
typedef struct SfTrajectory SfTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message describing the last failure on this thread; empty after a
 successful call. Valid until the next call on the same thread.
 */
const char *sf_last_error_message(void);

/*
 Library version as a static string.
 */
const char *sf_version(void);

/*
 Loads a scenario from a file path or `builtin:NAME`.

 # Safety
 `spec` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_scenario_load(const char *spec, struct SfScenario **out);

/*
 Parses a scenario from its text form.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_scenario_from_text(const char *text, struct SfScenario **out);

/*
 Releases a scenario; null is ignored.

 # Safety
 `scenario` must come from `sf_scenario_load` or `sf_scenario_from_text`
 and not be used afterwards.
 */
void sf_scenario_free(struct SfScenario *scenario);

/*
 State-space dimension of the scenario.

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_scenario_dim(const struct SfScenario *scenario, size_t *out);

/*
 Time horizon `T` of the scenario.

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_scenario_horizon(const struct SfScenario *scenario, double *out);

/*
 Overrides one tolerance of the scenario handle.

 # Safety
 `scenario` must be valid and `key` NUL-terminated.
 */
enum SfStatus sf_scenario_set_tolerance(struct SfScenario *scenario, const char *key, double value);

/*
 Runs every assumption check; `*pass` is 1 when all hold. Otherwise
 `*pass` is 0, the status is `Assumption` and the message lists the
 failed checks.

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_check(const struct SfScenario *scenario, int32_t *pass);

/*
 Builds the limit evolution from `y0`.

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_evolution_build(const struct SfScenario *scenario, struct SfEvolution **out);

/*
 Releases an evolution; null is ignored.

 # Safety
 `evolution` must come from `sf_evolution_build` and not be used
 afterwards.
 */
void sf_evolution_free(struct SfEvolution *evolution);

/*
 Number of jumps.

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_evolution_jump_count(const struct SfEvolution *evolution, size_t *out);

/*
 Time of jump `index` (0-based).

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_evolution_jump_time(const struct SfEvolution *evolution,
                                     size_t index,
                                     double *out);

/*
 Evaluates `u(t)` (right limit at jump times) into `x[0..len]`.

 # Safety
 `x` must point to `len` writable doubles.
 */
enum SfStatus sf_evolution_eval(const struct SfEvolution *evolution,
                                double t,
                                double *x,
                                size_t len);

/*
 Integrates the ε-flow from `x0[0..len]` over `[0, T]`.

 # Safety
 `x0` must point to `len` readable doubles and `out` be valid.
 */
enum SfStatus sf_trajectory_integrate(const struct SfScenario *scenario,
                                      double eps,
                                      const double *x0,
                                      size_t len,
                                      struct SfTrajectory **out);

/*
 Releases a trajectory; null is ignored.

 # Safety
 `trajectory` must come from `sf_trajectory_integrate` and not be used
 afterwards.
 */
void sf_trajectory_free(struct SfTrajectory *trajectory);

/*
 Number of accepted samples.

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_trajectory_len(const struct SfTrajectory *trajectory, size_t *out);

/*
 Sample `index`: its time into `*t` and state into `x[0..len]`.

 # Safety
 `t` must be valid and `x` point to `len` writable doubles.
 */
enum SfStatus sf_trajectory_sample(const struct SfTrajectory *trajectory,
                                   size_t index,
                                   double *t,
                                   double *x,
                                   size_t len);

/*
 Dense output `u_ε(t)` into `x[0..len]`.

 # Safety
 `x` must point to `len` writable doubles.
 */
enum SfStatus sf_trajectory_eval(const struct SfTrajectory *trajectory,
                                 double t,
                                 double *x,
                                 size_t len);

/*
 Total dissipation `ε∫|u̇|²`.

 # Safety
 Pointers must be valid.
 */
enum SfStatus sf_trajectory_dissipation(const struct SfTrajectory *trajectory, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SLOWFAST_H */
