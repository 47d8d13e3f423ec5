#ifndef ULTRADIAN_H
#define ULTRADIAN_H

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ULTRADIAN_PROTOCOL_CONSTANT 0

#define ULTRADIAN_PROTOCOL_ON_OFF 1

#define ULTRADIAN_CLASS_STEADY 0

#define ULTRADIAN_CLASS_PERIODIC 1

#define ULTRADIAN_CLASS_LOCKED 2

#define ULTRADIAN_CLASS_QUASI_PERIODIC 3

#define ULTRADIAN_CLASS_BOUNDARY 4

typedef enum UltradianStatus {
  ULTRADIAN_STATUS_OK = 0,
  ULTRADIAN_STATUS_NULL_POINTER = 1,
  ULTRADIAN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Integration produced a non-finite state.
   */
  ULTRADIAN_STATUS_NON_FINITE = 3,
  /**
   * Query outside a stored range.
   */
  ULTRADIAN_STATUS_OUT_OF_RANGE = 4,
  /**
   * Equilibrium not found or not certified.
   */
  ULTRADIAN_STATUS_NO_EQUILIBRIUM = 5,
  /**
   * Hopf curve does not exist for these coefficients.
   */
  ULTRADIAN_STATUS_NO_HOPF_CURVE = 6,
  /**
   * Simulation span too short for classification.
   */
  ULTRADIAN_STATUS_SPAN_TOO_SHORT = 7,
  ULTRADIAN_STATUS_PANIC = 8,
  ULTRADIAN_STATUS_OTHER = 9,
} UltradianStatus;

/**
 * Opaque sampled Hopf curve.
 */
typedef struct UltradianHopfCurve UltradianHopfCurve;

/**
 * Opaque model parameters.
 */
typedef struct UltradianParams UltradianParams;

/**
 * Opaque simulated trajectory.
 */
typedef struct UltradianTrajectory UltradianTrajectory;

/**
 * Infusion protocol. Rates in mg dl⁻¹ min⁻¹, times in minutes.
 */
typedef struct UltradianProtocol {
  /**
   * `ULTRADIAN_PROTOCOL_CONSTANT` or `ULTRADIAN_PROTOCOL_ON_OFF`.
   */
  int32_t kind;
  double g_max;
  double t_period;
  double t_on;
  double sigma;
  double k;
} UltradianProtocol;

typedef struct UltradianEquilibrium {
  /**
   * mg/dl
   */
  double g_star;
  /**
   * uU/ml
   */
  double i_star;
  double residual_glucose;
  double residual_insulin;
} UltradianEquilibrium;

typedef struct UltradianSummary {
  /**
   * One of the `ULTRADIAN_CLASS_*` constants.
   */
  int32_t classification;
  /**
   * Locking ratio; zero unless locked.
   */
  uint32_t p;
  uint32_t q;
  /**
   * Response period in minutes, NaN when absent.
   */
  double period;
  double g_max;
  double g_min;
  double i_max;
  double i_min;
} UltradianSummary;

typedef struct UltradianHopfSample {
  double omega;
  double tau_i;
  double tau_g;
  double residual;
} UltradianHopfSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *ultradian_version(void);

/**
 * Message of the last failure on this thread; empty if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ultradian_last_error(void);

/**
 * Default model parameters (delays 5 and 20 min). Free with
 * [`ultradian_params_free`].
 */
struct UltradianParams *ultradian_params_new(void);

/**
 * # Safety
 * `params` must come from [`ultradian_params_new`] or be null.
 */
void ultradian_params_free(struct UltradianParams *params);

/**
 * Sets a parameter by its symbol (`"R_m"`, `"tau_I"`, ...).
 *
 * # Safety
 * `params` must be a live handle and `name` a NUL-terminated string.
 */
enum UltradianStatus ultradian_params_set(struct UltradianParams *params,
                                          const char *name,
                                          double value);

/**
 * Reads a parameter by its symbol.
 *
 * # Safety
 * `params` must be a live handle, `name` a NUL-terminated string and
 * `out` writable.
 */
enum UltradianStatus ultradian_params_get(const struct UltradianParams *params,
                                          const char *name,
                                          double *out);

/**
 * Constant infusion at `rate` mg dl⁻¹ min⁻¹.
 */
struct UltradianProtocol ultradian_protocol_constant(double rate);

/**
 * Smooth on-off infusion with zero lag and the default steepness.
 */
struct UltradianProtocol ultradian_protocol_on_off(double g_max, double t_period, double t_on);

/**
 * Infusion rate of `protocol` at time `t`.
 *
 * # Safety
 * `protocol` and `out` must be valid pointers.
 */
enum UltradianStatus ultradian_protocol_rate(const struct UltradianProtocol *protocol,
                                             double t,
                                             double *out);

/**
 * Certified equilibrium under constant infusion `g_in`.
 *
 * # Safety
 * `params` must be a live handle and `out` writable.
 */
enum UltradianStatus ultradian_equilibrium(const struct UltradianParams *params,
                                           double g_in,
                                           struct UltradianEquilibrium *out);

/**
 * Integrates from the default history (100 mg/dl, 20 uU/ml) over
 * `[0, span]` with step `dt`. A `span <= 0` selects the span needed by
 * [`ultradian_classify`] with default thresholds.
 *
 * # Safety
 * `params` and `protocol` must be valid; `out` must be writable. The
 * handle written to `*out` is released with [`ultradian_trajectory_free`].
 */
enum UltradianStatus ultradian_simulate(const struct UltradianParams *params,
                                        const struct UltradianProtocol *protocol,
                                        double dt,
                                        double span,
                                        struct UltradianTrajectory **out);

/**
 * # Safety
 * `traj` must come from [`ultradian_simulate`] or be null.
 */
void ultradian_trajectory_free(struct UltradianTrajectory *traj);

/**
 * End time of the trajectory (min); 0 for a null handle.
 *
 * # Safety
 * `traj` must be a live handle or null.
 */
double ultradian_trajectory_span(const struct UltradianTrajectory *traj);

/**
 * Glucose (mg/dl) and insulin (uU/ml) at time `t`.
 *
 * # Safety
 * `traj` must be a live handle; `glucose` and `insulin` writable.
 */
enum UltradianStatus ultradian_trajectory_sample(const struct UltradianTrajectory *traj,
                                                 double t,
                                                 double *glucose,
                                                 double *insulin);

/**
 * Classifies the long-term response with default thresholds. `protocol`
 * must be the one used for the simulation.
 *
 * # Safety
 * All pointers must be valid.
 */
enum UltradianStatus ultradian_classify(const struct UltradianTrajectory *traj,
                                        const struct UltradianProtocol *protocol,
                                        struct UltradianSummary *out);

/**
 * Principal-branch Hopf curve at constant infusion `g_in`, sampled on
 * `samples` uniform frequencies before refinement.
 *
 * # Safety
 * `params` must be a live handle and `out` writable. Release the curve
 * with [`ultradian_hopf_curve_free`].
 */
enum UltradianStatus ultradian_hopf_curve(const struct UltradianParams *params,
                                          double g_in,
                                          size_t samples,
                                          struct UltradianHopfCurve **out);

/**
 * # Safety
 * `curve` must come from [`ultradian_hopf_curve`] or be null.
 */
void ultradian_hopf_curve_free(struct UltradianHopfCurve *curve);

/**
 * Number of samples; 0 for a null handle.
 *
 * # Safety
 * `curve` must be a live handle or null.
 */
size_t ultradian_hopf_curve_len(const struct UltradianHopfCurve *curve);

/**
 * Sample `index`, ordered by increasing frequency.
 *
 * # Safety
 * `curve` must be a live handle and `out` writable.
 */
enum UltradianStatus ultradian_hopf_curve_get(const struct UltradianHopfCurve *curve,
                                              size_t index,
                                              struct UltradianHopfSample *out);

/**
 * Largest |χ(iω)| over the curve; NaN for a null handle.
 *
 * # Safety
 * `curve` must be a live handle or null.
 */
double ultradian_hopf_curve_max_residual(const struct UltradianHopfCurve *curve);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* ULTRADIAN_H */
