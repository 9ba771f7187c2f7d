#ifndef SWARM_INIT_H
#define SWARM_INIT_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
enum SwarmStatus
#ifdef __cplusplus
  : int32_t
#endif // __cplusplus
 {
  /**
   * Success.
   */
  SwarmStatus_Ok = 0,
  /**
   * The analysis ran but its acceptance gate failed.
   */
  SwarmStatus_GateFailed = 1,
  /**
   * Malformed input: bad JSON, bad parameter, or a null pointer.
   */
  SwarmStatus_InvalidInput = 2,
  /**
   * Internal failure.
   */
  SwarmStatus_Internal = 3,
};
#ifndef __cplusplus
typedef int32_t SwarmStatus;
#endif // __cplusplus

/**
 * Opaque configuration handle.
 */
typedef struct SwarmConfig SwarmConfig;

/**
 * Derived model constants for one configuration.
 */
typedef struct SwarmCoefficients {
  double s_j2;
  double omega_xy;
  double epsilon_2;
  double k_0;
  double nu;
  double c1_air;
  double c4_air;
} SwarmCoefficients;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Parse a JSON configuration document. On success writes a heap handle to
 * `out` and returns `Ok`; the caller owns the handle.
 *
 * # Safety
 * `json` must point to a NUL-terminated string and `out` must be a valid
 * pointer.
 */
SwarmStatus swarm_config_parse(const char *json, struct SwarmConfig **out);

/**
 * Release a configuration handle. A null pointer is ignored.
 *
 * # Safety
 * `cfg` must be null or a pointer returned by [`swarm_config_parse`].
 */
void swarm_config_free(struct SwarmConfig *cfg);

/**
 * Release a string returned by this library. A null pointer is ignored.
 *
 * # Safety
 * `s` must be null or a pointer returned by one of these entry points.
 */
void swarm_string_free(char *s);

/**
 * Human-readable description of a status code.
 */
const char *swarm_status_message(SwarmStatus status);

/**
 * Chi-square quantile with `dof` degrees of freedom at probability `p`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
SwarmStatus swarm_chi2_quantile(uint32_t dof, double p, double *out);

/**
 * Margin of the per-edge safety test for a planar Gaussian edge state:
 * `r_c - ||mu|| - sqrt(chi2_{2,1-beta} lambda_max(Sigma))`. Negative
 * margins fail.
 *
 * # Safety
 * `out_margin` must be a valid pointer.
 */
SwarmStatus swarm_edge_margin(double mu_x,
                              double mu_y,
                              double sxx,
                              double sxy,
                              double syy,
                              double r_c,
                              double beta,
                              double *out_margin);

/**
 * Derived coefficients of a parsed configuration, evaluated at the first
 * configured interval.
 *
 * # Safety
 * `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
 */
SwarmStatus swarm_derived_coefficients(const struct SwarmConfig *cfg,
                                       struct SwarmCoefficients *out);

/**
 * Largest allowable variance factor for `(n_rows, dt)` under the parsed
 * configuration.
 *
 * # Safety
 * `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
 */
SwarmStatus swarm_max_allowable_factor(const struct SwarmConfig *cfg,
                                       uint64_t n_rows,
                                       double dt,
                                       double *out);

/**
 * Sweep CSV for the parsed configuration; the caller frees the string.
 *
 * # Safety
 * `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
 */
SwarmStatus swarm_sweep_csv(const struct SwarmConfig *cfg, char **out);

/**
 * Monte Carlo summary JSON for the parsed configuration; the caller frees
 * the string. Returns `GateFailed` when the batch ran but the empirical
 * failure rate exceeded the configured risk level.
 *
 * # Safety
 * `cfg` must be a handle from [`swarm_config_parse`]; `out` must be valid.
 */
SwarmStatus swarm_montecarlo_summary(const struct SwarmConfig *cfg, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SWARM_INIT_H */
