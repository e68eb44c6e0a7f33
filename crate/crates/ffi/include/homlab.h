#ifndef HOMLAB_H
#define HOMLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HomlabStatus {
  HOMLAB_STATUS_OK = 0,
  HOMLAB_STATUS_NULL_POINTER = 1,
  HOMLAB_STATUS_INVALID_PARAMS = 2,
  HOMLAB_STATUS_INVALID_SPEC = 3,
  HOMLAB_STATUS_OUT_OF_RANGE = 4,
  HOMLAB_STATUS_DEGENERATE_SCHEDULE = 5,
  HOMLAB_STATUS_SOLVER_FAILURE = 6,
  HOMLAB_STATUS_HORIZON_DOMINATED = 7,
  HOMLAB_STATUS_IO = 8,
  HOMLAB_STATUS_OTHER = 98,
  HOMLAB_STATUS_PANIC = 99,
} HomlabStatus;

// A sampled random environment.
typedef struct HomlabEnv HomlabEnv;

// A generated scale hierarchy.
typedef struct HomlabSchedule HomlabSchedule;

// One row of a scale hierarchy. `l` and `ell` are exact below 2^53.
typedef struct HomlabScaleRow {
  uint32_t n;
  double l;
  double ell;
  double kappa;
  double kappa_tilde;
  double d_n;
  double d_tilde;
} HomlabScaleRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message into `buf` (NUL terminated, truncated to
// `len`) and returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
uintptr_t homlab_last_error_message(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *homlab_version(void);

// Samples an environment. `out` receives a handle to release with
// [`homlab_env_free`].
//
// # Safety
// `out` must be valid for writes.
enum HomlabStatus homlab_env_new(uint32_t d,
                                 double eta,
                                 double range_r,
                                 double lattice_spacing,
                                 double kernel_radius,
                                 uint64_t seed,
                                 struct HomlabEnv **out);

// # Safety
// `env` must be null or a handle from [`homlab_env_new`] not yet freed.
void homlab_env_free(struct HomlabEnv *env);

// # Safety
// `env` must be a live handle.
uint32_t homlab_env_dim(const struct HomlabEnv *env);

// Writes `A(x)` row-major into `a_out` (`d*d` values) and `b(x)` into
// `b_out` (`d` values).
//
// # Safety
// `x` must hold `d` values; the outputs must be valid for the stated lengths.
enum HomlabStatus homlab_env_coeffs(const struct HomlabEnv *env,
                                    const double *x,
                                    double *a_out,
                                    double *b_out);

// Mean exit time of the quenched diffusion from the ball of the given
// radius around the origin, started at `x`.
//
// # Safety
// `env` must be a live handle, `x` must hold `d` values and the outputs
// must be valid for writes.
enum HomlabStatus homlab_mean_exit_time_ball(const struct HomlabEnv *env,
                                             double radius,
                                             const double *x,
                                             uint64_t paths,
                                             double dt,
                                             double max_time,
                                             uint64_t seed,
                                             double *mean_out,
                                             double *stderr_out);

// Builds a scale hierarchy with rows `0..=n_max`. `mbar = 0` computes the
// offset from `a`.
//
// # Safety
// `out` must be valid for writes.
enum HomlabStatus homlab_schedule_new(uint32_t d,
                                      double beta,
                                      double a,
                                      uint64_t l0,
                                      double c0,
                                      uint32_t mbar,
                                      uint32_t n_max,
                                      struct HomlabSchedule **out);

// # Safety
// `s` must be null or a handle from [`homlab_schedule_new`] not yet freed.
void homlab_schedule_free(struct HomlabSchedule *s);

// # Safety
// `s` must be a live handle.
uint32_t homlab_schedule_len(const struct HomlabSchedule *s);

// # Safety
// `s` must be a live handle and `out` valid for writes.
enum HomlabStatus homlab_schedule_row(const struct HomlabSchedule *s,
                                      uint32_t n,
                                      struct HomlabScaleRow *out);

// The `n` with `L_n <= 1/epsilon < L_{n+1}`.
//
// # Safety
// `s` must be a live handle and `out` valid for writes.
enum HomlabStatus homlab_schedule_locate(const struct HomlabSchedule *s,
                                         double epsilon,
                                         uint32_t *out);

// Effective diffusivity at schedule row `n`.
//
// # Safety
// Handles must be live and the outputs valid for writes.
enum HomlabStatus homlab_estimate_alpha(const struct HomlabEnv *env,
                                        const struct HomlabSchedule *s,
                                        uint32_t n,
                                        uint64_t paths,
                                        double dt,
                                        uint64_t seed,
                                        double *value_out,
                                        double *stderr_out);

// Mean exit time of `sqrt(alpha) B` from the annulus `r1 < |x| < r2`
// started at radius `r`.
//
// # Safety
// `out` must be valid for writes.
enum HomlabStatus homlab_annulus_mean_exit(double r1,
                                           double r2,
                                           double alpha,
                                           uint32_t d,
                                           double r,
                                           double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HOMLAB_H */
