#ifndef SDDE_LAN_H
#define SDDE_LAN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Regime tag of a classification.
typedef enum SddeRegime {
  SDDE_REGIME_LAN = 0,
  SDDE_REGIME_LAQ = 1,
  SDDE_REGIME_LAMN = 2,
  SDDE_REGIME_PLAMN = 3,
  SDDE_REGIME_UNCLASSIFIED = 4,
} SddeRegime;

// Result code of every fallible call.
typedef enum SddeStatus {
  SDDE_STATUS_OK = 0,
  SDDE_STATUS_NULL_POINTER = 1,
  // Malformed measure, grid, config or argument.
  SDDE_STATUS_INVALID_ARGUMENT = 2,
  // Root search, multiplicity or consistency failure.
  SDDE_STATUS_NUMERICAL = 3,
  // The information integral diverges (`v* ≥ 0`).
  SDDE_STATUS_INFORMATION_DIVERGES = 4,
  // `∫Y²dt` vanishes, so the MLE is undefined.
  SDDE_STATUS_DEGENERATE_PATH = 5,
  // Characteristic frequencies without a common period.
  SDDE_STATUS_UNCLASSIFIED = 6,
  SDDE_STATUS_IO = 7,
  // A Rust panic was caught at the boundary.
  SDDE_STATUS_PANIC = 8,
} SddeStatus;

// Signed measure on `[-r, 0]`.
typedef struct SddeMeasure SddeMeasure;

// Simulated sample path.
typedef struct SddePath SddePath;

// Regime classification with its characteristic roots.
typedef struct SddeReport SddeReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into the library on the same thread.
const char *sdde_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sdde_version(void);

// Release a string returned by this library. Null is ignored.
void sdde_string_free(char *s);

// Parse a measure from its JSON description.
enum SddeStatus sdde_measure_from_json(const char *json, struct SddeMeasure **out);

// Measure `Σ w[i] δ_{u[i]}` on `[-r, 0]`.
enum SddeStatus sdde_measure_from_atoms(double r,
                                        const double *u,
                                        const double *w,
                                        size_t n,
                                        struct SddeMeasure **out);

void sdde_measure_free(struct SddeMeasure *m);

// `a([-r, 0])`.
enum SddeStatus sdde_measure_mass(const struct SddeMeasure *m, double *out);

// `M_j(λ) = ∫ u^j e^{λu} a(du)` at `λ = re + i·im`.
enum SddeStatus sdde_measure_exp_moment(const struct SddeMeasure *m,
                                        double re,
                                        double im,
                                        size_t j,
                                        double *out_re,
                                        double *out_im);

// Classify `θ`; `hint` is a regime name ("LAN", …) or null.
enum SddeStatus sdde_classify(double theta,
                              const struct SddeMeasure *m,
                              const char *hint,
                              struct SddeReport **out);

void sdde_report_free(struct SddeReport *r);

enum SddeStatus sdde_report_regime(const struct SddeReport *r, enum SddeRegime *out);

// `v*`; `*has_value` is 0 when `v* = -∞`.
enum SddeStatus sdde_report_v_star(const struct SddeReport *r, double *out, int32_t *has_value);

// Scaling rate `r_T` of the regime at horizon `t`.
enum SddeStatus sdde_report_scaling_at(const struct SddeReport *r, double t, double *out);

enum SddeStatus sdde_report_root_count(const struct SddeReport *r, size_t *out);

// Root `index` (sorted by decreasing real part) and its multiplicity.
enum SddeStatus sdde_report_root(const struct SddeReport *r,
                                 size_t index,
                                 double *re,
                                 double *im,
                                 size_t *multiplicity);

// Full report as JSON; release with [`sdde_string_free`].
enum SddeStatus sdde_report_to_json(const struct SddeReport *r, char **out);

// `J = ∫_0^∞ y(t)² dt` for a parameter with `v* < 0`.
enum SddeStatus sdde_fisher_limit(double theta, const struct SddeMeasure *m, double *out);

// `J₀ = ∫_0^r a([-t, 0])² dt` for a measure of zero total mass.
enum SddeStatus sdde_fisher_theta0(const struct SddeMeasure *m, double *out);

// Euler–Maruyama path on `[-r, T]` from the constant initial segment `x0`.
// `dt` must divide `r` and `T`.
enum SddeStatus sdde_simulate(double theta,
                              const struct SddeMeasure *m,
                              double x0,
                              double dt,
                              double horizon,
                              uint64_t seed,
                              struct SddePath **out);

void sdde_path_free(struct SddePath *p);

// Number of steps on `[0, T]`; `X` and `Y` have one more sample.
enum SddeStatus sdde_path_steps(const struct SddePath *p, size_t *out);

// Copy `X(t_k)` and `Y(t_k)`, `k = 0..=steps`, into buffers of length `len`.
// Either buffer may be null.
enum SddeStatus sdde_path_copy(const struct SddePath *p, double *x, double *y, size_t len);

// Scaled score and information at `theta` with rate `scaling`.
enum SddeStatus sdde_path_score(const struct SddePath *p,
                                double theta,
                                double scaling,
                                double *delta,
                                double *info);

// `log dP_{theta_num}/dP_{theta_den}` on the path.
enum SddeStatus sdde_path_log_likelihood_ratio(const struct SddePath *p,
                                               double theta_num,
                                               double theta_den,
                                               double *out);

enum SddeStatus sdde_path_mle(const struct SddePath *p, double *out);

// Run an experiment from its JSON config. Measure paths in the config are
// resolved against `base_dir` (or the working directory when null); when
// `out_dir` is non-null, `result.json` and `samples.csv` are written there.
// `*passed` is 1 when every configured test passed; `result_json`, if
// non-null, receives the full result.
enum SddeStatus sdde_experiment_run(const char *config_json,
                                    const char *base_dir,
                                    const char *out_dir,
                                    int32_t *passed,
                                    char **result_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDDE_LAN_H */
