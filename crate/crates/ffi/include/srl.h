#ifndef SRL_H
#define SRL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum SrlStatus {
  SRL_STATUS_OK = 0,
  SRL_STATUS_NULL_POINTER = 1,
  SRL_STATUS_INVALID_UTF8 = 2,
  // Invalid configuration, JSON or argument value.
  SRL_STATUS_CONFIG = 3,
  // Point outside the domain of an object (e.g. on the critical set).
  SRL_STATUS_DOMAIN = 4,
  SRL_STATUS_DIMENSION = 5,
  // Degenerate geometry: non-contact, singular pairing, vanishing normalization.
  SRL_STATUS_DEGENERATE = 6,
  SRL_STATUS_OUT_OF_RANGE = 7,
  SRL_STATUS_IO = 8,
  SRL_STATUS_PANIC = 9,
} SrlStatus;

// Orbit classes, in the order of the taxonomy.
typedef enum SrlOrbitKind {
  SRL_ORBIT_KIND_PERIODIC_OFF_Z = 0,
  SRL_ORBIT_KIND_FIXED_POINT = 1,
  SRL_ORBIT_KIND_ESCAPE_ORBIT = 2,
  SRL_ORBIT_KIND_SINGULAR_PERIODIC = 3,
  SRL_ORBIT_KIND_GENERALIZED_ESCAPE = 4,
  SRL_ORBIT_KIND_GENERALIZED_SINGULAR_PERIODIC = 5,
  SRL_ORBIT_KIND_UNRESOLVED = 6,
} SrlOrbitKind;

// Experiment configuration.
typedef struct SrlConfig SrlConfig;

// A catalog 1-form together with its Reeb field.
typedef struct SrlForm SrlForm;

// Result of one experiment run.
typedef struct SrlReport SrlReport;

// One check of a report, without its strings.
typedef struct SrlCheck {
  double measured;
  double expected;
  double tolerance;
  bool pass;
} SrlCheck;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next failing call on the same thread.
const char *srl_last_error(void);

// Library version as a static string.
const char *srl_version(void);

// Release a string returned by this library.
//
// # Safety
// `s` must be null or a pointer obtained from this library and not yet freed.
void srl_string_free(char *s);

// Default configuration.
struct SrlConfig *srl_config_new(void);

// Parse and validate a JSON configuration document.
//
// # Safety
// `json` must be a nul-terminated string; `out` must be valid for writes.
enum SrlStatus srl_config_from_json(const char *json, struct SrlConfig **out);

// Set the perturbation size.
//
// # Safety
// `cfg` must be a live configuration handle.
enum SrlStatus srl_config_set_eps(struct SrlConfig *cfg, double eps);

// Set the random seed.
//
// # Safety
// `cfg` must be a live configuration handle.
enum SrlStatus srl_config_set_seed(struct SrlConfig *cfg, uint64_t seed);

// Set the number of sampled orbits.
//
// # Safety
// `cfg` must be a live configuration handle.
enum SrlStatus srl_config_set_seeds(struct SrlConfig *cfg, size_t seeds);

// Set the output directory; null disables file output (the default).
//
// # Safety
// `cfg` must be a live configuration handle; `dir` null or nul-terminated.
enum SrlStatus srl_config_set_output_dir(struct SrlConfig *cfg, const char *dir);

// Serialize the configuration as JSON; free with [`srl_string_free`].
//
// # Safety
// `cfg` must be a live configuration handle; `out` valid for writes.
enum SrlStatus srl_config_to_json(const struct SrlConfig *cfg, char **out);

// # Safety
// `cfg` must be null or a handle not yet freed.
void srl_config_free(struct SrlConfig *cfg);

// Run the named experiment (e.g. `"verify"`, `"bubble"`). `cfg` may be null
// for the defaults. A run whose checks fail still returns [`SrlStatus::Ok`];
// inspect [`srl_report_pass`].
//
// # Safety
// `name` must be nul-terminated; `cfg` null or live; `out` valid for writes.
enum SrlStatus srl_run(const char *name, const struct SrlConfig *cfg, struct SrlReport **out);

// Whether every check passed; false for a null handle.
//
// # Safety
// `rep` must be null or live.
bool srl_report_pass(const struct SrlReport *rep);

// Number of checks; 0 for a null handle.
//
// # Safety
// `rep` must be null or live.
size_t srl_report_check_count(const struct SrlReport *rep);

// Numeric fields of check `index`.
//
// # Safety
// `rep` must be live; `out` valid for writes.
enum SrlStatus srl_report_check(const struct SrlReport *rep, size_t index, struct SrlCheck *out);

// Name of check `index`, owned by the report; null when out of range.
//
// # Safety
// `rep` must be null or live.
const char *srl_report_check_name(const struct SrlReport *rep, size_t index);

// The full report as JSON; free with [`srl_string_free`].
//
// # Safety
// `rep` must be live; `out` valid for writes.
enum SrlStatus srl_report_json(const struct SrlReport *rep, char **out);

// # Safety
// `rep` must be null or a handle not yet freed.
void srl_report_free(struct SrlReport *rep);

// Catalog form by name: `"bubble"`, `"darboux"` or `"twist"`.
//
// # Safety
// `name` must be nul-terminated; `out` valid for writes.
enum SrlStatus srl_form_catalog(const char *name, struct SrlForm **out);

// Dimension of the form's chart; 0 for a null handle.
//
// # Safety
// `form` must be null or live.
size_t srl_form_dim(const struct SrlForm *form);

// Contact-volume coefficient `C` of `α∧dα = C·vol_b` at `x` (`n` must be 3).
//
// # Safety
// `form` live; `x` valid for `n` reads; `out` valid for writes.
enum SrlStatus srl_form_volume_coefficient(const struct SrlForm *form,
                                           const double *x,
                                           size_t n,
                                           double *out);

// Reeb field at `x`, written to `out[0..n]`.
//
// # Safety
// `form` live; `x` valid for `n` reads; `out` valid for `n` writes.
enum SrlStatus srl_form_reeb(const struct SrlForm *form, const double *x, size_t n, double *out);

// Classify the Reeb orbit through `x` integrating up to `horizon` each way.
//
// # Safety
// `form` live; `x` valid for `n` reads; `out` valid for writes.
enum SrlStatus srl_form_classify(const struct SrlForm *form,
                                 const double *x,
                                 size_t n,
                                 double horizon,
                                 enum SrlOrbitKind *out);

// # Safety
// `form` must be null or a handle not yet freed.
void srl_form_free(struct SrlForm *form);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SRL_H */
