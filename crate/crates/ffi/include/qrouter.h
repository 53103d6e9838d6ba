#ifndef QROUTER_H
#define QROUTER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum QrStatus {
  QR_STATUS_OK = 0,
  QR_STATUS_NULL_POINTER = 1,
  QR_STATUS_INVALID_ARGUMENT = 2,
  QR_STATUS_VALIDATION = 3,
  QR_STATUS_TOO_LARGE = 4,
  QR_STATUS_BUFFER_TOO_SMALL = 5,
  QR_STATUS_INTERNAL = 6,
} QrStatus;

// `QrQberMode` selects how storage ages enter the total QBER.
typedef enum QrQberMode {
  QR_QBER_MODE_JOINT = 0,
  QR_QBER_MODE_MARGINAL = 1,
} QrQberMode;

// Opaque Monte Carlo result.
typedef struct QrEnsemble QrEnsemble;

// Opaque parameter set.
typedef struct QrParams QrParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or null. The pointer
// stays valid until the next call into the library from the same thread.
const char *qr_last_error(void);

// Library version as a static NUL-terminated string.
const char *qr_version(void);

// New parameter set holding the defaults; release with `qr_params_free`.
struct QrParams *qr_params_new(void);

// # Safety
// `params` must come from `qr_params_new` and not be used afterwards.
void qr_params_free(struct QrParams *params);

// Assign one parameter from its textual form, e.g. `("cutoff", "10")`.
//
// # Safety
// `params` must be a live handle; `key` and `value` NUL-terminated strings.
enum QrStatus qr_params_set(struct QrParams *params, const char *key, const char *value);

// # Safety
// `params` must be a live handle.
enum QrStatus qr_params_validate(const struct QrParams *params);

// Run the Monte Carlo ensemble; release the result with `qr_ensemble_free`.
//
// # Safety
// `params` must be a live handle and `out` writable.
enum QrStatus qr_simulate(const struct QrParams *params, struct QrEnsemble **out);

// # Safety
// `ensemble` must come from `qr_simulate` and not be used afterwards.
void qr_ensemble_free(struct QrEnsemble *ensemble);

// Number of simulated rounds, or 0 for a null handle.
//
// # Safety
// `ensemble` must be null or a live handle.
size_t qr_ensemble_rounds(const struct QrEnsemble *ensemble);

// `⟨l⟩(s)` for every round.
//
// # Safety
// `ensemble` must be a live handle; `out` must hold `cap` doubles.
enum QrStatus qr_ensemble_mean_l(const struct QrEnsemble *ensemble,
                                 double *out,
                                 size_t cap,
                                 size_t *out_len);

// Router rate `R(s)` for every round.
//
// # Safety
// As for `qr_ensemble_mean_l`.
enum QrStatus qr_ensemble_router_rate(const struct QrEnsemble *ensemble,
                                      double *out,
                                      size_t cap,
                                      size_t *out_len);

// Secret key rate `K(s)` for every round with decoherence time `tau`;
// `mode` is a `QrQberMode` value.
//
// # Safety
// As for `qr_ensemble_mean_l`.
enum QrStatus qr_ensemble_key_rate(const struct QrEnsemble *ensemble,
                                   uint32_t tau,
                                   int32_t mode,
                                   double *out,
                                   size_t cap,
                                   size_t *out_len);

// Exact router rate `R(s)` for `s = 1..=total_rounds`.
//
// # Safety
// `params` must be a live handle; `out` must hold `cap` doubles.
enum QrStatus qr_analytic_router_rate(const struct QrParams *params,
                                      bool force,
                                      double *out,
                                      size_t cap,
                                      size_t *out_len);

// Size of a maximum matching. `mask` bit `party·m + slot` marks a filled memory.
//
// # Safety
// `out` must be writable.
enum QrStatus qr_matching_cardinality(size_t n_parties,
                                      size_t mem_per_party,
                                      size_t w,
                                      uint64_t mask,
                                      size_t *out);

// GHZ-diagonal weights `(λ₀⁺, λ₀⁻, λ₁, λ₂, λ₃)` for three fidelities.
//
// # Safety
// `out` must hold 5 doubles.
enum QrStatus qr_ghz_lambdas(double f_a, double f_b1, double f_b2, double *out);

// `(Q_X, Q_AB₁, Q_AB₂)` for three fidelities.
//
// # Safety
// `out` must hold 3 doubles.
enum QrStatus qr_qbers3(double f_a, double f_b1, double f_b2, double *out);

// Asymptotic secret fraction for `Q_X` and `n_ab` pairwise QBERs.
//
// # Safety
// `q_ab` must hold `n_ab` doubles and `out` be writable.
enum QrStatus qr_secret_fraction(double q_x, const double *q_ab, size_t n_ab, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QROUTER_H */
