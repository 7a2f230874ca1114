#ifndef LMPRIOR_H
#define LMPRIOR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LmpStatus {
  LMP_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8, or a value the library rejects.
   */
  LMP_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The language-model backend failed or lacked an entry.
   */
  LMP_STATUS_BACKEND = 2,
  /**
   * Input data is unusable (degenerate samples, unreadable stub table).
   */
  LMP_STATUS_DATA = 3,
  /**
   * A panic was caught inside the library.
   */
  LMP_STATUS_INTERNAL = 4,
} LmpStatus;

typedef enum LmpVerdict {
  LMP_VERDICT_X_CAUSES_Y = 0,
  LMP_VERDICT_Y_CAUSES_X = 1,
} LmpVerdict;

/**
 * Opaque language-model client.
 */
typedef struct LmpClient LmpClient;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Thread-local message for the last failed call on this thread; empty
 * after a success. Valid until the next library call on the same thread.
 */
const char *lmp_last_error_message(void);

/**
 * Client backed by a recorded stub table (JSON file).
 *
 * # Safety
 * `stub_table_path` must be a NUL-terminated string and `out` writable.
 */
enum LmpStatus lmp_client_new_stub(const char *stub_table_path, struct LmpClient **out);

/**
 * Client from a JSON-encoded backend configuration.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` writable.
 */
enum LmpStatus lmp_client_new_from_config_json(const char *config_json, struct LmpClient **out);

/**
 * # Safety
 * `client` must be null or a handle from a constructor, not yet freed.
 */
void lmp_client_free(struct LmpClient *client);

/**
 * Log-probability of each candidate as the first generated token.
 * `out_logprobs` receives `n_candidates` values in input order.
 *
 * # Safety
 * `candidates` must hold `n_candidates` NUL-terminated strings and
 * `out_logprobs` must have room for `n_candidates` doubles.
 */
enum LmpStatus lmp_score_candidates(const struct LmpClient *client,
                                    const char *prompt,
                                    const char *const *candidates,
                                    size_t n_candidates,
                                    double *out_logprobs);

/**
 * Regression-error direction coefficient of `n` paired samples; positive
 * when `y` is better explained from `x`.
 *
 * # Safety
 * `x` and `y` must each point to `n` doubles; `out_rho` must be writable.
 */
enum LmpStatus lmp_reci_coefficient(const double *x, const double *y, size_t n, double *out_rho);

/**
 * Adds the prior log-ratio to the coefficient's log-odds. Either output
 * pointer may be null.
 *
 * # Safety
 * Non-null output pointers must be writable.
 */
enum LmpStatus lmp_combine(double lm_log_ratio,
                           double rho,
                           double *out_combined,
                           enum LmpVerdict *out_verdict);

/**
 * Judgment prompt for distance category `distance` (0 to 3; larger values
 * use category 3). Free the result with [`lmp_string_free`].
 *
 * # Safety
 * `out` must be writable.
 */
enum LmpStatus lmp_render_rl_prompt(uint32_t distance, char **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void lmp_string_free(char *s);

/**
 * `p(Good) - p(Bad)` for distance category `distance`, renormalized over
 * the three judgment tokens.
 *
 * # Safety
 * `client` must be a live handle and `out_bonus` writable.
 */
enum LmpStatus lmp_elicit_bonus(const struct LmpClient *client,
                                uint32_t distance,
                                double *out_bonus);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LMPRIOR_H */
