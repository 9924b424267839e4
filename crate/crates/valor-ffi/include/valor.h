#ifndef VALOR_H
#define VALOR_H

/* Generated by cbindgen from the valor-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * ABI version; bump on any breaking change to this surface.
 */
#define VALOR_ABI_VERSION 1

/**
 * Outcome of an FFI call.
 */
typedef enum ValorStatus {
  VALOR_STATUS_OK = 0,
  /**
   * Bad pointer, encoding, JSON schema, or unknown name.
   */
  VALOR_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The underlying computation failed.
   */
  VALOR_STATUS_RUNTIME_ERROR = 2,
  /**
   * An explicit enumeration or sampling budget would be exceeded.
   */
  VALOR_STATUS_BUDGET_EXCEEDED = 3,
} ValorStatus;

/**
 * Opaque environment handle wrapping a validated process specification.
 */
typedef struct ValorEnv ValorEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * ABI version of this library.
 */
uint32_t valor_abi_version(void);

/**
 * Message describing the most recent failure on this thread. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *valor_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be NULL or a pointer previously returned by a `valor_*` call
 * and not yet freed.
 */
void valor_string_free(char *s);

/**
 * Build a named environment (`gridworld`, `random`, `backup-chain`,
 * `needle`, `rare-reward`, `sat-mdp`) with builder parameters as JSON
 * (NULL for defaults).
 *
 * # Safety
 * `name` and `params_json` must be NULL or valid NUL-terminated strings;
 * `out` must be a valid pointer.
 */
enum ValorStatus valor_env_build(const char *name,
                                 const char *params_json,
                                 uint64_t seed,
                                 struct ValorEnv **out);

/**
 * Load an environment from a spec document.
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out` a valid pointer.
 */
enum ValorStatus valor_env_from_json(const char *json, struct ValorEnv **out);

/**
 * Serialize an environment to its JSON document.
 *
 * # Safety
 * `env` must be a live handle from this library; `out` a valid pointer.
 */
enum ValorStatus valor_env_to_json(const struct ValorEnv *env, char **out);

/**
 * Exact optimal expected return of the environment.
 *
 * # Safety
 * `env` must be a live handle from this library; `out` a valid pointer.
 */
enum ValorStatus valor_env_optimal_value(const struct ValorEnv *env, double *out);

/**
 * Destroy an environment handle.
 *
 * # Safety
 * `env` must be NULL or a live handle from this library, not yet freed.
 */
void valor_env_free(struct ValorEnv *env);

/**
 * Run a full experiment from a configuration document and return the
 * aggregate report as JSON.
 *
 * # Safety
 * `config_json` must be a valid NUL-terminated string; `report_out` a
 * valid pointer.
 */
enum ValorStatus valor_run_experiment(const char *config_json, char **report_out);

/**
 * Decide a DIMACS 3-SAT instance through the optimistic constraint
 * program; writes 1 for satisfiable, 0 otherwise.
 *
 * # Safety
 * `dimacs` must be a valid NUL-terminated string; `is_sat_out` a valid
 * pointer.
 */
enum ValorStatus valor_sat_decide(const char *dimacs, uint64_t budget, int32_t *is_sat_out);

/**
 * Exact square losses of the rare-observation construction: the all-zero
 * function, the optimal one, and the flat `sqrt(eps)` one, plus the
 * expected gap between the last two.
 *
 * # Safety
 * `losses_out` must point to at least three doubles; `gap_out` must be a
 * valid pointer.
 */
enum ValorStatus valor_rare_reward_losses(double eps, double *losses_out, double *gap_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VALOR_H */
