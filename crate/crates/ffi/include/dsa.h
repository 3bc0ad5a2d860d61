#ifndef DSA_H
#define DSA_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsaStatus {
  DSA_STATUS_OK = 0,
  DSA_STATUS_NULL_POINTER = 1,
  DSA_STATUS_INVALID_UTF8 = 2,
  DSA_STATUS_DOMAIN = 3,
  DSA_STATUS_CONTRACT = 4,
  DSA_STATUS_CONFIG = 5,
  DSA_STATUS_TRAINING = 6,
  DSA_STATUS_PARSE = 7,
  DSA_STATUS_IO = 8,
  /**
   * The session has already run all configured iterations.
   */
  DSA_STATUS_FINISHED = 9,
  DSA_STATUS_PANIC = 10,
} DsaStatus;

/**
 * A fixed echo state network.
 */
typedef struct DsaReservoir DsaReservoir;

/**
 * A training run in progress.
 */
typedef struct DsaSession DsaSession;

/**
 * Outcome fractions for one SU (or the mean over SUs) in one iteration.
 */
typedef struct DsaRates {
  double success;
  double pu_collision;
  double su_collision;
  double idle;
  double mean_reward;
} DsaRates;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Empty after a success.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *dsa_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dsa_version(void);

/**
 * # Safety
 * `s` must be null or a string returned by this library that was not freed yet.
 */
void dsa_string_free(char *s);

/**
 * Path loss in dB at `distance_m` with the default propagation parameters.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum DsaStatus dsa_path_loss_db(double distance_m, double *out);

/**
 * Normalized rate log2(1 + sinr/gap) with the default gap.
 *
 * # Safety
 * `out` must be a valid pointer to a double.
 */
enum DsaStatus dsa_achievable_rate(double sinr_linear, double *out);

/**
 * Parses and validates a TOML experiment config.
 *
 * # Safety
 * `toml` must be a NUL-terminated string.
 */
enum DsaStatus dsa_config_validate(const char *toml);

/**
 * Creates a session from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DsaStatus dsa_session_new(const char *toml, struct DsaSession **out);

/**
 * Creates a session from a config file; relative snapshot paths resolve against its directory.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DsaStatus dsa_session_from_file(const char *path, struct DsaSession **out);

/**
 * # Safety
 * `session` must be null or a handle from `dsa_session_new` that was not freed yet.
 */
void dsa_session_free(struct DsaSession *session);

/**
 * Runs one training iteration and writes the mean rates over SUs to `aggregate` (may be null).
 *
 * # Safety
 * `session` must be a live handle; `aggregate` null or valid.
 */
enum DsaStatus dsa_session_step(struct DsaSession *session, struct DsaRates *aggregate);

/**
 * Rates of SU `su` in the most recent iteration.
 *
 * # Safety
 * `session` must be a live handle and `out` valid.
 */
enum DsaStatus dsa_session_su_rates(const struct DsaSession *session,
                                    size_t su,
                                    struct DsaRates *out);

/**
 * Number of completed iterations, or 0 for a null handle.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
size_t dsa_session_iteration(const struct DsaSession *session);

/**
 * Number of SUs, or 0 for a null handle.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
size_t dsa_session_n_sus(const struct DsaSession *session);

/**
 * True once all configured iterations ran. Null handles count as done.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
bool dsa_session_is_done(const struct DsaSession *session);

/**
 * Checkpoint JSON, including a greedy evaluation. Free with `dsa_string_free`.
 *
 * # Safety
 * `session` must be a live handle and `out` valid.
 */
enum DsaStatus dsa_session_checkpoint_json(const struct DsaSession *session, char **out);

/**
 * Creates a reservoir with `n_input` inputs. Other hyperparameters take their defaults.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DsaStatus dsa_reservoir_new(size_t n_reservoir,
                                 size_t n_input,
                                 double spectral_radius,
                                 uint64_t seed,
                                 struct DsaReservoir **out);

/**
 * # Safety
 * `reservoir` must be null or a live handle.
 */
void dsa_reservoir_free(struct DsaReservoir *reservoir);

/**
 * Reservoir size, or 0 for a null handle.
 *
 * # Safety
 * `reservoir` must be null or a live handle.
 */
size_t dsa_reservoir_size(const struct DsaReservoir *reservoir);

/**
 * One state update. `state` holds `size` values and is updated in place; `input` holds `n_input`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum DsaStatus dsa_reservoir_update(const struct DsaReservoir *reservoir,
                                    double *state,
                                    const double *input,
                                    size_t n_input);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSA_H */
