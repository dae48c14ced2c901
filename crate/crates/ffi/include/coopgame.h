#ifndef COOPGAME_H
#define COOPGAME_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result codes. Values 2 to 4 match the command-line exit codes.
 */
typedef enum CgStatus {
  CG_OK = 0,
  /**
   * A required pointer was null.
   */
  CG_ERR_NULL_POINTER = 1,
  CG_ERR_VALIDATION = 2,
  CG_ERR_RUNTIME = 3,
  CG_ERR_TRANSPORT = 4,
  /**
   * `I - B` is singular; only possible with zero diagonal entries.
   */
  CG_ERR_SINGULAR = 5,
  /**
   * A size or value was out of range.
   */
  CG_ERR_RANGE = 6,
  CG_ERR_IO = 7,
  /**
   * The library panicked; the message holds the panic text.
   */
  CG_ERR_PANIC = 8,
} CgStatus;

/**
 * Opaque model handle.
 */
typedef struct CgModel CgModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len` bytes) and returns the full message length
 * in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t cg_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cg_version(void);

/**
 * Gershgorin bound `max_i (1 - alpha_ii)` of an `n x n` row-stochastic
 * matrix.
 *
 * # Safety
 * `alpha` must point to `n * n` doubles and `out` to one writable double.
 */
enum CgStatus cg_spectral_radius_bound(const double *alpha,
                                       size_t n,
                                       int allow_zero_diagonal,
                                       double *out);

/**
 * Closed-form equilibrium of the game with targets `pi` (`n_players` rows of
 * `n_outcomes`) and coupling `alpha` (`n_players x n_players`).
 *
 * Writes the equilibrium distributions to `out_p` (same shape as `pi`) and,
 * when not null, the mixture matrix `M[k][i]` (weight of `pi_k` in `p_i`) to
 * `out_mixture` and the best-response residual to `out_residual`.
 *
 * # Safety
 * All non-null pointers must reference arrays of the stated sizes.
 */
enum CgStatus cg_solve_exact(const double *pi,
                             size_t n_players,
                             size_t n_outcomes,
                             const double *alpha,
                             int allow_zero_diagonal,
                             double *out_p,
                             double *out_mixture,
                             double *out_residual);

/**
 * New tabular model over `n_outcomes` values initialized to `probs`
 * (normalized on entry), or uniform when `probs` is null.
 *
 * # Safety
 * `probs` must be null or point to `n_outcomes` doubles; `out` must point
 * to a writable handle slot.
 */
enum CgStatus cg_model_new_tabular(const double *probs, size_t n_outcomes, struct CgModel **out);

/**
 * New log-linear model with feature table `features` (`n_outcomes x dim`)
 * and natural parameters `theta` (`dim`, zeros when null).
 *
 * # Safety
 * Pointers must reference arrays of the stated sizes; `out` must point to a
 * writable handle slot.
 */
enum CgStatus cg_model_new_loglinear(const double *features,
                                     size_t n_outcomes,
                                     size_t dim,
                                     const double *theta,
                                     struct CgModel **out);

/**
 * Number of outcomes of a model's space.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CgStatus cg_model_size(const struct CgModel *m, size_t *out);

/**
 * One fitting step toward `target` (`n_outcomes` weights, normalized on
 * entry). On error the model is unchanged.
 *
 * # Safety
 * `m` must be a live handle and `target` must point to `n_outcomes` doubles.
 */
enum CgStatus cg_model_fit_step(struct CgModel *m,
                                const double *target,
                                size_t n_outcomes,
                                double step_size);

/**
 * Draws `n` outcome indices into `out`; deterministic for equal `seed`.
 *
 * # Safety
 * `m` must be a live handle and `out` must point to `n` writable `u32`s.
 */
enum CgStatus cg_model_sample(const struct CgModel *m, size_t n, uint64_t seed, uint32_t *out);

/**
 * Copies the model's probability table into `out`.
 *
 * # Safety
 * `m` must be a live handle and `out` must point to `n_outcomes` doubles.
 */
enum CgStatus cg_model_distribution(const struct CgModel *m, double *out, size_t n_outcomes);

/**
 * Log-probability of one outcome; `-INFINITY` when it has zero mass.
 *
 * # Safety
 * `m` must be a live handle and `out` writable.
 */
enum CgStatus cg_model_log_prob(const struct CgModel *m, size_t outcome, double *out);

/**
 * Releases a model handle. Null is ignored.
 *
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void cg_model_free(struct CgModel *m);

/**
 * Loads and runs a configuration file, writing artifacts to `out_dir` (or
 * the configuration's own output directory when null). `seed` overrides the
 * master seed when `has_seed` is nonzero.
 *
 * # Safety
 * `config_path` must be a NUL-terminated path; `out_dir` null or
 * NUL-terminated.
 */
enum CgStatus cg_run_config(const char *config_path,
                            const char *out_dir,
                            int has_seed,
                            uint64_t seed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COOPGAME_H */
