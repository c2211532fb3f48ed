#ifndef SPILLOVER_H
#define SPILLOVER_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SpilloverDist {
  SPILLOVER_DIST_LOGIT = 0,
  SPILLOVER_DIST_PROBIT = 1,
} SpilloverDist;

/**
 * Status codes. Input and solver codes match the command-line exit codes.
 */
typedef enum SpilloverStatus {
  SPILLOVER_STATUS_OK = 0,
  /**
   * Null pointer, invalid UTF-8 or a mismatched buffer length.
   */
  SPILLOVER_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Invalid data, configuration or model precondition.
   */
  SPILLOVER_STATUS_INPUT_ERROR = 2,
  /**
   * Non-convergence or a numerical failure.
   */
  SPILLOVER_STATUS_SOLVER_ERROR = 3,
  /**
   * A Rust panic was caught at the boundary.
   */
  SPILLOVER_STATUS_INTERNAL_ERROR = 4,
} SpilloverStatus;

typedef enum SpilloverEstimator {
  SPILLOVER_ESTIMATOR_BR = 0,
  SPILLOVER_ESTIMATOR_FPL = 1,
  SPILLOVER_ESTIMATOR_CRE = 2,
} SpilloverEstimator;

/**
 * Opaque household dataset.
 */
typedef struct SpilloverDataset SpilloverDataset;

/**
 * Opaque fitted model.
 */
typedef struct SpilloverFit SpilloverFit;

/**
 * Opaque index parameters.
 */
typedef struct SpilloverParams SpilloverParams;

/**
 * Welfare summary of one policy at one spillover split.
 */
typedef struct SpilloverWelfare {
  double eligible_share;
  double takeup0;
  double takeup1;
  double eligible_gain;
  double ineligible_gain;
  double net_gain;
  double spending;
  double deadweight_loss;
} SpilloverWelfare;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next library call on the same thread.
 */
const char *spillover_last_error(void);

/**
 * Largest interaction for which the equilibrium map is a contraction.
 */
double spillover_contraction_bound(enum SpilloverDist error);

/**
 * Reads a household CSV. Every village is assumed fully sampled.
 *
 * # Safety
 * `path` must be a nul-terminated string and `out` a valid pointer.
 */
enum SpilloverStatus spillover_dataset_read_csv(const char *path,
                                                struct SpilloverDataset **out_dataset);

/**
 * Simulates `villages` villages of `households` households each from the
 * model in `params`.
 *
 * # Safety
 * `params` must be a live handle and `out_dataset` a valid pointer.
 */
enum SpilloverStatus spillover_dataset_simulate(const struct SpilloverParams *params,
                                                size_t villages,
                                                size_t households,
                                                uint64_t seed,
                                                struct SpilloverDataset **out_dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void spillover_dataset_free(struct SpilloverDataset *dataset);

/**
 * Number of households, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t spillover_dataset_household_count(const struct SpilloverDataset *dataset);

/**
 * Number of villages, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t spillover_dataset_village_count(const struct SpilloverDataset *dataset);

/**
 * Builds index parameters with one common intercept.
 *
 * # Safety
 * `covariates` must point to `n_covariates` doubles (or be null when
 * `n_covariates` is 0); `out_params` must be valid.
 */
enum SpilloverStatus spillover_params_new(enum SpilloverDist error,
                                          double price,
                                          double wealth,
                                          const double *covariates,
                                          size_t n_covariates,
                                          double interaction,
                                          double intercept,
                                          struct SpilloverParams **out_params);

/**
 * # Safety
 * `params` must be null or a handle not yet freed.
 */
void spillover_params_free(struct SpilloverParams *params);

/**
 * Interaction coefficient, or NaN for a null handle.
 *
 * # Safety
 * `params` must be null or a live handle.
 */
double spillover_params_interaction(const struct SpilloverParams *params);

/**
 * Choice probability of one household. `intercept` replaces the stored
 * intercept(s).
 *
 * # Safety
 * `params` must be a live handle; `covariates` must hold as many values as
 * the parameters have covariate coefficients.
 */
enum SpilloverStatus spillover_demand_probability(const struct SpilloverParams *params,
                                                  double price,
                                                  double wealth,
                                                  const double *covariates,
                                                  size_t n_covariates,
                                                  double belief,
                                                  double intercept,
                                                  double *out_probability);

/**
 * Equilibrium expected adoption of one village before and after a
 * means-tested subsidy. Pass `threshold = INFINITY` for a universal subsidy.
 *
 * # Safety
 * Handles must be live and output pointers valid.
 */
enum SpilloverStatus spillover_village_equilibrium(const struct SpilloverDataset *dataset,
                                                   const struct SpilloverParams *params,
                                                   uint32_t village_id,
                                                   double base_price,
                                                   double subsidized_price,
                                                   double threshold,
                                                   double *out_pi0,
                                                   double *out_pi1);

/**
 * Pooled welfare of a subsidy at the spillover split `alpha1`, which must
 * lie in `[0, interaction]`.
 *
 * # Safety
 * Handles must be live and `out_welfare` valid.
 */
enum SpilloverStatus spillover_policy_welfare(const struct SpilloverDataset *dataset,
                                              const struct SpilloverParams *params,
                                              double base_price,
                                              double subsidized_price,
                                              double threshold,
                                              double alpha1,
                                              struct SpilloverWelfare *out_welfare);

/**
 * Fits the model with a common intercept.
 *
 * # Safety
 * `dataset` must be a live handle and `out_fit` valid.
 */
enum SpilloverStatus spillover_fit(const struct SpilloverDataset *dataset,
                                   enum SpilloverEstimator estimator,
                                   enum SpilloverDist error,
                                   bool include_belief,
                                   struct SpilloverFit **out_fit);

/**
 * # Safety
 * `fit` must be null or a handle not yet freed.
 */
void spillover_fit_free(struct SpilloverFit *fit);

/**
 * Number of reported coefficients, or 0 for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
size_t spillover_fit_len(const struct SpilloverFit *fit);

/**
 * Name of coefficient `i`, or null when out of range. Owned by the fit.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
const char *spillover_fit_name(const struct SpilloverFit *fit, size_t i);

/**
 * Copies estimates and standard errors into caller buffers of length `len`,
 * which must equal [`spillover_fit_len`]. Either buffer may be null.
 *
 * # Safety
 * Non-null buffers must hold `len` doubles.
 */
enum SpilloverStatus spillover_fit_values(const struct SpilloverFit *fit,
                                          double *estimates,
                                          double *std_errors,
                                          size_t len);

/**
 * Log-likelihood at the optimum, or NaN for a null handle.
 *
 * # Safety
 * `fit` must be null or a live handle.
 */
double spillover_fit_loglik(const struct SpilloverFit *fit);

/**
 * New parameter handle holding the fitted parameters.
 *
 * # Safety
 * `fit` must be a live handle and `out_params` valid.
 */
enum SpilloverStatus spillover_fit_params(const struct SpilloverFit *fit,
                                          struct SpilloverParams **out_params);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPILLOVER_H */
