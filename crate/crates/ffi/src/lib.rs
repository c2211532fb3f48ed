//! C ABI over the `spillover` crate.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_read`
//! style functions and released with the matching `*_free`. Every fallible
//! function returns a [`SpilloverStatus`]; on failure the message is
//! available from [`spillover_last_error`] until the next call on the same
//! thread.

use spillover::equilibrium::{self, FixedPointOptions};
use spillover::estimation::{self, Estimator, FitResult, FitSpec};
use spillover::io::read_dataset;
use spillover::model::{demand_probability, Intercepts, PolicyScenario};
use spillover::simulate::{simulate_game, SimulationConfig};
use spillover::welfare::{evaluate_policy, PolicyOptions};
use spillover::{Dataset, Error, ErrorDist, IndexParams};
use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

/// Status codes. Input and solver codes match the command-line exit codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpilloverStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8 or a mismatched buffer length.
    InvalidArgument = 1,
    /// Invalid data, configuration or model precondition.
    InputError = 2,
    /// Non-convergence or a numerical failure.
    SolverError = 3,
    /// A Rust panic was caught at the boundary.
    InternalError = 4,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpilloverDist {
    Logit = 0,
    Probit = 1,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpilloverEstimator {
    Br = 0,
    Fpl = 1,
    Cre = 2,
}

/// Opaque household dataset.
pub struct SpilloverDataset(Dataset);

/// Opaque index parameters.
pub struct SpilloverParams(IndexParams);

/// Opaque fitted model.
pub struct SpilloverFit {
    fit: FitResult,
    names: Vec<CString>,
    std_errors: Vec<f64>,
}

/// Welfare summary of one policy at one spillover split.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct SpilloverWelfare {
    pub eligible_share: f64,
    pub takeup0: f64,
    pub takeup1: f64,
    pub eligible_gain: f64,
    pub ineligible_gain: f64,
    pub net_gain: f64,
    pub spending: f64,
    pub deadweight_loss: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpilloverStatus {
    match e.exit_code() {
        3 => SpilloverStatus::SolverError,
        _ => SpilloverStatus::InputError,
    }
}

struct Invalid(&'static str);

enum Failure {
    Invalid(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl From<Invalid> for Failure {
    fn from(e: Invalid) -> Self {
        Failure::Invalid(e.0)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpilloverStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpilloverStatus::Ok,
        Ok(Err(Failure::Invalid(m))) => {
            set_error(m.to_string());
            SpilloverStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            let mut msg = e.to_string();
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                msg.push_str(": ");
                msg.push_str(&s.to_string());
                src = s.source();
            }
            set_error(msg);
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SpilloverStatus::InternalError
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Invalid> {
    p.as_ref().ok_or(Invalid(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Invalid> {
    p.as_mut().ok_or(Invalid(what))
}

fn dist(d: SpilloverDist) -> ErrorDist {
    match d {
        SpilloverDist::Logit => ErrorDist::Logit,
        SpilloverDist::Probit => ErrorDist::Probit,
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn spillover_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Largest interaction for which the equilibrium map is a contraction.
#[no_mangle]
pub extern "C" fn spillover_contraction_bound(error: SpilloverDist) -> f64 {
    equilibrium::contraction_bound(dist(error))
}

/// Reads a household CSV. Every village is assumed fully sampled.
///
/// # Safety
/// `path` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spillover_dataset_read_csv(
    path: *const c_char,
    out_dataset: *mut *mut SpilloverDataset,
) -> SpilloverStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset is null")?;
        *slot = ptr::null_mut();
        let path = CStr::from_ptr(deref(path, "path is null")?)
            .to_str()
            .map_err(|_| Invalid("path is not UTF-8"))?;
        let ds = read_dataset(Path::new(path), &BTreeMap::new())?;
        *slot = Box::into_raw(Box::new(SpilloverDataset(ds)));
        Ok(())
    })
}

/// Simulates `villages` villages of `households` households each from the
/// model in `params`.
///
/// # Safety
/// `params` must be a live handle and `out_dataset` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn spillover_dataset_simulate(
    params: *const SpilloverParams,
    villages: usize,
    households: usize,
    seed: u64,
    out_dataset: *mut *mut SpilloverDataset,
) -> SpilloverStatus {
    guard(|| {
        let slot = out(out_dataset, "out_dataset is null")?;
        *slot = ptr::null_mut();
        let p = &deref(params, "params is null")?.0;
        let ds = simulate_game(&SimulationConfig::benchmark(villages, households), p, seed)?;
        *slot = Box::into_raw(Box::new(SpilloverDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spillover_dataset_free(dataset: *mut SpilloverDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of households, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spillover_dataset_household_count(dataset: *const SpilloverDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.household_count())
}

/// Number of villages, or 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spillover_dataset_village_count(dataset: *const SpilloverDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.0.villages.len())
}

/// Builds index parameters with one common intercept.
///
/// # Safety
/// `covariates` must point to `n_covariates` doubles (or be null when
/// `n_covariates` is 0); `out_params` must be valid.
#[no_mangle]
pub unsafe extern "C" fn spillover_params_new(
    error: SpilloverDist,
    price: f64,
    wealth: f64,
    covariates: *const f64,
    n_covariates: usize,
    interaction: f64,
    intercept: f64,
    out_params: *mut *mut SpilloverParams,
) -> SpilloverStatus {
    guard(|| {
        let slot = out(out_params, "out_params is null")?;
        *slot = ptr::null_mut();
        let cov = if n_covariates == 0 {
            vec![]
        } else {
            std::slice::from_raw_parts(deref(covariates, "covariates is null")?, n_covariates).to_vec()
        };
        let values = [price, wealth, interaction, intercept];
        if values.iter().chain(&cov).any(|x| !x.is_finite()) {
            return Err(Error::input("parameters must be finite").into());
        }
        *slot = Box::into_raw(Box::new(SpilloverParams(IndexParams {
            price_coef: price,
            wealth_coef: wealth,
            covariate_coefs: cov,
            interaction,
            intercepts: Intercepts::Common(intercept),
            error: dist(error),
        })));
        Ok(())
    })
}

/// # Safety
/// `params` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spillover_params_free(params: *mut SpilloverParams) {
    if !params.is_null() {
        drop(Box::from_raw(params));
    }
}

/// Interaction coefficient, or NaN for a null handle.
///
/// # Safety
/// `params` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spillover_params_interaction(params: *const SpilloverParams) -> f64 {
    params.as_ref().map_or(f64::NAN, |p| p.0.interaction)
}

/// Choice probability of one household. `intercept` replaces the stored
/// intercept(s).
///
/// # Safety
/// `params` must be a live handle; `covariates` must hold as many values as
/// the parameters have covariate coefficients.
#[no_mangle]
pub unsafe extern "C" fn spillover_demand_probability(
    params: *const SpilloverParams,
    price: f64,
    wealth: f64,
    covariates: *const f64,
    n_covariates: usize,
    belief: f64,
    intercept: f64,
    out_probability: *mut f64,
) -> SpilloverStatus {
    guard(|| {
        let p = &deref(params, "params is null")?.0;
        let slot = out(out_probability, "out_probability is null")?;
        let cov = if n_covariates == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(deref(covariates, "covariates is null")?, n_covariates)
        };
        *slot = demand_probability(p, price, wealth, cov, belief, intercept)?;
        Ok(())
    })
}

/// Equilibrium expected adoption of one village before and after a
/// means-tested subsidy. Pass `threshold = INFINITY` for a universal subsidy.
///
/// # Safety
/// Handles must be live and output pointers valid.
#[no_mangle]
pub unsafe extern "C" fn spillover_village_equilibrium(
    dataset: *const SpilloverDataset,
    params: *const SpilloverParams,
    village_id: u32,
    base_price: f64,
    subsidized_price: f64,
    threshold: f64,
    out_pi0: *mut f64,
    out_pi1: *mut f64,
) -> SpilloverStatus {
    guard(|| {
        let ds = &deref(dataset, "dataset is null")?.0;
        let p = &deref(params, "params is null")?.0;
        let o0 = out(out_pi0, "out_pi0 is null")?;
        let o1 = out(out_pi1, "out_pi1 is null")?;
        let v = ds
            .village(village_id)
            .ok_or_else(|| Error::input(format!("no village {village_id}")))?;
        let scenario = PolicyScenario::new(base_price, subsidized_price, threshold)?;
        let opts = FixedPointOptions::default();
        *o0 = equilibrium::solve_pi_baseline(v, p, base_price, &opts)?.value;
        *o1 = equilibrium::solve_pi_policy(v, p, &scenario, &opts)?.value;
        Ok(())
    })
}

/// Pooled welfare of a subsidy at the spillover split `alpha1`, which must
/// lie in `[0, interaction]`.
///
/// # Safety
/// Handles must be live and `out_welfare` valid.
#[no_mangle]
pub unsafe extern "C" fn spillover_policy_welfare(
    dataset: *const SpilloverDataset,
    params: *const SpilloverParams,
    base_price: f64,
    subsidized_price: f64,
    threshold: f64,
    alpha1: f64,
    out_welfare: *mut SpilloverWelfare,
) -> SpilloverStatus {
    guard(|| {
        let ds = &deref(dataset, "dataset is null")?.0;
        let p = &deref(params, "params is null")?.0;
        let slot = out(out_welfare, "out_welfare is null")?;
        let scenario = PolicyScenario::new(base_price, subsidized_price, threshold)?;
        let opts = PolicyOptions {
            alpha1_grid: vec![alpha1],
            ..PolicyOptions::default()
        };
        let r = evaluate_policy(ds, p, &scenario, &opts)?;
        let k = r
            .alpha1_grid
            .iter()
            .position(|&a| a == alpha1)
            .ok_or_else(|| Error::input("alpha1 missing from grid"))?;
        *slot = SpilloverWelfare {
            eligible_share: r.eligible_share,
            takeup0: r.takeup0,
            takeup1: r.takeup1,
            eligible_gain: r.eligible_gain[k],
            ineligible_gain: r.ineligible_gain[k],
            net_gain: r.net_gain[k],
            spending: r.spending,
            deadweight_loss: r.dwl[k],
        };
        Ok(())
    })
}

/// Fits the model with a common intercept.
///
/// # Safety
/// `dataset` must be a live handle and `out_fit` valid.
#[no_mangle]
pub unsafe extern "C" fn spillover_fit(
    dataset: *const SpilloverDataset,
    estimator: SpilloverEstimator,
    error: SpilloverDist,
    include_belief: bool,
    out_fit: *mut *mut SpilloverFit,
) -> SpilloverStatus {
    guard(|| {
        let slot = out(out_fit, "out_fit is null")?;
        *slot = ptr::null_mut();
        let ds = &deref(dataset, "dataset is null")?.0;
        let est = match estimator {
            SpilloverEstimator::Br => Estimator::Br,
            SpilloverEstimator::Fpl => Estimator::Fpl,
            SpilloverEstimator::Cre => Estimator::Cre,
        };
        let mut spec = FitSpec::new(est, dist(error));
        spec.include_belief = include_belief;
        let fit = estimation::fit(ds, &spec)?;
        let std_errors = estimation::standard_errors(&fit)?;
        let names = fit
            .names
            .iter()
            .map(|n| CString::new(n.as_str()).expect("names have no nul"))
            .collect();
        *slot = Box::into_raw(Box::new(SpilloverFit { fit, names, std_errors }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn spillover_fit_free(fit: *mut SpilloverFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// Number of reported coefficients, or 0 for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spillover_fit_len(fit: *const SpilloverFit) -> usize {
    fit.as_ref().map_or(0, |f| f.fit.estimates.len())
}

/// Name of coefficient `i`, or null when out of range. Owned by the fit.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spillover_fit_name(fit: *const SpilloverFit, i: usize) -> *const c_char {
    fit.as_ref()
        .and_then(|f| f.names.get(i))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// Copies estimates and standard errors into caller buffers of length `len`,
/// which must equal [`spillover_fit_len`]. Either buffer may be null.
///
/// # Safety
/// Non-null buffers must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn spillover_fit_values(
    fit: *const SpilloverFit,
    estimates: *mut f64,
    std_errors: *mut f64,
    len: usize,
) -> SpilloverStatus {
    guard(|| {
        let f = deref(fit, "fit is null")?;
        if len != f.fit.estimates.len() {
            return Err(Invalid("buffer length does not match the number of coefficients").into());
        }
        if !estimates.is_null() {
            std::slice::from_raw_parts_mut(estimates, len).copy_from_slice(&f.fit.estimates);
        }
        if !std_errors.is_null() {
            std::slice::from_raw_parts_mut(std_errors, len).copy_from_slice(&f.std_errors);
        }
        Ok(())
    })
}

/// Log-likelihood at the optimum, or NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn spillover_fit_loglik(fit: *const SpilloverFit) -> f64 {
    fit.as_ref().map_or(f64::NAN, |f| f.fit.loglik)
}

/// New parameter handle holding the fitted parameters.
///
/// # Safety
/// `fit` must be a live handle and `out_params` valid.
#[no_mangle]
pub unsafe extern "C" fn spillover_fit_params(
    fit: *const SpilloverFit,
    out_params: *mut *mut SpilloverParams,
) -> SpilloverStatus {
    guard(|| {
        let slot = out(out_params, "out_params is null")?;
        *slot = ptr::null_mut();
        let f = deref(fit, "fit is null")?;
        *slot = Box::into_raw(Box::new(SpilloverParams(f.fit.params.clone())));
        Ok(())
    })
}
