//! Likelihood estimation of the spatial model.
//!
//! Each household's adoption probability comes from its own conditional
//! belief. The likelihood is maximized by chord Newton steps: the curvature
//! is taken from the fixed-point likelihood fit, which this model reduces to
//! when shocks are independent, and the score is a forward finite difference
//! with belief fields warm-started from the current iterate.

use super::beliefs::{BeliefOptions, BeliefProblem, Correlogram, PairStructure, DEFAULT_GRID_SIZE};
use crate::dist::{normal_pdf, ErrorDist};
use crate::error::{Error, Result};
use crate::estimation::design::Design;
use crate::estimation::{fit_fpl, fpl_design, FitResult, FitSpec};
use crate::model::{Dataset, IndexParams, Intercepts};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SdFitOptions {
    pub correlation_range: f64,
    pub grid_size: usize,
    /// Sup-norm tolerance of the inner belief solve.
    pub inner_tol: f64,
    /// Relative forward-difference step for the score.
    pub fd_step: f64,
    pub max_iter: usize,
    /// Stop when no coordinate moves more than this.
    pub step_tol: f64,
}

impl Default for SdFitOptions {
    fn default() -> Self {
        SdFitOptions {
            correlation_range: 1.0,
            grid_size: DEFAULT_GRID_SIZE,
            inner_tol: 1e-12,
            fd_step: 1e-5,
            max_iter: 15,
            step_tol: 1e-6,
        }
    }
}

fn participant_locations(ds: &Dataset) -> Result<Vec<Vec<[f64; 2]>>> {
    ds.villages
        .iter()
        .map(|v| {
            v.participants()
                .map(|h| {
                    h.location.ok_or_else(|| {
                        Error::input(format!("household {} has no location", h.id))
                    })
                })
                .collect()
        })
        .collect()
}

/// Log-likelihood of the spatial model at `params`.
pub fn sd_loglik(ds: &Dataset, params: &IndexParams, opts: &SdFitOptions) -> Result<f64> {
    if params.error != ErrorDist::Probit {
        return Err(Error::input("the spatial model uses normal shocks"));
    }
    let locs = participant_locations(ds)?;
    let corr = Correlogram::Exponential {
        range: opts.correlation_range,
    };
    let mut ll = 0.0;
    for (v, loc) in ds.villages.iter().zip(&locs) {
        let c = params.intercept_for(v.id)?;
        let hs: Vec<_> = v.participants().collect();
        let base: Vec<f64> = hs
            .iter()
            .map(|h| params.base_index(h.price, h.wealth, &h.covariates, c))
            .collect();
        let pairs = PairStructure::new(loc, &corr);
        let field = BeliefProblem {
            pairs: &pairs,
            base: &base,
            interaction: params.interaction,
            grid_size: opts.grid_size,
        }
        .solve(None, &BeliefOptions { tol: opts.inner_tol, ..BeliefOptions::default() })?;
        for (i, h) in hs.iter().enumerate() {
            ll += ErrorDist::Probit.loglik_terms(-field.crossings[i], h.outcome).0;
        }
    }
    Ok(ll)
}

struct SdObjective<'a> {
    d: &'a Design,
    pairs: Vec<PairStructure>,
    warm: Vec<Option<Vec<f64>>>,
    opts: &'a SdFitOptions,
}

impl SdObjective<'_> {
    fn eval(&mut self, theta: &[f64], keep: bool) -> Result<f64> {
        let p = theta.len();
        let alpha = theta[p - 1];
        let eta = self.d.linear_index(&theta[..p - 1]);
        let mut ll = 0.0;
        for v in 0..self.pairs.len() {
            let rows = self.d.village_rows[v].clone();
            let field = BeliefProblem {
                pairs: &self.pairs[v],
                base: &eta[rows.clone()],
                interaction: alpha,
                grid_size: self.opts.grid_size,
            }
            .solve(
                self.warm[v].as_deref(),
                &BeliefOptions {
                    tol: self.opts.inner_tol,
                    ..BeliefOptions::default()
                },
            )?;
            for (i, r) in rows.enumerate() {
                ll += ErrorDist::Probit.loglik_terms(-field.crossings[i], self.d.outcome[r]).0;
            }
            if keep {
                self.warm[v] = Some(field.psi);
            }
        }
        Ok(ll)
    }
}

/// Chord-Newton metric from the fixed-point information. A start on the
/// interaction bound can leave the information indefinite; eigenvalues are
/// then reflected and floored so the metric stays positive definite.
fn preconditioner(info: &nalgebra::DMatrix<f64>) -> Option<nalgebra::DMatrix<f64>> {
    if info.clone().cholesky().is_some() {
        return Some(info.clone());
    }
    let sym = (info + info.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, l| m.max(l.abs()));
    if !(top > 0.0) || !top.is_finite() {
        return None;
    }
    let floored = eig.eigenvalues.map(|l| l.abs().max(1e-8 * top));
    let m = &eig.eigenvectors * nalgebra::DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    m.clone().cholesky().map(|_| m)
}

/// Fits the spatial model, starting from the fixed-point likelihood
/// estimate. Standard errors use the fixed-point information matrix.
pub fn fit_sd(ds: &Dataset, spec: &FitSpec, opts: &SdFitOptions) -> Result<FitResult> {
    if spec.error != ErrorDist::Probit {
        return Err(Error::input("the spatial model uses normal shocks; set error = probit"));
    }
    if !(opts.correlation_range > 0.0) {
        return Err(Error::input("correlation range must be positive"));
    }
    let locs = participant_locations(ds)?;
    let mut fpl_spec = spec.clone();
    fpl_spec.estimator = crate::estimation::Estimator::Fpl;
    fpl_spec.scale_beliefs = false;
    let start = fit_fpl(ds, &fpl_spec)?;
    let (d, _) = fpl_design(ds, &fpl_spec)?;
    let corr = Correlogram::Exponential {
        range: opts.correlation_range,
    };
    let mut obj = SdObjective {
        d: &d,
        pairs: locs.iter().map(|l| PairStructure::new(l, &corr)).collect(),
        warm: vec![None; ds.villages.len()],
        opts,
    };
    let p = start.internal_theta.len();
    let alpha_max = 1.0 / normal_pdf(0.0) - 1e-6;
    let fixed_alpha = !spec.include_belief;
    let metric = preconditioner(&start.information)
        .ok_or_else(|| Error::Numerical("fixed-point information is degenerate".into()))?;
    let mut theta = start.internal_theta.clone();
    let mut ll = obj.eval(&theta, true)?;
    let mut grad = vec![0.0; p];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        for j in 0..p {
            if fixed_alpha && j == p - 1 {
                grad[j] = 0.0;
                continue;
            }
            let mut h = opts.fd_step * theta[j].abs().max(1.0);
            if j == p - 1 && theta[j] + h > alpha_max {
                // backward difference on the contraction edge
                h = -h;
            }
            let mut tp = theta.clone();
            tp[j] += h;
            grad[j] = (obj.eval(&tp, false)? - ll) / h;
        }
        // the interaction is held when it sits on a bound and the score points outward
        let a = theta[p - 1];
        let hold = fixed_alpha || (a >= alpha_max && grad[p - 1] > 0.0) || (a <= 0.0 && grad[p - 1] < 0.0);
        let free: Vec<usize> = (0..p).filter(|&j| !(hold && j == p - 1)).collect();
        let block = |m: &nalgebra::DMatrix<f64>| m.select_rows(&free).select_columns(&free).cholesky();
        let g = nalgebra::DVector::from_iterator(free.len(), free.iter().map(|&j| grad[j]));
        let Some(sub_chol) = block(&start.information).or_else(|| block(&metric)) else {
            return Err(Error::Numerical("spatial chord metric is not positive definite".into()));
        };
        let sub_step = sub_chol.solve(&g);
        let mut step = vec![0.0; p];
        for (k, &j) in free.iter().enumerate() {
            step[j] = sub_step[k];
        }
        let mut t = 1.0;
        let mut moved = None;
        for _ in 0..12 {
            let mut trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            trial[p - 1] = if fixed_alpha { theta[p - 1] } else { trial[p - 1].clamp(0.0, alpha_max) };
            let lt = obj.eval(&trial, false)?;
            if lt >= ll - 1e-9 * ll.abs() {
                moved = Some(trial);
                break;
            }
            t *= 0.5;
        }
        let Some(trial) = moved else {
            break;
        };
        let shift = trial.iter().zip(&theta).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ll = obj.eval(&trial, true)?;
        theta = trial;
        if shift < opts.step_tol {
            converged = true;
            break;
        }
    }
    let est: Vec<f64> = (0..start.jacobian.nrows())
        .map(|r| (0..p).map(|c| start.jacobian[(r, c)] * theta[c]).sum())
        .collect();
    let ks = 2 + ds.covariate_names.len();
    let intercepts = match start.params.intercepts {
        Intercepts::Common(_) => Intercepts::Common(est[ks + 1]),
        Intercepts::PerVillage(_) => Intercepts::PerVillage(
            ds.villages
                .iter()
                .enumerate()
                .map(|(i, v)| (v.id, est[ks + 1 + i]))
                .collect(),
        ),
    };
    let params = IndexParams {
        price_coef: est[0],
        wealth_coef: est[1],
        covariate_coefs: est[2..ks].to_vec(),
        interaction: est[ks],
        intercepts,
        error: ErrorDist::Probit,
    };
    let mut village_beliefs = BTreeMap::new();
    for (v, psi) in ds.villages.iter().zip(&obj.warm) {
        if let Some(psi) = psi {
            village_beliefs.insert(v.id, psi.iter().sum::<f64>() / psi.len() as f64);
        }
    }
    Ok(FitResult {
        spec: spec.clone(),
        params,
        names: start.names.clone(),
        estimates: est,
        loglik: ll,
        gradient_norm: grad.iter().map(|g| g * g).sum::<f64>().sqrt(),
        converged,
        at_boundary: !fixed_alpha && (theta[p - 1] <= 0.0 || theta[p - 1] >= alpha_max),
        iterations,
        n_obs: d.n(),
        village_beliefs,
        dropped_columns: vec![],
        internal_theta: theta,
        information: start.information.clone(),
        jacobian: start.jacobian.clone(),
    })
}
