//! Likelihood estimators for the adoption index.
//!
//! * BR: maximum likelihood with the observed village adoption rate as the
//!   belief regressor. With village dummies the belief is absorbed by the
//!   dummies and the interaction is recovered from a pair of villages assumed
//!   to share the same unobserved intercept.
//! * FPL: the belief is the model-implied village equilibrium, re-solved at
//!   every parameter value (nested fixed point).
//! * CRE: correlated random effects, with village means of the household
//!   regressors standing in for the village intercept.
//!
//! All optimization runs on internally standardized regressors; results are
//! reported on the original scale.

pub(crate) mod design;
pub(crate) mod optimizer;

use crate::dist::ErrorDist;
use crate::equilibrium::contraction_bound;
use crate::error::{Error, Result};
use crate::model::{participation_scale, Dataset, Household, IndexParams, Intercepts};
use design::{chunked_sum, Column, Design};
use nalgebra::DMatrix;
use optimizer::{fd_hessian, maximize, NewtonOptions, Objective, Optimum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;


#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Br,
    Fpl,
    Cre,
}

/// Treatment of the village-level unobservable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FixedEffects {
    /// One common intercept.
    None,
    /// Village dummies, with the two listed villages sharing an intercept.
    Homogeneity { tied: (u32, u32) },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitSpec {
    pub estimator: Estimator,
    pub error: ErrorDist,
    pub fixed_effects: FixedEffects,
    /// When false the interaction is fixed at zero.
    pub include_belief: bool,
    /// Rescale participant adoption rates to the whole village.
    pub scale_beliefs: bool,
}

impl FitSpec {
    pub fn new(estimator: Estimator, error: ErrorDist) -> Self {
        FitSpec {
            estimator,
            error,
            fixed_effects: FixedEffects::None,
            include_belief: true,
            scale_beliefs: false,
        }
    }
}

/// Fitted model. `estimates`, `names` and [`standard_errors`] share one order:
/// slopes, interaction, then intercept terms.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub spec: FitSpec,
    pub params: IndexParams,
    pub names: Vec<String>,
    pub estimates: Vec<f64>,
    pub loglik: f64,
    pub gradient_norm: f64,
    pub converged: bool,
    pub at_boundary: bool,
    pub iterations: usize,
    pub n_obs: usize,
    /// Belief used for each village: observed (BR, CRE) or solved (FPL).
    pub village_beliefs: BTreeMap<u32, f64>,
    /// Columns dropped as collinear (CRE only).
    pub dropped_columns: Vec<String>,
    /// Optimizer coordinates at the optimum.
    pub internal_theta: Vec<f64>,
    /// Negative Hessian in optimizer coordinates.
    pub information: DMatrix<f64>,
    /// Derivative of `estimates` with respect to the optimizer coordinates.
    pub jacobian: DMatrix<f64>,
}

impl FitResult {
    pub fn estimate(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.estimates[i])
    }
}

/// Observed adoption rate among participants in each village, optionally
/// rescaled to the whole village.
pub fn estimate_village_beliefs(ds: &Dataset, scale: bool) -> Result<BTreeMap<u32, f64>> {
    let mut out = BTreeMap::new();
    for v in &ds.villages {
        let rate = v
            .adoption_rate()
            .ok_or_else(|| Error::input(format!("village {} has no participants", v.id)))?;
        let s = if scale { participation_scale(v)? } else { 1.0 };
        out.insert(v.id, (rate * s).clamp(0.0, 1.0));
    }
    Ok(out)
}

/// Recovers the interaction and the village intercepts from dummy estimates
/// when villages `tied.0` and `tied.1` share an intercept.
pub fn solve_fixed_effects_homogeneity(
    dummies: &BTreeMap<u32, f64>,
    beliefs: &BTreeMap<u32, f64>,
    tied: (u32, u32),
) -> Result<(f64, BTreeMap<u32, f64>)> {
    let get = |m: &BTreeMap<u32, f64>, id: u32, what: &str| {
        m.get(&id)
            .copied()
            .ok_or_else(|| Error::input(format!("no {what} for village {id}")))
    };
    let (ga, gb) = (get(dummies, tied.0, "dummy")?, get(dummies, tied.1, "dummy")?);
    let (pa, pb) = (get(beliefs, tied.0, "belief")?, get(beliefs, tied.1, "belief")?);
    if (pa - pb).abs() < 1e-12 {
        return Err(Error::Identification(format!(
            "tied villages {} and {} have equal beliefs; interaction not identified",
            tied.0, tied.1
        )));
    }
    let alpha = (ga - gb) / (pa - pb);
    let mut xi = BTreeMap::new();
    for (&id, &g) in dummies {
        xi.insert(id, g - alpha * get(beliefs, id, "belief")?);
    }
    Ok((alpha, xi))
}

/// Standard errors of `fit.estimates` from the inverse information matrix.
pub fn standard_errors(fit: &FitResult) -> Result<Vec<f64>> {
    let info = &fit.information;
    let Some(ch) = info.clone().cholesky() else {
        let eig = info.clone().symmetric_eigen();
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        return Err(Error::Numerical(format!(
            "information matrix is not positive definite (smallest eigenvalue {min:.3e})"
        )));
    };
    let cov = ch.inverse();
    let full = &fit.jacobian * cov * fit.jacobian.transpose();
    Ok((0..full.nrows()).map(|i| full[(i, i)].max(0.0).sqrt()).collect())
}

/// Fits the model described by `spec`.
pub fn fit(ds: &Dataset, spec: &FitSpec) -> Result<FitResult> {
    match spec.estimator {
        Estimator::Br => fit_br(ds, spec),
        Estimator::Fpl => fit_fpl(ds, spec),
        Estimator::Cre => fit_cre(ds, spec),
    }
}

fn household_columns(ds: &Dataset) -> Vec<Column> {
    let mut cols = vec![
        Column::Household("price".into(), Box::new(|h: &Household| h.price)),
        Column::Household("wealth".into(), Box::new(|h: &Household| h.wealth)),
    ];
    for (j, name) in ds.covariate_names.iter().enumerate() {
        cols.push(Column::Household(name.clone(), Box::new(move |h: &Household| h.covariates[j])));
    }
    cols
}

fn slope_count(ds: &Dataset) -> usize {
    2 + ds.covariate_names.len()
}

fn belief_vec(ds: &Dataset, b: &BTreeMap<u32, f64>) -> Vec<f64> {
    ds.villages.iter().map(|v| b[&v.id]).collect()
}

/// Intercept groups: one common group, or one per village with the tied
/// pair merged when `merge_tied` is set.
fn groups(ds: &Dataset, fe: FixedEffects, merge_tied: bool) -> Result<(Vec<usize>, Vec<String>)> {
    match fe {
        FixedEffects::None => Ok((vec![0; ds.villages.len()], vec!["intercept".into()])),
        FixedEffects::Homogeneity { tied } => {
            if tied.0 == tied.1 {
                return Err(Error::input("tied villages must differ"));
            }
            for id in [tied.0, tied.1] {
                if ds.village(id).is_none() {
                    return Err(Error::input(format!("tied village {id} not in dataset")));
                }
            }
            let mut map = Vec::new();
            let mut names = Vec::new();
            let mut first_of_tie = None;
            for v in &ds.villages {
                let is_tied = v.id == tied.0 || v.id == tied.1;
                if merge_tied && is_tied {
                    if let Some(g) = first_of_tie {
                        map.push(g);
                        continue;
                    }
                    first_of_tie = Some(names.len());
                    names.push(format!("{}+{}", tied.0, tied.1));
                    map.push(names.len() - 1);
                } else {
                    names.push(v.id.to_string());
                    map.push(names.len() - 1);
                }
            }
            Ok((map, names))
        }
    }
}

fn reject_collinear(d: &Design) -> Result<()> {
    let bad = d.collinear_columns();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::RankDeficient(bad.iter().map(|&j| d.column_name(j)).collect()))
    }
}

const SEPARATION_LIMIT: f64 = 50.0;
/// A maximized log-likelihood above this means every outcome is fitted
/// almost exactly, which only happens under complete separation.
const PERFECT_FIT_LOGLIK: f64 = -1e-4;

fn check_separation(d: &Design, theta: &[f64], slopes: usize) -> Result<()> {
    for j in 0..slopes {
        if theta[j].abs() > SEPARATION_LIMIT {
            return Err(Error::Separation {
                column: d.names[j].clone(),
                coefficient: theta[j],
            });
        }
    }
    Ok(())
}

fn check_perfect_fit(d: &Design, opt: &Optimum) -> Result<()> {
    check_separation(d, &opt.theta, d.k())?;
    if opt.value > PERFECT_FIT_LOGLIK {
        if let Some(j) = (0..d.k()).max_by(|&a, &b| opt.theta[a].abs().total_cmp(&opt.theta[b].abs())) {
            return Err(Error::Separation {
                column: d.names[j].clone(),
                coefficient: opt.theta[j],
            });
        }
    }
    Ok(())
}

/// Binary-response log-likelihood over a fixed design.
struct BinaryLik<'a> {
    d: &'a Design,
    dist: ErrorDist,
}

struct Partial {
    ll: f64,
    grad: Vec<f64>,
    hess: Option<Vec<f64>>,
}

impl BinaryLik<'_> {
    fn eval(&self, theta: &[f64], with_hess: bool) -> (f64, Vec<f64>, Option<DMatrix<f64>>) {
        let d = self.d;
        let (k, g) = (d.k(), d.n_groups());
        let p = k + g;
        let eta = d.linear_index(theta);
        let part = chunked_sum(
            d.n(),
            |r| {
                let mut ll = 0.0;
                let mut grad = vec![0.0; p];
                let mut hess = if with_hess { Some(vec![0.0; p * p]) } else { None };
                let mut x = vec![0.0; k];
                for i in r {
                    let (l, d1, d2) = self.dist.loglik_terms(eta[i], d.outcome[i]);
                    ll += l;
                    for j in 0..k {
                        x[j] = d.cols[j][i];
                        grad[j] += d1 * x[j];
                    }
                    let gi = k + d.group[i];
                    grad[gi] += d1;
                    if let Some(h) = hess.as_mut() {
                        for a in 0..k {
                            let w = d2 * x[a];
                            for b in 0..=a {
                                h[a * p + b] += w * x[b];
                            }
                            h[gi * p + a] += w;
                        }
                        h[gi * p + gi] += d2;
                    }
                }
                Partial { ll, grad, hess }
            },
            |mut a, b| {
                a.ll += b.ll;
                for (x, y) in a.grad.iter_mut().zip(&b.grad) {
                    *x += y;
                }
                if let (Some(ha), Some(hb)) = (a.hess.as_mut(), b.hess.as_ref()) {
                    for (x, y) in ha.iter_mut().zip(hb) {
                        *x += y;
                    }
                }
                a
            },
        );
        let hess = part.hess.map(|h| {
            let mut m = DMatrix::from_row_slice(p, p, &h);
            for a in 0..p {
                for b in 0..a {
                    let v = m[(a, b)] + m[(b, a)];
                    m[(a, b)] = v;
                    m[(b, a)] = v;
                }
            }
            m
        });
        (part.ll, part.grad, hess)
    }
}

impl Objective for BinaryLik<'_> {
    fn value_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ll, g, _) = self.eval(theta, false);
        Ok((ll, g))
    }

    fn hessian(&mut self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.eval(theta, true).2.expect("hessian requested"))
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        check_separation(self.d, theta, self.d.k())
    }
}

fn unbounded(p: usize) -> (Vec<f64>, Vec<f64>) {
    (vec![f64::NEG_INFINITY; p], vec![f64::INFINITY; p])
}

fn start_values(d: &Design) -> Vec<f64> {
    let mut t = vec![0.0; d.k() + d.n_groups()];
    let rate = d.outcome.iter().filter(|&&y| y).count() as f64 / d.n() as f64;
    let r = rate.clamp(0.01, 0.99);
    for g in 0..d.n_groups() {
        t[d.k() + g] = (r / (1.0 - r)).ln() * 0.6;
    }
    t
}

/// Belief-regressor estimator.
pub fn fit_br(ds: &Dataset, spec: &FitSpec) -> Result<FitResult> {
    if spec.estimator == Estimator::Cre {
        return fit_cre(ds, spec);
    }
    let beliefs = estimate_village_beliefs(ds, spec.scale_beliefs)?;
    let ks = slope_count(ds);
    let mut cols = household_columns(ds);
    let with_belief = spec.include_belief && spec.fixed_effects == FixedEffects::None;
    if with_belief {
        cols.push(Column::Village("belief".into(), belief_vec(ds, &beliefs)));
    }
    let (gmap, gnames) = groups(ds, spec.fixed_effects, false)?;
    let d = Design::build(ds, cols, &gmap, gnames)?;
    reject_collinear(&d)?;
    let mut obj = BinaryLik { d: &d, dist: spec.error };
    let (lo, hi) = unbounded(d.k() + d.n_groups());
    let opt = maximize(&mut obj, &start_values(&d), &lo, &hi, &NewtonOptions::default())?;
    check_perfect_fit(&d, &opt)?;
    let t = d.destandardize_jacobian();
    let orig = &t * nalgebra::DVector::from_column_slice(&opt.theta);
    let slopes: Vec<f64> = orig.iter().take(ks).cloned().collect();
    let alpha = if with_belief { orig[ks] } else { 0.0 };
    let mut names = slope_names(ds);
    names.push("interaction".into());
    let n_int = d.n_groups();
    let (estimates, jacobian, intercepts) = match spec.fixed_effects {
        FixedEffects::None => {
            let c0 = orig[d.k()];
            names.push("intercept".into());
            let mut est = slopes.clone();
            est.push(alpha);
            est.push(c0);
            let p = d.k() + n_int;
            let mut sel = DMatrix::zeros(ks + 2, p);
            for j in 0..ks {
                sel[(j, j)] = 1.0;
            }
            if with_belief {
                sel[(ks, ks)] = 1.0;
            }
            sel[(ks + 1, d.k())] = 1.0;
            (est, sel * &t, Intercepts::Common(c0))
        }
        FixedEffects::Homogeneity { tied } => {
            let gam: BTreeMap<u32, f64> = ds
                .villages
                .iter()
                .enumerate()
                .map(|(i, v)| (v.id, orig[ks + i]))
                .collect();
            let (alpha_h, xi) = solve_fixed_effects_homogeneity(&gam, &beliefs, tied)?;
            if !spec.include_belief {
                return Err(Error::input(
                    "homogeneity needs the interaction; include_belief must be true",
                ));
            }
            let mut est = slopes.clone();
            est.push(alpha_h);
            let v = ds.villages.len();
            let ia = ds.villages.iter().position(|x| x.id == tied.0).unwrap();
            let ib = ds.villages.iter().position(|x| x.id == tied.1).unwrap();
            let dp = beliefs[&tied.0] - beliefs[&tied.1];
            let p = ks + v;
            let mut dmap = DMatrix::zeros(ks + 1 + v, p);
            for j in 0..ks {
                dmap[(j, j)] = 1.0;
            }
            dmap[(ks, ks + ia)] = 1.0 / dp;
            dmap[(ks, ks + ib)] = -1.0 / dp;
            for (i, vil) in ds.villages.iter().enumerate() {
                names.push(format!("xi[{}]", vil.id));
                est.push(xi[&vil.id]);
                let pi = beliefs[&vil.id];
                dmap[(ks + 1 + i, ks + i)] += 1.0;
                dmap[(ks + 1 + i, ks + ia)] -= pi / dp;
                dmap[(ks + 1 + i, ks + ib)] += pi / dp;
            }
            (est, dmap * &t, Intercepts::PerVillage(xi))
        }
    };
    let final_alpha = estimates[ks];
    Ok(FitResult {
        spec: spec.clone(),
        params: IndexParams {
            price_coef: slopes[0],
            wealth_coef: slopes[1],
            covariate_coefs: slopes[2..].to_vec(),
            interaction: final_alpha,
            intercepts,
            error: spec.error,
        },
        names,
        estimates,
        loglik: opt.value,
        gradient_norm: opt.projected_gradient_norm(),
        converged: opt.converged,
        at_boundary: false,
        iterations: opt.iterations,
        n_obs: d.n(),
        village_beliefs: beliefs,
        dropped_columns: vec![],
        internal_theta: opt.theta,
        information: -opt.hessian,
        jacobian,
    })
}

fn slope_names(ds: &Dataset) -> Vec<String> {
    let mut n = vec!["price".to_string(), "wealth".to_string()];
    n.extend(ds.covariate_names.iter().cloned());
    n
}

/// Correlated random effects estimator: village means of the household
/// regressors enter the index alongside the observed belief.
pub fn fit_cre(ds: &Dataset, spec: &FitSpec) -> Result<FitResult> {
    let beliefs = estimate_village_beliefs(ds, spec.scale_beliefs)?;
    let ks = slope_count(ds);
    let mut cols = household_columns(ds);
    let mean_names: Vec<String> = slope_names(ds).iter().map(|n| format!("mean_{n}")).collect();
    let mut means = vec![vec![0.0; ds.villages.len()]; ks];
    for (vi, v) in ds.villages.iter().enumerate() {
        let n = v.participant_count() as f64;
        for h in v.participants() {
            means[0][vi] += h.price / n;
            means[1][vi] += h.wealth / n;
            for (j, z) in h.covariates.iter().enumerate() {
                means[2 + j][vi] += z / n;
            }
        }
    }
    for (name, m) in mean_names.iter().zip(&means) {
        cols.push(Column::Village(name.clone(), m.clone()));
    }
    if spec.include_belief {
        cols.push(Column::Village("belief".into(), belief_vec(ds, &beliefs)));
    }
    let (gmap, gnames) = groups(ds, FixedEffects::None, false)?;
    let full = Design::build(ds, cols, &gmap, gnames)?;
    let bad = full.collinear_columns();
    let mut dropped = Vec::new();
    for &j in &bad {
        if j >= ks && j < ks + ks {
            dropped.push(full.column_name(j));
        } else {
            return Err(Error::RankDeficient(bad.iter().map(|&j| full.column_name(j)).collect()));
        }
    }
    let keep: Vec<usize> = (0..full.k()).filter(|j| !bad.contains(j)).collect();
    let d = full.select(&keep);
    let kept_means: Vec<usize> = keep.iter().filter(|&&j| j >= ks && j < 2 * ks).map(|&j| j - ks).collect();
    let mut obj = BinaryLik { d: &d, dist: spec.error };
    let (lo, hi) = unbounded(d.k() + 1);
    let opt = maximize(&mut obj, &start_values(&d), &lo, &hi, &NewtonOptions::default())?;
    check_perfect_fit(&d, &opt)?;
    let t = d.destandardize_jacobian();
    let orig = &t * nalgebra::DVector::from_column_slice(&opt.theta);
    let km = kept_means.len();
    let alpha_pos = if spec.include_belief { Some(ks + km) } else { None };
    let c0 = orig[d.k()];
    let mut names = slope_names(ds);
    names.push("interaction".into());
    names.push("intercept".into());
    let mut est: Vec<f64> = orig.iter().take(ks).cloned().collect();
    est.push(alpha_pos.map_or(0.0, |i| orig[i]));
    est.push(c0);
    let p = d.k() + 1;
    let mut sel = DMatrix::zeros(ks + 2 + km, p);
    for j in 0..ks {
        sel[(j, j)] = 1.0;
    }
    if let Some(i) = alpha_pos {
        sel[(ks, i)] = 1.0;
    }
    sel[(ks + 1, d.k())] = 1.0;
    for (m, &src) in kept_means.iter().enumerate() {
        names.push(mean_names[src].clone());
        est.push(orig[ks + m]);
        sel[(ks + 2 + m, ks + m)] = 1.0;
    }
    let mut xi = BTreeMap::new();
    for (vi, v) in ds.villages.iter().enumerate() {
        let mut x = c0;
        for (m, &src) in kept_means.iter().enumerate() {
            x += orig[ks + m] * means[src][vi];
        }
        xi.insert(v.id, x);
    }
    Ok(FitResult {
        spec: spec.clone(),
        params: IndexParams {
            price_coef: est[0],
            wealth_coef: est[1],
            covariate_coefs: est[2..ks].to_vec(),
            interaction: est[ks],
            intercepts: Intercepts::PerVillage(xi),
            error: spec.error,
        },
        names,
        estimates: est,
        loglik: opt.value,
        gradient_norm: opt.projected_gradient_norm(),
        converged: opt.converged,
        at_boundary: false,
        iterations: opt.iterations,
        n_obs: d.n(),
        village_beliefs: beliefs,
        dropped_columns: dropped,
        internal_theta: opt.theta,
        information: -opt.hessian,
        jacobian: sel * t,
    })
}

/// Nested fixed-point likelihood: the belief in each village is the
/// equilibrium implied by the current parameters.
pub(crate) struct FplLik<'a> {
    pub d: &'a Design,
    pub dist: ErrorDist,
    pub scale: Vec<f64>,
    pub alpha_fixed: Option<f64>,
}

pub(crate) struct VillageSolve {
    pub pi: f64,
    pub ll: f64,
    pub grad: Vec<f64>,
}

/// Root of `pi - s * mean F(eta0 + alpha * pi)` on `[0, 1]` by safeguarded
/// Newton.
pub(crate) fn village_equilibrium(eta0: &[f64], alpha: f64, s: f64, dist: ErrorDist) -> Result<f64> {
    let n = eta0.len() as f64;
    let g = |pi: f64| {
        let (mut m, mut mf) = (0.0, 0.0);
        for e in eta0 {
            m += dist.cdf(e + alpha * pi);
            mf += dist.pdf(e + alpha * pi);
        }
        (pi - s * m / n, 1.0 - alpha * s * mf / n)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut pi = g(0.5).0;
    pi = (0.5 - pi).clamp(0.0, 1.0);
    for _ in 0..200 {
        let (v, dv) = g(pi);
        if v.abs() < 1e-14 {
            return Ok(pi);
        }
        if v < 0.0 {
            lo = pi;
        } else {
            hi = pi;
        }
        let mut next = pi - v / dv;
        if !(dv > 0.0) || !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - pi).abs() < 1e-16 {
            return Ok(next);
        }
        pi = next;
    }
    let r = g(pi).0;
    if r.abs() < 1e-10 {
        Ok(pi)
    } else {
        Err(Error::solver("village equilibrium did not converge", r))
    }
}

impl FplLik<'_> {
    fn alpha(&self, theta: &[f64]) -> f64 {
        self.alpha_fixed.unwrap_or(theta[theta.len() - 1])
    }

    pub fn solve(&self, theta: &[f64]) -> Result<Vec<VillageSolve>> {
        let d = self.d;
        let (k, g) = (d.k(), d.n_groups());
        let p = k + g + 1;
        let alpha = self.alpha(theta);
        let eta0 = d.linear_index(&theta[..k + g]);
        (0..d.village_rows.len())
            .into_par_iter()
            .map(|v| {
                let rows = d.village_rows[v].clone();
                let s = self.scale[v];
                let pi = village_equilibrium(&eta0[rows.clone()], alpha, s, self.dist)?;
                let n = rows.len() as f64;
                let (mut ll, mut sd, mut mf) = (0.0, 0.0, 0.0);
                let mut sdx = vec![0.0; k];
                let mut mfx = vec![0.0; k];
                for i in rows {
                    let eta = eta0[i] + alpha * pi;
                    let (l, d1, _) = self.dist.loglik_terms(eta, d.outcome[i]);
                    let f = self.dist.pdf(eta);
                    ll += l;
                    sd += d1;
                    mf += f / n;
                    for j in 0..k {
                        let x = d.cols[j][i];
                        sdx[j] += d1 * x;
                        mfx[j] += f * x / n;
                    }
                }
                let den = 1.0 - alpha * s * mf;
                let mut grad = vec![0.0; p];
                for j in 0..k {
                    grad[j] = sdx[j] + alpha * sd * s * mfx[j] / den;
                }
                grad[k + d.village_group[v]] = sd * (1.0 + alpha * s * mf / den);
                grad[p - 1] = sd * (pi + alpha * s * mf * pi / den);
                Ok(VillageSolve { pi, ll, grad })
            })
            .collect()
    }
}

impl Objective for FplLik<'_> {
    fn value_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
        let parts = self.solve(theta)?;
        let p = theta.len();
        let mut ll = 0.0;
        let mut g = vec![0.0; p];
        for part in parts {
            ll += part.ll;
            for (a, b) in g.iter_mut().zip(&part.grad) {
                *a += b;
            }
        }
        if self.alpha_fixed.is_some() {
            g[p - 1] = 0.0;
        }
        Ok((ll, g))
    }

    fn hessian(&mut self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let mut h = fd_hessian(|t| Ok(self.value_grad(t)?.1), theta, 1e-5)?;
        if self.alpha_fixed.is_some() {
            let p = theta.len();
            for i in 0..p {
                h[(i, p - 1)] = 0.0;
                h[(p - 1, i)] = 0.0;
            }
            h[(p - 1, p - 1)] = -1.0;
        }
        Ok(h)
    }

    fn check(&self, theta: &[f64]) -> Result<()> {
        check_separation(self.d, theta, self.d.k())
    }
}

/// Design and intercept groups used by the fixed-point estimator.
pub(crate) fn fpl_design(ds: &Dataset, spec: &FitSpec) -> Result<(Design, Vec<usize>)> {
    let (gmap, gnames) = groups(ds, spec.fixed_effects, true)?;
    let d = Design::build(ds, household_columns(ds), &gmap, gnames)?;
    reject_collinear(&d)?;
    Ok((d, gmap))
}

/// Nested fixed-point estimator. The interaction is kept inside the
/// contraction region `[0, bound - 1e-6]`.
pub fn fit_fpl(ds: &Dataset, spec: &FitSpec) -> Result<FitResult> {
    let ks = slope_count(ds);
    let (d, gmap) = fpl_design(ds, spec)?;
    let scale: Vec<f64> = ds
        .villages
        .iter()
        .map(|v| if spec.scale_beliefs { participation_scale(v) } else { Ok(1.0) })
        .collect::<Result<_>>()?;
    let alpha_max = contraction_bound(spec.error) - 1e-6;
    let alpha_fixed = if spec.include_belief { None } else { Some(0.0) };
    let mut obj = FplLik {
        d: &d,
        dist: spec.error,
        scale,
        alpha_fixed,
    };
    let p = d.k() + d.n_groups() + 1;

    // Start from the belief-regressor estimate mapped into these coordinates.
    let mut br_spec = spec.clone();
    br_spec.estimator = Estimator::Br;
    let mut theta0 = start_values(&d);
    theta0.push(0.0);
    if let Ok(br) = fit_br(ds, &br_spec) {
        let a = br.params.interaction.clamp(0.0, alpha_max);
        let slopes = [br.params.price_coef, br.params.wealth_coef];
        for (j, b) in slopes.iter().chain(br.params.covariate_coefs.iter()).enumerate() {
            theta0[j] = b * d.scale[j];
        }
        for (vi, v) in ds.villages.iter().enumerate() {
            let mut a0 = br.params.intercept_for(v.id).unwrap_or(0.0);
            for j in 0..d.k() {
                a0 += theta0[j] / d.scale[j] * d.center[j];
            }
            theta0[d.k() + gmap[vi]] = a0;
        }
        if spec.include_belief {
            theta0[p - 1] = a;
        }
    }
    let mut lo = vec![f64::NEG_INFINITY; p];
    let mut hi = vec![f64::INFINITY; p];
    lo[p - 1] = 0.0;
    hi[p - 1] = if spec.include_belief { alpha_max } else { 0.0 };
    let opt = maximize(&mut obj, &theta0, &lo, &hi, &NewtonOptions::default())?;
    check_perfect_fit(&d, &opt)?;
    let alpha = opt.theta[p - 1];
    let solved = obj.solve(&opt.theta)?;
    let pis: BTreeMap<u32, f64> = ds.villages.iter().zip(&solved).map(|(v, s)| (v.id, s.pi)).collect();

    let t = d.destandardize_jacobian();
    let base = &t * nalgebra::DVector::from_column_slice(&opt.theta[..p - 1]);
    let slopes: Vec<f64> = base.iter().take(ks).cloned().collect();
    let mut names = slope_names(ds);
    names.push("interaction".into());
    let mut est = slopes.clone();
    est.push(alpha);
    let (rows_int, intercepts) = match spec.fixed_effects {
        FixedEffects::None => {
            names.push("intercept".into());
            est.push(base[ks]);
            (vec![0usize], Intercepts::Common(base[ks]))
        }
        FixedEffects::Homogeneity { .. } => {
            let mut xi = BTreeMap::new();
            for (vi, v) in ds.villages.iter().enumerate() {
                names.push(format!("xi[{}]", v.id));
                est.push(base[ks + gmap[vi]]);
                xi.insert(v.id, base[ks + gmap[vi]]);
            }
            (gmap.clone(), Intercepts::PerVillage(xi))
        }
    };
    let mut jac = DMatrix::zeros(est.len(), p);
    for j in 0..ks {
        for c in 0..p - 1 {
            jac[(j, c)] = t[(j, c)];
        }
    }
    jac[(ks, p - 1)] = if spec.include_belief { 1.0 } else { 0.0 };
    for (r, &g) in rows_int.iter().enumerate() {
        for c in 0..p - 1 {
            jac[(ks + 1 + r, c)] = t[(ks + g, c)];
        }
    }
    let at_boundary = spec.include_belief && opt.at_bound[p - 1];
    let gradient_norm = opt.projected_gradient_norm();
    let mut information = -opt.hessian;
    if !spec.include_belief {
        information[(p - 1, p - 1)] = 1.0;
    }
    Ok(FitResult {
        spec: spec.clone(),
        params: IndexParams {
            price_coef: slopes[0],
            wealth_coef: slopes[1],
            covariate_coefs: slopes[2..].to_vec(),
            interaction: alpha,
            intercepts,
            error: spec.error,
        },
        names,
        estimates: est,
        loglik: opt.value,
        gradient_norm,
        converged: opt.converged,
        at_boundary,
        iterations: opt.iterations,
        n_obs: d.n(),
        village_beliefs: pis,
        dropped_columns: vec![],
        internal_theta: opt.theta,
        information,
        jacobian: jac,
    })
}

/// Log-likelihood and analytic score at optimizer coordinates `theta`, for
/// checking the score against finite differences.
pub fn loglik_and_score(ds: &Dataset, spec: &FitSpec, theta: &[f64]) -> Result<(f64, Vec<f64>)> {
    match spec.estimator {
        Estimator::Fpl => {
            let (gmap, gnames) = groups(ds, spec.fixed_effects, true)?;
            let d = Design::build(ds, household_columns(ds), &gmap, gnames)?;
            let scale = ds
                .villages
                .iter()
                .map(|v| if spec.scale_beliefs { participation_scale(v) } else { Ok(1.0) })
                .collect::<Result<_>>()?;
            let mut obj = FplLik {
                d: &d,
                dist: spec.error,
                scale,
                alpha_fixed: if spec.include_belief { None } else { Some(0.0) },
            };
            obj.value_grad(theta)
        }
        _ => {
            let beliefs = estimate_village_beliefs(ds, spec.scale_beliefs)?;
            let mut cols = household_columns(ds);
            if spec.include_belief && spec.fixed_effects == FixedEffects::None {
                cols.push(Column::Village("belief".into(), belief_vec(ds, &beliefs)));
            }
            let (gmap, gnames) = groups(ds, spec.fixed_effects, false)?;
            let d = Design::build(ds, cols, &gmap, gnames)?;
            let mut obj = BinaryLik { d: &d, dist: spec.error };
            obj.value_grad(theta)
        }
    }
}

/// Log-likelihood of `params` on `ds` with each village's belief set to
/// `beliefs[village]`.
pub fn loglik_at(ds: &Dataset, params: &IndexParams, beliefs: &BTreeMap<u32, f64>) -> Result<f64> {
    let mut ll = 0.0;
    for v in &ds.villages {
        let c = params.intercept_for(v.id)?;
        let pi = *beliefs
            .get(&v.id)
            .ok_or_else(|| Error::input(format!("no belief for village {}", v.id)))?;
        for h in v.participants() {
            let eta = params.base_index(h.price, h.wealth, &h.covariates, c) + params.interaction * pi;
            ll += params.error.loglik_terms(eta, h.outcome).0;
        }
    }
    Ok(ll)
}
