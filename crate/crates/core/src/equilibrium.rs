//! Village equilibria of expected adoption.
//!
//! In a village the expected adoption rate `pi` solves
//! `pi = mean_h F(base_h + alpha * pi)`, where `base_h` is the household index
//! without the belief term. The map is a contraction when
//! `|alpha| * sup f < 1`.

use crate::dist::ErrorDist;
use crate::error::{Error, Result};
use crate::model::{IndexParams, PolicyScenario, Village};
use serde::{Deserialize, Serialize};

/// Largest interaction for which the take-up map is a contraction.
pub fn contraction_bound(dist: ErrorDist) -> f64 {
    1.0 / dist.sup_density()
}

pub fn satisfies_contraction(alpha: f64, dist: ErrorDist) -> bool {
    alpha.abs() * dist.sup_density() < 1.0
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FixedPointOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
    pub bisection_iter: usize,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            tol: 1e-12,
            max_iter: 10_000,
            damping: 1.0,
            bisection_iter: 200,
        }
    }
}

/// Outcome of a scalar fixed-point solve. `residual` is `value - map(value)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves `x = map(x)` on `[0, 1]` by damped iteration. When the iteration
/// stalls or oscillates it falls back to bisection on `x - map(x)`.
pub fn fixed_point_iterate<M: Fn(f64) -> f64>(
    map: M,
    init: f64,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    if !(init.is_finite() && (0.0..=1.0).contains(&init)) {
        return Err(Error::input(format!("initial value {init} outside [0, 1]")));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::input(format!("damping {} outside (0, 1]", opts.damping)));
    }
    let mut x = init;
    let mut prev_abs = f64::INFINITY;
    let mut slow = 0usize;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let fx = map(x);
        if !fx.is_finite() {
            return Err(Error::Numerical(format!("map returned {fx} at {x}")));
        }
        let r = x - fx;
        if r.abs() < opts.tol {
            return Ok(FixedPointResult {
                value: x,
                residual: r,
                iterations,
                converged: true,
            });
        }
        if r.abs() > 0.999 * prev_abs {
            slow += 1;
            if slow >= 25 {
                break;
            }
        } else {
            slow = 0;
        }
        prev_abs = r.abs();
        x = ((1.0 - opts.damping) * x + opts.damping * fx).clamp(0.0, 1.0);
    }
    bisect_fixed_point(&map, opts, iterations)
}

fn bisect_fixed_point<M: Fn(f64) -> f64>(
    map: &M,
    opts: &FixedPointOptions,
    spent: usize,
) -> Result<FixedPointResult> {
    let g = |x: f64| x - map(x);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (glo, ghi) = (g(lo), g(hi));
    if glo.abs() < opts.tol {
        return Ok(done(lo, glo, spent, true));
    }
    if ghi.abs() < opts.tol {
        return Ok(done(hi, ghi, spent, true));
    }
    if glo > 0.0 || ghi < 0.0 {
        return Err(Error::solver(
            "map does not send [0, 1] into itself; no bracket for bisection",
            glo.abs().min(ghi.abs()),
        ));
    }
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for it in 0..opts.bisection_iter {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm.abs() < best.0 {
            best = (gm.abs(), mid, gm);
        }
        if gm.abs() < opts.tol {
            return Ok(done(mid, gm, spent + it + 1, true));
        }
        if gm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if best.0 < opts.tol {
        return Ok(done(best.1, best.2, spent + opts.bisection_iter, true));
    }
    Err(Error::solver(
        format!("fixed point not found after {} iterations", spent + opts.bisection_iter),
        best.0,
    ))
}

fn done(value: f64, residual: f64, iterations: usize, converged: bool) -> FixedPointResult {
    FixedPointResult {
        value,
        residual,
        iterations,
        converged,
    }
}

/// Right-hand side of the village equilibrium condition for a fixed set of
/// household indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TakeupMap {
    pub base: Vec<f64>,
    pub interaction: f64,
    pub error: ErrorDist,
}

impl TakeupMap {
    /// Everyone in the village faces `price`.
    pub fn baseline(village: &Village, params: &IndexParams, price: f64) -> Result<Self> {
        Self::build(village, params, |_| price)
    }

    /// Prices follow the means-tested scenario.
    pub fn policy(village: &Village, params: &IndexParams, scenario: &PolicyScenario) -> Result<Self> {
        scenario.validate()?;
        Self::build(village, params, |y| scenario.price_for(y))
    }

    fn build<P: Fn(f64) -> f64>(village: &Village, params: &IndexParams, price: P) -> Result<Self> {
        let intercept = params.intercept_for(village.id)?;
        let mut base = Vec::new();
        for h in village.participants() {
            params.check_covariates(&h.covariates)?;
            base.push(params.base_index(price(h.wealth), h.wealth, &h.covariates, intercept));
        }
        if base.is_empty() {
            return Err(Error::input(format!("village {} has no participants", village.id)));
        }
        Ok(TakeupMap {
            base,
            interaction: params.interaction,
            error: params.error,
        })
    }

    pub fn rhs(&self, pi: f64) -> f64 {
        let shift = self.interaction * pi;
        self.base.iter().map(|b| self.error.cdf(b + shift)).sum::<f64>() / self.base.len() as f64
    }

    /// Derivative of [`TakeupMap::rhs`] in `pi`.
    pub fn slope(&self, pi: f64) -> f64 {
        let shift = self.interaction * pi;
        self.interaction * self.base.iter().map(|b| self.error.pdf(b + shift)).sum::<f64>()
            / self.base.len() as f64
    }

    pub fn solve(&self, opts: &FixedPointOptions) -> Result<FixedPointResult> {
        if self.interaction == 0.0 {
            let v = self.rhs(0.0);
            return Ok(done(v, 0.0, 1, true));
        }
        fixed_point_iterate(|p| self.rhs(p), self.rhs(0.5), opts)
    }
}

/// Equilibrium belief when every participant faces `price`.
pub fn solve_pi_baseline(
    village: &Village,
    params: &IndexParams,
    price: f64,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    TakeupMap::baseline(village, params, price)?.solve(opts)
}

/// Equilibrium belief under a means-tested subsidy.
pub fn solve_pi_policy(
    village: &Village,
    params: &IndexParams,
    scenario: &PolicyScenario,
    opts: &FixedPointOptions,
) -> Result<FixedPointResult> {
    TakeupMap::policy(village, params, scenario)?.solve(opts)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    pub roots: Vec<f64>,
    pub contraction_holds: bool,
}

impl UniquenessReport {
    pub fn is_unique(&self) -> bool {
        self.roots.len() == 1
    }
}

/// Finds every root of `pi - rhs(pi)` on a grid of `grid_size` points over
/// `[0, 1]`, polishing each sign change by bisection. Roots are enumerated,
/// never selected.
pub fn uniqueness_scan(map: &TakeupMap, grid_size: usize) -> Result<UniquenessReport> {
    if grid_size < 3 {
        return Err(Error::input("uniqueness scan needs at least 3 grid points"));
    }
    let g = |x: f64| x - map.rhs(x);
    let xs: Vec<f64> = (0..grid_size).map(|i| i as f64 / (grid_size - 1) as f64).collect();
    let gs: Vec<f64> = xs.iter().map(|&x| g(x)).collect();
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..grid_size - 1 {
        let (a, b) = (xs[i], xs[i + 1]);
        let (ga, gb) = (gs[i], gs[i + 1]);
        if ga == 0.0 {
            push_root(&mut roots, a);
            continue;
        }
        if ga * gb < 0.0 {
            let (mut lo, mut hi, mut glo) = (a, b, ga);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let gm = g(mid);
                if gm == 0.0 || hi - lo < 1e-15 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == (glo < 0.0) {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
            }
            push_root(&mut roots, 0.5 * (lo + hi));
        }
    }
    if gs[grid_size - 1] == 0.0 {
        push_root(&mut roots, 1.0);
    }
    Ok(UniquenessReport {
        roots,
        contraction_holds: satisfies_contraction(map.interaction, map.error),
    })
}

fn push_root(roots: &mut Vec<f64>, r: f64) {
    if roots.last().is_none_or(|&last| (r - last).abs() > 1e-9) {
        roots.push(r);
    }
}
