//! Spatially correlated shocks and heterogeneous beliefs.
//!
//! Households sit uniformly at random in a square whose side grows with the
//! number of households at a fixed density. Shocks are a Gaussian field with
//! exponential correlation in L1 distance.

mod beliefs;
mod fit;
mod study;

pub use beliefs::{
    conditional_cdf, independent_benchmark, l1_distance, sd_choice_probability, shock_grid,
    shock_weights, solve_conditional_beliefs, BeliefField, BeliefOptions, BeliefProblem,
    Correlogram, PairStructure, DEFAULT_GRID_SIZE, SHOCK_GRID_BOUND,
};
pub use fit::{fit_sd, sd_loglik, SdFitOptions};
pub use study::{convergence_study, ConvergenceRow, ConvergenceStudy};

use crate::error::{Error, Result};
use crate::rng::Rng;
use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Density of households per unit area and the range of the correlogram.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpatialSpec {
    pub density: f64,
    pub correlation_range: f64,
}

/// Side length of the square holding `n` households at `density`.
pub fn region_side(n: usize, density: f64) -> f64 {
    (n as f64 / density).sqrt()
}

/// Uniform locations in `[0, side]^2` with `side = sqrt(n / density)`.
pub fn sample_region(n: usize, density: f64, rng: &mut Rng) -> Result<Vec<[f64; 2]>> {
    if n == 0 || !(density > 0.0 && density.is_finite()) {
        return Err(Error::input("need at least one household and a positive density"));
    }
    let side = region_side(n, density);
    Ok((0..n)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect())
}

/// Draws a standard normal field with correlation `exp(-d / range)` at the
/// given locations. Coincident locations receive identical draws.
pub fn sample_gp(locations: &[[f64; 2]], range: f64, rng: &mut Rng) -> Result<Vec<f64>> {
    if locations.is_empty() {
        return Ok(vec![]);
    }
    if !(range > 0.0 && range.is_finite()) {
        return Err(Error::input(format!("correlation range {range} must be positive")));
    }
    let mut order: Vec<usize> = (0..locations.len()).collect();
    order.sort_by(|&a, &b| {
        locations[a][0]
            .total_cmp(&locations[b][0])
            .then(locations[a][1].total_cmp(&locations[b][1]))
    });
    let mut unique: Vec<[f64; 2]> = Vec::new();
    let mut slot = vec![0usize; locations.len()];
    for &i in &order {
        if unique.last() != Some(&locations[i]) {
            unique.push(locations[i]);
        }
        slot[i] = unique.len() - 1;
    }
    let m = unique.len();
    let cov = DMatrix::from_fn(m, m, |i, j| (-l1_distance(unique[i], unique[j]) / range).exp());
    let mut jitter = 1e-10;
    let chol = loop {
        let mut c = cov.clone();
        for i in 0..m {
            c[(i, i)] += jitter;
        }
        if let Some(ch) = c.cholesky() {
            break ch;
        }
        jitter *= 10.0;
        if jitter > 1e-6 {
            return Err(Error::Numerical(
                "correlation matrix is not positive definite even with jitter 1e-6".into(),
            ));
        }
    };
    let z = DVector::from_fn(m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let x = chol.l() * z;
    Ok(slot.iter().map(|&s| x[s]).collect())
}
