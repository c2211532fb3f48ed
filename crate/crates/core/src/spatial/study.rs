//! Distance between heterogeneous beliefs and the independent-shock
//! benchmark as the village grows at fixed density.

use super::beliefs::{BeliefOptions, BeliefProblem, Correlogram, PairStructure};
use super::sample_region;
use crate::error::{Error, Result};
use crate::model::IndexParams;
use crate::rng;
use crate::simulate::HouseholdDraws;
use crate::ErrorDist;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub sizes: Vec<usize>,
    pub ranges: Vec<f64>,
    pub density: f64,
    pub replications: usize,
    pub params: IndexParams,
    pub draws: HouseholdDraws,
    pub grid_size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub households: usize,
    pub correlation_range: f64,
    pub density: f64,
    pub replications: usize,
    /// Replication average of the shock-weighted mean absolute deviation.
    pub mean_abs_deviation: f64,
    /// Replication average of the largest deviation on the grid.
    pub sup_deviation: f64,
    pub mean_sweeps: f64,
}

/// Solves the belief field for every size, correlation range and
/// replication. Replication `r` at size `n` uses the same locations and
/// households for every range.
pub fn convergence_study(study: &ConvergenceStudy) -> Result<Vec<ConvergenceRow>> {
    if study.params.error != ErrorDist::Probit {
        return Err(Error::input("the spatial model uses normal shocks; set error = probit"));
    }
    if study.replications == 0 || study.sizes.is_empty() || study.ranges.is_empty() {
        return Err(Error::input("study needs sizes, ranges and at least one replication"));
    }
    let intercept = study.params.intercept_for(0)?;
    let mut rows = Vec::new();
    for &n in &study.sizes {
        let mut acc = vec![(0.0, 0.0, 0.0); study.ranges.len()];
        for r in 0..study.replications {
            let mut g = rng::stream(study.seed, rng::stream_id(&[n as u64, r as u64]));
            let locations = sample_region(n, study.density, &mut g)?;
            let base: Vec<f64> = (0..n)
                .map(|_| {
                    let h = study.draws.draw(&mut g);
                    study.params.base_index(h.price, h.wealth, &h.covariates, intercept)
                })
                .collect();
            for (i, &range) in study.ranges.iter().enumerate() {
                let pairs = PairStructure::new(&locations, &Correlogram::Exponential { range });
                let field = BeliefProblem {
                    pairs: &pairs,
                    base: &base,
                    interaction: study.params.interaction,
                    grid_size: study.grid_size,
                }
                .solve(None, &BeliefOptions::default())?;
                let (mean, sup) = field.deviation_from_benchmark();
                acc[i].0 += mean;
                acc[i].1 += sup;
                acc[i].2 += field.sweeps as f64;
            }
        }
        let reps = study.replications as f64;
        for (i, &range) in study.ranges.iter().enumerate() {
            rows.push(ConvergenceRow {
                households: n,
                correlation_range: range,
                density: study.density,
                replications: study.replications,
                mean_abs_deviation: acc[i].0 / reps,
                sup_deviation: acc[i].1 / reps,
                mean_sweeps: acc[i].2 / reps,
            });
        }
    }
    Ok(rows)
}
