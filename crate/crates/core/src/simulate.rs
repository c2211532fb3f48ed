//! Synthetic villages drawn from the structural model.

use crate::dist::ErrorDist;
use crate::equilibrium::{FixedPointOptions, TakeupMap};
use crate::error::{Error, Result};
use crate::model::{Dataset, Household, IndexParams, Village};
use crate::rng::{self, Rng};
use crate::spatial::{
    sample_gp, sample_region, BeliefOptions, BeliefProblem, Correlogram, PairStructure, SpatialSpec,
    DEFAULT_GRID_SIZE,
};
use rand::Rng as _;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

/// Distribution of household characteristics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HouseholdDraws {
    /// Prices are drawn uniformly from this list.
    pub price_menu: Vec<f64>,
    pub wealth_log_mean: f64,
    pub wealth_log_sd: f64,
    pub children_prob: f64,
    pub max_female_edu: u32,
}

/// 22 evenly spaced prices from 0 to 300.
pub fn standard_price_menu() -> Vec<f64> {
    (0..22).map(|i| 300.0 * i as f64 / 21.0).collect()
}

impl Default for HouseholdDraws {
    fn default() -> Self {
        HouseholdDraws {
            price_menu: standard_price_menu(),
            wealth_log_mean: 14760f64.ln(),
            wealth_log_sd: 1.0,
            children_prob: 0.6,
            max_female_edu: 12,
        }
    }
}

pub const COVARIATE_NAMES: [&str; 2] = ["children", "female_edu"];

/// Characteristics of one drawn household.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawnHousehold {
    pub price: f64,
    pub wealth: f64,
    pub covariates: Vec<f64>,
}

impl HouseholdDraws {
    pub fn validate(&self) -> Result<()> {
        if self.price_menu.is_empty() || self.price_menu.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::input("price menu must be non-empty with non-negative prices"));
        }
        if !(self.wealth_log_sd > 0.0) || !(0.0..=1.0).contains(&self.children_prob) {
            return Err(Error::input("invalid wealth or covariate distribution"));
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut Rng) -> DrawnHousehold {
        self.draw_with_menu(&self.price_menu, rng)
    }

    pub fn draw_with_menu(&self, menu: &[f64], rng: &mut Rng) -> DrawnHousehold {
        let price = menu[rng.random_range(0..menu.len())];
        let wealth = LogNormal::new(self.wealth_log_mean, self.wealth_log_sd)
            .expect("validated")
            .sample(rng);
        let children = if rng.random::<f64>() < self.children_prob { 1.0 } else { 0.0 };
        let edu = rng.random_range(0..=self.max_female_edu) as f64;
        DrawnHousehold {
            price,
            wealth,
            covariates: vec![children, edu],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VillageSpec {
    pub id: u32,
    pub participants: usize,
    #[serde(default)]
    pub nonparticipants: usize,
    /// Overrides the global price menu for this village.
    #[serde(default)]
    pub price_menu: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub villages: Vec<VillageSpec>,
    pub draws: HouseholdDraws,
    /// Spatially correlated normal shocks when set; independent otherwise.
    #[serde(default)]
    pub spatial: Option<SpatialSpec>,
}

impl SimulationConfig {
    /// `villages` villages of `households` participants each. Village `v`
    /// draws prices from 12 consecutive entries of the standard menu
    /// starting at entry `v mod 11`, so expected adoption differs across
    /// villages.
    pub fn benchmark(villages: usize, households: usize) -> Self {
        let menu = standard_price_menu();
        let specs = (0..villages)
            .map(|v| {
                let start = v % 11;
                VillageSpec {
                    id: v as u32 + 1,
                    participants: households,
                    nonparticipants: 0,
                    price_menu: Some(menu[start..start + 12].to_vec()),
                }
            })
            .collect();
        SimulationConfig {
            villages: specs,
            draws: HouseholdDraws::default(),
            spatial: None,
        }
    }
}

/// Draws a dataset from the model. With independent shocks each village
/// plays its equilibrium belief; with spatial shocks each household acts on
/// its own conditional belief.
pub fn simulate_game(config: &SimulationConfig, params: &IndexParams, seed: u64) -> Result<Dataset> {
    config.draws.validate()?;
    if config.villages.is_empty() {
        return Err(Error::input("simulation needs at least one village"));
    }
    if params.covariate_coefs.len() != COVARIATE_NAMES.len() {
        return Err(Error::input(format!(
            "simulated households carry {} covariates",
            COVARIATE_NAMES.len()
        )));
    }
    if config.spatial.is_some() && params.error != ErrorDist::Probit {
        return Err(Error::input("spatial simulation requires probit shocks"));
    }
    let mut villages = Vec::with_capacity(config.villages.len());
    for (vi, spec) in config.villages.iter().enumerate() {
        if spec.participants == 0 {
            return Err(Error::input(format!("village {} has no participants", spec.id)));
        }
        let menu = spec.price_menu.as_deref().unwrap_or(&config.draws.price_menu);
        let mut g = rng::stream(seed, rng::stream_id(&[vi as u64, 0]));
        let total = spec.participants + spec.nonparticipants;
        let mut households: Vec<Household> = (0..total)
            .map(|i| {
                let d = config.draws.draw_with_menu(menu, &mut g);
                Household {
                    id: spec.id as u64 * 1_000_000 + i as u64,
                    village_id: spec.id,
                    price: d.price,
                    wealth: d.wealth,
                    covariates: d.covariates,
                    location: None,
                    outcome: false,
                    participant: i < spec.participants,
                }
            })
            .collect();
        let intercept = params.intercept_for(spec.id)?;
        let base: Vec<f64> = households[..spec.participants]
            .iter()
            .map(|h| params.base_index(h.price, h.wealth, &h.covariates, intercept))
            .collect();
        match config.spatial {
            None => {
                let map = TakeupMap {
                    base: base.clone(),
                    interaction: params.interaction,
                    error: params.error,
                };
                let pi = map.solve(&FixedPointOptions::default())?.value;
                let mut gs = rng::stream(seed, rng::stream_id(&[vi as u64, 2]));
                for (h, b) in households.iter_mut().zip(&base) {
                    let e = params.error.quantile(gs.random::<f64>().max(f64::MIN_POSITIVE));
                    h.outcome = b + params.interaction * pi + e >= 0.0;
                }
            }
            Some(sp) => {
                let mut gl = rng::stream(seed, rng::stream_id(&[vi as u64, 1]));
                let locations = sample_region(total, sp.density, &mut gl)?;
                for (h, l) in households.iter_mut().zip(&locations) {
                    h.location = Some(*l);
                }
                let part_loc = &locations[..spec.participants];
                let mut gs = rng::stream(seed, rng::stream_id(&[vi as u64, 2]));
                let shocks = sample_gp(part_loc, sp.correlation_range, &mut gs)?;
                let pairs = PairStructure::new(
                    part_loc,
                    &Correlogram::Exponential {
                        range: sp.correlation_range,
                    },
                );
                let field = BeliefProblem {
                    pairs: &pairs,
                    base: &base,
                    interaction: params.interaction,
                    grid_size: DEFAULT_GRID_SIZE,
                }
                .solve(None, &BeliefOptions::default())?;
                for (i, h) in households[..spec.participants].iter_mut().enumerate() {
                    let e = shocks[i];
                    h.outcome = base[i] + params.interaction * field.belief_at(i, e) + e >= 0.0;
                }
            }
        }
        villages.push(Village::new(spec.id, households, total));
    }
    Dataset::new(villages, COVARIATE_NAMES.iter().map(|s| s.to_string()).collect())
}
