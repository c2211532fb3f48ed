//! Core data types: households, villages, index parameters and policies.

use crate::dist::ErrorDist;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

/// One surveyed household.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Household {
    pub id: u64,
    pub village_id: u32,
    pub price: f64,
    pub wealth: f64,
    pub covariates: Vec<f64>,
    pub location: Option<[f64; 2]>,
    pub outcome: bool,
    pub participant: bool,
}

/// A village and the households sampled from it.
///
/// `total_households` counts every household of the village, participants or
/// not. `belief_hat` and `xi_bar` are filled in by estimation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Village {
    pub id: u32,
    pub households: Vec<Household>,
    pub total_households: usize,
    pub belief_hat: Option<f64>,
    pub xi_bar: Option<f64>,
}

impl Village {
    pub fn new(id: u32, households: Vec<Household>, total_households: usize) -> Self {
        Village {
            id,
            households,
            total_households,
            belief_hat: None,
            xi_bar: None,
        }
    }

    pub fn participants(&self) -> impl Iterator<Item = &Household> {
        self.households.iter().filter(|h| h.participant)
    }

    pub fn participant_count(&self) -> usize {
        self.participants().count()
    }

    pub fn adoption_rate(&self) -> Option<f64> {
        let n = self.participant_count();
        if n == 0 {
            return None;
        }
        Some(self.participants().filter(|h| h.outcome).count() as f64 / n as f64)
    }
}

/// A collection of villages with named covariates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub villages: Vec<Village>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    /// Validates ids, covariate lengths and household fields.
    pub fn new(villages: Vec<Village>, covariate_names: Vec<String>) -> Result<Self> {
        let ds = Dataset {
            villages,
            covariate_names,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.villages.is_empty() {
            return Err(Error::input("dataset has no villages"));
        }
        let mut village_ids = BTreeSet::new();
        let mut household_ids = BTreeSet::new();
        let k = self.covariate_names.len();
        for v in &self.villages {
            if !village_ids.insert(v.id) {
                return Err(Error::input(format!("duplicate village id {}", v.id)));
            }
            if v.participant_count() == 0 {
                return Err(Error::input(format!("village {} has no participants", v.id)));
            }
            if v.total_households < v.households.len() {
                return Err(Error::input(format!(
                    "village {}: total_households {} is below the {} listed households",
                    v.id,
                    v.total_households,
                    v.households.len()
                )));
            }
            for h in &v.households {
                if !household_ids.insert(h.id) {
                    return Err(Error::input(format!("duplicate household id {}", h.id)));
                }
                if h.village_id != v.id {
                    return Err(Error::input(format!(
                        "household {} lists village {} but is stored under {}",
                        h.id, h.village_id, v.id
                    )));
                }
                if h.covariates.len() != k {
                    return Err(Error::input(format!(
                        "household {} has {} covariates, expected {}",
                        h.id,
                        h.covariates.len(),
                        k
                    )));
                }
                let finite = h.price.is_finite()
                    && h.wealth.is_finite()
                    && h.covariates.iter().all(|c| c.is_finite())
                    && h.location.is_none_or(|l| l[0].is_finite() && l[1].is_finite());
                if !finite {
                    return Err(Error::input(format!("household {} has non-finite fields", h.id)));
                }
                if h.price < 0.0 || h.wealth < 0.0 {
                    return Err(Error::input(format!(
                        "household {} has negative price or wealth",
                        h.id
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn household_count(&self) -> usize {
        self.villages.iter().map(|v| v.households.len()).sum()
    }

    pub fn participant_count(&self) -> usize {
        self.villages.iter().map(|v| v.participant_count()).sum()
    }

    pub fn village(&self, id: u32) -> Option<&Village> {
        self.villages.iter().find(|v| v.id == id)
    }

    pub fn village_ids(&self) -> Vec<u32> {
        self.villages.iter().map(|v| v.id).collect()
    }

    pub fn has_locations(&self) -> bool {
        self.villages
            .iter()
            .all(|v| v.households.iter().all(|h| h.location.is_some()))
    }
}

/// Intercept of the index: common to all villages or one per village.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intercepts {
    Common(f64),
    PerVillage(BTreeMap<u32, f64>),
}

/// Coefficients of the adoption index
/// `intercept + price_coef*p + wealth_coef*y + covariate_coefs'z + interaction*belief`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub price_coef: f64,
    pub wealth_coef: f64,
    pub covariate_coefs: Vec<f64>,
    pub interaction: f64,
    pub intercepts: Intercepts,
    pub error: ErrorDist,
}

impl IndexParams {
    pub fn intercept_for(&self, village_id: u32) -> Result<f64> {
        match &self.intercepts {
            Intercepts::Common(c) => Ok(*c),
            Intercepts::PerVillage(m) => m
                .get(&village_id)
                .copied()
                .ok_or_else(|| Error::input(format!("no intercept for village {village_id}"))),
        }
    }

    /// Index without the belief term.
    pub fn base_index(&self, price: f64, wealth: f64, covariates: &[f64], intercept: f64) -> f64 {
        let mut s = intercept + self.price_coef * price + self.wealth_coef * wealth;
        for (c, z) in self.covariate_coefs.iter().zip(covariates) {
            s += c * z;
        }
        s
    }

    pub fn check_covariates(&self, covariates: &[f64]) -> Result<()> {
        if covariates.len() != self.covariate_coefs.len() {
            return Err(Error::input(format!(
                "expected {} covariates, got {}",
                self.covariate_coefs.len(),
                covariates.len()
            )));
        }
        Ok(())
    }

    /// Same parameters with the interaction set to zero.
    pub fn without_interaction(&self) -> Self {
        IndexParams {
            interaction: 0.0,
            ..self.clone()
        }
    }
}

/// Probability of adoption for one household.
pub fn demand_probability(
    params: &IndexParams,
    price: f64,
    wealth: f64,
    covariates: &[f64],
    belief: f64,
    intercept: f64,
) -> Result<f64> {
    params.check_covariates(covariates)?;
    if !(0.0..=1.0).contains(&belief) {
        return Err(Error::input(format!("belief {belief} outside [0, 1]")));
    }
    let idx = params.base_index(price, wealth, covariates, intercept) + params.interaction * belief;
    if !idx.is_finite() {
        return Err(Error::input("non-finite index"));
    }
    Ok(params.error.cdf(idx))
}

/// Marginal utilities of income in the adopting and non-adopting states.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalUtilities {
    pub adopt: f64,
    pub abstain: f64,
}

/// Recovers the two marginal utilities of income from the price and wealth
/// coefficients. Both must be positive for welfare analysis.
pub fn structural_betas(params: &IndexParams) -> Result<MarginalUtilities> {
    let adopt = -params.price_coef;
    let abstain = -params.price_coef - params.wealth_coef;
    if !(adopt > 0.0 && abstain > 0.0) {
        return Err(Error::WelfarePrecondition(format!(
            "marginal utilities of income must be positive (adopt {adopt}, abstain {abstain})"
        )));
    }
    Ok(MarginalUtilities { adopt, abstain })
}

/// Inverse of [`structural_betas`]: `(price_coef, wealth_coef)`.
pub fn index_coefs_from_betas(m: MarginalUtilities) -> (f64, f64) {
    (-m.adopt, m.adopt - m.abstain)
}

/// Split of the spillover coefficient between the two utility states.
/// `adopt - abstain` equals the total interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpilloverSplit {
    pub adopt: f64,
    pub abstain: f64,
}

impl SpilloverSplit {
    pub fn total(&self) -> f64 {
        self.adopt - self.abstain
    }
}

/// Builds the split with `adopt` share `alpha1` of a total interaction `alpha`.
pub fn spillover_split(alpha: f64, alpha1: f64) -> Result<SpilloverSplit> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::input(format!("interaction {alpha} must be finite and >= 0")));
    }
    if !(0.0..=alpha).contains(&alpha1) {
        return Err(Error::input(format!("alpha1 {alpha1} outside [0, {alpha}]")));
    }
    Ok(SpilloverSplit {
        adopt: alpha1,
        abstain: alpha1 - alpha,
    })
}

/// Means-tested subsidy: households with wealth at or below `threshold` pay
/// `subsidized_price`, the rest pay `base_price`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyScenario {
    pub base_price: f64,
    pub subsidized_price: f64,
    pub threshold: f64,
}

impl PolicyScenario {
    pub fn new(base_price: f64, subsidized_price: f64, threshold: f64) -> Result<Self> {
        let s = PolicyScenario {
            base_price,
            subsidized_price,
            threshold,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_price.is_finite() && self.subsidized_price.is_finite()) {
            return Err(Error::input("prices must be finite"));
        }
        if self.subsidized_price < 0.0 || self.subsidized_price > self.base_price {
            return Err(Error::input(format!(
                "need 0 <= subsidized price ({}) <= base price ({})",
                self.subsidized_price, self.base_price
            )));
        }
        if self.threshold.is_nan() {
            return Err(Error::input("threshold is NaN"));
        }
        Ok(())
    }

    pub fn is_eligible(&self, wealth: f64) -> bool {
        wealth <= self.threshold
    }

    pub fn price_for(&self, wealth: f64) -> f64 {
        if self.is_eligible(wealth) {
            self.subsidized_price
        } else {
            self.base_price
        }
    }
}

/// Factor that rescales a participant adoption rate to the whole village:
/// `(total - 1) / (participants - 1)`, or 1 when everyone participated.
pub fn participation_scale(village: &Village) -> Result<f64> {
    let n = village.participant_count();
    let total = village.total_households;
    if total < n {
        return Err(Error::input(format!(
            "village {}: total households {} below participant count {}",
            village.id, total, n
        )));
    }
    if total == n {
        return Ok(1.0);
    }
    if n <= 1 {
        return Err(Error::input(format!(
            "village {}: need at least two participants to scale beliefs",
            village.id
        )));
    }
    Ok((n as f64 - 1.0) / (total as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hh(id: u64, participant: bool) -> Household {
        Household {
            id,
            village_id: 1,
            price: 50.0,
            wealth: 100.0,
            covariates: vec![],
            location: None,
            outcome: false,
            participant,
        }
    }

    #[test]
    fn participation_scale_values() {
        let mut hs: Vec<Household> = (0..181).map(|i| hh(i, true)).collect();
        hs.extend((181..226).map(|i| hh(i, false)));
        let v = Village::new(1, hs, 226);
        assert!((participation_scale(&v).unwrap() - 0.8).abs() < 1e-15);
        let full = Village::new(2, (0..10).map(|i| hh(i, true)).collect(), 10);
        assert_eq!(participation_scale(&full).unwrap(), 1.0);
    }

    #[test]
    fn betas_roundtrip() {
        let p = IndexParams {
            price_coef: -0.02,
            wealth_coef: 0.005,
            covariate_coefs: vec![],
            interaction: 1.0,
            intercepts: Intercepts::Common(0.0),
            error: ErrorDist::Logit,
        };
        let b = structural_betas(&p).unwrap();
        assert_eq!(b.adopt, 0.02);
        assert!((b.abstain - 0.015).abs() < 1e-17);
        let (c1, c2) = index_coefs_from_betas(b);
        assert!((c1 - p.price_coef).abs() < 1e-17 && (c2 - p.wealth_coef).abs() < 1e-17);
    }
}
