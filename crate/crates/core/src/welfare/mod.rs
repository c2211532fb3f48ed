//! Compensating variation under a price and spillover change.
//!
//! For one household the compensating variation `S` is the income change
//! that restores the pre-policy utility: negative for a gain. Its
//! distribution is identified up to the split of the interaction between the
//! adopting and non-adopting states. Mean compensating variation is reported
//! as a welfare gain, `-E[S]`, so positive numbers are gains.

mod policy;

pub use policy::{
    comparative_statics, deadweight_loss, evaluate_policy, evaluate_policy_with_beliefs, net_cv,
    solve_village_beliefs, subsidy_spending, threshold_for_share, ComparativeRow, PolicyOptions,
    PolicyReport, VillageBeliefs, VillagePolicyRow,
};

use crate::error::{Error, Result};
use crate::model::{structural_betas, IndexParams, PolicyScenario, SpilloverSplit};
use crate::quadrature::Simpson;
use serde::{Deserialize, Serialize};

/// Which side of the means test a household is on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Eligible,
    Ineligible,
}

/// Shape of the compensating-variation distribution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Expected adoption does not fall.
    PiUp,
    /// Expected adoption falls; interior given by the adopting state.
    PiDownAdoptSide,
    /// Expected adoption falls; interior given by the non-adopting state.
    PiDownAbstainSide,
}

/// One household facing a policy change.
#[derive(Clone, Copy, Debug)]
pub struct WelfareCase<'a> {
    pub params: &'a IndexParams,
    pub wealth: f64,
    pub covariates: &'a [f64],
    pub intercept: f64,
    pub scenario: PolicyScenario,
    pub pi0: f64,
    pub pi1: f64,
}

#[derive(Clone, Copy, Debug)]
enum Interior {
    /// CDF is `F(index at price p_new - a, wealth y)`.
    Adopt { belief_term: f64 },
    /// CDF is `1 - F(index at price p0 + a, wealth y + a)`.
    Abstain { belief_term: f64 },
}

/// Closed-form distribution of the compensating variation for one household.
#[derive(Clone, Copy, Debug)]
pub struct CvLaw<'a> {
    case: WelfareCase<'a>,
    pub group: Group,
    pub regime: Regime,
    /// Below this value the CDF is 0.
    pub lower: f64,
    /// At and above this value the CDF is 1.
    pub upper: f64,
    new_price: f64,
    interior: Interior,
}

/// CDF sampled on an evenly spaced grid across the support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvCdf {
    pub group: Group,
    pub regime: Regime,
    pub support_lo: f64,
    pub support_hi: f64,
    pub grid: Vec<(f64, f64)>,
}

/// Number of evenly spaced CDF grid points over the support.
pub const CDF_GRID_POINTS: usize = 401;

fn check_case(case: &WelfareCase, split: &SpilloverSplit) -> Result<()> {
    case.scenario.validate()?;
    case.params.check_covariates(case.covariates)?;
    let alpha = case.params.interaction;
    if alpha < 0.0 {
        return Err(Error::WelfarePrecondition(format!("negative interaction {alpha}")));
    }
    if !(0.0..=alpha).contains(&split.adopt) {
        return Err(Error::input(format!(
            "spillover share {} outside [0, {alpha}]",
            split.adopt
        )));
    }
    if (split.total() - alpha).abs() > 1e-9 * alpha.max(1.0) {
        return Err(Error::input(format!(
            "split total {} does not match the interaction {alpha}",
            split.total()
        )));
    }
    for p in [case.pi0, case.pi1] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::input(format!("belief {p} outside [0, 1]")));
        }
    }
    if !(case.wealth.is_finite() && case.intercept.is_finite()) {
        return Err(Error::input("non-finite wealth or intercept"));
    }
    Ok(())
}

impl<'a> CvLaw<'a> {
    pub fn new(case: WelfareCase<'a>, group: Group, split: SpilloverSplit) -> Result<Self> {
        check_case(&case, &split)?;
        let betas = structural_betas(case.params)?;
        let alpha = case.params.interaction;
        let s = &case.scenario;
        let new_price = match group {
            Group::Eligible => s.subsidized_price,
            Group::Ineligible => s.base_price,
        };
        let dpi = case.pi1 - case.pi0;
        let alpha1 = split.adopt;
        let adopt_threshold = new_price - s.base_price - alpha1 / betas.adopt * dpi;
        let abstain_threshold = (alpha - alpha1) / betas.abstain * dpi;
        let base_term = alpha * case.pi0;
        let (regime, lower, upper, interior) = if adopt_threshold <= abstain_threshold {
            let regime = if dpi >= 0.0 { Regime::PiUp } else { Regime::PiDownAdoptSide };
            (
                regime,
                adopt_threshold,
                abstain_threshold,
                Interior::Adopt {
                    belief_term: base_term + alpha1 * dpi,
                },
            )
        } else {
            (
                Regime::PiDownAbstainSide,
                abstain_threshold,
                adopt_threshold,
                Interior::Abstain {
                    belief_term: base_term + (alpha - alpha1) * dpi,
                },
            )
        };
        Ok(CvLaw {
            case,
            group,
            regime,
            lower,
            upper,
            new_price,
            interior,
        })
    }

    fn index(&self, price: f64, wealth: f64, belief_term: f64) -> f64 {
        let p = self.case.params;
        p.base_index(price, wealth, self.case.covariates, self.case.intercept) + belief_term
    }

    /// Interior CDF formula as a function of the transfer `a`.
    fn interior_cdf(&self, a: f64) -> f64 {
        let y = self.case.wealth;
        let dist = self.case.params.error;
        match self.interior {
            Interior::Adopt { belief_term } => dist.cdf(self.index(self.new_price - a, y, belief_term)),
            Interior::Abstain { belief_term } => {
                1.0 - dist.cdf(self.index(self.case.scenario.base_price + a, y + a, belief_term))
            }
        }
    }

    /// `P(S <= a)`.
    pub fn cdf(&self, a: f64) -> f64 {
        if a < self.lower {
            0.0
        } else if a >= self.upper {
            1.0
        } else {
            self.interior_cdf(a)
        }
    }

    /// `E[S]` by integrating in the price variable.
    pub fn mean_transfer(&self, rule: &Simpson) -> Result<f64> {
        let y = self.case.wealth;
        let dist = self.case.params.error;
        match self.interior {
            Interior::Adopt { belief_term } => {
                let q = |p: f64| dist.cdf(self.index(p, y, belief_term));
                let pn = self.new_price;
                let loss = rule.integrate(q, pn, pn - self.lower)?;
                let gain = rule.integrate(|p| 1.0 - q(p), pn - self.upper, pn)?;
                Ok(-loss + gain)
            }
            Interior::Abstain { belief_term } => {
                let p0 = self.case.scenario.base_price;
                let q0 = |p: f64| 1.0 - dist.cdf(self.index(p, y + p - p0, belief_term));
                let a = rule.integrate(q0, p0 + self.lower, p0)?;
                let b = rule.integrate(|p| 1.0 - q0(p), p0, p0 + self.upper)?;
                Ok(-a + b)
            }
        }
    }

    /// `E[S]` by integrating the interior CDF in the transfer variable.
    pub fn mean_transfer_in_transfer_units(&self, rule: &Simpson) -> Result<f64> {
        let lower_part = rule.integrate(|a| self.interior_cdf(a), self.lower, 0.0)?;
        let upper_part = rule.integrate(|a| 1.0 - self.interior_cdf(a), 0.0, self.upper)?;
        Ok(-lower_part + upper_part)
    }

    /// `E[S]` from the tail integrals of the piecewise CDF.
    pub fn mean_transfer_from_cdf(&self, rule: &Simpson) -> Result<f64> {
        let lo = self.lower.min(0.0);
        let hi = self.upper.max(0.0);
        let mut cuts = vec![lo, self.lower, 0.0, self.upper, hi];
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mid = 0.5 * (a + b);
            // Evaluate the CDF from inside each piece so jumps sit on the
            // piece boundaries.
            let piece = |x: f64| {
                if mid < self.lower {
                    0.0
                } else if mid >= self.upper {
                    1.0
                } else {
                    self.interior_cdf(x)
                }
            };
            if b <= 0.0 {
                total -= rule.integrate(piece, a, b)?;
            } else {
                total += rule.integrate(|x| 1.0 - piece(x), a, b)?;
            }
        }
        Ok(total)
    }

    /// Mean welfare gain, `-E[S]`.
    pub fn mean_gain(&self, rule: &Simpson) -> Result<f64> {
        Ok(-self.mean_transfer(rule)?)
    }

    pub fn grid(&self) -> CvCdf {
        let (lo, hi) = (self.lower, self.upper);
        let grid = if hi > lo {
            (0..CDF_GRID_POINTS)
                .map(|i| {
                    let a = if i + 1 == CDF_GRID_POINTS {
                        hi
                    } else {
                        lo + (hi - lo) * i as f64 / (CDF_GRID_POINTS - 1) as f64
                    };
                    (a, self.cdf(a))
                })
                .collect()
        } else {
            vec![(lo, 1.0)]
        };
        CvCdf {
            group: self.group,
            regime: self.regime,
            support_lo: lo,
            support_hi: hi,
            grid,
        }
    }

    /// Belief-weighted term `alpha * pi` that enters the interior CDF.
    pub fn effective_belief(&self) -> f64 {
        let alpha = self.case.params.interaction;
        let term = match self.interior {
            Interior::Adopt { belief_term } | Interior::Abstain { belief_term } => belief_term,
        };
        if alpha == 0.0 {
            self.case.pi0
        } else {
            term / alpha
        }
    }
}

/// Compensating-variation CDF for an eligible household.
pub fn cv_cdf_eligible(case: WelfareCase, split: SpilloverSplit) -> Result<CvCdf> {
    Ok(CvLaw::new(case, Group::Eligible, split)?.grid())
}

/// Compensating-variation CDF for an ineligible household.
pub fn cv_cdf_ineligible(case: WelfareCase, split: SpilloverSplit) -> Result<CvCdf> {
    Ok(CvLaw::new(case, Group::Ineligible, split)?.grid())
}

/// Mean welfare gain of an eligible household.
pub fn mean_cv_eligible(case: WelfareCase, split: SpilloverSplit) -> Result<f64> {
    CvLaw::new(case, Group::Eligible, split)?.mean_gain(&Simpson::default())
}

/// Mean welfare gain of an ineligible household.
pub fn mean_cv_ineligible(case: WelfareCase, split: SpilloverSplit) -> Result<f64> {
    CvLaw::new(case, Group::Ineligible, split)?.mean_gain(&Simpson::default())
}

/// Mean gain over a grid of spillover splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WelfareBounds {
    pub group: Group,
    /// Gain with all spillover in the non-adopting state.
    pub lower: f64,
    /// Gain with the spillover split evenly.
    pub symmetric: f64,
    /// Gain with all spillover in the adopting state.
    pub upper: f64,
    /// `(alpha1, gain)` pairs, sorted by `alpha1`.
    pub curve: Vec<(f64, f64)>,
}

/// Evaluates the mean gain at `alpha1` in `{0, alpha/2, alpha}` plus any
/// extra grid points inside `[0, alpha]`.
pub fn welfare_bounds(case: WelfareCase, group: Group, extra_grid: &[f64]) -> Result<WelfareBounds> {
    let alpha = case.params.interaction;
    let mut grid = vec![0.0, 0.5 * alpha, alpha];
    for &g in extra_grid {
        if !(0.0..=alpha).contains(&g) {
            return Err(Error::input(format!("grid value {g} outside [0, {alpha}]")));
        }
        grid.push(g);
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let rule = Simpson::default();
    let mut curve = Vec::with_capacity(grid.len());
    for &a1 in &grid {
        let split = crate::model::spillover_split(alpha, a1)?;
        curve.push((a1, CvLaw::new(case, group, split)?.mean_gain(&rule)?));
    }
    let at = |x: f64| curve.iter().find(|(a, _)| *a == x).map(|c| c.1).unwrap();
    Ok(WelfareBounds {
        group,
        lower: at(0.0),
        symmetric: at(0.5 * alpha),
        upper: at(alpha),
        curve,
    })
}
