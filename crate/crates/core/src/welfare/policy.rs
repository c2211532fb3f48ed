//! Village and population welfare of a means-tested subsidy.

use super::{CvLaw, Group, WelfareCase};
use crate::equilibrium::{
    satisfies_contraction, uniqueness_scan, FixedPointOptions, TakeupMap,
};
use crate::error::{Error, Result};
use crate::model::{spillover_split, Dataset, IndexParams, PolicyScenario, SpilloverSplit};
use crate::quadrature::Simpson;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Equilibrium beliefs of one village before and after the policy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VillageBeliefs {
    pub village_id: u32,
    pub pi0: f64,
    pub pi1: f64,
    /// Every equilibrium found by a grid scan, when the map is not a
    /// contraction; otherwise the single solution.
    pub roots0: Vec<f64>,
    pub roots1: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOptions {
    /// Extra `alpha1` values in `[0, alpha]` beyond `{0, alpha/2, alpha}`.
    pub alpha1_grid: Vec<f64>,
    pub fixed_point: FixedPointOptions,
    pub scan_grid: usize,
    pub quadrature: Simpson,
}

impl Default for PolicyOptions {
    fn default() -> Self {
        PolicyOptions {
            alpha1_grid: vec![],
            fixed_point: FixedPointOptions::default(),
            scan_grid: 1001,
            quadrature: Simpson::default(),
        }
    }
}

/// Solves the baseline (everyone at the base price) and policy equilibria
/// of every village.
pub fn solve_village_beliefs(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    opts: &PolicyOptions,
) -> Result<Vec<VillageBeliefs>> {
    scenario.validate()?;
    ds.villages
        .iter()
        .map(|v| {
            let m0 = TakeupMap::baseline(v, params, scenario.base_price)?;
            let m1 = TakeupMap::policy(v, params, scenario)?;
            let pi0 = m0.solve(&opts.fixed_point)?.value;
            let pi1 = m1.solve(&opts.fixed_point)?.value;
            let (roots0, roots1) = if satisfies_contraction(params.interaction, params.error) {
                (vec![pi0], vec![pi1])
            } else {
                (
                    uniqueness_scan(&m0, opts.scan_grid)?.roots,
                    uniqueness_scan(&m1, opts.scan_grid)?.roots,
                )
            };
            Ok(VillageBeliefs {
                village_id: v.id,
                pi0,
                pi1,
                roots0,
                roots1,
            })
        })
        .collect()
}

fn beliefs_for(beliefs: &[VillageBeliefs], id: u32) -> Result<&VillageBeliefs> {
    beliefs
        .iter()
        .find(|b| b.village_id == id)
        .ok_or_else(|| Error::input(format!("no equilibrium beliefs for village {id}")))
}

/// Per-household gains at each split, plus eligibility.
struct HouseholdWelfare {
    eligible: bool,
    gains: Vec<f64>,
    subsidized_takeup: f64,
    takeup0: f64,
    takeup1: f64,
}

fn household_welfare(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    splits: &[SpilloverSplit],
    beliefs: &[VillageBeliefs],
    rule: &Simpson,
) -> Result<Vec<Vec<HouseholdWelfare>>> {
    let dist = params.error;
    ds.villages
        .iter()
        .map(|v| {
            let b = beliefs_for(beliefs, v.id)?;
            let intercept = params.intercept_for(v.id)?;
            let hs: Vec<_> = v.participants().collect();
            hs.par_iter()
                .map(|h| {
                    let case = WelfareCase {
                        params,
                        wealth: h.wealth,
                        covariates: &h.covariates,
                        intercept,
                        scenario: *scenario,
                        pi0: b.pi0,
                        pi1: b.pi1,
                    };
                    let eligible = scenario.is_eligible(h.wealth);
                    let group = if eligible { Group::Eligible } else { Group::Ineligible };
                    let gains = splits
                        .iter()
                        .map(|s| CvLaw::new(case, group, *s)?.mean_gain(rule))
                        .collect::<Result<Vec<f64>>>()?;
                    let idx = |p: f64, pi: f64| {
                        params.base_index(p, h.wealth, &h.covariates, intercept) + params.interaction * pi
                    };
                    let p1 = scenario.price_for(h.wealth);
                    let takeup1 = dist.cdf(idx(p1, b.pi1));
                    Ok(HouseholdWelfare {
                        eligible,
                        gains,
                        subsidized_takeup: if eligible { takeup1 } else { 0.0 },
                        takeup0: dist.cdf(idx(scenario.base_price, b.pi0)),
                        takeup1,
                    })
                })
                .collect()
        })
        .collect()
}

/// Average welfare gain over all participants for one split.
pub fn net_cv(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    split: SpilloverSplit,
    beliefs: &[VillageBeliefs],
) -> Result<f64> {
    let w = household_welfare(ds, params, scenario, &[split], beliefs, &Simpson::default())?;
    let (mut s, mut n) = (0.0, 0usize);
    for h in w.iter().flatten() {
        s += h.gains[0];
        n += 1;
    }
    Ok(s / n as f64)
}

/// Subsidy cost per participant: the price cut times eligible take-up.
pub fn subsidy_spending(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    beliefs: &[VillageBeliefs],
) -> Result<f64> {
    scenario.validate()?;
    let cut = scenario.base_price - scenario.subsidized_price;
    let (mut s, mut n) = (0.0, 0usize);
    for v in &ds.villages {
        let b = beliefs_for(beliefs, v.id)?;
        let c = params.intercept_for(v.id)?;
        for h in v.participants() {
            n += 1;
            if scenario.is_eligible(h.wealth) {
                let idx = params.base_index(scenario.subsidized_price, h.wealth, &h.covariates, c)
                    + params.interaction * b.pi1;
                s += params.error.cdf(idx);
            }
        }
    }
    Ok(cut * s / n as f64)
}

/// Subsidy spending minus the net welfare gain, per participant.
pub fn deadweight_loss(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    split: SpilloverSplit,
    beliefs: &[VillageBeliefs],
) -> Result<f64> {
    Ok(subsidy_spending(ds, params, scenario, beliefs)? - net_cv(ds, params, scenario, split, beliefs)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VillagePolicyRow {
    pub village_id: u32,
    pub households: usize,
    pub eligible: usize,
    pub pi0: f64,
    pub pi1: f64,
    pub takeup0: f64,
    pub takeup1: f64,
    /// Mean gain of eligible households at each grid split (0 if none).
    pub eligible_gain: Vec<f64>,
    pub ineligible_gain: Vec<f64>,
    pub net_gain: Vec<f64>,
    pub spending: f64,
    pub dwl: Vec<f64>,
}

/// Welfare of a policy at every grid split, by village and pooled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub scenario: PolicyScenario,
    pub interaction: f64,
    pub alpha1_grid: Vec<f64>,
    pub beliefs: Vec<VillageBeliefs>,
    pub villages: Vec<VillagePolicyRow>,
    pub households: usize,
    pub eligible_share: f64,
    pub takeup0: f64,
    pub takeup1: f64,
    pub eligible_gain: Vec<f64>,
    pub ineligible_gain: Vec<f64>,
    pub net_gain: Vec<f64>,
    pub spending: f64,
    pub dwl: Vec<f64>,
}

impl PolicyReport {
    fn at(&self, v: &[f64], a1: f64) -> f64 {
        let i = self.alpha1_grid.iter().position(|&x| x == a1).expect("grid point");
        v[i]
    }

    /// `(lower, symmetric, upper)` net gain.
    pub fn net_bounds(&self) -> (f64, f64, f64) {
        let a = self.interaction;
        (self.at(&self.net_gain, 0.0), self.at(&self.net_gain, 0.5 * a), self.at(&self.net_gain, a))
    }

    pub fn eligible_bounds(&self) -> (f64, f64, f64) {
        let a = self.interaction;
        (
            self.at(&self.eligible_gain, 0.0),
            self.at(&self.eligible_gain, 0.5 * a),
            self.at(&self.eligible_gain, a),
        )
    }

    pub fn ineligible_bounds(&self) -> (f64, f64, f64) {
        let a = self.interaction;
        (
            self.at(&self.ineligible_gain, 0.0),
            self.at(&self.ineligible_gain, 0.5 * a),
            self.at(&self.ineligible_gain, a),
        )
    }

    /// Smallest and largest deadweight loss over the grid.
    pub fn dwl_interval(&self) -> (f64, f64) {
        let lo = self.dwl.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.dwl.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    pub fn has_multiple_equilibria(&self) -> bool {
        self.beliefs.iter().any(|b| b.roots0.len() > 1 || b.roots1.len() > 1)
    }
}

/// Solves the equilibria and evaluates welfare at every grid split.
pub fn evaluate_policy(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    opts: &PolicyOptions,
) -> Result<PolicyReport> {
    let beliefs = solve_village_beliefs(ds, params, scenario, opts)?;
    evaluate_policy_with_beliefs(ds, params, scenario, beliefs, opts)
}

/// Same as [`evaluate_policy`] with the village beliefs supplied, e.g. one
/// particular pair of roots when equilibria are not unique.
pub fn evaluate_policy_with_beliefs(
    ds: &Dataset,
    params: &IndexParams,
    scenario: &PolicyScenario,
    beliefs: Vec<VillageBeliefs>,
    opts: &PolicyOptions,
) -> Result<PolicyReport> {
    let alpha = params.interaction;
    let mut grid = vec![0.0, 0.5 * alpha, alpha];
    for &g in &opts.alpha1_grid {
        if !(0.0..=alpha).contains(&g) {
            return Err(Error::input(format!("alpha1 grid value {g} outside [0, {alpha}]")));
        }
        grid.push(g);
    }
    grid.sort_by(|a, b| a.total_cmp(b));
    grid.dedup();
    let splits = grid
        .iter()
        .map(|&a1| spillover_split(alpha, a1))
        .collect::<Result<Vec<_>>>()?;
    let welfare = household_welfare(ds, params, scenario, &splits, &beliefs, &opts.quadrature)?;
    let m = grid.len();
    let cut = scenario.base_price - scenario.subsidized_price;
    let mut rows = Vec::new();
    let mut tot = Accum::new(m);
    for (v, hs) in ds.villages.iter().zip(&welfare) {
        let b = beliefs_for(&beliefs, v.id)?;
        let mut acc = Accum::new(m);
        for h in hs {
            acc.add(h);
            tot.add(h);
        }
        let row = acc.finish(cut);
        rows.push(VillagePolicyRow {
            village_id: v.id,
            households: acc.n,
            eligible: acc.ne,
            pi0: b.pi0,
            pi1: b.pi1,
            takeup0: row.takeup0,
            takeup1: row.takeup1,
            eligible_gain: row.eligible,
            ineligible_gain: row.ineligible,
            net_gain: row.net,
            spending: row.spending,
            dwl: row.dwl,
        });
    }
    let all = tot.finish(cut);
    Ok(PolicyReport {
        scenario: *scenario,
        interaction: alpha,
        alpha1_grid: grid,
        beliefs,
        villages: rows,
        households: tot.n,
        eligible_share: tot.ne as f64 / tot.n as f64,
        takeup0: all.takeup0,
        takeup1: all.takeup1,
        eligible_gain: all.eligible,
        ineligible_gain: all.ineligible,
        net_gain: all.net,
        spending: all.spending,
        dwl: all.dwl,
    })
}

struct Accum {
    n: usize,
    ne: usize,
    se: Vec<f64>,
    si: Vec<f64>,
    spend: f64,
    t0: f64,
    t1: f64,
}

struct Summary {
    eligible: Vec<f64>,
    ineligible: Vec<f64>,
    net: Vec<f64>,
    spending: f64,
    dwl: Vec<f64>,
    takeup0: f64,
    takeup1: f64,
}

impl Accum {
    fn new(m: usize) -> Self {
        Accum {
            n: 0,
            ne: 0,
            se: vec![0.0; m],
            si: vec![0.0; m],
            spend: 0.0,
            t0: 0.0,
            t1: 0.0,
        }
    }

    fn add(&mut self, h: &HouseholdWelfare) {
        self.n += 1;
        let target = if h.eligible {
            self.ne += 1;
            &mut self.se
        } else {
            &mut self.si
        };
        for (t, g) in target.iter_mut().zip(&h.gains) {
            *t += g;
        }
        self.spend += h.subsidized_takeup;
        self.t0 += h.takeup0;
        self.t1 += h.takeup1;
    }

    fn finish(&self, cut: f64) -> Summary {
        let n = self.n as f64;
        let ni = self.n - self.ne;
        let avg = |s: &[f64], k: usize| -> Vec<f64> {
            s.iter().map(|x| if k == 0 { 0.0 } else { x / k as f64 }).collect()
        };
        let net: Vec<f64> = self.se.iter().zip(&self.si).map(|(a, b)| (a + b) / n).collect();
        let spending = cut * self.spend / n;
        Summary {
            eligible: avg(&self.se, self.ne),
            ineligible: avg(&self.si, ni),
            dwl: net.iter().map(|x| spending - x).collect(),
            net,
            spending,
            takeup0: self.t0 / n,
            takeup1: self.t1 / n,
        }
    }
}

/// One row of a comparative-statics table over eligibility shares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparativeRow {
    pub target_share: f64,
    pub threshold: f64,
    pub eligible_share: f64,
    pub takeup0: f64,
    pub takeup1: f64,
    pub eligible: (f64, f64, f64),
    pub ineligible: (f64, f64, f64),
    pub net: (f64, f64, f64),
    pub spending: f64,
    pub dwl: (f64, f64),
}

/// Wealth threshold that makes `share` of participants eligible.
pub fn threshold_for_share(ds: &Dataset, share: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&share) {
        return Err(Error::input(format!("share {share} outside [0, 1]")));
    }
    let mut w: Vec<f64> = ds.villages.iter().flat_map(|v| v.participants().map(|h| h.wealth)).collect();
    w.sort_by(|a, b| a.total_cmp(b));
    let m = (share * w.len() as f64).ceil() as usize;
    Ok(if m == 0 { f64::NEG_INFINITY } else { w[m.min(w.len()) - 1] })
}

/// Evaluates the subsidy at several eligibility shares, each turned into a
/// wealth threshold from the pooled participant distribution.
pub fn comparative_statics(
    ds: &Dataset,
    params: &IndexParams,
    base_price: f64,
    subsidized_price: f64,
    shares: &[f64],
    opts: &PolicyOptions,
) -> Result<Vec<ComparativeRow>> {
    shares
        .iter()
        .map(|&share| {
            let tau = threshold_for_share(ds, share)?;
            let scenario = PolicyScenario::new(base_price, subsidized_price, tau)?;
            let r = evaluate_policy(ds, params, &scenario, opts)?;
            Ok(ComparativeRow {
                target_share: share,
                threshold: tau,
                eligible_share: r.eligible_share,
                takeup0: r.takeup0,
                takeup1: r.takeup1,
                eligible: r.eligible_bounds(),
                ineligible: r.ineligible_bounds(),
                net: r.net_bounds(),
                spending: r.spending,
                dwl: r.dwl_interval(),
            })
        })
        .collect()
}
