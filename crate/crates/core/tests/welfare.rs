mod common;

use common::*;
use proptest::prelude::*;
use spillover::equilibrium::{solve_pi_baseline, FixedPointOptions};
use spillover::model::spillover_split;
use spillover::quadrature::Simpson;
use spillover::welfare::{
    comparative_statics, deadweight_loss, evaluate_policy, net_cv, solve_village_beliefs, subsidy_spending,
    welfare_bounds, CvLaw, Group, PolicyOptions, Regime, VillageBeliefs, WelfareCase,
};
use spillover::{ErrorDist, IndexParams, PolicyScenario};

fn toy_params() -> IndexParams {
    params(ErrorDist::Logit, -1.0, 0.0, vec![], 1.0, 0.0)
}

fn toy_case(p: &IndexParams) -> WelfareCase<'_> {
    WelfareCase {
        params: p,
        wealth: 0.0,
        covariates: &[],
        intercept: 0.0,
        scenario: PolicyScenario::new(2.0, 1.0, f64::INFINITY).unwrap(),
        pi0: 0.3,
        pi1: 0.5,
    }
}

fn oracle_for(case: &WelfareCase, group: Group, alpha1: f64) -> CvOracle {
    let p = case.params;
    let b1 = -p.price_coef;
    let d1 = p.base_index(0.0, 0.0, case.covariates, case.intercept);
    CvOracle {
        error: p.error,
        d1,
        b1,
        b0: b1 - p.wealth_coef,
        alpha1,
        alpha0: alpha1 - p.interaction,
        wealth: case.wealth,
        base_price: case.scenario.base_price,
        new_price: match group {
            Group::Eligible => case.scenario.subsidized_price,
            Group::Ineligible => case.scenario.base_price,
        },
        pi0: case.pi0,
        pi1: case.pi1,
    }
}

#[test]
fn toy_eligible_cdf_by_hand() {
    let p = toy_params();
    let law = CvLaw::new(toy_case(&p), Group::Eligible, spillover_split(1.0, 1.0).unwrap()).unwrap();
    assert_eq!(law.regime, Regime::PiUp);
    assert!((law.lower - -1.2).abs() < 1e-12);
    assert!(law.upper.abs() < 1e-12);
    assert!((law.cdf(-0.5) - logistic(-1.0)).abs() < 1e-15);
    assert_eq!(law.cdf(-1.2000001), 0.0);
    assert_eq!(law.cdf(0.0), 1.0);
}

#[test]
fn toy_eligible_mean_matches_per_draw_oracle() {
    let p = toy_params();
    let case = toy_case(&p);
    let law = CvLaw::new(case, Group::Eligible, spillover_split(1.0, 1.0).unwrap()).unwrap();
    let m = law.mean_gain(&Simpson::default()).unwrap();
    let (om, se) = oracle_for(&case, Group::Eligible, 1.0).mean_gain(1_000_000, 1);
    assert!((m - om).abs() < 3.0 * se, "{m} vs {om} +- {se}");
}

#[test]
fn bounds_bracket_an_interior_split() {
    let p = toy_params();
    let case = toy_case(&p);
    for group in [Group::Eligible, Group::Ineligible] {
        let b = welfare_bounds(case, group, &[0.25, 0.75]).unwrap();
        assert!(b.lower <= b.symmetric && b.symmetric <= b.upper);
        assert!(b.curve.windows(2).all(|w| w[0].1 <= w[1].1 + 1e-12));
        let (om, se) = oracle_for(&case, group, 1.0 / 3.0).mean_gain(400_000, 2);
        assert!(b.lower - 3.0 * se <= om && om <= b.upper + 3.0 * se, "{group:?}");
    }
}

#[test]
fn no_spillover_eligible_is_consumer_surplus() {
    let p = params(ErrorDist::Logit, -0.012, 0.00002, vec![0.3, 0.05], 0.0, -0.5);
    let case = WelfareCase {
        params: &p,
        wealth: 9000.0,
        covariates: &[1.0, 6.0],
        intercept: -0.5,
        scenario: PolicyScenario::new(250.0, 50.0, f64::INFINITY).unwrap(),
        pi0: 0.2,
        pi1: 0.6,
    };
    let law = CvLaw::new(case, Group::Eligible, spillover_split(0.0, 0.0).unwrap()).unwrap();
    assert_eq!((law.lower, law.upper), (-200.0, 0.0));
    let q = |price: f64| logistic(-0.5 - 0.012 * price + 0.00002 * 9000.0 + 0.3 + 0.3);
    assert!((law.cdf(-80.0) - q(130.0)).abs() < 1e-15);
    // Consumer surplus by an independent trapezoid rule.
    let n = 200_000;
    let h = 200.0 / n as f64;
    let cs: f64 = (0..n).map(|i| 0.5 * h * (q(50.0 + i as f64 * h) + q(50.0 + (i + 1) as f64 * h))).sum();
    assert!((law.mean_gain(&Simpson::default()).unwrap() - cs).abs() < 1e-7);
}

#[test]
fn equal_beliefs_collapse_the_support() {
    let p = logit_truth(2.0);
    let case = WelfareCase {
        params: &p,
        wealth: 12000.0,
        covariates: &[0.0, 4.0],
        intercept: -0.5,
        scenario: PolicyScenario::new(150.0, 50.0, f64::INFINITY).unwrap(),
        pi0: 0.4,
        pi1: 0.4,
    };
    for a1 in [0.0, 0.7, 2.0] {
        let law = CvLaw::new(case, Group::Eligible, spillover_split(2.0, a1).unwrap()).unwrap();
        assert_eq!((law.lower, law.upper), (-100.0, 0.0));
        let idx = -0.5 - 0.012 * (50.0 + 30.0) + 0.00002 * 12000.0 + 0.2 + 2.0 * 0.4;
        assert!((law.cdf(-30.0) - logistic(idx)).abs() < 1e-15);
    }
}

#[test]
fn ineligibles_without_spillover_are_unaffected() {
    let p = logit_truth(0.0);
    let case = WelfareCase {
        params: &p,
        wealth: 30000.0,
        covariates: &[1.0, 2.0],
        intercept: -0.5,
        scenario: PolicyScenario::new(150.0, 50.0, 8000.0).unwrap(),
        pi0: 0.3,
        pi1: 0.45,
    };
    let law = CvLaw::new(case, Group::Ineligible, spillover_split(0.0, 0.0).unwrap()).unwrap();
    assert_eq!((law.lower, law.upper), (0.0, 0.0));
    assert_eq!(law.cdf(-1e-9), 0.0);
    assert_eq!(law.cdf(0.0), 1.0);
    assert_eq!(law.mean_gain(&Simpson::default()).unwrap(), 0.0);
}

#[test]
fn ineligible_extreme_splits_are_pure_gain_or_loss() {
    let p = logit_truth(2.0);
    let case = WelfareCase {
        params: &p,
        wealth: 30000.0,
        covariates: &[1.0, 2.0],
        intercept: -0.5,
        scenario: PolicyScenario::new(150.0, 50.0, 8000.0).unwrap(),
        pi0: 0.3,
        pi1: 0.45,
    };
    let rule = Simpson::default();
    let up = CvLaw::new(case, Group::Ineligible, spillover_split(2.0, 2.0).unwrap()).unwrap();
    assert!(up.upper <= 0.0 && up.mean_gain(&rule).unwrap() > 0.0);
    let down = CvLaw::new(case, Group::Ineligible, spillover_split(2.0, 0.0).unwrap()).unwrap();
    assert!(down.lower >= 0.0 && down.mean_gain(&rule).unwrap() < 0.0);
}

#[test]
fn symmetric_split_uses_the_midpoint_belief() {
    let p = params(ErrorDist::Logit, -1.0, 0.0, vec![], 2.0, 0.0);
    let mut case = toy_case(&p);
    case.pi0 = 0.25;
    case.pi1 = 0.55;
    let law = CvLaw::new(case, Group::Eligible, spillover_split(2.0, 1.0).unwrap()).unwrap();
    assert!((law.effective_belief() - 0.4).abs() < 1e-15);
}

fn random_case(p: &IndexParams, wealth: f64, pi0: f64, pi1: f64, tau: f64) -> WelfareCase<'_> {
    WelfareCase {
        params: p,
        wealth,
        covariates: &[1.0, 5.0],
        intercept: -0.4,
        scenario: PolicyScenario::new(200.0, 40.0, tau).unwrap(),
        pi0,
        pi1,
    }
}

fn welfare_params(dist: ErrorDist, alpha: f64, c1: f64, c2: f64) -> IndexParams {
    params(dist, c1, c2, vec![0.3, 0.05], alpha, -0.4)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn support_endpoints_match_thresholds(
        alpha in 0.0f64..3.0, frac in 0.0f64..=1.0, pi0 in 0.05f64..0.95, pi1 in 0.05f64..0.95,
        c1 in -0.03f64..-0.002, c2 in -0.001f64..0.001, eligible in any::<bool>(),
    ) {
        let p = welfare_params(ErrorDist::Logit, alpha, c1, c2);
        let case = random_case(&p, 10000.0, pi0, pi1, f64::INFINITY);
        let (b1, b0) = (-c1, -c1 - c2);
        prop_assume!(b0 > 0.0);
        let a1 = frac * alpha;
        let group = if eligible { Group::Eligible } else { Group::Ineligible };
        let law = CvLaw::new(case, group, spillover_split(alpha, a1).unwrap()).unwrap();
        let new_price = if eligible { 40.0 } else { 200.0 };
        let t_adopt = new_price - 200.0 - a1 / b1 * (pi1 - pi0);
        let t_abstain = (a1 - alpha) / b0 * (pi0 - pi1);
        let (lo, hi) = if t_adopt <= t_abstain { (t_adopt, t_abstain) } else { (t_abstain, t_adopt) };
        prop_assert!((law.lower - lo).abs() < 1e-12 && (law.upper - hi).abs() < 1e-12);
        let g = law.grid();
        prop_assert!(g.grid.windows(2).all(|w| w[0].1 <= w[1].1 && w[0].0 <= w[1].0));
        prop_assert_eq!(law.cdf(lo - 1e-6), 0.0);
        prop_assert_eq!(law.cdf(hi), 1.0);
        if pi1 >= pi0 {
            prop_assert_eq!(law.regime, Regime::PiUp);
        }
    }

    #[test]
    fn mean_routes_agree(
        alpha in 0.0f64..3.0, frac in 0.0f64..=1.0, pi0 in 0.05f64..0.95, pi1 in 0.05f64..0.95,
        wealth in 1000.0f64..40000.0, probit in any::<bool>(), eligible in any::<bool>(),
    ) {
        let dist = if probit { ErrorDist::Probit } else { ErrorDist::Logit };
        let p = welfare_params(dist, alpha, -0.012, 0.00002);
        let case = random_case(&p, wealth, pi0, pi1, f64::INFINITY);
        let group = if eligible { Group::Eligible } else { Group::Ineligible };
        let law = CvLaw::new(case, group, spillover_split(alpha, frac * alpha).unwrap()).unwrap();
        let fixed = Simpson::fixed(2048);
        let by_price = law.mean_transfer(&fixed).unwrap();
        let by_transfer = law.mean_transfer_in_transfer_units(&fixed).unwrap();
        prop_assert!((by_price - by_transfer).abs() < 1e-10, "{} vs {}", by_price, by_transfer);
        let from_cdf = law.mean_transfer_from_cdf(&Simpson::default()).unwrap();
        let direct = law.mean_transfer(&Simpson::default()).unwrap();
        prop_assert!((from_cdf - direct).abs() < 1e-6);
    }

    #[test]
    fn gains_nondecreasing_in_adopt_share(
        alpha in 0.01f64..3.0, pi0 in 0.05f64..0.5, up in 0.0f64..0.45,
        wealth in 1000.0f64..40000.0, eligible in any::<bool>(),
    ) {
        let p = welfare_params(ErrorDist::Logit, alpha, -0.012, 0.00002);
        let case = random_case(&p, wealth, pi0, pi0 + up, f64::INFINITY);
        let group = if eligible { Group::Eligible } else { Group::Ineligible };
        let rule = Simpson::default();
        let gains: Vec<f64> = (0..=8)
            .map(|k| {
                CvLaw::new(case, group, spillover_split(alpha, alpha * k as f64 / 8.0).unwrap())
                    .unwrap()
                    .mean_gain(&rule)
                    .unwrap()
            })
            .collect();
        prop_assert!(gains.windows(2).all(|w| w[0] <= w[1] + 1e-9), "{:?}", gains);
    }
}

#[test]
fn falling_adoption_exercises_both_branches() {
    let p = logit_truth(2.0);
    let mut seen = std::collections::BTreeSet::new();
    for (pi0, pi1, a1, sub) in [(0.6, 0.3, 2.0, 190.0), (0.6, 0.3, 0.0, 40.0), (0.9, 0.1, 1.0, 199.0)] {
        let case = WelfareCase {
            params: &p,
            wealth: 8000.0,
            covariates: &[1.0, 5.0],
            intercept: -0.5,
            scenario: PolicyScenario::new(200.0, sub, f64::INFINITY).unwrap(),
            pi0,
            pi1,
        };
        let law = CvLaw::new(case, Group::Eligible, spillover_split(2.0, a1).unwrap()).unwrap();
        seen.insert(format!("{:?}", law.regime));
        let m = law.mean_gain(&Simpson::default()).unwrap();
        let (om, se) = oracle_for(&case, Group::Eligible, a1).mean_gain(200_000, 3);
        assert!((m - om).abs() < 4.0 * se, "{:?}: {m} vs {om} +- {se}", law.regime);
    }
    assert!(seen.contains("PiDownAdoptSide") && seen.contains("PiDownAbstainSide"), "{seen:?}");
}

fn small_dataset(alpha: f64, seed: u64) -> (spillover::Dataset, IndexParams) {
    use spillover::simulate::{simulate_game, SimulationConfig};
    let p = logit_truth(alpha);
    let ds = simulate_game(&SimulationConfig::benchmark(4, 150), &p, seed).unwrap();
    (ds, p)
}

#[test]
fn no_eligibles_and_no_spillover_means_no_welfare_change() {
    let (ds, p) = small_dataset(0.0, 3);
    let s = PolicyScenario::new(150.0, 50.0, f64::NEG_INFINITY).unwrap();
    let b = solve_village_beliefs(&ds, &p, &s, &PolicyOptions::default()).unwrap();
    assert_eq!(net_cv(&ds, &p, &s, spillover_split(0.0, 0.0).unwrap(), &b).unwrap(), 0.0);
    assert_eq!(subsidy_spending(&ds, &p, &s, &b).unwrap(), 0.0);
}

#[test]
fn everyone_eligible_without_spillover_is_average_consumer_surplus() {
    let (ds, p) = small_dataset(0.0, 4);
    let s = PolicyScenario::new(150.0, 50.0, f64::INFINITY).unwrap();
    let b = solve_village_beliefs(&ds, &p, &s, &PolicyOptions::default()).unwrap();
    let net = net_cv(&ds, &p, &s, spillover_split(0.0, 0.0).unwrap(), &b).unwrap();
    let mut total = 0.0;
    let mut n = 0;
    for h in ds.villages.iter().flat_map(|v| v.participants()) {
        let q = |price: f64| logistic(-0.5 - 0.012 * price + 0.00002 * h.wealth + 0.3 * h.covariates[0] + 0.05 * h.covariates[1]);
        let m = 4000;
        let step = 100.0 / m as f64;
        total += (0..m).map(|i| 0.5 * step * (q(50.0 + i as f64 * step) + q(50.0 + (i + 1) as f64 * step))).sum::<f64>();
        n += 1;
    }
    assert!((net - total / n as f64).abs() < 1e-6);
}

#[test]
fn no_policy_means_no_deadweight_loss() {
    let (ds, p) = small_dataset(0.0, 5);
    let s = PolicyScenario::new(150.0, 150.0, 20000.0).unwrap();
    let b = solve_village_beliefs(&ds, &p, &s, &PolicyOptions::default()).unwrap();
    let d = deadweight_loss(&ds, &p, &s, spillover_split(0.0, 0.0).unwrap(), &b).unwrap();
    assert!(d.abs() < 1e-12);
}

#[test]
fn strong_spillover_can_make_deadweight_loss_negative() {
    let (ds, p) = small_dataset(3.5, 6);
    let s = PolicyScenario::new(250.0, 0.0, f64::INFINITY).unwrap();
    let opts = PolicyOptions::default();
    let r = evaluate_policy(&ds, &p, &s, &opts).unwrap();
    let (lo, _) = r.dwl_interval();
    assert!(lo < 0.0, "{lo}");
}

#[test]
fn policy_report_is_consistent() {
    let (ds, p) = small_dataset(2.0, 7);
    let s = PolicyScenario::new(150.0, 50.0, 12000.0).unwrap();
    let opts = PolicyOptions {
        alpha1_grid: vec![0.4, 1.3],
        ..PolicyOptions::default()
    };
    let r = evaluate_policy(&ds, &p, &s, &opts).unwrap();
    let (lo, mid, hi) = r.net_bounds();
    assert!(lo <= mid && mid <= hi);
    let share = r.eligible_share;
    for k in 0..r.alpha1_grid.len() {
        let pooled = share * r.eligible_gain[k] + (1.0 - share) * r.ineligible_gain[k];
        assert!((pooled - r.net_gain[k]).abs() < 1e-10);
        assert!((r.spending - r.net_gain[k] - r.dwl[k]).abs() < 1e-10);
        let weighted: f64 = r.villages.iter().map(|v| v.net_gain[k] * v.households as f64).sum::<f64>()
            / r.households as f64;
        assert!((weighted - r.net_gain[k]).abs() < 1e-10);
    }
    let split = spillover_split(2.0, 1.0).unwrap();
    let k = r.alpha1_grid.iter().position(|&a| a == 1.0).unwrap();
    assert!((net_cv(&ds, &p, &s, split, &r.beliefs).unwrap() - r.net_gain[k]).abs() < 1e-12);
    let opts0 = FixedPointOptions::default();
    for (v, b) in ds.villages.iter().zip(&r.beliefs) {
        assert_eq!(b.pi0, solve_pi_baseline(v, &p, 150.0, &opts0).unwrap().value);
    }
}

#[test]
fn comparative_statics_shape() {
    let (ds, p) = small_dataset(2.0, 8);
    let rows = comparative_statics(&ds, &p, 150.0, 50.0, &[0.0, 0.2, 0.4, 0.6], &PolicyOptions::default()).unwrap();
    let zero = &rows[0];
    assert_eq!(zero.eligible_share, 0.0);
    assert!(zero.net.0.abs() < 1e-12 && zero.net.2.abs() < 1e-12 && zero.spending == 0.0);
    for w in rows[1..].windows(2) {
        // Largest ineligible loss (gain at alpha1 = 0) grows with the share.
        assert!(w[1].ineligible.0 <= w[0].ineligible.0);
        assert!(w[1].dwl.1 >= w[0].dwl.1);
        assert!(w[1].takeup1 >= w[0].takeup1);
    }
}

#[test]
fn beliefs_can_be_supplied_per_root_pair() {
    let (ds, p) = small_dataset(1.0, 9);
    let s = PolicyScenario::new(150.0, 50.0, 12000.0).unwrap();
    let b: Vec<VillageBeliefs> = ds
        .villages
        .iter()
        .map(|v| VillageBeliefs { village_id: v.id, pi0: 0.5, pi1: 0.3, roots0: vec![0.5], roots1: vec![0.3] })
        .collect();
    let r = spillover::welfare::evaluate_policy_with_beliefs(&ds, &p, &s, b, &PolicyOptions::default()).unwrap();
    assert!(r.villages.iter().all(|v| v.pi0 == 0.5 && v.pi1 == 0.3));
}
