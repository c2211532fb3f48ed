mod common;

use common::{bisect, normal_cdf_by_quadrature, probit_truth};
use spillover::dist::normal_cdf;
use spillover::rng;
use spillover::simulate::{simulate_game, HouseholdDraws, SimulationConfig};
use spillover::spatial::*;
use spillover::ErrorDist;

fn base_indices(n: usize, alpha: f64, seed: u64) -> (Vec<[f64; 2]>, Vec<f64>) {
    let p = probit_truth(alpha);
    let draws = HouseholdDraws::default();
    let mut g = rng::stream(seed, 11);
    let locs = sample_region(n, 1.0, &mut g).unwrap();
    let base = (0..n)
        .map(|_| {
            let h = draws.draw(&mut g);
            p.base_index(h.price, h.wealth, &h.covariates, -0.3)
        })
        .collect();
    (locs, base)
}

fn tight() -> BeliefOptions {
    BeliefOptions {
        tol: 1e-13,
        max_sweeps: 10_000,
        ..BeliefOptions::default()
    }
}

#[test]
fn region_has_requested_size_and_is_reproducible() {
    let mut a = rng::stream(5, 1);
    let mut b = rng::stream(5, 1);
    let la = sample_region(400, 4.0, &mut a).unwrap();
    let lb = sample_region(400, 4.0, &mut b).unwrap();
    assert_eq!(la, lb);
    assert_eq!(region_side(400, 4.0), 10.0);
    assert!(la.iter().all(|l| (0.0..=10.0).contains(&l[0]) && (0.0..=10.0).contains(&l[1])));
    assert!(sample_region(0, 1.0, &mut a).is_err());
    assert!(sample_region(5, 0.0, &mut a).is_err());
}

#[test]
fn field_correlation_at_unit_distance() {
    let locs = [[0.0, 0.0], [0.4, 0.6], [0.0, 0.0]];
    let reps = 20_000;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for r in 0..reps {
        let mut g = rng::stream(17, r as u64);
        let x = sample_gp(&locs, 1.0, &mut g).unwrap();
        assert_eq!(x[0], x[2], "coincident locations share a draw");
        sxy += x[0] * x[1];
        sxx += x[0] * x[0];
        syy += x[1] * x[1];
    }
    let n = reps as f64;
    let corr = sxy / (sxx * syy).sqrt();
    let target = (-1.0f64).exp();
    let se = (1.0 - target * target) / n.sqrt();
    assert!((corr - target).abs() < 3.0 * se, "{corr} vs {target} (se {se})");
    assert!((sxx / n - 1.0).abs() < 0.05);
    assert!(sample_gp(&locs, 0.0, &mut rng::stream(0, 0)).is_err());
}

#[test]
fn conditional_cdf_cases() {
    let far = Correlogram::Exponential { range: 1.0 };
    // far apart: marginal
    assert!((conditional_cdf(0.7, 2.0, 1e3, &far) - normal_cdf_by_quadrature(0.7)).abs() < 1e-12);
    assert_eq!(conditional_cdf(0.7, 2.0, 0.3, &Correlogram::Independent), normal_cdf(0.7));
    // rho = 0.5 with e_tilde = rho * e gives one half
    let d = 2f64.ln();
    assert!((conditional_cdf(0.5, 1.0, d, &far) - 0.5).abs() < 1e-14);
    // the closed form against direct quadrature of the conditional density
    let rho = (-0.3f64).exp();
    let s = (1.0 - rho * rho).sqrt();
    let expect = normal_cdf_by_quadrature((0.2 - rho * -0.8) / s);
    assert!((conditional_cdf(0.2, -0.8, 0.3, &far) - expect).abs() < 1e-12);
    // a higher own shock makes neighbours' shocks stochastically larger
    let mut prev = 1.0;
    for i in 0..40 {
        let e = -4.0 + 0.2 * i as f64;
        let c = conditional_cdf(0.3, e, 0.5, &far);
        assert!(c <= prev);
        prev = c;
    }
}

#[test]
fn correlation_functions() {
    let c = Correlogram::Exponential { range: 2.0 };
    assert_eq!(c.correlation(0.0), 1.0);
    assert!((c.correlation(2.0) - (-1.0f64).exp()).abs() < 1e-15);
    assert_eq!(Correlogram::Independent.correlation(0.0), 0.0);
    assert_eq!(l1_distance([1.0, 2.0], [-1.0, 4.5]), 4.5);
    let pairs = PairStructure::new(&[[0.0, 0.0], [1.0, 1.0]], &c);
    assert_eq!(pairs.len(), 2);
    assert!(!pairs.is_empty());
}

#[test]
fn vanishing_range_recovers_the_independent_benchmark() {
    let (locs, base) = base_indices(60, 1.2, 3);
    let field = solve_conditional_beliefs(
        &locs,
        &base,
        1.2,
        &Correlogram::Exponential { range: 1e-4 },
        129,
        &tight(),
    )
    .unwrap();
    let (mean, sup) = field.deviation_from_benchmark();
    assert!(mean < 1e-6 && sup < 1e-6, "{mean} {sup}");
}

#[test]
fn independent_correlogram_matches_the_benchmark_equilibrium() {
    let (locs, base) = base_indices(80, 1.5, 4);
    let field = solve_conditional_beliefs(&locs, &base, 1.5, &Correlogram::Independent, 65, &tight()).unwrap();
    // independent fixed point by bisection on the aggregate map
    let n = base.len() as f64;
    let pi = bisect(
        |p| base.iter().map(|b| normal_cdf_by_quadrature(b + 1.5 * p)).sum::<f64>() / n - p,
        0.0,
        1.0,
        200,
    );
    assert!((field.pi_bar - pi).abs() < 1e-10);
    for h in 0..field.households {
        assert!(field.row(h).iter().all(|x| (x - pi).abs() < 1e-10));
        let p = normal_cdf_by_quadrature(base[h] + 1.5 * pi);
        assert!((field.choice_probability(h) - p).abs() < 1e-10);
    }
    assert!(field.residual < 1e-12);
}

#[test]
fn without_interaction_beliefs_average_to_the_benchmark() {
    let (locs, base) = base_indices(40, 0.0, 5);
    let field = solve_conditional_beliefs(
        &locs,
        &base,
        0.0,
        &Correlogram::Exponential { range: 2.0 },
        129,
        &tight(),
    )
    .unwrap();
    let n = base.len() as f64;
    let pi_bar = base.iter().map(|b| normal_cdf(*b)).sum::<f64>() / n;
    assert!((field.pi_bar - pi_bar).abs() < 1e-12);
    let w = shock_weights(&field.nodes);
    for h in 0..field.households {
        assert!((sd_choice_probability(&field, h).unwrap() - normal_cdf(base[h])).abs() < 1e-15);
        let avg: f64 = field.row(h).iter().zip(&w).map(|(x, wi)| x * wi).sum();
        // trapezoid error of the smooth conditional means on a 129-node grid
        assert!((avg - pi_bar).abs() < 1e-4, "{avg} vs {pi_bar}");
    }
    assert!(sd_choice_probability(&field, field.households).is_err());
}

#[test]
fn beliefs_increase_in_own_shock() {
    let (locs, base) = base_indices(50, 1.8, 6);
    let field = solve_conditional_beliefs(
        &locs,
        &base,
        1.8,
        &Correlogram::Exponential { range: 2.0 },
        129,
        &BeliefOptions::default(),
    )
    .unwrap();
    for h in 0..field.households {
        assert!(field.row(h).windows(2).all(|w| w[1] >= w[0] - 1e-12));
        assert!(field.belief_at(h, 3.0) > field.belief_at(h, -3.0));
    }
}

#[test]
fn accelerated_and_plain_iteration_agree() {
    let (locs, base) = base_indices(80, 2.45, 9);
    let corr = Correlogram::Exponential { range: 2.0 };
    let plain = BeliefOptions { anderson_depth: 0, ..tight() };
    let a = solve_conditional_beliefs(&locs, &base, 2.45, &corr, 65, &plain).unwrap();
    let b = solve_conditional_beliefs(&locs, &base, 2.45, &corr, 65, &tight()).unwrap();
    let gap = a.psi.iter().zip(&b.psi).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap < 1e-11, "gap {gap}");
    assert!(2 * b.sweeps < a.sweeps, "{} vs {}", b.sweeps, a.sweeps);
}

/// Fixed point of the belief operator on a dense grid with every pair
/// evaluated in closed form.
fn dense_oracle(locs: &[[f64; 2]], base: &[f64], alpha: f64, range: f64, m: usize) -> Vec<f64> {
    let n = base.len();
    let nodes: Vec<f64> = (0..m).map(|i| -6.0 + 12.0 * i as f64 / (m - 1) as f64).collect();
    let step = nodes[1] - nodes[0];
    let rho: Vec<Vec<f64>> = (0..n)
        .map(|h| {
            (0..n)
                .map(|k| {
                    let d = (locs[h][0] - locs[k][0]).abs() + (locs[h][1] - locs[k][1]).abs();
                    (-d / range).exp()
                })
                .collect()
        })
        .collect();
    let interp = |row: &[f64], e: f64| {
        if e <= nodes[0] {
            return row[0];
        }
        if e >= nodes[m - 1] {
            return row[m - 1];
        }
        let i = (((e - nodes[0]) / step) as usize).min(m - 2);
        let t = (e - nodes[i]) / step;
        row[i] * (1.0 - t) + row[i + 1] * t
    };
    let mut psi = vec![vec![0.5; m]; n];
    for _ in 0..10_000 {
        let estar: Vec<f64> = (0..n)
            .map(|k| bisect(|e| base[k] + alpha * interp(&psi[k], e) + e, -40.0, 40.0, 100))
            .collect();
        let mut change: f64 = 0.0;
        let next: Vec<Vec<f64>> = (0..n)
            .map(|h| {
                nodes
                    .iter()
                    .map(|&e| {
                        let mut s = 0.0;
                        for k in 0..n {
                            if k == h {
                                s += 1.0 - normal_cdf(estar[k]);
                            } else {
                                let r = rho[h][k];
                                s += 1.0 - normal_cdf((estar[k] - r * e) / (1.0 - r * r).sqrt());
                            }
                        }
                        s / n as f64
                    })
                    .collect()
            })
            .collect();
        for h in 0..n {
            for i in 0..m {
                change = change.max((next[h][i] - psi[h][i]).abs());
            }
        }
        psi = next;
        if change < 1e-13 {
            return (0..n)
                .map(|k| {
                    let e = bisect(|e| base[k] + alpha * interp(&psi[k], e) + e, -40.0, 40.0, 100);
                    1.0 - normal_cdf(e)
                })
                .collect();
        }
    }
    panic!("dense oracle did not converge");
}

#[test]
fn choice_probabilities_match_a_dense_grid_oracle() {
    let (locs, base) = base_indices(20, 1.4, 8);
    let oracle = dense_oracle(&locs, &base, 1.4, 1.5, 4001);
    let field = solve_conditional_beliefs(
        &locs,
        &base,
        1.4,
        &Correlogram::Exponential { range: 1.5 },
        1025,
        &tight(),
    )
    .unwrap();
    for (h, p) in oracle.iter().enumerate() {
        let got = field.choice_probability(h);
        assert!((got - p).abs() < 1e-5, "household {h}: {got} vs {p}");
    }
}

#[test]
fn dispersion_shrinks_with_village_size() {
    let p = probit_truth(1.2);
    let study = ConvergenceStudy {
        sizes: vec![50, 200],
        ranges: vec![2.0],
        density: 1.0,
        replications: 4,
        params: p,
        draws: HouseholdDraws::default(),
        grid_size: 129,
        seed: 21,
    };
    let rows = convergence_study(&study).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].mean_abs_deviation < rows[0].mean_abs_deviation, "{rows:?}");
    let mut logit = study.clone();
    logit.params.error = ErrorDist::Logit;
    assert!(convergence_study(&logit).is_err());
}

#[test]
fn spatial_simulation_is_reproducible_and_acts_on_beliefs() {
    let p = probit_truth(1.0);
    let mut cfg = SimulationConfig::benchmark(2, 300);
    cfg.spatial = Some(SpatialSpec {
        density: 1.0,
        correlation_range: 1.0,
    });
    let a = simulate_game(&cfg, &p, 9).unwrap();
    let b = simulate_game(&cfg, &p, 9).unwrap();
    assert_eq!(a, b);
    assert!(a.has_locations());
    let c = simulate_game(&cfg, &p, 10).unwrap();
    assert_ne!(a, c);
    for v in &a.villages {
        let locs: Vec<[f64; 2]> = v.households.iter().map(|h| h.location.unwrap()).collect();
        let base: Vec<f64> = v
            .households
            .iter()
            .map(|h| p.base_index(h.price, h.wealth, &h.covariates, -0.3))
            .collect();
        let field = solve_conditional_beliefs(
            &locs,
            &base,
            1.0,
            &Correlogram::Exponential { range: 1.0 },
            DEFAULT_GRID_SIZE,
            &BeliefOptions::default(),
        )
        .unwrap();
        let expected: f64 = (0..field.households).map(|h| field.choice_probability(h)).sum::<f64>()
            / field.households as f64;
        let rate = v.adoption_rate().unwrap();
        // correlated shocks inflate the sampling error well above the iid rate
        assert!((rate - expected).abs() < 0.12, "{rate} vs {expected}");
    }
    let mut logit = p.clone();
    logit.error = ErrorDist::Logit;
    assert!(simulate_game(&cfg, &logit, 9).is_err());
}
