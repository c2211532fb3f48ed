#![allow(dead_code)]

use spillover::{Dataset, ErrorDist, Household, IndexParams, Intercepts, Village};

pub fn household(id: u64, village_id: u32, price: f64, wealth: f64, covariates: Vec<f64>) -> Household {
    Household {
        id,
        village_id,
        price,
        wealth,
        covariates,
        location: None,
        outcome: false,
        participant: true,
    }
}

pub fn village(id: u32, households: Vec<Household>) -> Village {
    let n = households.len();
    Village::new(id, households, n)
}

pub fn params(error: ErrorDist, price: f64, wealth: f64, covariates: Vec<f64>, alpha: f64, c0: f64) -> IndexParams {
    IndexParams {
        price_coef: price,
        wealth_coef: wealth,
        covariate_coefs: covariates,
        interaction: alpha,
        intercepts: Intercepts::Common(c0),
        error,
    }
}

/// Benchmark logit model used across the suites.
pub fn logit_truth(alpha: f64) -> IndexParams {
    params(ErrorDist::Logit, -0.012, 0.00002, vec![0.3, 0.05], alpha, -0.5)
}

pub fn probit_truth(alpha: f64) -> IndexParams {
    params(ErrorDist::Probit, -0.008, 0.00001, vec![0.2, 0.03], alpha, -0.3)
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Standard normal CDF by a 2000-panel Simpson rule on the density, an
/// implementation independent of the library's erfc-based one.
pub fn normal_cdf_by_quadrature(x: f64) -> f64 {
    let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let (a, b) = if x >= 0.0 { (0.0, x) } else { (x, 0.0) };
    let n = 2000;
    let h = (b - a) / n as f64;
    let mut s = pdf(a) + pdf(b);
    for i in 1..n {
        s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let half = s * h / 3.0;
    if x >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

/// Root of an increasing-through-zero function by plain bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> f64 {
    let flo = f(lo);
    assert!(flo * f(hi) <= 0.0, "root not bracketed");
    let up = flo < 0.0;
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == up {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn dataset(villages: Vec<Village>, covariate_names: &[&str]) -> Dataset {
    Dataset::new(villages, covariate_names.iter().map(|s| s.to_string()).collect()).unwrap()
}

/// Per-draw compensating-variation oracle. Utilities are
/// `U1 = d1 + b1 (y + S - p) + a1 pi + e1` and `U0 = b0 (y + S) + a0 pi`,
/// with `e1 = -eps` and `eps` drawn from the error distribution. For each
/// draw the transfer `S` equating post- and pre-policy maximal utility is
/// found by bisection. Returns the mean welfare gain `-E[S]` and its
/// simulation standard error.
pub struct CvOracle {
    pub error: ErrorDist,
    /// Adoption utility intercept: intercept plus covariate terms.
    pub d1: f64,
    pub b1: f64,
    pub b0: f64,
    pub alpha1: f64,
    pub alpha0: f64,
    pub wealth: f64,
    pub base_price: f64,
    /// Price faced after the policy (subsidized or base).
    pub new_price: f64,
    pub pi0: f64,
    pub pi1: f64,
}

impl CvOracle {
    fn transfer(&self, eps: f64) -> f64 {
        let y = self.wealth;
        let u1 = |s: f64, p: f64, pi: f64| self.d1 + self.b1 * (y + s - p) + self.alpha1 * pi - eps;
        let u0 = |s: f64, pi: f64| self.b0 * (y + s) + self.alpha0 * pi;
        let before = u1(0.0, self.base_price, self.pi0).max(u0(0.0, self.pi0));
        let gap = |s: f64| u1(s, self.new_price, self.pi1).max(u0(s, self.pi1)) - before;
        let (mut lo, mut hi) = (-1.0, 1.0);
        while gap(lo) > 0.0 {
            lo *= 2.0;
        }
        while gap(hi) < 0.0 {
            hi *= 2.0;
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if gap(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn mean_gain(&self, draws: usize, seed: u64) -> (f64, f64) {
        use rand::{Rng, SeedableRng};
        use rand_distr::StandardNormal;
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..draws {
            let eps = match self.error {
                ErrorDist::Logit => {
                    let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
                    (u / (1.0 - u)).ln()
                }
                ErrorDist::Probit => rng.sample::<f64, _>(StandardNormal),
            };
            let g = -self.transfer(eps);
            s += g;
            s2 += g * g;
        }
        let n = draws as f64;
        let mean = s / n;
        let var = (s2 / n - mean * mean).max(0.0);
        (mean, (var / (n - 1.0)).sqrt())
    }
}
