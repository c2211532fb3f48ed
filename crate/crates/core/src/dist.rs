//! Distribution of the latent utility shock.

use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, SQRT_2};

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal CDF, accurate in both tails.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Inverse Mills ratio `phi(x) / Phi(x)`, stable for very negative `x`.
pub fn normal_mills(x: f64) -> f64 {
    if x > -30.0 {
        normal_pdf(x) / normal_cdf(x)
    } else {
        let z = -x;
        let z2 = z * z;
        z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2))
    }
}

/// CDF of the shock that separates adoption from non-adoption.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorDist {
    Logit,
    Probit,
}

impl ErrorDist {
    pub fn cdf(self, x: f64) -> f64 {
        match self {
            ErrorDist::Logit => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            ErrorDist::Probit => normal_cdf(x),
        }
    }

    pub fn pdf(self, x: f64) -> f64 {
        match self {
            ErrorDist::Logit => {
                let e = (-x.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            ErrorDist::Probit => normal_pdf(x),
        }
    }

    /// Supremum of the density over the real line.
    pub fn sup_density(self) -> f64 {
        match self {
            ErrorDist::Logit => 0.25,
            ErrorDist::Probit => 1.0 / (2.0 * PI).sqrt(),
        }
    }

    /// Quantile function, used for inverse-CDF sampling.
    pub fn quantile(self, u: f64) -> f64 {
        match self {
            ErrorDist::Logit => (u / (1.0 - u)).ln(),
            ErrorDist::Probit => normal_quantile(u),
        }
    }

    /// Log-likelihood contribution of one binary outcome at index `eta`,
    /// with its first and second derivatives in `eta`.
    pub fn loglik_terms(self, eta: f64, outcome: bool) -> (f64, f64, f64) {
        match self {
            ErrorDist::Logit => {
                let p = self.cdf(eta);
                let softplus = if eta > 0.0 {
                    eta + (-eta).exp().ln_1p()
                } else {
                    eta.exp().ln_1p()
                };
                let y = if outcome { 1.0 } else { 0.0 };
                let w = self.pdf(eta);
                (y * eta - softplus, y - p, -w)
            }
            ErrorDist::Probit => {
                if outcome {
                    let m = normal_mills(eta);
                    (ln_normal_cdf(eta), m, -m * (eta + m))
                } else {
                    let r = normal_mills(-eta);
                    (ln_normal_cdf(-eta), -r, -r * (r - eta))
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorDist::Logit => "logit",
            ErrorDist::Probit => "probit",
        }
    }
}

fn ln_normal_cdf(x: f64) -> f64 {
    if x > -30.0 {
        normal_cdf(x).ln()
    } else {
        let z = -x;
        -0.5 * z * z - z.ln() - 0.5 * (2.0 * PI).ln() + (1.0 - 1.0 / (z * z)).ln()
    }
}

/// Standard normal quantile (Acklam's rational approximation refined by one
/// Halley step, giving close to full double precision).
pub fn normal_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let plow = 0.02425;
    let x = if p < plow {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - plow {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let e = normal_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_symmetry() {
        for &x in &[-5.0, -0.3, 0.0, 2.2, 17.0] {
            let d = ErrorDist::Logit;
            assert!((d.cdf(x) + d.cdf(-x) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn probit_reference_values() {
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-15);
        assert!((normal_cdf(-1.0) - 0.15865525393145707).abs() < 1e-15);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-10, 0.01, 0.3, 0.5, 0.77, 0.999999] {
            let x = normal_quantile(p);
            assert!((normal_cdf(x) - p).abs() < 1e-14 * p.max(1e-3));
        }
    }

    #[test]
    fn loglik_derivatives_match_finite_differences() {
        for dist in [ErrorDist::Logit, ErrorDist::Probit] {
            for &y in &[true, false] {
                for &eta in &[-3.0, -0.4, 0.0, 1.3, 4.0] {
                    let h = 1e-5;
                    let (_, d1, d2) = dist.loglik_terms(eta, y);
                    let lp = dist.loglik_terms(eta + h, y);
                    let lm = dist.loglik_terms(eta - h, y);
                    assert!(((lp.0 - lm.0) / (2.0 * h) - d1).abs() < 1e-7);
                    assert!(((lp.1 - lm.1) / (2.0 * h) - d2).abs() < 1e-7);
                }
            }
        }
    }
}
