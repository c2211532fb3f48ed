//! Composite Simpson quadrature with panel doubling.

use crate::error::{Error, Result};

/// Composite Simpson rule. Starts at `panels` and doubles until two
/// successive estimates agree to `rel_tol`, or to `abs_tol` per unit of
/// interval length, at most `max_doublings` times.
/// With `max_doublings == 0` the rule is a fixed-panel Simpson sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Simpson {
    pub panels: usize,
    pub rel_tol: f64,
    /// Absolute floor, for integrals that are rounding noise.
    pub abs_tol: f64,
    pub max_doublings: usize,
}

impl Default for Simpson {
    fn default() -> Self {
        Simpson {
            panels: 2048,
            rel_tol: 1e-9,
            abs_tol: 1e-14,
            max_doublings: 8,
        }
    }
}

impl Simpson {
    pub fn fixed(panels: usize) -> Self {
        Simpson {
            panels,
            rel_tol: 0.0,
            abs_tol: 0.0,
            max_doublings: 0,
        }
    }

    /// Integral of `f` from `a` to `b`. Reversed limits give the negated
    /// value; equal limits give zero.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if !(a.is_finite() && b.is_finite()) {
            return Err(Error::Numerical(format!("non-finite limits [{a}, {b}]")));
        }
        if a == b {
            return Ok(0.0);
        }
        let mut n = self.panels.max(2);
        if n % 2 == 1 {
            n += 1;
        }
        let mut h = (b - a) / n as f64;
        let ends = f(a) + f(b);
        let mut odd = 0.0;
        let mut even = 0.0;
        for i in 1..n {
            let v = f(a + i as f64 * h);
            if i % 2 == 1 {
                odd += v;
            } else {
                even += v;
            }
        }
        let mut est = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
        if !est.is_finite() {
            return Err(Error::Numerical("integrand produced a non-finite value".into()));
        }
        for _ in 0..self.max_doublings {
            even += odd;
            n *= 2;
            h *= 0.5;
            odd = 0.0;
            for i in (1..n).step_by(2) {
                odd += f(a + i as f64 * h);
            }
            let next = h / 3.0 * (ends + 4.0 * odd + 2.0 * even);
            if !next.is_finite() {
                return Err(Error::Numerical("integrand produced a non-finite value".into()));
            }
            let done = (next - est).abs()
                <= (self.rel_tol * next.abs()).max(self.abs_tol * (b - a).abs()).max(f64::MIN_POSITIVE);
            est = next;
            if done {
                return Ok(est);
            }
        }
        if self.max_doublings == 0 {
            return Ok(est);
        }
        Err(Error::Numerical(format!(
            "Simpson rule did not reach relative tolerance {} over [{a}, {b}]",
            self.rel_tol
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic_is_exact() {
        let v = Simpson::fixed(2).integrate(|x| x * x * x - x, 0.0, 2.0).unwrap();
        assert!((v - 2.0).abs() < 1e-14);
    }

    #[test]
    fn reversed_limits_negate() {
        let s = Simpson::default();
        let a = s.integrate(f64::exp, 0.0, 1.0).unwrap();
        let b = s.integrate(f64::exp, 1.0, 0.0).unwrap();
        assert!((a + b).abs() < 1e-14);
        assert!((a - (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn rounding_noise_integrand_terminates() {
        // 1 - F is below machine epsilon over the whole interval
        let f = |x: f64| 1.0 - 1.0 / (1.0 + (-(40.0 + x)).exp());
        let v = Simpson::default().integrate(f, 0.0, 5.0).unwrap();
        assert!(v.abs() < 1e-13);
    }

    #[test]
    fn logistic_against_softplus() {
        // The integral of a logistic CDF in closed form is a softplus.
        let f = |x: f64| 1.0 / (1.0 + (-(0.3 - 0.02 * x)).exp());
        let sp = |x: f64| (1.0 + (0.3 - 0.02 * x).exp()).ln() / -0.02;
        let exact = sp(250.0) - sp(-40.0);
        let v = Simpson::default().integrate(f, -40.0, 250.0).unwrap();
        assert!((v - exact).abs() < 1e-9 * exact.abs());
    }
}
