//! Bound-constrained Newton ascent with backtracking line search.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub(crate) trait Objective {
    fn value_grad(&mut self, theta: &[f64]) -> Result<(f64, Vec<f64>)>;

    fn value(&mut self, theta: &[f64]) -> Result<f64> {
        Ok(self.value_grad(theta)?.0)
    }

    /// Hessian of the objective at `theta`.
    fn hessian(&mut self, theta: &[f64]) -> Result<DMatrix<f64>>;

    /// Called on every accepted iterate; used for separation checks.
    fn check(&self, _theta: &[f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Optimum {
    pub theta: Vec<f64>,
    pub value: f64,
    pub grad: Vec<f64>,
    pub hessian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub at_bound: Vec<bool>,
}

impl Optimum {
    /// Norm of the gradient over coordinates not held at a bound.
    pub fn projected_gradient_norm(&self) -> f64 {
        self.grad
            .iter()
            .zip(&self.at_bound)
            .filter(|(_, b)| !**b)
            .map(|(g, _)| g * g)
            .sum::<f64>()
            .sqrt()
    }
}

pub(crate) struct NewtonOptions {
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions {
            max_iter: 200,
            grad_tol: 1e-8,
        }
    }
}

fn active_set(theta: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<bool> {
    (0..theta.len())
        .map(|j| (theta[j] <= lo[j] && g[j] < 0.0) || (theta[j] >= hi[j] && g[j] > 0.0))
        .collect()
}

/// Maximizes `obj` within the box `[lo, hi]`.
pub(crate) fn maximize<O: Objective>(
    obj: &mut O,
    theta0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NewtonOptions,
) -> Result<Optimum> {
    let p = theta0.len();
    let clamp = |t: &mut Vec<f64>| {
        for j in 0..p {
            t[j] = t[j].clamp(lo[j], hi[j]);
        }
    };
    let mut theta = theta0.to_vec();
    clamp(&mut theta);
    let (mut f, mut g) = obj.value_grad(&theta)?;
    if !f.is_finite() {
        return Err(Error::Numerical("objective is not finite at the starting value".into()));
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        let active = active_set(&theta, &g, lo, hi);
        let pg: f64 = (0..p).filter(|&j| !active[j]).map(|j| g[j] * g[j]).sum::<f64>().sqrt();
        if pg < opts.grad_tol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<usize> = (0..p).filter(|&j| !active[j]).collect();
        let h = obj.hessian(&theta)?;
        let m = free.len();
        let mut a = DMatrix::from_fn(m, m, |r, c| -0.5 * (h[(free[r], free[c])] + h[(free[c], free[r])]));
        let gf = DVector::from_iterator(m, free.iter().map(|&j| g[j]));
        let mut ridge = 0.0;
        let step = loop {
            if let Some(ch) = a.clone().cholesky() {
                break ch.solve(&gf);
            }
            let scale = (0..m).map(|i| a[(i, i)].abs()).fold(1e-12, f64::max);
            let next = if ridge == 0.0 { 1e-10 * scale } else { ridge * 10.0 };
            for i in 0..m {
                a[(i, i)] += next - ridge;
            }
            ridge = next;
            if ridge > 1e12 * scale {
                return Err(Error::Numerical("could not regularize Newton system".into()));
            }
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = theta.clone();
            for (i, &j) in free.iter().enumerate() {
                trial[j] += t * step[i];
            }
            clamp(&mut trial);
            let dir: f64 = (0..p).map(|j| g[j] * (trial[j] - theta[j])).sum();
            match obj.value(&trial) {
                Ok(ft) if ft.is_finite() => {
                    if ft >= f + 1e-4 * dir || (ft - f).abs() <= 1e-13 * f.abs().max(1.0) {
                        accepted = Some((trial, ft));
                        break;
                    }
                }
                Ok(_) | Err(Error::Numerical(_)) | Err(Error::Solver { .. }) => {}
                Err(e) => return Err(e),
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };
        obj.check(&trial)?;
        let moved = (0..p).map(|j| (trial[j] - theta[j]).abs()).fold(0.0, f64::max);
        let (fn_, gn) = obj.value_grad(&trial)?;
        let _ = ft;
        theta = trial;
        f = fn_;
        g = gn;
        if moved < 1e-13 {
            let active = active_set(&theta, &g, lo, hi);
            let pg: f64 = (0..p).filter(|&j| !active[j]).map(|j| g[j] * g[j]).sum::<f64>().sqrt();
            converged = pg < opts.grad_tol.max(1e-6);
            break;
        }
    }
    let hessian = obj.hessian(&theta)?;
    let at_bound = (0..p).map(|j| theta[j] <= lo[j] || theta[j] >= hi[j]).collect();
    let active = active_set(&theta, &g, lo, hi);
    if !converged {
        let pg: f64 = (0..p).filter(|&j| !active[j]).map(|j| g[j] * g[j]).sum::<f64>().sqrt();
        converged = pg < opts.grad_tol.max(1e-6);
    }
    Ok(Optimum {
        theta,
        value: f,
        grad: g,
        hessian,
        iterations,
        converged,
        at_bound,
    })
}

/// Hessian by central differences of an analytic gradient.
pub(crate) fn fd_hessian<F>(mut grad: F, theta: &[f64], step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let p = theta.len();
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        let dj = step * theta[j].abs().max(1.0);
        let mut tp = theta.to_vec();
        tp[j] += dj;
        let mut tm = theta.to_vec();
        tm[j] -= dj;
        let gp = grad(&tp)?;
        let gm = grad(&tm)?;
        for i in 0..p {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * dj);
        }
    }
    Ok(0.5 * (&h + h.transpose()))
}
