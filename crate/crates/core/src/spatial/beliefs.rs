//! Heterogeneous beliefs under spatially correlated shocks.
//!
//! Household `h` at location `l_h` with shock `e` believes a share
//! `psi(h, e) = (1/N) sum_k P(e_k >= e*_k | e_h = e)` of the village adopts,
//! where `e*_k` is the shock at which `k` is indifferent. Shocks are standard
//! normal with correlation `rho(|l_h - l_k|)`, so each term is a bivariate
//! normal conditional probability. A household's own term uses the marginal.
//!
//! Beliefs are stored on a grid of shock values and interpolated linearly.
//! For weakly correlated pairs the conditional probability is expanded in
//! Hermite polynomials (Mehler's formula), which lets the sum over `k` be
//! accumulated once per household instead of once per grid node.

use crate::dist::{normal_cdf, normal_pdf};
use crate::equilibrium::{fixed_point_iterate, FixedPointOptions};
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Shock grid half-width.
pub const SHOCK_GRID_BOUND: f64 = 6.0;
pub const DEFAULT_GRID_SIZE: usize = 129;

/// Pairs at or above this correlation use the closed-form conditional CDF.
const EXACT_CORRELATION: f64 = 0.5;
/// Pairs below this correlation are treated as independent.
const NEGLIGIBLE_CORRELATION: f64 = 1e-20;
/// Series order for correlation `rho` is `SERIES_DIGITS / -ln(rho)`.
const SERIES_DIGITS: f64 = 46.05;

/// Correlation of shocks as a function of L1 distance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Correlogram {
    /// `exp(-d / range)`.
    Exponential { range: f64 },
    /// Zero correlation between distinct households.
    Independent,
}

impl Correlogram {
    pub fn correlation(&self, d: f64) -> f64 {
        match *self {
            Correlogram::Exponential { range } => {
                if range <= 0.0 {
                    if d == 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-d / range).exp()
                }
            }
            Correlogram::Independent => 0.0,
        }
    }
}

pub fn l1_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs()
}

/// `P(e_k <= e_tilde | e_h = e)` for standard normal shocks with correlation
/// `rho(d)`.
pub fn conditional_cdf(e_tilde: f64, e: f64, d: f64, correlogram: &Correlogram) -> f64 {
    conditional_cdf_rho(e_tilde, e, correlogram.correlation(d))
}

fn conditional_cdf_rho(e_tilde: f64, e: f64, rho: f64) -> f64 {
    let s2 = 1.0 - rho * rho;
    if s2 <= 1e-14 {
        return if e_tilde >= rho * e { 1.0 } else { 0.0 };
    }
    normal_cdf((e_tilde - rho * e) / s2.sqrt())
}

#[derive(Clone, Copy, Debug)]
struct Pair {
    k: u32,
    order: u32,
    rho: f64,
}

/// Pairwise correlations of one village, split into exactly evaluated and
/// series-expanded pairs.
#[derive(Clone, Debug)]
pub struct PairStructure {
    n: usize,
    near: Vec<Vec<(u32, f64)>>,
    far: Vec<Vec<Pair>>,
    max_order: Vec<usize>,
}

impl PairStructure {
    pub fn new(locations: &[[f64; 2]], correlogram: &Correlogram) -> Self {
        let n = locations.len();
        let rows: Vec<(Vec<(u32, f64)>, Vec<Pair>, usize)> = (0..n)
            .into_par_iter()
            .map(|h| {
                let mut near = Vec::new();
                let mut far = Vec::new();
                let mut top = 0usize;
                for (k, lk) in locations.iter().enumerate() {
                    if k == h {
                        continue;
                    }
                    let rho = correlogram.correlation(l1_distance(locations[h], *lk));
                    if rho >= EXACT_CORRELATION {
                        near.push((k as u32, rho));
                    } else if rho > NEGLIGIBLE_CORRELATION {
                        let order = ((SERIES_DIGITS / -rho.ln()).floor() as usize).max(1);
                        top = top.max(order);
                        far.push(Pair {
                            k: k as u32,
                            order: order as u32,
                            rho,
                        });
                    }
                }
                (near, far, top)
            })
            .collect();
        let mut near = Vec::with_capacity(n);
        let mut far = Vec::with_capacity(n);
        let mut max_order = Vec::with_capacity(n);
        for (a, b, c) in rows {
            near.push(a);
            far.push(b);
            max_order.push(c);
        }
        PairStructure {
            n,
            near,
            far,
            max_order,
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn series_order(&self) -> usize {
        self.max_order.iter().cloned().max().unwrap_or(0)
    }
}

/// Normalized Hermite polynomials `He_n(x) / sqrt(n!)` for `n = 0..=order`.
fn hermite_normalized(x: f64, order: usize, out: &mut [f64]) {
    out[0] = 1.0;
    if order >= 1 {
        out[1] = x;
    }
    for n in 2..=order {
        let nf = n as f64;
        out[n] = (x * out[n - 1] - (nf - 1.0).sqrt() * out[n - 2]) / nf.sqrt();
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BeliefOptions {
    pub tol: f64,
    pub max_sweeps: usize,
    /// Number of past sweeps mixed by Anderson acceleration; 0 iterates the
    /// operator plainly.
    pub anderson_depth: usize,
}

impl Default for BeliefOptions {
    fn default() -> Self {
        BeliefOptions {
            tol: 1e-8,
            max_sweeps: 5000,
            anderson_depth: 5,
        }
    }
}

/// One village's belief problem.
#[derive(Clone, Debug)]
pub struct BeliefProblem<'a> {
    pub pairs: &'a PairStructure,
    /// Index of each household without the belief term.
    pub base: &'a [f64],
    pub interaction: f64,
    pub grid_size: usize,
}

/// Converged belief field of a village.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeliefField {
    pub nodes: Vec<f64>,
    /// Row-major: household `h` occupies `psi[h*G..(h+1)*G]`.
    pub psi: Vec<f64>,
    pub households: usize,
    /// Indifference shock of each household at the converged beliefs.
    pub crossings: Vec<f64>,
    /// Equilibrium belief of the model with independent shocks.
    pub pi_bar: f64,
    /// Sup-norm change from one more operator application.
    pub residual: f64,
    pub sweeps: usize,
}

pub fn shock_grid(size: usize) -> Vec<f64> {
    (0..size)
        .map(|i| -SHOCK_GRID_BOUND + 2.0 * SHOCK_GRID_BOUND * i as f64 / (size - 1) as f64)
        .collect()
}

/// Normalized weights proportional to the normal density times trapezoid
/// widths on the shock grid.
pub fn shock_weights(nodes: &[f64]) -> Vec<f64> {
    let g = nodes.len();
    let mut w: Vec<f64> = (0..g)
        .map(|i| {
            let left = if i > 0 { nodes[i] - nodes[i - 1] } else { 0.0 };
            let right = if i + 1 < g { nodes[i + 1] - nodes[i] } else { 0.0 };
            0.5 * (left + right) * normal_pdf(nodes[i])
        })
        .collect();
    let s: f64 = w.iter().sum();
    for x in &mut w {
        *x /= s;
    }
    w
}

fn interpolate(nodes: &[f64], row: &[f64], e: f64) -> f64 {
    let g = nodes.len();
    if e <= nodes[0] {
        return row[0];
    }
    if e >= nodes[g - 1] {
        return row[g - 1];
    }
    let step = nodes[1] - nodes[0];
    let i = (((e - nodes[0]) / step).floor() as usize).min(g - 2);
    let t = (e - nodes[i]) / step;
    row[i] + t * (row[i + 1] - row[i])
}

/// Shock at which `base + alpha * psi(e) + e = 0`, with `psi` linear between
/// nodes and constant outside the grid.
fn crossing(nodes: &[f64], row: &[f64], base: f64, alpha: f64) -> f64 {
    let g = nodes.len();
    let val = |i: usize| base + alpha * row[i] + nodes[i];
    if val(0) > 0.0 {
        return -base - alpha * row[0];
    }
    if val(g - 1) < 0.0 {
        return -base - alpha * row[g - 1];
    }
    let (mut lo, mut hi) = (0usize, g - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if val(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (vl, vh) = (val(lo), val(hi));
    if vh == vl {
        return nodes[lo];
    }
    nodes[lo] - vl * (nodes[hi] - nodes[lo]) / (vh - vl)
}

impl BeliefField {
    pub fn row(&self, h: usize) -> &[f64] {
        let g = self.nodes.len();
        &self.psi[h * g..(h + 1) * g]
    }

    pub fn belief_at(&self, h: usize, e: f64) -> f64 {
        interpolate(&self.nodes, self.row(h), e)
    }

    /// Probability that household `h` adopts.
    pub fn choice_probability(&self, h: usize) -> f64 {
        1.0 - normal_cdf(self.crossings[h])
    }

    /// Shock-density weighted mean of `|psi - pi_bar|`, averaged over
    /// households, and the largest deviation on the grid.
    pub fn deviation_from_benchmark(&self) -> (f64, f64) {
        let w = shock_weights(&self.nodes);
        let mut mean = 0.0;
        let mut sup: f64 = 0.0;
        for h in 0..self.households {
            for (x, wi) in self.row(h).iter().zip(&w) {
                let d = (x - self.pi_bar).abs();
                mean += wi * d;
                sup = sup.max(d);
            }
        }
        (mean / self.households as f64, sup)
    }
}

/// Equilibrium of the model with independent shocks.
pub fn independent_benchmark(base: &[f64], alpha: f64) -> Result<f64> {
    let n = base.len() as f64;
    let map = |p: f64| base.iter().map(|b| normal_cdf(b + alpha * p)).sum::<f64>() / n;
    Ok(fixed_point_iterate(map, 0.5, &FixedPointOptions::default())?.value)
}

struct Workspace {
    nodes: Vec<f64>,
    hermite_nodes: Vec<f64>,
    order: usize,
}

impl BeliefProblem<'_> {
    fn validate(&self) -> Result<()> {
        if self.base.len() != self.pairs.len() || self.base.is_empty() {
            return Err(Error::input("base index length must match the number of households"));
        }
        if self.grid_size < 3 {
            return Err(Error::input("shock grid needs at least 3 nodes"));
        }
        if !(self.interaction >= 0.0 && self.interaction * normal_pdf(0.0) < 1.0) {
            return Err(Error::input(format!(
                "interaction {} outside the contraction region [0, {:.6})",
                self.interaction,
                1.0 / normal_pdf(0.0)
            )));
        }
        if self.base.iter().any(|b| !b.is_finite()) {
            return Err(Error::input("non-finite base index"));
        }
        Ok(())
    }

    fn workspace(&self) -> Workspace {
        let nodes = shock_grid(self.grid_size);
        let order = self.pairs.series_order();
        let mut hermite_nodes = vec![0.0; (order + 1) * nodes.len()];
        let mut buf = vec![0.0; order + 1];
        for (i, &e) in nodes.iter().enumerate() {
            hermite_normalized(e, order, &mut buf);
            for n in 0..=order {
                hermite_nodes[n * nodes.len() + i] = buf[n];
            }
        }
        Workspace {
            nodes,
            hermite_nodes,
            order,
        }
    }

    fn crossings(&self, ws: &Workspace, psi: &[f64]) -> Vec<f64> {
        let g = ws.nodes.len();
        (0..self.pairs.n)
            .map(|k| crossing(&ws.nodes, &psi[k * g..(k + 1) * g], self.base[k], self.interaction))
            .collect()
    }

    /// One application of the belief operator.
    fn apply(&self, ws: &Workspace, psi: &[f64], out: &mut [f64]) -> Vec<f64> {
        let g = ws.nodes.len();
        let n = self.pairs.n;
        let order = ws.order;
        let estar = self.crossings(ws, psi);
        let c0: Vec<f64> = estar.iter().map(|&e| normal_cdf(-e)).collect();
        let total0: f64 = c0.iter().sum();
        // coef[k*(order+1) + m] = phi(e*) He_{m-1}(e*) / sqrt(m!) * ... for m >= 1
        let mut coef = vec![0.0; n * (order + 1)];
        if order > 0 {
            coef.par_chunks_mut(order + 1).zip(&estar).for_each(|(c, &e)| {
                let mut u = vec![0.0; order + 1];
                hermite_normalized(e, order, &mut u);
                let ph = normal_pdf(e);
                for m in 1..=order {
                    c[m] = ph * u[m - 1] / (m as f64).sqrt();
                }
            });
        }
        let inv_n = 1.0 / n as f64;
        out.par_chunks_mut(g).enumerate().for_each(|(h, row)| {
            let near = &self.pairs.near[h];
            let far = &self.pairs.far[h];
            let top = self.pairs.max_order[h];
            let mut t = vec![0.0; top + 1];
            t[0] = total0 - near.iter().map(|&(k, _)| c0[k as usize]).sum::<f64>();
            for p in far {
                let base = p.k as usize * (order + 1);
                let mut r = 1.0;
                for m in 1..=p.order as usize {
                    r *= p.rho;
                    t[m] += r * coef[base + m];
                }
            }
            for (i, slot) in row.iter_mut().enumerate() {
                let mut s = t[0];
                for (m, tm) in t.iter().enumerate().skip(1) {
                    s += ws.hermite_nodes[m * g + i] * tm;
                }
                let e = ws.nodes[i];
                for &(k, rho) in near {
                    s += 1.0 - conditional_cdf_rho(estar[k as usize], e, rho);
                }
                *slot = (s * inv_n).clamp(0.0, 1.0);
            }
        });
        estar
    }

    /// Iterates the operator from `init` (or the independent benchmark) until
    /// the sup-norm change drops below `opts.tol`.
    pub fn solve(&self, init: Option<&[f64]>, opts: &BeliefOptions) -> Result<BeliefField> {
        self.validate()?;
        let ws = self.workspace();
        let g = ws.nodes.len();
        let n = self.pairs.n;
        let pi_bar = independent_benchmark(self.base, self.interaction)?;
        let mut psi = match init {
            Some(x) if x.len() == n * g => x.to_vec(),
            Some(_) => return Err(Error::input("initial belief field has the wrong size")),
            None => vec![pi_bar; n * g],
        };
        let mut next = vec![0.0; n * g];
        let mut sweeps = 0;
        let mut change = f64::INFINITY;
        let mut mix = Anderson::new(opts.anderson_depth);
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            self.apply(&ws, &psi, &mut next);
            change = psi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            if change < opts.tol {
                std::mem::swap(&mut psi, &mut next);
                break;
            }
            mix.step(&mut psi, &next);
        }
        if change >= opts.tol {
            return Err(Error::solver(
                format!("belief field did not converge in {} sweeps", opts.max_sweeps),
                change,
            ));
        }
        let crossings = self.apply(&ws, &psi, &mut next);
        let residual = psi.iter().zip(&next).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        for h in 0..n {
            let row = &psi[h * g..(h + 1) * g];
            if row.windows(2).any(|w| w[1] < w[0] - 1e-10) {
                return Err(Error::Numerical(format!(
                    "belief of household {h} is not monotone in its own shock"
                )));
            }
        }
        Ok(BeliefField {
            nodes: ws.nodes,
            psi,
            households: n,
            crossings,
            pi_bar,
            residual,
            sweeps,
        })
    }
}

/// Anderson mixing of a fixed-point iteration `x -> G(x)` on beliefs.
struct Anderson {
    depth: usize,
    xs: Vec<Vec<f64>>,
    fs: Vec<Vec<f64>>,
}

impl Anderson {
    fn new(depth: usize) -> Self {
        Anderson {
            depth,
            xs: Vec::new(),
            fs: Vec::new(),
        }
    }

    /// Replaces `x` by the next iterate given `gx = G(x)`.
    fn step(&mut self, x: &mut Vec<f64>, gx: &[f64]) {
        let f: Vec<f64> = gx.iter().zip(x.iter()).map(|(g, a)| g - a).collect();
        if self.depth == 0 {
            x.copy_from_slice(gx);
            return;
        }
        self.xs.push(x.clone());
        self.fs.push(f);
        if self.xs.len() > self.depth + 1 {
            self.xs.remove(0);
            self.fs.remove(0);
        }
        let m = self.xs.len() - 1;
        let last = &self.fs[m];
        let mixed = (m > 0).then(|| {
            let df: Vec<Vec<f64>> = (0..m)
                .map(|j| self.fs[j + 1].iter().zip(&self.fs[j]).map(|(a, b)| a - b).collect())
                .collect();
            let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
            let a = nalgebra::DMatrix::from_fn(m, m, |i, j| dot(&df[i], &df[j]));
            let b = nalgebra::DVector::from_fn(m, |i, _| dot(&df[i], last));
            let ridge = 1e-12 * a.diagonal().max().max(f64::MIN_POSITIVE);
            (a + nalgebra::DMatrix::identity(m, m) * ridge).cholesky().map(|c| (c.solve(&b), df))
        });
        match mixed.flatten() {
            Some((gamma, df)) if gamma.iter().all(|v| v.is_finite()) => {
                let xm = &self.xs[m];
                for i in 0..x.len() {
                    let mut v = xm[i] + last[i];
                    for j in 0..m {
                        let dx = self.xs[j + 1][i] - self.xs[j][i];
                        v -= gamma[j] * (dx + df[j][i]);
                    }
                    x[i] = v.clamp(0.0, 1.0);
                }
            }
            _ => {
                x.copy_from_slice(gx);
                if m > 0 {
                    self.xs.clear();
                    self.fs.clear();
                }
            }
        }
    }
}

/// Convenience wrapper: builds the pair structure and solves.
pub fn solve_conditional_beliefs(
    locations: &[[f64; 2]],
    base: &[f64],
    interaction: f64,
    correlogram: &Correlogram,
    grid_size: usize,
    opts: &BeliefOptions,
) -> Result<BeliefField> {
    let pairs = PairStructure::new(locations, correlogram);
    BeliefProblem {
        pairs: &pairs,
        base,
        interaction,
        grid_size,
    }
    .solve(None, opts)
}

/// Adoption probability of household `h` in a solved field.
pub fn sd_choice_probability(field: &BeliefField, h: usize) -> Result<f64> {
    if h >= field.households {
        return Err(Error::input(format!("household index {h} out of range")));
    }
    Ok(field.choice_probability(h))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mehler_series_matches_closed_form() {
        let order = 80;
        let mut ue = vec![0.0; order + 1];
        let mut us = vec![0.0; order + 1];
        for &rho in &[0.01, 0.2, 0.49] {
            let terms = ((SERIES_DIGITS / -f64::ln(rho)).floor() as usize).max(1);
            for &e in &[-6.0, -1.3, 0.0, 2.5, 6.0] {
                for &es in &[-4.0, -0.7, 0.4, 3.0] {
                    hermite_normalized(e, order, &mut ue);
                    hermite_normalized(es, order, &mut us);
                    let mut s = normal_cdf(-es);
                    for m in 1..=terms {
                        s += rho.powi(m as i32) * ue[m] * normal_pdf(es) * us[m - 1] / (m as f64).sqrt();
                    }
                    let exact = 1.0 - conditional_cdf_rho(es, e, rho);
                    assert!((s - exact).abs() < 1e-12, "rho {rho} e {e} e* {es}: {s} vs {exact}");
                }
            }
        }
    }

    #[test]
    fn crossing_is_exact_for_linear_rows() {
        let nodes = shock_grid(5);
        let row = [0.1, 0.2, 0.3, 0.4, 0.5];
        let e = crossing(&nodes, &row, 0.5, 1.0);
        assert!((0.5 + interpolate(&nodes, &row, e) + e).abs() < 1e-14);
    }
}
