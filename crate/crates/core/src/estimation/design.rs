//! Regression design built from participant households.
//!
//! Rows are stored village by village. Slope columns are centered and scaled
//! internally; each row also belongs to one intercept group.

use crate::error::{Error, Result};
use crate::model::Dataset;
use rayon::prelude::*;
use std::ops::Range;

pub(crate) const CHUNK: usize = 2048;

#[derive(Clone, Debug)]
pub(crate) struct Design {
    pub names: Vec<String>,
    /// Standardized slope columns.
    pub cols: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
    pub group: Vec<usize>,
    pub group_names: Vec<String>,
    pub outcome: Vec<bool>,
    pub village_rows: Vec<Range<usize>>,
    pub village_group: Vec<usize>,
}

/// Source of one slope column: household-level value or a per-village value
/// broadcast to every row of the village.
pub(crate) enum Column {
    Household(String, Box<dyn Fn(&crate::model::Household) -> f64>),
    Village(String, Vec<f64>),
}

impl Design {
    /// `group_of_village[v]` assigns village index `v` to an intercept group.
    pub fn build(
        ds: &Dataset,
        columns: Vec<Column>,
        group_of_village: &[usize],
        group_names: Vec<String>,
    ) -> Result<Self> {
        let mut raw: Vec<Vec<f64>> = vec![Vec::new(); columns.len()];
        let mut names = Vec::with_capacity(columns.len());
        for c in &columns {
            names.push(match c {
                Column::Household(n, _) | Column::Village(n, _) => n.clone(),
            });
        }
        let mut group = Vec::new();
        let mut outcome = Vec::new();
        let mut village_rows = Vec::new();
        for (vi, v) in ds.villages.iter().enumerate() {
            let start = outcome.len();
            for h in v.participants() {
                for (j, c) in columns.iter().enumerate() {
                    raw[j].push(match c {
                        Column::Household(_, f) => f(h),
                        Column::Village(_, vals) => vals[vi],
                    });
                }
                group.push(group_of_village[vi]);
                outcome.push(h.outcome);
            }
            village_rows.push(start..outcome.len());
        }
        let n = outcome.len();
        if n == 0 {
            return Err(Error::input("no participant households"));
        }
        let mut center = Vec::new();
        let mut scale = Vec::new();
        let mut cols = Vec::new();
        for col in raw {
            let m = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
            // A constant column can show rounding-level variance around its
            // computed mean; treat it as exactly constant.
            if var <= 1e-24 * m.abs().max(1.0).powi(2) {
                cols.push(vec![0.0; n]);
                center.push(m);
                scale.push(1.0);
                continue;
            }
            let s = var.sqrt();
            cols.push(col.iter().map(|x| (x - m) / s).collect());
            center.push(m);
            scale.push(s);
        }
        Ok(Design {
            names,
            cols,
            center,
            scale,
            group,
            group_names,
            outcome,
            village_rows,
            village_group: group_of_village.to_vec(),
        })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn k(&self) -> usize {
        self.cols.len()
    }

    pub fn n_groups(&self) -> usize {
        self.group_names.len()
    }

    /// Names of columns that are linear combinations of earlier columns
    /// (slopes first, then intercept groups). Uses modified Gram-Schmidt.
    pub fn collinear_columns(&self) -> Vec<usize> {
        let n = self.n();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let mut bad = Vec::new();
        let total = self.k() + self.n_groups();
        for j in 0..total {
            let mut v: Vec<f64> = if j < self.k() {
                self.cols[j].clone()
            } else {
                let g = j - self.k();
                self.group.iter().map(|&x| if x == g { 1.0 } else { 0.0 }).collect()
            };
            let norm0 = v.iter().map(|x| x * x).sum::<f64>();
            if norm0 == 0.0 {
                bad.push(j);
                continue;
            }
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                for i in 0..n {
                    v[i] -= d * b[i];
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>();
            if norm <= 1e-9 * norm0 {
                bad.push(j);
            } else {
                let s = norm.sqrt();
                basis.push(v.into_iter().map(|x| x / s).collect());
            }
        }
        bad
    }

    pub fn column_name(&self, j: usize) -> String {
        if j < self.k() {
            self.names[j].clone()
        } else {
            format!("intercept[{}]", self.group_names[j - self.k()])
        }
    }

    /// Keeps only the listed slope columns.
    pub fn select(&self, keep: &[usize]) -> Design {
        Design {
            names: keep.iter().map(|&j| self.names[j].clone()).collect(),
            cols: keep.iter().map(|&j| self.cols[j].clone()).collect(),
            center: keep.iter().map(|&j| self.center[j]).collect(),
            scale: keep.iter().map(|&j| self.scale[j]).collect(),
            ..self.clone()
        }
    }

    /// Linear index `x_std' b + a_group` for every row.
    pub fn linear_index(&self, theta: &[f64]) -> Vec<f64> {
        let k = self.k();
        let mut eta: Vec<f64> = self.group.iter().map(|&g| theta[k + g]).collect();
        for (j, col) in self.cols.iter().enumerate() {
            let b = theta[j];
            for (e, x) in eta.iter_mut().zip(col) {
                *e += b * x;
            }
        }
        eta
    }

    /// Jacobian from standardized `[slopes, intercepts]` to original-scale
    /// `[slopes, intercepts]`.
    pub fn destandardize_jacobian(&self) -> nalgebra::DMatrix<f64> {
        let k = self.k();
        let p = k + self.n_groups();
        let mut t = nalgebra::DMatrix::zeros(p, p);
        for j in 0..k {
            t[(j, j)] = 1.0 / self.scale[j];
            for g in 0..self.n_groups() {
                t[(k + g, j)] = -self.center[j] / self.scale[j];
            }
        }
        for g in 0..self.n_groups() {
            t[(k + g, k + g)] = 1.0;
        }
        t
    }
}

/// Sums per-chunk partial results in a fixed order so the total does not
/// depend on the number of threads.
pub(crate) fn chunked_sum<T, F, A>(n: usize, f: F, add: A) -> T
where
    T: Send,
    F: Fn(Range<usize>) -> T + Sync,
    A: Fn(T, T) -> T,
{
    let ranges: Vec<Range<usize>> = (0..n.div_ceil(CHUNK))
        .map(|c| c * CHUNK..((c + 1) * CHUNK).min(n))
        .collect();
    let parts: Vec<T> = ranges.into_par_iter().map(&f).collect();
    let mut it = parts.into_iter();
    let first = it.next().unwrap_or_else(|| f(0..0));
    it.fold(first, add)
}
