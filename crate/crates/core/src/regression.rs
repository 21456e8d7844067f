//! Ridge least squares on polynomial features of the Brownian level.
//!
//! The intercept is fitted by centering and is never penalized, so constants
//! are reproduced exactly up to rounding.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::sqrt;

use crate::brownian::Levels;
use crate::stats::{pairwise_accumulate, pairwise_sum};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BasisKind {
    /// Probabilists' Hermite polynomials of `W_t/√t`.
    Hermite,
    /// Raw powers of `W_t`.
    Monomial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct RegressionBasis {
    pub kind: BasisKind,
    /// Polynomial degree per dimension; no cross terms.
    pub degree: usize,
    /// Ridge `λ = ridge·n`.
    pub ridge: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        Self { kind: BasisKind::Hermite, degree: 3, ridge: 1e-8 }
    }
}

impl RegressionBasis {
    pub fn hermite(degree: usize) -> Self {
        Self { degree, ..Self::default() }
    }

    pub fn monomial(degree: usize) -> Self {
        Self { kind: BasisKind::Monomial, degree, ..Self::default() }
    }

    /// Non-intercept features per dimension.
    pub fn features(&self, dim: usize) -> usize {
        self.degree * dim
    }

    pub fn describe(&self) -> String {
        let kind = match self.kind {
            BasisKind::Hermite => "hermite",
            BasisKind::Monomial => "monomial",
        };
        format!("{kind}(degree={}, ridge={:e}*n)", self.degree, self.ridge)
    }

    #[inline]
    fn fill(&self, level: &[f64], inv_sd: f64, out: &mut [f64]) {
        let p = self.degree;
        for (k, &w) in level.iter().enumerate() {
            let row = &mut out[k * p..(k + 1) * p];
            match self.kind {
                BasisKind::Hermite => {
                    let x = w * inv_sd;
                    let (mut h0, mut h1) = (1.0, x);
                    for j in 0..p {
                        if j == 0 {
                            row[0] = h1;
                        } else {
                            let h2 = x * h1 - j as f64 * h0;
                            h0 = h1;
                            h1 = h2;
                            row[j] = h1;
                        }
                    }
                }
                BasisKind::Monomial => {
                    let mut v = 1.0;
                    for slot in row.iter_mut() {
                        v *= w;
                        *slot = v;
                    }
                }
            }
        }
    }

    /// Factor the normal equations at one node.
    pub fn projector(&self, levels: &Levels, node: usize, time: f64) -> Result<NodeProjector> {
        let n = levels.n_paths();
        let d = levels.dim();
        let p = self.features(d);
        let inv_sd = match self.kind {
            BasisKind::Hermite if time > 0.0 => 1.0 / sqrt(time),
            _ => 1.0,
        };
        let at = levels.at_node(node);
        let phi = |path: usize, buf: &mut [f64]| self.fill(&at[path * d..(path + 1) * d], inv_sd, buf);
        let mut proj = NodeProjector {
            basis: *self,
            node,
            inv_sd,
            dim: d,
            n,
            mean: vec![0.0; p],
            chol: vec![0.0; p * p],
            condition: 1.0,
        };
        if p == 0 {
            return Ok(proj);
        }
        let sums = pairwise_accumulate(n, p, |i, acc| {
            with_row(p, |row| {
                phi(i, row);
                for (a, r) in acc.iter_mut().zip(row.iter()) {
                    *a += *r;
                }
            })
        });
        for (m, s) in proj.mean.iter_mut().zip(&sums) {
            *m = s / n as f64;
        }
        let mean = proj.mean.clone();
        let tri = p * (p + 1) / 2;
        let gram = pairwise_accumulate(n, tri, |i, acc| {
            with_row(p, |row| {
                phi(i, row);
                for (r, m) in row.iter_mut().zip(&mean) {
                    *r -= m;
                }
                let mut idx = 0;
                for a in 0..p {
                    for b in 0..=a {
                        acc[idx] += row[a] * row[b];
                        idx += 1;
                    }
                }
            })
        });
        let lambda = self.ridge * n as f64;
        let mut g = vec![0.0; p * p];
        let mut idx = 0;
        for a in 0..p {
            for b in 0..=a {
                g[a * p + b] = gram[idx];
                g[b * p + a] = gram[idx];
                idx += 1;
            }
            g[a * p + a] += lambda;
        }
        cholesky(&mut g, p).map_err(|_| Error::RankDeficient { node })?;
        let diag: Vec<f64> = (0..p).map(|a| g[a * p + a]).collect();
        let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        proj.condition = (hi / lo) * (hi / lo);
        proj.chol = g;
        Ok(proj)
    }
}

// Scratch row on the stack for the usual small feature counts.
#[inline]
fn with_row<R>(p: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    let mut buf = [0.0f64; 32];
    if p <= buf.len() {
        f(&mut buf[..p])
    } else {
        f(&mut vec![0.0; p])
    }
}

// In-place lower Cholesky factor, row-major; the upper triangle is zeroed.
fn cholesky(a: &mut [f64], p: usize) -> core::result::Result<(), ()> {
    for j in 0..p {
        let mut s = a[j * p + j];
        for k in 0..j {
            s -= a[j * p + k] * a[j * p + k];
        }
        if !(s > 0.0) || !s.is_finite() {
            return Err(());
        }
        let l = sqrt(s);
        a[j * p + j] = l;
        for i in j + 1..p {
            let mut t = a[i * p + j];
            for k in 0..j {
                t -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = t / l;
        }
        for k in j + 1..p {
            a[j * p + k] = 0.0;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in i + 1..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// Factored normal equations at one node, reusable for many right-hand sides.
#[derive(Debug, Clone)]
pub struct NodeProjector {
    basis: RegressionBasis,
    node: usize,
    inv_sd: f64,
    dim: usize,
    n: usize,
    mean: Vec<f64>,
    chol: Vec<f64>,
    condition: f64,
}

/// Fitted coefficients: `ŷ = intercept + Σ β_j·(φ_j − φ̄_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub intercept: f64,
    pub beta: Vec<f64>,
}

impl NodeProjector {
    pub fn node(&self) -> usize {
        self.node
    }

    /// `(max L_ii / min L_ii)²`, a cheap proxy for the condition number.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn fit(&self, levels: &Levels, y: &[f64]) -> Fit {
        assert_eq!(y.len(), self.n);
        let p = self.mean.len();
        if y.iter().all(|v| *v == y[0]) {
            return Fit { intercept: y[0], beta: vec![0.0; p] };
        }
        let ybar = pairwise_sum(y) / self.n as f64;
        if p == 0 {
            return Fit { intercept: ybar, beta: Vec::new() };
        }
        let at = levels.at_node(self.node);
        let d = self.dim;
        let mut rhs = pairwise_accumulate(self.n, p, |i, acc| {
            with_row(p, |row| {
                self.basis.fill(&at[i * d..(i + 1) * d], self.inv_sd, row);
                let r = y[i] - ybar;
                for ((a, f), m) in acc.iter_mut().zip(row.iter()).zip(&self.mean) {
                    *a += (f - m) * r;
                }
            })
        });
        cholesky_solve(&self.chol, p, &mut rhs);
        Fit { intercept: ybar, beta: rhs }
    }

    pub fn predict(&self, levels: &Levels, fit: &Fit, out: &mut [f64]) {
        let p = self.mean.len();
        if fit.beta.iter().all(|b| *b == 0.0) {
            out.iter_mut().for_each(|v| *v = fit.intercept);
            return;
        }
        let at = levels.at_node(self.node);
        let d = self.dim;
        let mut row = vec![0.0; p];
        for (i, o) in out.iter_mut().enumerate() {
            self.basis.fill(&at[i * d..(i + 1) * d], self.inv_sd, &mut row);
            let mut v = fit.intercept;
            for j in 0..p {
                v += fit.beta[j] * (row[j] - self.mean[j]);
            }
            *o = v;
        }
    }

    /// Fitted values of `y`.
    pub fn project(&self, levels: &Levels, y: &[f64]) -> Vec<f64> {
        let fit = self.fit(levels, y);
        let mut out = vec![0.0; self.n];
        self.predict(levels, &fit, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::simulate_brownian;
    use crate::grid::TimeGrid;

    fn setup(n: usize) -> (Levels, f64) {
        let ens = simulate_brownian(&TimeGrid::uniform(1.0, 4).unwrap(), 1, n, 17).unwrap();
        (ens.levels(), ens.grid().time(2))
    }

    #[test]
    fn constants_are_exact() {
        let (lv, t) = setup(1000);
        for basis in [RegressionBasis::hermite(3), RegressionBasis::monomial(5)] {
            let pr = basis.projector(&lv, 2, t).unwrap();
            let y = vec![0.37; 1000];
            assert!(pr.project(&lv, &y).iter().all(|v| *v == 0.37));
        }
    }

    #[test]
    fn polynomials_within_the_span_are_recovered() {
        let (lv, t) = setup(5000);
        let at = lv.at_node(2).to_vec();
        let y: Vec<f64> = at.iter().map(|w| 1.0 - 2.0 * w + 0.5 * w * w * w).collect();
        for basis in [RegressionBasis::hermite(3), RegressionBasis::monomial(3)] {
            let pr = basis.projector(&lv, 2, t).unwrap();
            let fitted = pr.project(&lv, &y);
            let err = fitted.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(err < 1e-5, "{:?}: {err}", basis.kind);
        }
    }

    #[test]
    fn degenerate_node_falls_back_to_the_mean() {
        let (lv, _) = setup(300);
        let pr = RegressionBasis::hermite(3).projector(&lv, 0, 0.0).unwrap();
        let y: Vec<f64> = (0..300).map(|i| i as f64).collect();
        let fitted = pr.project(&lv, &y);
        assert!(fitted.iter().all(|v| (v - 149.5).abs() < 1e-9));
    }

    #[test]
    fn hermite_recurrence() {
        let mut out = [0.0; 4];
        RegressionBasis::hermite(4).fill(&[2.0], 1.0, &mut out);
        // He1..He4 at 2: 2, 3, 2, -5.
        assert_eq!(out, [2.0, 3.0, 2.0, -5.0]);
    }
}
