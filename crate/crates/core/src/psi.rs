//! The weight function `ψ(x, μ) = x·exp(μ·√(2·ln(1 + x)))` and executable forms
//! of its inequalities.
//!
//! Each `*_residual` function returns `RHS − LHS` of an inequality that holds
//! for all admissible arguments, packaged as a [`Residual`] so callers can apply
//! the relative tolerance `tol·(1 + |RHS|)`.

use alloc::format;
use alloc::vec::Vec;
use libm::{exp, log1p, pow, sqrt};

use crate::rng::{CounterRng, STREAM_SAMPLERS};

use crate::{Error, Result};

/// Relative slack used by the inequality suites.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Integrability weight `μ`, Lipschitz-in-z constant `b` and horizon `T`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PsiParams {
    pub mu: f64,
    pub b: f64,
    pub horizon: f64,
}

impl PsiParams {
    pub fn new(mu: f64, b: f64, horizon: f64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::Domain(format!("mu must be positive, got {mu}")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::Domain(format!("b must be nonnegative, got {b}")));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { mu, b, horizon })
    }

    /// `b·√T`, the critical value of `μ`.
    pub fn critical_mu(&self) -> f64 {
        self.b * sqrt(self.horizon)
    }

    pub fn is_supercritical(&self) -> bool {
        self.mu > self.critical_mu()
    }

    pub fn require_supercritical(&self) -> Result<()> {
        if self.is_supercritical() {
            Ok(())
        } else {
            Err(Error::Subcritical { mu: self.mu, critical: self.critical_mu() })
        }
    }

    /// Longest interval length `δ` with `μ > b·√δ` (infinite when `b = 0`).
    pub fn max_slice_length(&self) -> f64 {
        if self.b == 0.0 {
            f64::INFINITY
        } else {
            (self.mu / self.b) * (self.mu / self.b)
        }
    }

    /// Same weight with a different horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.mu, self.b, horizon)
    }
}

/// `ψ(x, μ)`. Errors on `x < 0`, NaN, or `μ ≤ 0`.
pub fn psi(x: f64, mu: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("psi needs x >= 0, got {x}")));
    }
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("psi needs mu > 0, got {mu}")));
    }
    Ok(psi_unchecked(x, mu))
}

/// `ψ` without argument validation; `x` must be nonnegative.
#[inline]
pub fn psi_unchecked(x: f64, mu: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    x * exp(mu * sqrt(2.0 * log1p(x)))
}

/// Both sides of an inequality `LHS ≤ RHS`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub lhs: f64,
    pub rhs: f64,
}

impl Residual {
    /// `RHS − LHS`.
    pub fn value(&self) -> f64 {
        if self.rhs == f64::INFINITY && self.lhs.is_finite() {
            return f64::INFINITY;
        }
        self.rhs - self.lhs
    }

    /// `(RHS − LHS)/(1 + |RHS|)`; `+∞` when the RHS overflows past a finite LHS.
    pub fn margin(&self) -> f64 {
        let v = self.value();
        if v == f64::INFINITY {
            return f64::INFINITY;
        }
        v / (1.0 + self.rhs.abs())
    }

    /// `RHS − LHS ≥ −tol·(1 + |RHS|)`.
    pub fn holds(&self, tol: f64) -> bool {
        let v = self.value();
        if v.is_nan() {
            return false;
        }
        v >= -tol * (1.0 + self.rhs.abs())
    }
}

/// `e^x·y ≤ e^{x²/(2μ²)} + e^{2μ²}·ψ(y, μ)` for real `x`, `y ≥ 0`.
pub fn product_inequality_residual(x: f64, y: f64, mu: f64) -> Result<Residual> {
    if x.is_nan() {
        return Err(Error::Domain(format!("x must be a number, got {x}")));
    }
    let p = psi(y, mu)?;
    let lhs = if y == 0.0 { 0.0 } else { exp(x) * y };
    let rhs = exp(x * x / (2.0 * mu * mu)) + exp(2.0 * mu * mu) * p;
    Ok(Residual { lhs, rhs })
}

/// `(1 − b²(T − t)/μ²)^{−1/2}`, the bound on
/// `E[exp(|∫_t^T q dW|²/(2μ²)) | F_t]` for `|q| ≤ b`.
pub fn exp_moment_bound(params: &PsiParams, t: f64) -> Result<f64> {
    if !(0.0..=params.horizon).contains(&t) {
        return Err(Error::Domain(format!("t = {t} outside [0, {}]", params.horizon)));
    }
    let remaining = params.horizon - t;
    let critical = params.b * sqrt(remaining);
    if !(params.mu > critical) {
        return Err(Error::Subcritical { mu: params.mu, critical });
    }
    let ratio = params.b * params.b * remaining / (params.mu * params.mu);
    Ok(1.0 / sqrt(1.0 - ratio))
}

/// `ψ(λx + (1−λ)y) ≤ λψ(x) + (1−λ)ψ(y)` on `[0, ∞)`.
pub fn psi_convexity_residual(x: f64, y: f64, lambda: f64, mu: f64) -> Result<Residual> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Domain(format!("lambda must lie in [0, 1], got {lambda}")));
    }
    let px = psi(x, mu)?;
    let py = psi(y, mu)?;
    let mid = lambda * x + (1.0 - lambda) * y;
    Ok(Residual { lhs: psi_unchecked(mid, mu), rhs: lambda * px + (1.0 - lambda) * py })
}

/// `ψ(l·x) ≤ ψ(l)·ψ(x)` for `l > 1`, `x ≥ 0`.
pub fn psi_scaling_residual(l: f64, x: f64, mu: f64) -> Result<Residual> {
    if !(l > 1.0) {
        return Err(Error::Domain(format!("scaling needs l > 1, got {l}")));
    }
    let px = psi(x, mu)?;
    let pl = psi_unchecked(l, mu);
    Ok(Residual { lhs: psi_unchecked(l * x, mu), rhs: pl * px })
}

/// Which sampled inequality a [`SuiteResult`] refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Inequality {
    /// `e^x·y ≤ e^{x²/(2μ²)} + e^{2μ²}ψ(y, μ)`.
    Product,
    /// Convexity of `ψ`.
    Convexity,
    /// `ψ(l·x) ≤ ψ(l)·ψ(x)` for `l > 1`.
    Scaling,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SuiteResult {
    pub inequality: Inequality,
    pub samples: usize,
    pub violations: usize,
    /// Smallest `(RHS − LHS)/(1 + |RHS|)` seen.
    pub worst_margin: f64,
    /// Arguments of the worst sample: `(x, y, μ)`, `(x, y, λ, μ)` or `(l, x, μ)`.
    pub worst_args: Vec<f64>,
}

fn log_uniform(rng: &mut CounterRng, lo: f64, hi: f64) -> f64 {
    pow(10.0, rng.uniform_in(lo, hi))
}

// Nonnegative arguments spanning many decades, with exact zeros mixed in.
fn magnitude(rng: &mut CounterRng) -> f64 {
    if rng.uniform() < 0.02 {
        0.0
    } else {
        log_uniform(rng, -12.0, 8.0)
    }
}

/// `n` random samples of each inequality, `μ` log-uniform on `[0.05, 5]`.
/// A sample violates when `RHS − LHS < −tol·(1 + |RHS|)`.
pub fn inequality_suite(n: usize, seed: u64, tol: f64) -> Vec<SuiteResult> {
    let mut out = Vec::new();
    for (k, which) in [Inequality::Product, Inequality::Convexity, Inequality::Scaling].into_iter().enumerate() {
        let mut rng = CounterRng::new(seed, STREAM_SAMPLERS + 0x100 + k as u32);
        let mut res = SuiteResult { inequality: which, samples: n, violations: 0, worst_margin: f64::INFINITY, worst_args: Vec::new() };
        for _ in 0..n {
            let mu = log_uniform(&mut rng, -1.30103, 0.69897);
            let (r, args) = match which {
                Inequality::Product => {
                    let x = rng.normal() * log_uniform(&mut rng, -3.0, 1.5);
                    let y = magnitude(&mut rng);
                    (product_inequality_residual(x, y, mu), alloc::vec![x, y, mu])
                }
                Inequality::Convexity => {
                    let (x, y, l) = (magnitude(&mut rng), magnitude(&mut rng), rng.uniform());
                    (psi_convexity_residual(x, y, l, mu), alloc::vec![x, y, l, mu])
                }
                Inequality::Scaling => {
                    let l = 1.0 + log_uniform(&mut rng, -12.0, 6.0);
                    let x = magnitude(&mut rng);
                    (psi_scaling_residual(l, x, mu), alloc::vec![l, x, mu])
                }
            };
            let r = r.expect("sampled arguments lie in the domain");
            let margin = r.margin();
            if !r.holds(tol) {
                res.violations += 1;
            }
            if margin < res.worst_margin || margin.is_nan() || res.worst_args.is_empty() {
                res.worst_margin = margin;
                res.worst_args = args;
            }
        }
        out.push(res);
    }
    out
}
