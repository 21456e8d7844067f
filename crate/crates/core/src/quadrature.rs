//! Gauss–Hermite quadrature and the closed-form `Y_0` of affine problems.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, expm1, fabs, pow, sqrt};

use crate::solver::BsdeProblem;
use crate::{Error, Result};

pub const DEFAULT_NODES: usize = 96;
/// Allowed gap between the `n`- and `2n`-node rules, relative to `1 + |value|`.
pub const CONVERGENCE_TOL: f64 = 1e-8;

/// Nodes and weights for `∫ g(x)·e^{−x²} dx`, found by Newton iteration on the
/// orthonormal Hermite recurrence.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0f64;
    for i in 0..(n + 1) / 2 {
        z = match i {
            0 => sqrt(2.0 * nf + 1.0) - 1.855_75 * pow(2.0 * nf + 1.0, -0.166_67),
            1 => z - 1.14 * pow(nf, 0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * sqrt(2.0 / (jf + 1.0)) * p2 - sqrt(jf / (jf + 1.0)) * p3;
            }
            pp = sqrt(2.0 * nf) * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if fabs(z - z1) <= 1e-15 * (1.0 + fabs(z)) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// A Gauss–Hermite rule scaled for standard-normal expectations.
#[derive(Debug, Clone)]
pub struct GaussianRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussianRule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_hermite(n);
        let inv = 1.0 / sqrt(core::f64::consts::PI);
        Self {
            nodes: x.iter().map(|v| v * core::f64::consts::SQRT_2).collect(),
            weights: w.iter().map(|v| v * inv).collect(),
        }
    }

    /// `E[h(m + s·G)]`.
    pub fn expect<H: Fn(f64) -> f64>(&self, h: &H, m: f64, s: f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * h(m + s * x)).sum()
    }
}

/// A coarse rule checked against one with twice the nodes.
#[derive(Debug, Clone)]
pub struct CheckedRule {
    coarse: GaussianRule,
    fine: GaussianRule,
}

impl Default for CheckedRule {
    fn default() -> Self {
        Self { coarse: GaussianRule::new(DEFAULT_NODES), fine: GaussianRule::new(2 * DEFAULT_NODES) }
    }
}

impl CheckedRule {
    pub fn expect<H: Fn(f64) -> f64>(&self, h: &H, m: f64, s: f64) -> Result<f64> {
        let coarse = self.coarse.expect(h, m, s);
        let fine = self.fine.expect(h, m, s);
        if !fine.is_finite() || fabs(fine - coarse) > CONVERGENCE_TOL * (1.0 + fabs(fine)) {
            return Err(Error::Quadrature(format!("rules disagree: {coarse} vs {fine}")));
        }
        Ok(fine)
    }
}

/// `E[h(m + s·G)]` for a standard normal `G`, with an `n`-node rule.
pub fn gaussian_expectation_with<H: Fn(f64) -> f64>(h: &H, m: f64, s: f64, n: usize) -> f64 {
    GaussianRule::new(n).expect(h, m, s)
}

/// `E[h(m + s·G)]`, checked against the rule with twice the nodes.
pub fn gaussian_expectation<H: Fn(f64) -> f64>(h: &H, m: f64, s: f64) -> Result<f64> {
    CheckedRule::default().expect(h, m, s)
}

/// Closed-form solution field of an affine problem with `ξ = h(W_T)`, `d = 1`:
/// `Y_t = e^{aτ}·E[h(w + bτ + √τ·G)] + c·(e^{aτ} − 1)/a` with `τ = T − t`.
#[derive(Debug, Clone)]
pub struct AffineField<'a> {
    problem: &'a BsdeProblem,
    a: f64,
    b: f64,
    c: f64,
    rule: CheckedRule,
}

impl<'a> AffineField<'a> {
    pub fn new(problem: &'a BsdeProblem) -> Result<Self> {
        let aff = problem
            .f
            .affine_form()
            .ok_or_else(|| Error::Hypothesis(format!("`{}` is not affine", problem.f.name())))?;
        if problem.dim() != 1 {
            return Err(Error::DimensionMismatch(format!("closed form needs d = 1, got {}", problem.dim())));
        }
        if !problem.xi.is_level_function() {
            return Err(Error::Hypothesis(format!("`{}` is not a function of W_T", problem.xi.name())));
        }
        Ok(Self { problem, a: aff.a, b: aff.b[0], c: aff.c, rule: CheckedRule::default() })
    }

    /// `Y_t` given `W_t = w`.
    pub fn value(&self, t: f64, w: f64) -> Result<f64> {
        let tau = self.problem.grid.horizon() - t;
        let xi = &self.problem.xi;
        let h = |x: f64| xi.eval_level(&[x]).unwrap_or(f64::NAN);
        let expect = if tau <= 0.0 { h(w) } else { self.rule.expect(&h, w + self.b * tau, sqrt(tau))? };
        let growth = if self.a == 0.0 { tau } else { expm1(self.a * tau) / self.a };
        Ok(exp(self.a * tau) * expect + self.c * growth)
    }
}

/// `Y_0` of an affine problem (see [`AffineField`]); `c·T` stands in for the
/// growth term when `a = 0`.
pub fn closed_form_linear(problem: &BsdeProblem) -> Result<f64> {
    AffineField::new(problem)?.value(0.0, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::GeneratorSpec;
    use crate::grid::TimeGrid;
    use crate::terminal::TerminalSpec;
    use core::f64::consts::E;

    fn problem(a: f64, b: f64, c: f64, xi: TerminalSpec, t: f64) -> BsdeProblem {
        BsdeProblem::new(TimeGrid::uniform(t, 10).unwrap(), GeneratorSpec::linear(1, a, b, c), xi)
    }

    #[test]
    fn rule_integrates_moments() {
        let (x, w) = gauss_hermite(20);
        let sp = sqrt(core::f64::consts::PI);
        assert!((w.iter().sum::<f64>() - sp).abs() < 1e-13);
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| w * x * x).sum();
        assert!((m2 - sp / 2.0).abs() < 1e-13);
        let m8: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((m8 - 105.0 / 16.0 * sp).abs() < 1e-11);
    }

    #[test]
    fn gaussian_moments() {
        let v = gaussian_expectation(&|x: f64| exp(0.7 * x), 0.3, 1.2).unwrap();
        assert!((v - exp(0.7 * 0.3 + 0.5 * 0.49 * 1.44)).abs() < 1e-12 * v);
        // E[sin(G)] = 0 and E[cos(G)] = e^{−1/2}.
        let c = gaussian_expectation(&libm::cos, 0.0, 1.0).unwrap();
        assert!((c - exp(-0.5)).abs() < 1e-13);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_linear(&problem(0.0, 0.0, 0.0, TerminalSpec::level(), 1.0)).unwrap().abs() < 1e-14, true);
        let v = closed_form_linear(&problem(0.0, 0.5, 0.0, TerminalSpec::level(), 1.0)).unwrap();
        assert!((v - 0.5).abs() < 1e-13);
        let v = closed_form_linear(&problem(1.0, 0.0, 1.0, TerminalSpec::constant(0.0), 1.0)).unwrap();
        assert!((v - (E - 1.0)).abs() < 1e-13);
        let v = closed_form_linear(&problem(0.0, 0.0, 2.0, TerminalSpec::constant(0.0), 1.5)).unwrap();
        assert!((v - 3.0).abs() < 1e-13);
    }

    #[test]
    fn kinks_are_reported() {
        assert!(matches!(
            closed_form_linear(&problem(0.0, 0.0, 0.0, TerminalSpec::abs_level(), 1.0)),
            Err(Error::Quadrature(_))
        ));
        let nonaffine = BsdeProblem::new(TimeGrid::uniform(1.0, 2).unwrap(), GeneratorSpec::sine(1, 1.0), TerminalSpec::level());
        assert!(closed_form_linear(&nonaffine).is_err());
    }
}
