//! Girsanov reduction: kernel processes, densities, `Q`-expectations by
//! importance weighting, drift-shifted ensembles, measure-solution prices and
//! the `ψ`-moment admissibility check.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs};

use crate::brownian::{stochastic_exponential, AdaptedProcess, BrownianEnsemble, StochasticExponential};
use crate::generator::{girsanov_kernel_into, GeneratorSpec};
use crate::grid::TimeGrid;
use crate::psi::{exp_moment_bound, psi_unchecked, PsiParams};
use crate::solver::{one_step_residuals, SolutionEnsemble};
use crate::stats::{mean_estimate_by, pairwise_sum_by, Estimate};
use crate::terminal::TerminalSpec;
use crate::{Error, Result};

/// Default ESS floor as a fraction of the sample size.
pub const ESS_FLOOR: f64 = 0.1;
/// Default relative-change threshold for the admissibility verdict.
pub const ADMISSIBILITY_THRESHOLD: f64 = 0.2;

#[derive(Debug, Clone)]
pub struct MeasureChange {
    kernel: AdaptedProcess,
    bound: f64,
    density: StochasticExponential,
}

impl MeasureChange {
    /// Density of a given kernel, checked against `bound`.
    pub fn from_kernel(ens: &BrownianEnsemble, kernel: AdaptedProcess, bound: f64) -> Result<Self> {
        let density = stochastic_exponential(ens, &kernel, bound)?;
        Ok(Self { kernel, bound, density })
    }

    pub fn kernel(&self) -> &AdaptedProcess {
        &self.kernel
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn density(&self) -> &StochasticExponential {
        &self.density
    }

    pub fn n_paths(&self) -> usize {
        self.density.n_paths()
    }

    pub fn terminal_node(&self) -> usize {
        self.density.nodes() - 1
    }
}

/// Kernel `g_i = girsanov_kernel(f, t_i, Y_i, Z_i)` along the solution, and its
/// density. A kernel above the declared `b` is a false (A2) declaration.
pub fn build_measure_change(ens: &BrownianEnsemble, f: &GeneratorSpec, sol: &SolutionEnsemble) -> Result<MeasureChange> {
    let b = f.require_b()?;
    if sol.n_paths() != ens.n_paths() || sol.steps() != ens.steps() || sol.dim() != ens.dim() {
        return Err(Error::DimensionMismatch("solution and ensemble differ in shape".into()));
    }
    let (n, m, d) = (ens.n_paths(), ens.steps(), ens.dim());
    let mut values = vec![0.0; n * m * d];
    for p in 0..n {
        for i in 0..m {
            let base = (p * m + i) * d;
            girsanov_kernel_into(f, ens.grid().time(i), sol.y(p, i), sol.z(p, i), &mut values[base..base + d]);
        }
    }
    MeasureChange::from_kernel(ens, AdaptedProcess::from_predictable(n, m, d, values), b)
}

/// Constant kernel `g ≡ c`.
pub fn constant_measure_change(ens: &BrownianEnsemble, c: &[f64]) -> Result<MeasureChange> {
    let kernel = AdaptedProcess::constant(ens, c)?;
    let bound = crate::brownian::norm(c);
    MeasureChange::from_kernel(ens, kernel, bound)
}

/// A `Q`-expectation with its importance-sampling error and effective sample size.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct QEstimate {
    pub value: f64,
    pub stderr: f64,
    /// `(Σ D)² / Σ D²`.
    pub ess: f64,
    pub n: usize,
}

impl QEstimate {
    pub fn estimate(&self) -> Estimate {
        Estimate { value: self.value, stderr: self.stderr }
    }
}

fn weighted(values: &[f64], weights: &[f64], floor: f64) -> Result<QEstimate> {
    let n = values.len();
    let e = mean_estimate_by(n, |p| values[p] * weights[p]);
    let s1 = pairwise_sum_by(n, |p| weights[p]);
    let s2 = pairwise_sum_by(n, |p| weights[p] * weights[p]);
    let ess = s1 * s1 / s2;
    let q = QEstimate { value: e.value, stderr: e.stderr, ess, n };
    if !(ess >= floor * n as f64) {
        return Err(Error::EssCollapse { ess, floor: floor * n as f64 });
    }
    Ok(q)
}

/// `E^Q[v] = E[v·D_{t_at}]`, with `v` measurable at node `at`.
pub fn q_expectation(values: &[f64], mc: &MeasureChange, at: usize) -> Result<QEstimate> {
    q_expectation_with_floor(values, mc, at, ESS_FLOOR)
}

pub fn q_expectation_with_floor(values: &[f64], mc: &MeasureChange, at: usize, floor: f64) -> Result<QEstimate> {
    if values.len() != mc.n_paths() {
        return Err(Error::DimensionMismatch(format!("{} values for {} paths", values.len(), mc.n_paths())));
    }
    if at >= mc.density.nodes() {
        return Err(Error::Domain(format!("node {at} beyond the grid")));
    }
    weighted(values, &mc.density.densities_at(at), floor)
}

/// `E^Q[v_τ] = E[v_τ·D_τ]` for a node-valued stopping time given per path.
pub fn q_expectation_stopped(values: &[f64], mc: &MeasureChange, tau: &[usize]) -> Result<QEstimate> {
    if values.len() != mc.n_paths() || tau.len() != mc.n_paths() {
        return Err(Error::DimensionMismatch("values, stopping nodes and paths differ".into()));
    }
    let w: Vec<f64> = tau.iter().enumerate().map(|(p, &i)| mc.density.density(p, i)).collect();
    weighted(values, &w, ESS_FLOOR)
}

/// How a price call is allowed to proceed.
#[derive(Debug, Clone, Copy)]
pub enum Admission<'a> {
    Checked(&'a AdmissibilityReport),
    /// Skip the check, e.g. to study inadmissible claims on purpose.
    Override,
}

/// `Y_0 = E^Q[ξ]`.
pub fn measure_solution_price(
    xi: &TerminalSpec,
    ens: &BrownianEnsemble,
    mc: &MeasureChange,
    admission: Admission<'_>,
) -> Result<QEstimate> {
    if let Admission::Checked(rep) = admission {
        if rep.verdict != Verdict::Admissible {
            return Err(Error::Inadmissible(format!(
                "psi-moment of `{}` is unstable across sample sizes: {:?}",
                xi.name(),
                rep.relative_changes
            )));
        }
    }
    q_expectation(&xi.evaluate(ens), mc, mc.terminal_node())
}

/// Increments `ΔW^Q_i = ΔW_i − g_i·Δt_i`, Brownian under `Q`.
pub fn drift_shifted_ensemble(ens: &BrownianEnsemble, mc: &MeasureChange) -> BrownianEnsemble {
    let (n, m, d) = (ens.n_paths(), ens.steps(), ens.dim());
    let mut inc = ens.increments().to_vec();
    for p in 0..n {
        for i in 0..m {
            let dt = ens.grid().dt(i);
            let g = mc.kernel.value(p, i);
            for k in 0..d {
                inc[(p * m + i) * d + k] -= g[k] * dt;
            }
        }
    }
    ens.with_increments(inc)
}

/// One-step residuals of the transformed equation
/// `Y_t = ξ + ∫ f(s, Y, 0) ds − ∫ Z dW^Q` on shifted increments.
pub fn transformed_residuals(f: &GeneratorSpec, shifted: &BrownianEnsemble, sol: &SolutionEnsemble) -> Vec<f64> {
    one_step_residuals(|t, y, _| f.eval_zero_z(t, y), shifted.grid(), shifted.increments(), sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "SCREAMING_SNAKE_CASE"))]
pub enum Verdict {
    Admissible,
    Unstable,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AdmissibilityReport {
    pub mu: f64,
    pub b: f64,
    pub horizon: f64,
    /// `(1 − b²T/μ²)^{−1/2} + e^{2μ²}·E[ψ(|ξ|, μ)]` at the largest sample size.
    pub bound_rhs: f64,
    /// `(n, E[ψ(|ξ|, μ)])` at `n`, `2n`, `4n`.
    pub psi_moments: Vec<(usize, Estimate)>,
    pub relative_changes: Vec<f64>,
    pub threshold: f64,
    pub declared_bound: Option<f64>,
    /// `E[|ξ|·E(b•W)_T]` for the extreme constant kernel, with its ESS.
    pub q_abs_xi: Option<QEstimate>,
    pub ess: f64,
    pub verdict: Verdict,
}

/// Monte-Carlo form of the sufficient condition `E^Q|ξ| < ∞`.
///
/// The verdict is a stability heuristic: `E[ψ(|ξ|, μ)]` is estimated on nested
/// samples of size `n`, `2n`, `4n`, and both relative changes must stay below
/// `threshold`. A declared pathwise bound is admissible outright.
pub fn admissibility_check(
    xi: &TerminalSpec,
    params: &PsiParams,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    threshold: f64,
) -> Result<AdmissibilityReport> {
    params.require_supercritical()?;
    let ens = crate::brownian::simulate_brownian(grid, 1, 4 * n, seed)?;
    let vals = xi.evaluate(&ens);
    let psi_vals: Vec<f64> = vals.iter().map(|v| psi_unchecked(fabs(*v), params.mu)).collect();
    let psi_moments: Vec<(usize, Estimate)> = [n, 2 * n, 4 * n]
        .iter()
        .map(|&k| (k, mean_estimate_by(k, |p| psi_vals[p])))
        .collect();
    let relative_changes: Vec<f64> = psi_moments
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].1.value, w[1].1.value);
            if a == b {
                0.0
            } else {
                fabs(b - a) / fabs(a)
            }
        })
        .collect();
    let largest = psi_moments[2].1.value;
    let bound_rhs = exp_moment_bound(params, 0.0)? + exp(2.0 * params.mu * params.mu) * largest;
    let stable = largest.is_finite() && relative_changes.iter().all(|r| *r < threshold);
    let verdict = if xi.bound().is_some() || stable { Verdict::Admissible } else { Verdict::Unstable };
    let (q_abs_xi, ess) = if params.b > 0.0 {
        let mc = constant_measure_change(&ens, &[params.b])?;
        let abs: Vec<f64> = vals.iter().map(|v| fabs(*v)).collect();
        let w = mc.density.densities_at(mc.terminal_node());
        match weighted(&abs, &w, 0.0) {
            Ok(q) => (Some(q), q.ess),
            Err(_) => (None, f64::NAN),
        }
    } else {
        (None, (4 * n) as f64)
    };
    Ok(AdmissibilityReport {
        mu: params.mu,
        b: params.b,
        horizon: params.horizon,
        bound_rhs,
        psi_moments,
        relative_changes,
        threshold,
        declared_bound: xi.bound(),
        q_abs_xi,
        ess,
        verdict,
    })
}

/// Summary of a transfer-bound comparison for one stopping rule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TransferCheck {
    pub rule: String,
    pub q_abs: QEstimate,
    pub psi_moment: Estimate,
    pub rhs: f64,
    pub holds: bool,
}

/// `E^Q|Y_τ| ≤ (1 − b²T/μ²)^{−1/2} + e^{2μ²}·E[ψ(|Y_τ|, μ)] + 3·stderr`.
pub fn transfer_bound(
    rule: &str,
    y_tau: &[f64],
    tau: &[usize],
    mc: &MeasureChange,
    params: &PsiParams,
) -> Result<TransferCheck> {
    let abs: Vec<f64> = y_tau.iter().map(|v| fabs(*v)).collect();
    let q_abs = q_expectation_stopped(&abs, mc, tau)?;
    let psi_moment = mean_estimate_by(abs.len(), |p| psi_unchecked(abs[p], params.mu));
    let rhs = exp_moment_bound(params, 0.0)? + exp(2.0 * params.mu * params.mu) * psi_moment.value;
    let holds = q_abs.value <= rhs + 3.0 * q_abs.stderr;
    Ok(TransferCheck { rule: rule.into(), q_abs, psi_moment, rhs, holds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::simulate_brownian;
    use crate::regression::RegressionBasis;
    use crate::solver::{solve_backward_euler_lsmc, BsdeProblem, SolverOptions};

    fn ens(n: usize, seed: u64) -> BrownianEnsemble {
        simulate_brownian(&TimeGrid::uniform(1.0, 20).unwrap(), 1, n, seed).unwrap()
    }

    fn solve(e: &BrownianEnsemble, f: GeneratorSpec, xi: TerminalSpec) -> SolutionEnsemble {
        let pb = BsdeProblem::new(e.grid().clone(), f, xi);
        solve_backward_euler_lsmc(&pb, e, &RegressionBasis::default(), &SolverOptions::default()).unwrap()
    }

    #[test]
    fn z_independent_generator_gives_unit_density() {
        let e = ens(200, 1);
        let f = GeneratorSpec::sine(1, 0.5);
        let mc = build_measure_change(&e, &f, &solve(&e, f.clone(), TerminalSpec::level())).unwrap();
        assert_eq!(mc.kernel().max_norm(), 0.0);
        assert!(mc.density().densities_at(20).iter().all(|d| *d == 1.0));
        assert_eq!(drift_shifted_ensemble(&e, &mc), e);
    }

    #[test]
    fn linear_z_gives_constant_kernel_and_bt_price() {
        let e = ens(100_000, 2);
        let f = GeneratorSpec::linear(1, 0.0, 0.5, 0.0);
        let sol = solve(&e, f.clone(), TerminalSpec::level());
        let mc = build_measure_change(&e, &f, &sol).unwrap();
        assert!(mc.kernel().values().iter().all(|g| *g == 0.0 || (g - 0.5).abs() < 1e-12));
        let one = q_expectation(&vec![1.0; 100_000], &mc, 20).unwrap();
        assert!(one.estimate().within_sigmas(1.0, 3.0));
        let price = measure_solution_price(&TerminalSpec::level(), &e, &mc, Admission::Override).unwrap();
        assert!(price.estimate().within_sigmas(0.5, 3.0), "{price:?}");
    }

    #[test]
    fn zero_z_path_gets_zero_kernel() {
        let e = ens(50, 3);
        let f = GeneratorSpec::linear(1, 0.0, 0.5, 0.0);
        let sol = solve(&e, f.clone(), TerminalSpec::constant(2.0));
        let mc = build_measure_change(&e, &f, &sol).unwrap();
        assert_eq!(mc.kernel().max_norm(), 0.0);
    }

    #[test]
    fn false_z_bound_is_detected() {
        let e = ens(100, 4);
        let f = GeneratorSpec::linear(1, 0.0, 0.5, 0.0).with_b(0.4);
        let sol = solve(&e, f.clone(), TerminalSpec::level());
        assert!(matches!(build_measure_change(&e, &f, &sol), Err(Error::KernelBound { .. })));
    }

    #[test]
    fn lognormal_shift() {
        let (b, theta) = (0.5, 0.8);
        let e = ens(100_000, 5);
        let mc = constant_measure_change(&e, &[b]).unwrap();
        let v: Vec<f64> = e.terminal_levels().iter().map(|w| exp(theta * w)).collect();
        let q = q_expectation(&v, &mc, 20).unwrap();
        assert!(q.estimate().within_sigmas(exp(0.5 * theta * theta + theta * b), 3.0), "{q:?}");
        assert!(q.ess > 0.5 * 100_000.0);
        let shifted = drift_shifted_ensemble(&e, &mc);
        for (a, s) in e.terminal_levels().iter().zip(shifted.terminal_levels()) {
            assert!((a - b - s).abs() < 1e-12);
        }
    }

    #[test]
    fn transformed_residual_matches_original_for_z_free_generator() {
        let e = ens(300, 6);
        let f = GeneratorSpec::sine(1, 0.7);
        let sol = solve(&e, f.clone(), TerminalSpec::bounded_sin(1.0));
        let mc = build_measure_change(&e, &f, &sol).unwrap();
        let shifted = drift_shifted_ensemble(&e, &mc);
        let a = transformed_residuals(&f, &shifted, &sol);
        let b = one_step_residuals(|t, y, z| f.eval(t, y, z), e.grid(), e.increments(), &sol);
        assert_eq!(a, b);
    }

    #[test]
    fn admissibility_examples() {
        let params = PsiParams::new(1.0, 0.5, 1.0).unwrap();
        let grid = TimeGrid::uniform(1.0, 1).unwrap();
        let r = admissibility_check(&TerminalSpec::constant(1.0), &params, &grid, 10_000, 1, 0.2).unwrap();
        assert_eq!(r.verdict, Verdict::Admissible);
        assert!((r.bound_rhs - 25.139_254_123_195_02).abs() < 1e-9);
        let r = admissibility_check(&TerminalSpec::exp_square(), &params, &grid, 25_000, 1, 0.2).unwrap();
        assert_eq!(r.verdict, Verdict::Unstable, "{:?}", r.relative_changes);
        let sub = PsiParams::new(0.4, 0.5, 1.0).unwrap();
        assert!(matches!(admissibility_check(&TerminalSpec::constant(1.0), &sub, &grid, 10, 1, 0.2), Err(Error::Subcritical { .. })));
    }
}
