//! Least-squares Monte-Carlo solvers for
//! `Y_t = ξ + ∫_t^T f(s, Y_s, Z_s) ds − ∫_t^T Z_s dW_s`.
//!
//! Two independent schemes share the regression layer:
//! - backward Euler, implicit in `y` and solved by a damped fixed point,
//! - Picard iteration of the whole integral equation.
//!
//! `Z` is estimated from the centered product `(Y_{i+1} − E_i[Y_{i+1}])·ΔW_i`,
//! which has the same conditional mean as `Y_{i+1}·ΔW_i` but far less variance,
//! and is exactly zero when `Y_{i+1}` is a regression constant.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::fabs;

use crate::brownian::{AdaptedProcess, BrownianEnsemble, Levels};
use crate::generator::GeneratorSpec;
use crate::grid::TimeGrid;
use crate::regression::{NodeProjector, RegressionBasis};
use crate::stats::{mean_estimate_by, pairwise_sum, pairwise_sum_by, Estimate};
use crate::terminal::TerminalSpec;
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct BsdeProblem {
    pub grid: TimeGrid,
    pub f: GeneratorSpec,
    pub xi: TerminalSpec,
}

impl BsdeProblem {
    pub fn new(grid: TimeGrid, f: GeneratorSpec, xi: TerminalSpec) -> Self {
        Self { grid, f, xi }
    }

    pub fn dim(&self) -> usize {
        self.f.dim()
    }

    pub fn check_ensemble(&self, ens: &BrownianEnsemble) -> Result<()> {
        if ens.dim() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "generator has d = {}, ensemble has d = {}",
                self.dim(),
                ens.dim()
            )));
        }
        if ens.grid() != &self.grid {
            return Err(Error::Grid("ensemble grid differs from the problem grid".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    BackwardEuler,
    Picard,
}

/// Time quadrature of `∫ f ds` inside the Picard functional.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PicardQuadrature {
    /// `Σ_{j≥i} f_j Δt_j`.
    Left,
    /// `Σ_{j≥i} ½(f_j + f_{j+1}) Δt_j`, with `Z_M := Z_{M−1}`.
    Trapezoid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct SolverOptions {
    pub damping: f64,
    pub max_inner: usize,
    pub inner_tol: f64,
    /// Clip `|Y|` at this level; clip events are counted.
    pub clip: Option<f64>,
    pub picard_max_iter: usize,
    /// Stop when `max_i mean|Y^{k+1}_i − Y^k_i| < picard_tol`.
    pub picard_tol: f64,
    pub picard_quadrature: PicardQuadrature,
    /// Subtract `Z_i·ΔW_i` from regression targets. Conditional means are
    /// unchanged; the regression variance drops by the martingale part.
    pub control_variate: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_inner: 50,
            inner_tol: 1e-12,
            clip: None,
            picard_max_iter: 60,
            picard_tol: 1e-7,
            picard_quadrature: PicardQuadrature::Left,
            control_variate: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SolverMeta {
    pub solver: String,
    pub basis: String,
    /// Picard sweeps until the update fell below tolerance (0 for backward Euler).
    pub iterations: usize,
    pub converged: bool,
    /// Per sweep `max_i mean|Y^{k+1}_i − Y^k_i|`.
    pub picard_updates: Vec<f64>,
    /// Paths where the implicit step fell back to the explicit one.
    pub inner_fallbacks: usize,
    pub clip_events: usize,
    pub max_condition: f64,
    /// Monte-Carlo error of `Y_0`, from `ξ + Σ_j f(t_j, Y_j, Z_j)Δt_j`.
    pub y0_stderr: f64,
}

/// Discrete `(Y, Z)`; `Y` node-major `[node][path]`, `Z` `[step][path][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionEnsemble {
    n_paths: usize,
    steps: usize,
    dim: usize,
    y: Vec<f64>,
    z: Vec<f64>,
    pub meta: SolverMeta,
}

impl SolutionEnsemble {
    /// Assemble a solution from raw arrays, `y` node-major `[node][path]` and
    /// `z` `[step][path][dim]`. Used for synthetic inputs to diagnostics.
    pub fn from_parts(n_paths: usize, steps: usize, dim: usize, y: Vec<f64>, z: Vec<f64>, meta: SolverMeta) -> Result<Self> {
        if y.len() != n_paths * (steps + 1) || z.len() != n_paths * steps * dim {
            return Err(Error::DimensionMismatch(format!(
                "expected {} Y and {} Z values, got {} and {}",
                n_paths * (steps + 1),
                n_paths * steps * dim,
                y.len(),
                z.len()
            )));
        }
        Ok(Self { n_paths, steps, dim, y, z, meta })
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn y(&self, path: usize, node: usize) -> f64 {
        self.y[node * self.n_paths + path]
    }

    pub fn y_at(&self, node: usize) -> &[f64] {
        &self.y[node * self.n_paths..(node + 1) * self.n_paths]
    }

    #[inline]
    pub fn z(&self, path: usize, step: usize) -> &[f64] {
        let base = (step * self.n_paths + path) * self.dim;
        &self.z[base..base + self.dim]
    }

    pub fn z_at(&self, step: usize) -> &[f64] {
        let len = self.n_paths * self.dim;
        &self.z[step * len..(step + 1) * len]
    }

    /// `Y_0` with its Monte-Carlo error.
    pub fn y0(&self) -> Estimate {
        Estimate { value: pairwise_sum(self.y_at(0)) / self.n_paths as f64, stderr: self.meta.y0_stderr }
    }

    /// `Z` as a predictable process on the ensemble's layout.
    pub fn z_process(&self) -> AdaptedProcess {
        let (n, m, d) = (self.n_paths, self.steps, self.dim);
        let mut values = vec![0.0; n * m * d];
        for i in 0..m {
            for p in 0..n {
                let src = (i * n + p) * d;
                let dst = (p * m + i) * d;
                values[dst..dst + d].copy_from_slice(&self.z[src..src + d]);
            }
        }
        AdaptedProcess::from_predictable(n, m, d, values)
    }

    pub fn digest(&self) -> String {
        crate::stats::digest_f64s([&self.y[..], &self.z[..]])
    }

    /// Replace `Y` at every node (same shape), keeping `Z`.
    pub fn with_y(&self, y: Vec<f64>) -> Self {
        assert_eq!(y.len(), self.y.len());
        Self { y, ..self.clone() }
    }
}

struct Workspace {
    levels: Levels,
    projectors: Vec<NodeProjector>,
    dt: Vec<f64>,
    times: Vec<f64>,
}

impl Workspace {
    fn new(problem: &BsdeProblem, ens: &BrownianEnsemble, basis: &RegressionBasis) -> Result<Self> {
        problem.check_ensemble(ens)?;
        let levels = ens.levels();
        let m = ens.steps();
        let grid = ens.grid();
        let projectors = (0..m)
            .map(|i| basis.projector(&levels, i, grid.time(i)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            levels,
            projectors,
            dt: (0..m).map(|i| grid.dt(i)).collect(),
            times: grid.nodes().to_vec(),
        })
    }

    fn max_condition(&self) -> f64 {
        self.projectors.iter().map(|p| p.condition()).fold(1.0, f64::max)
    }

    /// `Z_i·ΔW_i` on one path, `z` laid out `[path][dim]`.
    #[inline]
    fn martingale_increment(&self, ens: &BrownianEnsemble, i: usize, p: usize, z: &[f64]) -> f64 {
        let d = ens.dim();
        crate::brownian::dot(&z[p * d..(p + 1) * d], ens.step_increment(p, i))
    }

    /// `Z_i = E_i[(v − E_i v)·ΔW_i]/Δt_i`, written into `z` (`[path][dim]`).
    fn z_estimate(&self, ens: &BrownianEnsemble, i: usize, v: &[f64], ev: &[f64], z: &mut [f64]) {
        let (n, d) = (ens.n_paths(), ens.dim());
        let proj = &self.projectors[i];
        let mut target = vec![0.0; n];
        for k in 0..d {
            for p in 0..n {
                target[p] = (v[p] - ev[p]) * ens.increment(p, i, k) / self.dt[i];
            }
            let fitted = proj.project(&self.levels, &target);
            for p in 0..n {
                z[p * d + k] = fitted[p];
            }
        }
    }
}

fn clip(v: f64, bound: Option<f64>, events: &mut usize) -> f64 {
    match bound {
        Some(b) if fabs(v) > b => {
            *events += 1;
            v.clamp(-b, b)
        }
        _ => v,
    }
}

fn y0_stderr(problem: &BsdeProblem, ws: &Workspace, xi: &[f64], y: &[f64], z: &[f64], n: usize, d: usize) -> f64 {
    let m = ws.dt.len();
    mean_estimate_by(n, |p| {
        let mut g = xi[p];
        for j in 0..m {
            g += problem.f.eval(ws.times[j], y[j * n + p], &z[(j * n + p) * d..(j * n + p + 1) * d]) * ws.dt[j];
        }
        g
    })
    .stderr
}

pub fn solve(
    scheme: Scheme,
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<SolutionEnsemble> {
    match scheme {
        Scheme::BackwardEuler => solve_backward_euler_lsmc(problem, ens, basis, opts),
        Scheme::Picard => solve_picard(problem, ens, basis, opts),
    }
}

/// `Y_M = ξ`; `Z_i` from the centered `ΔW`-regression; `Y_i` solves
/// `Y_i = E_i[Y_{i+1}] + f(t_i, Y_i, Z_i)Δt_i`.
pub fn solve_backward_euler_lsmc(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<SolutionEnsemble> {
    let ws = Workspace::new(problem, ens, basis)?;
    let (n, m, d) = (ens.n_paths(), ens.steps(), ens.dim());
    let f = &problem.f;
    let mut y = vec![0.0; n * (m + 1)];
    let mut z = vec![0.0; n * m * d];
    let xi = problem.xi.evaluate(ens);
    y[m * n..].copy_from_slice(&xi);
    let (mut fallbacks, mut clips) = (0usize, 0usize);
    for i in (0..m).rev() {
        let (head, tail) = y.split_at_mut((i + 1) * n);
        let next = &tail[..n];
        let mut ey = ws.projectors[i].project(&ws.levels, next);
        let zi = &mut z[i * n * d..(i + 1) * n * d];
        ws.z_estimate(ens, i, next, &ey, zi);
        if opts.control_variate {
            let target: Vec<f64> = (0..n).map(|p| next[p] - ws.martingale_increment(ens, i, p, zi)).collect();
            ey = ws.projectors[i].project(&ws.levels, &target);
        }
        let (t, dt) = (ws.times[i], ws.dt[i]);
        let cur = &mut head[i * n..];
        for p in 0..n {
            let zp = &zi[p * d..(p + 1) * d];
            let (v, ok) = implicit_step(f, t, dt, ey[p], zp, opts);
            if !ok {
                fallbacks += 1;
            }
            if !v.is_finite() {
                return Err(Error::Divergence { node: i });
            }
            cur[p] = clip(v, opts.clip, &mut clips);
        }
    }
    let y0_stderr = y0_stderr(problem, &ws, &xi, &y, &z, n, d);
    Ok(SolutionEnsemble {
        n_paths: n,
        steps: m,
        dim: d,
        y,
        z,
        meta: SolverMeta {
            solver: "backward_euler".into(),
            basis: basis.describe(),
            iterations: 0,
            converged: true,
            picard_updates: Vec::new(),
            inner_fallbacks: fallbacks,
            clip_events: clips,
            max_condition: ws.max_condition(),
            y0_stderr,
        },
    })
}

/// Damped fixed point for `y = c + f(t, y, z)Δt`, started at `c`. Falls back
/// to the explicit value when the iteration does not settle.
pub fn implicit_step(f: &GeneratorSpec, t: f64, dt: f64, c: f64, z: &[f64], opts: &SolverOptions) -> (f64, bool) {
    let mut y = c;
    for _ in 0..opts.max_inner {
        let target = c + f.eval(t, y, z) * dt;
        let next = (1.0 - opts.damping) * y + opts.damping * target;
        if !next.is_finite() {
            break;
        }
        let done = fabs(next - y) <= opts.inner_tol * (1.0 + fabs(next));
        y = next;
        if done {
            return (y, true);
        }
    }
    (c + f.eval(t, c, z) * dt, false)
}

/// Picard iteration from `(Y⁰, Z⁰) = (0, 0)`:
/// `Y^{k+1}_i = E_i[ξ + Σ_{j≥i} f(t_j, Y^k_j, Z^k_j)Δt_j]`, with `Z^{k+1}` from
/// the centered `ΔW`-regression of the same functional. Non-convergence is
/// flagged in the metadata rather than raised.
pub fn solve_picard(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    basis: &RegressionBasis,
    opts: &SolverOptions,
) -> Result<SolutionEnsemble> {
    let ws = Workspace::new(problem, ens, basis)?;
    let (n, m, d) = (ens.n_paths(), ens.steps(), ens.dim());
    let f = &problem.f;
    let xi = problem.xi.evaluate(ens);
    let mut y = vec![0.0; n * (m + 1)];
    let mut z = vec![0.0; n * m * d];
    y[m * n..].copy_from_slice(&xi);
    let mut updates = Vec::new();
    let mut converged = false;
    let mut clips = 0usize;
    let mut fvals = vec![0.0; n * (m + 1)];
    for _sweep in 0..opts.picard_max_iter {
        for j in 0..=m {
            let zj = j.min(m - 1);
            for p in 0..n {
                let zp = &z[(zj * n + p) * d..(zj * n + p + 1) * d];
                fvals[j * n + p] = f.eval(ws.times[j], y[j * n + p], zp);
            }
        }
        let mut new_y = vec![0.0; n * (m + 1)];
        let mut new_z = vec![0.0; n * m * d];
        new_y[m * n..].copy_from_slice(&xi);
        // g holds the functional from node i+1 onwards.
        let mut g = xi.clone();
        for i in (0..m).rev() {
            let eg = ws.projectors[i].project(&ws.levels, &g);
            let zi = &mut new_z[i * n * d..(i + 1) * n * d];
            ws.z_estimate(ens, i, &g, &eg, zi);
            let dt = ws.dt[i];
            for p in 0..n {
                g[p] += match opts.picard_quadrature {
                    PicardQuadrature::Left => fvals[i * n + p] * dt,
                    PicardQuadrature::Trapezoid => 0.5 * (fvals[i * n + p] + fvals[(i + 1) * n + p]) * dt,
                };
                if opts.control_variate {
                    g[p] -= ws.martingale_increment(ens, i, p, zi);
                }
            }
            let proj = ws.projectors[i].project(&ws.levels, &g);
            for p in 0..n {
                new_y[i * n + p] = clip(proj[p], opts.clip, &mut clips);
            }
        }
        if new_y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { node: 0 });
        }
        let update = (0..m)
            .map(|i| pairwise_sum_by(n, |p| fabs(new_y[i * n + p] - y[i * n + p])) / n as f64)
            .fold(0.0, f64::max);
        y = new_y;
        z = new_z;
        updates.push(update);
        // The first sweep only leaves the zero start.
        if updates.len() > 1 && update < opts.picard_tol {
            converged = true;
            break;
        }
    }
    let iterations = if converged { updates.len() - 1 } else { updates.len() };
    let y0_stderr = y0_stderr(problem, &ws, &xi, &y, &z, n, d);
    Ok(SolutionEnsemble {
        n_paths: n,
        steps: m,
        dim: d,
        y,
        z,
        meta: SolverMeta {
            solver: "picard".into(),
            basis: basis.describe(),
            iterations,
            converged,
            picard_updates: updates,
            inner_fallbacks: 0,
            clip_events: clips,
            max_condition: ws.max_condition(),
            y0_stderr,
        },
    })
}

/// `R_i = Y_i − (Y_{i+1} + f(t_i, Y_i, Z_i)Δt_i − Z_i·ΔW_i)` per `[step][path]`,
/// against arbitrary increments (original or drift-shifted).
pub fn one_step_residuals<F>(f: F, grid: &TimeGrid, increments: &[f64], sol: &SolutionEnsemble) -> Vec<f64>
where
    F: Fn(f64, f64, &[f64]) -> f64,
{
    let (n, m, d) = (sol.n_paths, sol.steps, sol.dim);
    assert_eq!(increments.len(), n * m * d);
    let mut out = vec![0.0; n * m];
    for i in 0..m {
        let (t, dt) = (grid.time(i), grid.dt(i));
        for p in 0..n {
            let zp = sol.z(p, i);
            let dw = &increments[(p * m + i) * d..(p * m + i + 1) * d];
            let mart: f64 = zp.iter().zip(dw).map(|(a, b)| a * b).sum();
            out[i * n + p] = sol.y(p, i) - (sol.y(p, i + 1) + f(t, sol.y(p, i), zp) * dt - mart);
        }
    }
    out
}

/// Size of the regression-projected residual `E_i[R_i]` in units of sampling
/// noise: per node, `rms(E_i[R_i]) / (σ_i·√(k/n))` with `k` basis functions
/// including the intercept and `σ_i² = Var(R_i) + Var(Z_i·ΔW_i)` (the projected
/// martingale increment is the main noise source), maximized over nodes. Noise
/// alone scores `O(1)`; a systematic conditional bias scores `O(√n)`.
pub fn projected_residual(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    basis: &RegressionBasis,
    sol: &SolutionEnsemble,
) -> Result<f64> {
    let ws = Workspace::new(problem, ens, basis)?;
    let r = one_step_residuals(|t, y, z| problem.f.eval(t, y, z), ens.grid(), ens.increments(), sol);
    let n = sol.n_paths;
    let k = (basis.features(sol.dim) + 1) as f64;
    let mut worst = 0.0f64;
    for i in 0..sol.steps {
        let ri = &r[i * n..(i + 1) * n];
        let fitted = ws.projectors[i].project(&ws.levels, ri);
        let rms = libm::sqrt(pairwise_sum_by(n, |p| fitted[p] * fitted[p]) / n as f64);
        let mart = |p: usize| {
            let dw = ens.step_increment(p, i);
            sol.z(p, i).iter().zip(dw).map(|(a, b)| a * b).sum::<f64>()
        };
        let var = |se: f64| se * se * n as f64;
        let sd = libm::sqrt(var(mean_estimate_by(n, |p| ri[p]).stderr) + var(mean_estimate_by(n, mart).stderr));
        let score = if rms == 0.0 { 0.0 } else { rms / (sd * libm::sqrt(k / n as f64)) };
        worst = worst.max(score);
    }
    Ok(worst)
}
