//! Experiment drivers.
//!
//! Each driver solves (or reads) discrete solutions on a shared Brownian
//! ensemble, computes a small set of metrics and turns them into pass/fail
//! verdicts against tolerances that are either exact or frozen from affine
//! calibration runs. Drivers never modify the solutions they read; reports
//! carry the digests of everything consumed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, fabs, pow, sqrt};

use crate::brownian::{norm, simulate_brownian, BrownianEnsemble, Levels};
use crate::checks::{check_linear_growth_a4, check_lipschitz_y_a5, check_lipschitz_z_a2, check_osgood_a1, SamplerConfig};
use crate::generator::GeneratorSpec;
use crate::grid::TimeGrid;
use crate::measure::{admissibility_check, Verdict, ADMISSIBILITY_THRESHOLD};
use crate::psi::{exp_moment_bound, psi_unchecked, PsiParams};
use crate::quadrature::AffineField;
use crate::regression::RegressionBasis;
use crate::rng::{CounterRng, STREAM_DIAGNOSTICS};
use crate::solver::{solve, BsdeProblem, Scheme, SolutionEnsemble, SolverMeta, SolverOptions};
use crate::stats::{digest_bytes, mean_estimate_by, pairwise_sum_by, quantile, Estimate};
use crate::terminal::TerminalSpec;
use crate::{Error, Result};

/// Noise band width in standard errors.
pub const NOISE_SIGMAS: f64 = 3.0;
/// Uniform-integrability threshold for the last rung of the tail ladder.
pub const EPS_UI: f64 = 1e-3;
/// Largest admissible fraction of `(path, node)` pairs above the a-priori bound.
pub const APRIORI_MAX_VIOLATION: f64 = 0.01;
/// Samples per sampled hypothesis check.
pub const HYPOTHESIS_SAMPLES: usize = 20_000;

/// `per_dt·Δt + per_inv_sqrt_n/√n`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Tolerance {
    pub per_dt: f64,
    pub per_inv_sqrt_n: f64,
}

impl Tolerance {
    pub const fn new(per_dt: f64, per_inv_sqrt_n: f64) -> Self {
        Self { per_dt, per_inv_sqrt_n }
    }

    pub fn at(&self, dt: f64, n: usize) -> f64 {
        self.per_dt * dt + self.per_inv_sqrt_n / sqrt(n as f64)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(s * self.per_dt, s * self.per_inv_sqrt_n)
    }
}

/// Envelope of `sup_i mean_p |Y − Y*|` over the affine calibration oracles
/// (`bsdelab calibrate` with `M ∈ {25, 50, 100}`, `n ∈ {25 000, 100 000}`,
/// Hermite degrees 7 and 9, both schemes), rounded up.
pub const ORACLE_SUP_MEAN: Tolerance = Tolerance::new(0.0781, 0.0638);
/// Envelope of `mean_p sup_i |Y − Y*|` from the same calibration run.
pub const ORACLE_MEAN_SUP: Tolerance = Tolerance::new(0.1063, 0.2348);
/// Two solutions each within the oracle envelope differ by at most twice it.
pub const TOL_UNIQUE: Tolerance = Tolerance::new(2.0 * ORACLE_SUP_MEAN.per_dt, 2.0 * ORACLE_SUP_MEAN.per_inv_sqrt_n);
/// `(Y − Y′)⁺ ≤ |Y − Y*| + |Y′ − Y′*|` when the exact solutions are ordered.
pub const TOL_CMP: Tolerance = Tolerance::new(2.0 * ORACLE_MEAN_SUP.per_dt, 2.0 * ORACLE_MEAN_SUP.per_inv_sqrt_n);
/// Default `tol_stab` for the reference stability sequence (`l_n = 1/n`,
/// `η = |sin W_T|`, last index 16, `M = 50`, `n = 100 000`): there
/// `sup|ΔY| ≤ 1/16` exactly, widened by the pathwise oracle band and mapped
/// through `ψ(·, 1)`. See [`stability_tolerance`].
pub const TOL_STAB: f64 = 0.0892;

// ---------------------------------------------------------------------------
// Reports

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RuleVerdict {
    pub rule: String,
    pub passed: bool,
    pub detail: String,
}

/// A table for plotting, one row per abscissa.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Series {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ExperimentReport {
    pub tag: String,
    /// Digest of the textual description of every input.
    pub inputs_digest: String,
    pub inputs: Vec<String>,
    pub metrics: Vec<Metric>,
    pub verdicts: Vec<RuleVerdict>,
    pub series: Vec<Series>,
    /// Digests of the solutions read by the experiment.
    pub consumed: Vec<String>,
    pub notes: Vec<String>,
}

impl ExperimentReport {
    pub fn new(tag: impl Into<String>, inputs: Vec<String>) -> Self {
        let inputs_digest = digest_bytes(inputs.join("\n").as_bytes());
        Self {
            tag: tag.into(),
            inputs_digest,
            inputs,
            metrics: Vec::new(),
            verdicts: Vec::new(),
            series: Vec::new(),
            consumed: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_metric(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.push(Metric { name: name.into(), value, stderr: None });
    }

    pub fn push_estimate(&mut self, name: impl Into<String>, est: Estimate) {
        self.metrics.push(Metric { name: name.into(), value: est.value, stderr: Some(est.stderr) });
    }

    pub fn push_verdict(&mut self, rule: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.verdicts.push(RuleVerdict { rule: rule.into(), passed, detail: detail.into() });
    }

    pub fn consume(&mut self, sol: &SolutionEnsemble) {
        self.consumed.push(sol.digest());
    }

    pub fn metric(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.metric(name).map(|m| m.value)
    }

    pub fn verdict(&self, rule: &str) -> Option<bool> {
        self.verdicts.iter().find(|v| v.rule == rule).map(|v| v.passed)
    }

    /// Every verdict passed.
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    /// Append another report's content under a prefix.
    pub fn absorb(&mut self, prefix: &str, other: ExperimentReport) {
        self.inputs.extend(other.inputs.into_iter().map(|s| format!("{prefix}{s}")));
        self.inputs_digest = digest_bytes(self.inputs.join("\n").as_bytes());
        for mut m in other.metrics {
            m.name = format!("{prefix}{}", m.name);
            self.metrics.push(m);
        }
        for mut v in other.verdicts {
            v.rule = format!("{prefix}{}", v.rule);
            self.verdicts.push(v);
        }
        for mut s in other.series {
            s.name = format!("{prefix}{}", s.name);
            self.series.push(s);
        }
        self.consumed.extend(other.consumed);
        self.notes.extend(other.notes);
    }
}

/// Description of an ensemble for input digests.
pub fn describe_ensemble(ens: &BrownianEnsemble) -> String {
    format!(
        "ensemble seed={} n={} d={} M={} T={} refinements={} increments={}",
        ens.seed(),
        ens.n_paths(),
        ens.dim(),
        ens.steps(),
        ens.grid().horizon(),
        ens.refinements(),
        ens.digest()
    )
}

fn describe_problem(p: &BsdeProblem) -> String {
    format!("problem f={} xi={} M={} T={}", p.f.name(), p.xi.name(), p.grid.steps(), p.grid.horizon())
}

fn describe_solver(scheme: Scheme, basis: &RegressionBasis, opts: &SolverOptions) -> String {
    format!("solver {scheme:?} basis={} opts={opts:?}", basis.describe())
}

/// One solver configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSetup {
    pub scheme: Scheme,
    pub basis: RegressionBasis,
    pub opts: SolverOptions,
}

impl SolverSetup {
    pub fn new(scheme: Scheme, basis: RegressionBasis) -> Self {
        Self { scheme, basis, opts: SolverOptions::default() }
    }

    pub fn describe(&self) -> String {
        describe_solver(self.scheme, &self.basis, &self.opts)
    }

    pub fn solve(&self, problem: &BsdeProblem, ens: &BrownianEnsemble) -> Result<SolutionEnsemble> {
        solve(self.scheme, problem, ens, &self.basis, &self.opts)
    }
}

// ---------------------------------------------------------------------------
// Pathwise distances

/// `max_i mean_p |Y¹_i − Y²_i|` and the node attaining it.
pub fn sup_node_mean_abs_diff(a: &SolutionEnsemble, b: &SolutionEnsemble) -> (Estimate, usize) {
    let n = a.n_paths();
    let mut best = (Estimate::exact(0.0), 0);
    for i in 0..=a.steps() {
        let (ya, yb) = (a.y_at(i), b.y_at(i));
        let e = mean_estimate_by(n, |p| fabs(ya[p] - yb[p]));
        if e.value > best.0.value {
            best = (e, i);
        }
    }
    best
}

/// `mean_p max_i (Y¹_i − Y²_i)⁺`.
pub fn mean_path_max_excess(a: &SolutionEnsemble, b: &SolutionEnsemble) -> Estimate {
    let m = a.steps();
    mean_estimate_by(a.n_paths(), |p| (0..=m).map(|i| (a.y(p, i) - b.y(p, i)).max(0.0)).fold(0.0, f64::max))
}

// ---------------------------------------------------------------------------
// Calibration on affine oracles

/// Oracle errors of one configuration, maximized over problems and solvers.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CalibrationPoint {
    pub steps: usize,
    pub dt: f64,
    pub n: usize,
    /// `sup_i mean_p |Y_i − Y*_i|`.
    pub sup_mean: f64,
    /// `mean_p sup_i |Y_i − Y*_i|`.
    pub mean_sup: f64,
}

/// Errors against the closed-form field on `sample` evenly spaced paths:
/// `(sup_i mean_p |Y − Y*|, mean_p sup_i |Y − Y*|)`.
pub fn oracle_field_error(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    sol: &SolutionEnsemble,
    sample: usize,
) -> Result<(f64, f64)> {
    let field = AffineField::new(problem)?;
    let levels = ens.levels();
    let n = ens.n_paths();
    let sample = sample.clamp(1, n);
    let stride = n / sample;
    let paths: Vec<usize> = (0..sample).map(|k| k * stride).collect();
    let m = ens.steps();
    let mut per_path_sup = vec![0.0f64; sample];
    let mut sup_mean = 0.0f64;
    for i in 0..=m {
        let t = ens.grid().time(i);
        let mut errs = vec![0.0; sample];
        for (k, &p) in paths.iter().enumerate() {
            let exact = field.value(t, levels.level(p, i, 0))?;
            errs[k] = fabs(sol.y(p, i) - exact);
            per_path_sup[k] = per_path_sup[k].max(errs[k]);
        }
        sup_mean = sup_mean.max(pairwise_sum_by(sample, |k| errs[k]) / sample as f64);
    }
    let mean_sup = pairwise_sum_by(sample, |k| per_path_sup[k]) / sample as f64;
    Ok((sup_mean, mean_sup))
}

/// Affine problems with the same `z`-coefficient and claim as the nonlinear
/// experiments: `f = a·y + ½z` with `a ∈ {0, −1}` and `ξ = sin(W_T)`.
pub fn calibration_problems(grid: &TimeGrid) -> Vec<BsdeProblem> {
    [0.0, -1.0]
        .iter()
        .map(|&a| BsdeProblem::new(grid.clone(), GeneratorSpec::linear(1, a, 0.5, 0.0), TerminalSpec::bounded_sin(1.0)))
        .collect()
}

/// Oracle errors on every `(M, n)` pair; each point is the worst case over the
/// calibration problems and solver setups.
pub fn calibrate(
    horizon: f64,
    steps: &[usize],
    paths: &[usize],
    seed: u64,
    setups: &[SolverSetup],
    sample: usize,
) -> Result<Vec<CalibrationPoint>> {
    let mut out = Vec::new();
    for &m in steps {
        let grid = TimeGrid::uniform(horizon, m)?;
        for &n in paths {
            let ens = simulate_brownian(&grid, 1, n, seed)?;
            let (mut sup_mean, mut mean_sup) = (0.0f64, 0.0f64);
            for problem in calibration_problems(&grid) {
                for setup in setups {
                    let sol = setup.solve(&problem, &ens)?;
                    let (a, b) = oracle_field_error(&problem, &ens, &sol, sample)?;
                    sup_mean = sup_mean.max(a);
                    mean_sup = mean_sup.max(b);
                }
            }
            out.push(CalibrationPoint { steps: m, dt: grid.max_dt(), n, sup_mean, mean_sup });
        }
    }
    Ok(out)
}

/// Nonnegative least-squares fit of `err ≈ c₁Δt + c₂/√n`, inflated by the
/// largest observed ratio `err/fit` so the envelope covers every point.
pub fn fit_error_envelope(points: &[(f64, usize, f64)]) -> Tolerance {
    let rows: Vec<(f64, f64, f64)> = points.iter().map(|&(dt, n, e)| (dt, 1.0 / sqrt(n as f64), e)).collect();
    let sse = |c1: f64, c2: f64| rows.iter().map(|(x1, x2, e)| (e - c1 * x1 - c2 * x2) * (e - c1 * x1 - c2 * x2)).sum::<f64>();
    let (s11, s12, s22) = rows
        .iter()
        .fold((0.0, 0.0, 0.0), |(a, b, c), (x1, x2, _)| (a + x1 * x1, b + x1 * x2, c + x2 * x2));
    let (r1, r2) = rows.iter().fold((0.0, 0.0), |(a, b), (x1, x2, e)| (a + x1 * e, b + x2 * e));
    let mut candidates = vec![];
    let det = s11 * s22 - s12 * s12;
    if det > 0.0 {
        let c1 = (r1 * s22 - r2 * s12) / det;
        let c2 = (s11 * r2 - s12 * r1) / det;
        if c1 >= 0.0 && c2 >= 0.0 {
            candidates.push((c1, c2));
        }
    }
    if s11 > 0.0 {
        candidates.push(((r1 / s11).max(0.0), 0.0));
    }
    if s22 > 0.0 {
        candidates.push((0.0, (r2 / s22).max(0.0)));
    }
    let (c1, c2) = candidates
        .into_iter()
        .min_by(|a, b| sse(a.0, a.1).total_cmp(&sse(b.0, b.1)))
        .unwrap_or((0.0, 0.0));
    let inflate = rows
        .iter()
        .map(|(x1, x2, e)| {
            let fit = c1 * x1 + c2 * x2;
            if fit > 0.0 {
                e / fit
            } else if *e > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(1.0f64, f64::max);
    Tolerance::new(c1 * inflate, c2 * inflate)
}

// ---------------------------------------------------------------------------
// Stopping times

/// A node-valued stopping rule; each decision uses the path up to the node.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum StoppingRule {
    /// A deterministic node.
    Node(usize),
    /// First node with `|W| ≥ level`, else the terminal node.
    BrownianHit(f64),
    /// First node with `|Y| ≥ level`, else the terminal node.
    SolutionHit(f64),
}

impl StoppingRule {
    pub fn label(&self) -> String {
        match self {
            StoppingRule::Node(i) => format!("node {i}"),
            StoppingRule::BrownianHit(l) => format!("first |W| >= {l}"),
            StoppingRule::SolutionHit(l) => format!("first |Y| >= {l:.6}"),
        }
    }

    /// The stopping node on every path.
    pub fn evaluate(&self, levels: &Levels, sol: &SolutionEnsemble) -> Vec<usize> {
        let (n, m, d) = (sol.n_paths(), sol.steps(), levels.dim());
        match *self {
            StoppingRule::Node(i) => vec![i.min(m); n],
            StoppingRule::BrownianHit(l) => (0..n)
                .map(|p| (0..=m).find(|&i| norm(&levels.at_node(i)[p * d..(p + 1) * d]) >= l).unwrap_or(m))
                .collect(),
            StoppingRule::SolutionHit(l) => {
                (0..n).map(|p| (0..=m).find(|&i| fabs(sol.y(p, i)) >= l).unwrap_or(m)).collect()
            }
        }
    }
}

/// A finite family of stopping rules standing in for all stopping times.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StoppingTimeFamily {
    pub rules: Vec<StoppingRule>,
}

impl StoppingTimeFamily {
    pub fn new(rules: Vec<StoppingRule>) -> Self {
        Self { rules }
    }

    /// Nodes nearest `0, T/4, T/2, 3T/4, T`, first hits of `|W|` at 0.5 and 1,
    /// and the first hit of `|Y|` at its empirical 90% quantile.
    pub fn standard(grid: &TimeGrid, sol: &SolutionEnsemble) -> Self {
        let t = grid.horizon();
        let mut rules: Vec<StoppingRule> =
            (0..=4).map(|k| StoppingRule::Node(grid.nearest_node(t * k as f64 / 4.0))).collect();
        rules.push(StoppingRule::BrownianHit(0.5));
        rules.push(StoppingRule::BrownianHit(1.0));
        let abs: Vec<f64> = (0..=sol.steps()).flat_map(|i| sol.y_at(i).iter().map(|v| fabs(*v))).collect();
        rules.push(StoppingRule::SolutionHit(quantile(&abs, 0.9)));
        Self { rules }
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Class (D)

/// `K = 10^j` for `j = 0, …, 6`.
pub fn default_k_ladder() -> Vec<f64> {
    (0..=6).map(|j| pow(10.0, j as f64)).collect()
}

/// Tails `mean_p ψ(|Y_τ|)·1{ψ(|Y_τ|) > K}` over a ladder of `K`, maximized over
/// the stopping family. Passes when the tail is nonincreasing in `K` and the
/// last rung is below `eps`.
pub fn class_d_diagnostic(
    ens: &BrownianEnsemble,
    sol: &SolutionEnsemble,
    family: &StoppingTimeFamily,
    mu: f64,
    ladder: &[f64],
    eps: f64,
) -> Result<ExperimentReport> {
    if family.is_empty() {
        return Err(Error::Domain("empty stopping family".into()));
    }
    if ladder.is_empty() || ladder.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Domain("K ladder must be nonempty and increasing".into()));
    }
    if sol.n_paths() != ens.n_paths() || sol.steps() != ens.steps() {
        return Err(Error::Grid("solution and ensemble shapes differ".into()));
    }
    let mut report = ExperimentReport::new(
        "class_d",
        vec![
            describe_ensemble(ens),
            format!("solution {}", sol.digest()),
            format!("mu={mu} ladder={ladder:?} eps={eps}"),
            format!("rules {:?}", family.rules),
        ],
    );
    report.consume(sol);
    let levels = ens.levels();
    let n = sol.n_paths();
    let mut tails = vec![vec![0.0; family.len()]; ladder.len()];
    for (r, rule) in family.rules.iter().enumerate() {
        let tau = rule.evaluate(&levels, sol);
        let v: Vec<f64> = (0..n).map(|p| psi_unchecked(fabs(sol.y(p, tau[p])), mu)).collect();
        for (k, &cap) in ladder.iter().enumerate() {
            tails[k][r] = pairwise_sum_by(n, |p| if v[p] > cap { v[p] } else { 0.0 }) / n as f64;
        }
    }
    let max_tail: Vec<f64> = tails.iter().map(|row| row.iter().copied().fold(0.0, f64::max)).collect();
    let monotone = max_tail.windows(2).all(|w| w[1] <= w[0]);
    let last = *max_tail.last().unwrap_or(&f64::NAN);
    for (k, &cap) in ladder.iter().enumerate() {
        report.push_metric(format!("tail[K={cap:e}]"), max_tail[k]);
    }
    report.push_metric("final_tail", last);
    report.push_metric("eps_ui", eps);
    report.push_verdict("tail_nonincreasing", monotone, format!("{max_tail:?}"));
    report.push_verdict("final_tail_below_eps", last < eps, format!("{last:e} < {eps:e}"));
    let mut columns = vec!["K".to_string(), "max_tail".to_string()];
    columns.extend(family.rules.iter().map(|r| r.label()));
    let rows = ladder
        .iter()
        .zip(&tails)
        .zip(&max_tail)
        .map(|((cap, row), mx)| {
            let mut v = vec![*cap, *mx];
            v.extend(row);
            v
        })
        .collect();
    report.series.push(Series { name: "tails".into(), columns, rows });
    Ok(report)
}

/// A synthetic solution with `Y = 1/U`, `U` uniform on `(0,1)`, at every node.
/// `P(Y > K) = 1/K`, so even `E|Y|` is infinite and `ψ(|Y|)` is not uniformly
/// integrable.
pub fn heavy_tail_surrogate(n_paths: usize, steps: usize, dim: usize, seed: u64) -> Result<SolutionEnsemble> {
    let mut rng = CounterRng::new(seed, STREAM_DIAGNOSTICS);
    let y: Vec<f64> = (0..n_paths * (steps + 1)).map(|_| 1.0 / rng.uniform()).collect();
    let meta = SolverMeta { solver: "heavy_tail_surrogate".into(), ..SolverMeta::default() };
    SolutionEnsemble::from_parts(n_paths, steps, dim, y, vec![0.0; n_paths * steps * dim], meta)
}

// ---------------------------------------------------------------------------
// A-priori bound

fn require_sampled(report: crate::checks::ViolationReport) -> Result<()> {
    if report.passed() {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!(
            "{} fails on {} of {} samples (max excess {:e})",
            report.assumption, report.violation_count, report.samples, report.max_excess
        )))
    }
}

/// Compares `|Y_t|` with
/// `(1 − b²(T−t)/μ²)^{−1/2}·e^{a(T−t)} + e^{2μ² + a(T−t)}·E[ψ(|ξ| + ∫_t^T |f(s,0,0)| ds, μ) | F_t]`,
/// the conditional expectation estimated by regression on `basis`.
///
/// Each node also gets a regression tolerance `e^{2μ²+a(T−t)}·3σ√(k/n)`, with
/// `σ` the residual spread and `k` the number of regression coefficients.
/// The second, ψ-scale estimate `ψ(|Y_t|) ≤ A + B·E[…|F_t]` has unspecified
/// constants; a least-squares `(A, B)` over node means is reported.
pub fn apriori_bound_experiment(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    sol: &SolutionEnsemble,
    basis: &RegressionBasis,
    mu: f64,
) -> Result<ExperimentReport> {
    problem.check_ensemble(ens)?;
    let f = &problem.f;
    let a = f.require_a()?;
    let b = f.require_b()?;
    let grid = &problem.grid;
    let horizon = grid.horizon();
    let params = PsiParams::new(mu, b, horizon)?;
    params.require_supercritical()?;
    let cfg = SamplerConfig { t_max: horizon, ..SamplerConfig::default() };
    require_sampled(check_linear_growth_a4(f, cfg, HYPOTHESIS_SAMPLES)?)?;
    require_sampled(check_lipschitz_z_a2(f, cfg, HYPOTHESIS_SAMPLES)?)?;

    let mut report = ExperimentReport::new(
        "apriori",
        vec![
            describe_ensemble(ens),
            describe_problem(problem),
            format!("solution {}", sol.digest()),
            format!("basis {} mu={mu} a={a} b={b}", basis.describe()),
        ],
    );
    report.consume(sol);
    let (n, m) = (ens.n_paths(), ens.steps());
    let levels = ens.levels();
    let xi_abs: Vec<f64> = problem.xi.evaluate(ens).iter().map(|v| fabs(*v)).collect();
    let zero_z = vec![0.0; problem.dim()];
    // ∫_{t_i}^T |f(s,0,0)| ds on the grid.
    let mut drift_tail = vec![0.0; m + 1];
    for i in (0..m).rev() {
        drift_tail[i] = drift_tail[i + 1] + fabs(f.eval(grid.time(i), 0.0, &zero_z)) * grid.dt(i);
    }
    let k = (basis.features(problem.dim()) + 1) as f64;
    let mut violations = 0usize;
    let mut max_excess = f64::NEG_INFINITY;
    let mut max_tol = 0.0f64;
    let mut rows = Vec::with_capacity(m + 1);
    let mut node_means = Vec::with_capacity(m + 1);
    let mut all_c = Vec::with_capacity(n * (m + 1));
    for i in 0..=m {
        let t = grid.time(i);
        let target: Vec<f64> = xi_abs.iter().map(|x| psi_unchecked(x + drift_tail[i], mu)).collect();
        let cond = if i == m { target.clone() } else { basis.projector(&levels, i, t)?.project(&levels, &target) };
        let sigma = if i == m {
            0.0
        } else {
            let e = mean_estimate_by(n, |p| target[p] - cond[p]);
            e.stderr * sqrt(n as f64)
        };
        let growth = exp(a * (horizon - t));
        let first = exp_moment_bound(&params, t)? * growth;
        let weight = exp(2.0 * mu * mu) * growth;
        let tol = weight * NOISE_SIGMAS * sigma * sqrt(k / n as f64);
        max_tol = max_tol.max(tol);
        let y = sol.y_at(i);
        let mut min_rhs = f64::INFINITY;
        let mut max_abs = 0.0f64;
        for p in 0..n {
            let rhs = first + weight * cond[p];
            let excess = fabs(y[p]) - rhs - tol;
            if excess > 0.0 {
                violations += 1;
            }
            max_excess = max_excess.max(excess);
            min_rhs = min_rhs.min(rhs);
            max_abs = max_abs.max(fabs(y[p]));
        }
        let mean_cond = pairwise_sum_by(n, |p| cond[p]) / n as f64;
        let mean_psi_y = pairwise_sum_by(n, |p| psi_unchecked(fabs(y[p]), mu)) / n as f64;
        node_means.push((mean_cond, mean_psi_y));
        all_c.push(cond);
        rows.push(vec![t, max_abs, min_rhs, tol, mean_cond, mean_psi_y]);
    }
    let fraction = violations as f64 / (n * (m + 1)) as f64;
    report.push_metric("violation_fraction", fraction);
    report.push_metric("max_excess", max_excess);
    report.push_metric("max_regression_tolerance", max_tol);
    report.push_metric("mu", mu);
    report.push_metric("a", a);
    report.push_metric("b", b);

    // ψ(|Y_t|) ≈ A + B·E[…|F_t] over node means.
    let (a_hat, b_hat, rms) = least_squares_line(&node_means);
    let mut envelope_a = f64::NEG_INFINITY;
    for (i, cond) in all_c.iter().enumerate() {
        let y = sol.y_at(i);
        for p in 0..n {
            envelope_a = envelope_a.max(psi_unchecked(fabs(y[p]), mu) - b_hat * cond[p]);
        }
    }
    report.push_metric("psi_fit_A", a_hat);
    report.push_metric("psi_fit_B", b_hat);
    report.push_metric("psi_fit_rms", rms);
    report.push_metric("psi_envelope_A", envelope_a);
    report.notes.push("psi-scale constants (A, B) are fitted and reported, never asserted".into());

    report.push_verdict(
        "violation_fraction",
        fraction <= APRIORI_MAX_VIOLATION,
        format!("{fraction:e} <= {APRIORI_MAX_VIOLATION}"),
    );
    report.series.push(Series {
        name: "apriori".into(),
        columns: ["t", "max_abs_y", "min_rhs", "regression_tol", "mean_cond_psi", "mean_psi_y"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        rows,
    });
    Ok(report)
}

/// Least-squares `y ≈ A + B·x`, with the rms residual.
fn least_squares_line(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - b * mx;
    let rms = sqrt(pts.iter().map(|p| (p.1 - a - b * p.0) * (p.1 - a - b * p.0)).sum::<f64>() / n);
    (a, b, rms)
}

// ---------------------------------------------------------------------------
// Uniqueness

/// Solves `problem` with every setup on one ensemble and reports
/// `U = max over pairs of max_i mean_p |Y¹_i − Y²_i|` against `tol`.
pub fn uniqueness_experiment(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    setups: &[SolverSetup],
    tol: Tolerance,
) -> Result<ExperimentReport> {
    if setups.len() < 2 {
        return Err(Error::Domain("uniqueness needs at least two solver setups".into()));
    }
    let cfg = SamplerConfig { t_max: problem.grid.horizon(), ..SamplerConfig::default() };
    require_sampled(check_osgood_a1(&problem.f, cfg, HYPOTHESIS_SAMPLES)?)?;
    require_sampled(check_lipschitz_z_a2(&problem.f, cfg, HYPOTHESIS_SAMPLES)?)?;
    let mut inputs = vec![describe_ensemble(ens), describe_problem(problem), format!("tol {tol:?}")];
    inputs.extend(setups.iter().map(|s| s.describe()));
    let mut report = ExperimentReport::new("uniqueness", inputs);
    let sols = setups.iter().map(|s| s.solve(problem, ens)).collect::<Result<Vec<_>>>()?;
    for (s, sol) in setups.iter().zip(&sols) {
        report.consume(sol);
        report.push_estimate(format!("y0[{:?} {}]", s.scheme, s.basis.describe()), sol.y0());
    }
    let mut worst = (Estimate::exact(0.0), 0usize, String::new());
    let mut rows = Vec::new();
    for i in 0..sols.len() {
        for j in i + 1..sols.len() {
            let (u, node) = sup_node_mean_abs_diff(&sols[i], &sols[j]);
            rows.push(vec![i as f64, j as f64, u.value, u.stderr, node as f64]);
            if u.value > worst.0.value {
                worst = (u, node, format!("{} vs {}", setups[i].describe(), setups[j].describe()));
            }
        }
    }
    let dt = problem.grid.max_dt();
    let bound = tol.at(dt, ens.n_paths());
    report.push_estimate("U", worst.0);
    report.push_metric("U_node", worst.1 as f64);
    report.push_metric("tol_unique", bound);
    report.push_verdict("U_within_tolerance", worst.0.value <= bound, format!("{:e} <= {bound:e} ({})", worst.0.value, worst.2));
    report.series.push(Series {
        name: "pairs".into(),
        columns: ["setup_i", "setup_j", "U", "stderr", "node"].iter().map(|s| s.to_string()).collect(),
        rows,
    });
    Ok(report)
}

/// [`uniqueness_experiment`] on an ensemble and on its Brownian-bridge
/// refinement; additionally requires `U` to shrink when `M` doubles.
pub fn uniqueness_refinement_experiment(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    setups: &[SolverSetup],
    tol: Tolerance,
) -> Result<ExperimentReport> {
    let coarse = uniqueness_experiment(problem, ens, setups, tol)?;
    let fine_problem = BsdeProblem::new(problem.grid.refine(), problem.f.clone(), problem.xi.clone());
    let fine = uniqueness_experiment(&fine_problem, &ens.refine()?, setups, tol)?;
    let (u1, u2) = (coarse.value("U").unwrap_or(f64::NAN), fine.value("U").unwrap_or(f64::NAN));
    let mut report = ExperimentReport::new("uniqueness_refinement", Vec::new());
    report.absorb("M:", coarse);
    report.absorb("2M:", fine);
    report.push_metric("U_ratio", u2 / u1);
    report.push_verdict("U_shrinks_when_M_doubles", u2 < u1, format!("{u2:e} < {u1:e}"));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Comparison

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ComparisonMode {
    /// Lipschitz-in-`y` generators; `(A5)` is checked as well.
    Lipschitz,
    /// One-sided Osgood generators, `(A1)` and `(A2)`.
    Osgood,
}

/// Solves `lower` and `upper` on one ensemble with the same setup and reports
/// `V = mean_p max_i (Y_i − Y′_i)⁺` against `tol`.
///
/// Hypotheses are checked on the data: `ξ ≤ ξ′` on every path and
/// `f(t, Y′, Z′) ≤ f′(t, Y′, Z′)` along the computed upper solution. A strict
/// comparison probe reports, on paths where `|Y − Y′| < probe_delta` at the
/// middle node, the mean later spread; it carries no verdict.
pub fn comparison_experiment(
    lower: &BsdeProblem,
    upper: &BsdeProblem,
    ens: &BrownianEnsemble,
    setup: &SolverSetup,
    mode: ComparisonMode,
    tol: Tolerance,
    probe_delta: f64,
) -> Result<ExperimentReport> {
    if lower.grid != upper.grid {
        return Err(Error::Grid("comparison problems use different grids".into()));
    }
    let cfg = SamplerConfig { t_max: lower.grid.horizon(), ..SamplerConfig::default() };
    for f in [&lower.f, &upper.f] {
        require_sampled(check_osgood_a1(f, cfg, HYPOTHESIS_SAMPLES)?)?;
        require_sampled(check_lipschitz_z_a2(f, cfg, HYPOTHESIS_SAMPLES)?)?;
        if mode == ComparisonMode::Lipschitz {
            require_sampled(check_lipschitz_y_a5(f, cfg, HYPOTHESIS_SAMPLES)?)?;
        }
    }
    let xi = lower.xi.evaluate(ens);
    let xi_up = upper.xi.evaluate(ens);
    if let Some(p) = (0..xi.len()).find(|&p| !(xi[p] <= xi_up[p])) {
        return Err(Error::Hypothesis(format!("terminal order fails on path {p}: {} > {}", xi[p], xi_up[p])));
    }
    let mut report = ExperimentReport::new(
        "comparison",
        vec![
            describe_ensemble(ens),
            format!("lower {}", describe_problem(lower)),
            format!("upper {}", describe_problem(upper)),
            setup.describe(),
            format!("mode {mode:?} tol {tol:?} probe_delta={probe_delta}"),
        ],
    );
    let y = setup.solve(lower, ens)?;
    let y_up = setup.solve(upper, ens)?;
    report.consume(&y);
    report.consume(&y_up);
    let (n, m) = (ens.n_paths(), ens.steps());
    let grid = &lower.grid;
    for i in 0..m {
        let t = grid.time(i);
        for p in 0..n {
            let (yv, zv) = (y_up.y(p, i), y_up.z(p, i));
            let (lo, hi) = (lower.f.eval(t, yv, zv), upper.f.eval(t, yv, zv));
            if !(lo <= hi + 1e-12 * (1.0 + fabs(hi))) {
                return Err(Error::Hypothesis(format!(
                    "generator order fails along the upper solution at path {p}, node {i}: {lo} > {hi}"
                )));
            }
        }
    }
    let v = mean_path_max_excess(&y, &y_up);
    let v_swapped = mean_path_max_excess(&y_up, &y);
    let bound = tol.at(grid.max_dt(), n);
    report.push_estimate("V", v);
    report.push_estimate("V_swapped", v_swapped);
    report.push_estimate("y0_lower", y.y0());
    report.push_estimate("y0_upper", y_up.y0());
    report.push_metric("tol_cmp", bound);

    let mid = m / 2;
    let event: Vec<usize> = (0..n).filter(|&p| fabs(y.y(p, mid) - y_up.y(p, mid)) < probe_delta).collect();
    let spread = if event.is_empty() {
        f64::NAN
    } else {
        pairwise_sum_by(event.len(), |k| {
            let p = event[k];
            (mid + 1..=m).map(|i| fabs(y.y(p, i) - y_up.y(p, i))).fold(0.0, f64::max)
        }) / event.len() as f64
    };
    report.push_metric("probe_event_fraction", event.len() as f64 / n as f64);
    report.push_metric("probe_later_spread", spread);
    report.notes.push("strict comparison probe is informational".into());

    let rows = (0..=m)
        .map(|i| {
            let (a, b) = (y.y_at(i), y_up.y_at(i));
            vec![
                grid.time(i),
                pairwise_sum_by(n, |p| a[p]) / n as f64,
                pairwise_sum_by(n, |p| b[p]) / n as f64,
                pairwise_sum_by(n, |p| (a[p] - b[p]).max(0.0)) / n as f64,
            ]
        })
        .collect();
    report.series.push(Series {
        name: "comparison".into(),
        columns: ["t", "mean_y", "mean_y_upper", "mean_excess"].iter().map(|s| s.to_string()).collect(),
        rows,
    });
    report.push_verdict("V_within_tolerance", v.value <= bound, format!("{:e} <= {bound:e}", v.value));
    Ok(report)
}

// ---------------------------------------------------------------------------
// Closed-form oracles

/// Relative floor of the oracle and measure-consistency tolerances.
pub const RELATIVE_FLOOR: f64 = 0.01;

/// Solves an affine problem on the ensemble and on two Brownian-bridge
/// refinements, and compares `Y_0` with the closed form.
///
/// With the error model `Y_0(Δt) = Y_0 + C·Δt`, `C` is the least-squares slope
/// of the two refinement differences. The verdict asks
/// `|Y_0 − Y_0*| ≤ max(1%·|Y_0*|, 3·stderr + |C|·Δt)` on the coarsest grid.
pub fn oracle_experiment(problem: &BsdeProblem, ens: &BrownianEnsemble, setup: &SolverSetup) -> Result<ExperimentReport> {
    let exact = crate::quadrature::closed_form_linear(problem)?;
    let mut report = ExperimentReport::new("oracle", vec![describe_ensemble(ens), describe_problem(problem), setup.describe()]);
    let mut ens_k = ens.clone();
    let mut problem_k = problem.clone();
    let mut est = Vec::new();
    let mut dts = Vec::new();
    for level in 0..3 {
        if level > 0 {
            ens_k = ens_k.refine()?;
            problem_k = BsdeProblem::new(problem_k.grid.refine(), problem.f.clone(), problem.xi.clone());
        }
        let sol = setup.solve(&problem_k, &ens_k)?;
        report.consume(&sol);
        report.push_estimate(format!("y0[M={}]", problem_k.grid.steps()), sol.y0());
        est.push(sol.y0());
        dts.push(problem_k.grid.max_dt());
    }
    let (x1, x2) = (dts[0] - dts[1], dts[1] - dts[2]);
    let (d1, d2) = (est[0].value - est[1].value, est[1].value - est[2].value);
    let slope = (d1 * x1 + d2 * x2) / (x1 * x1 + x2 * x2);
    let err = fabs(est[0].value - exact);
    let tol = (RELATIVE_FLOOR * fabs(exact)).max(NOISE_SIGMAS * est[0].stderr + fabs(slope) * dts[0]);
    report.push_metric("closed_form", exact);
    report.push_metric("error", err);
    report.push_metric("dt_slope", slope);
    report.push_metric("tolerance", tol);
    report.push_verdict("closed_form_match", err <= tol, format!("{err:e} <= {tol:e}"));
    report.series.push(Series {
        name: "refinement".into(),
        columns: ["dt", "y0", "stderr"].iter().map(|s| s.to_string()).collect(),
        rows: dts.iter().zip(&est).map(|(dt, e)| vec![*dt, e.value, e.stderr]).collect(),
    });
    Ok(report)
}

/// Compares the solver's `Y_0` with the measure-solution price
/// `E^Q[ξ + ∫ f(s, Y_s, 0) ds]`, `Q` built from the Girsanov kernel along the
/// computed solution. The claim is screened by the admissibility check first.
/// Agreement is `max(1%, 3·combined stderr)`; an optional `reference` value is
/// held to the same tolerance.
pub fn girsanov_experiment(
    problem: &BsdeProblem,
    ens: &BrownianEnsemble,
    setup: &SolverSetup,
    mu: f64,
    reference: Option<f64>,
) -> Result<ExperimentReport> {
    let b = problem.f.require_b()?;
    let grid = &problem.grid;
    let params = PsiParams::new(mu, b, grid.horizon())?;
    params.require_supercritical()?;
    let adm = admissibility_check(&problem.xi, &params, grid, (ens.n_paths() / 4).max(1), ens.seed() ^ 0xad15, ADMISSIBILITY_THRESHOLD)?;
    let mut report = ExperimentReport::new(
        "girsanov",
        vec![describe_ensemble(ens), describe_problem(problem), setup.describe(), format!("mu={mu} reference={reference:?}")],
    );
    report.push_metric("admissibility_bound_rhs", adm.bound_rhs);
    let sol = setup.solve(problem, ens)?;
    report.consume(&sol);
    let mc = crate::measure::build_measure_change(ens, &problem.f, &sol)?;
    let (n, m) = (ens.n_paths(), ens.steps());
    let drift: Vec<f64> = (0..n)
        .map(|p| (0..m).map(|i| problem.f.eval_zero_z(grid.time(i), sol.y(p, i)) * grid.dt(i)).sum())
        .collect();
    let price = if drift.iter().all(|v| *v == 0.0) {
        crate::measure::measure_solution_price(&problem.xi, ens, &mc, crate::measure::Admission::Checked(&adm))?
    } else {
        if adm.verdict != Verdict::Admissible {
            return Err(Error::Inadmissible(format!("`{}`: {:?}", problem.xi.name(), adm.relative_changes)));
        }
        let xi = problem.xi.evaluate(ens);
        let v: Vec<f64> = xi.iter().zip(&drift).map(|(a, b)| a + b).collect();
        crate::measure::q_expectation(&v, &mc, mc.terminal_node())?
    };
    let y0 = sol.y0();
    let combined = sqrt(y0.stderr * y0.stderr + price.stderr * price.stderr);
    let tol = (RELATIVE_FLOOR * fabs(price.value)).max(NOISE_SIGMAS * combined);
    report.push_estimate("y0", y0);
    report.push_estimate("price", price.estimate());
    report.push_metric("ess", price.ess);
    report.push_metric("ess_fraction", price.ess / n as f64);
    report.push_metric("tolerance", tol);
    let gap = fabs(y0.value - price.value);
    report.push_verdict("solver_matches_price", gap <= tol, format!("{gap:e} <= {tol:e}"));
    report.push_verdict(
        "ess_above_floor",
        price.ess >= crate::measure::ESS_FLOOR * n as f64,
        format!("{} >= {}", price.ess, crate::measure::ESS_FLOOR * n as f64),
    );
    if let Some(r) = reference {
        let gap = fabs(y0.value - r);
        report.push_metric("reference", r);
        report.push_verdict("solver_matches_reference", gap <= tol, format!("{gap:e} <= {tol:e}"));
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// Stability

/// `ξⁿ = ξ⁰ + terminal_scale·η/n` and `fⁿ = f⁰ + generator_rate/n`.
#[derive(Debug, Clone)]
pub struct StabilitySequence {
    pub base: BsdeProblem,
    /// The envelope `η ≥ 0` dominating `|ξⁿ − ξ⁰|` (for `terminal_scale ≤ 1`).
    pub envelope: TerminalSpec,
    pub terminal_scale: f64,
    pub generator_rate: f64,
    pub n_list: Vec<usize>,
    /// Exponents for the joint `(Y, Z)` norm.
    pub betas: Vec<f64>,
    /// Also report `mean_p max_i ψ(|ΔY|)`.
    pub uniform: bool,
}

impl StabilitySequence {
    /// `l_n`.
    pub fn rate(&self, n: usize) -> f64 {
        self.generator_rate / n as f64
    }

    pub fn member(&self, n: usize) -> BsdeProblem {
        let s = self.terminal_scale / n as f64;
        BsdeProblem::new(self.base.grid.clone(), self.base.f.shifted(self.rate(n)), self.base.xi.plus_scaled(&self.envelope, s))
    }
}

fn check_affine_in_z(f: &GeneratorSpec, horizon: f64, seed: u64) -> Result<()> {
    let coeff = f
        .z_coefficients()
        .ok_or_else(|| Error::Hypothesis(format!("`{}` declares no z-coefficients", f.name())))?
        .to_vec();
    let mut rng = CounterRng::new(seed, STREAM_DIAGNOSTICS + 1);
    let mut z = vec![0.0; f.dim()];
    for _ in 0..HYPOTHESIS_SAMPLES {
        let t = rng.uniform_in(0.0, horizon);
        let y = rng.uniform_in(-10.0, 10.0);
        z.iter_mut().for_each(|v| *v = rng.uniform_in(-10.0, 10.0));
        let lhs = f.eval(t, y, &z) - f.eval_zero_z(t, y);
        let rhs: f64 = coeff.iter().zip(&z).map(|(c, v)| c * v).sum();
        if fabs(lhs - rhs) > 1e-9 * (1.0 + fabs(lhs) + fabs(rhs)) {
            return Err(Error::Hypothesis(format!("`{}` is not affine in z at t={t}, y={y}", f.name())));
        }
    }
    Ok(())
}

fn nonincreasing_within_noise(values: &[Estimate]) -> bool {
    values
        .windows(2)
        .all(|w| w[1].value <= w[0].value + NOISE_SIGMAS * sqrt(w[0].stderr * w[0].stderr + w[1].stderr * w[1].stderr))
}

/// Solves every member of the sequence and the base problem on one ensemble.
/// Reports `S1(n) = max_i mean_p ψ(|ΔY_i|)`,
/// `S2(n, β) = mean_p [max_i ψ(|ΔY_i|)^β + (Σ_i |ΔZ_i|²Δt_i)^{β/2}]` and, in
/// uniform mode, `S3(n) = mean_p max_i ψ(|ΔY_i|)`. Each sequence must be
/// nonincreasing within noise and the last `S1` at most `tol_stab`.
pub fn stability_experiment(
    seq: &StabilitySequence,
    ens: &BrownianEnsemble,
    setup: &SolverSetup,
    mu: f64,
    tol_stab: f64,
) -> Result<ExperimentReport> {
    if seq.n_list.is_empty() {
        return Err(Error::Domain("empty index list".into()));
    }
    let base = &seq.base;
    let grid = &base.grid;
    let b = base.f.require_b()?;
    let params = PsiParams::new(mu, b, grid.horizon())?;
    params.require_supercritical()?;
    check_affine_in_z(&base.f, grid.horizon(), ens.seed())?;
    let adm = admissibility_check(&seq.envelope, &params, grid, ens.n_paths() / 4 + 1, ens.seed() ^ 0x5eed, ADMISSIBILITY_THRESHOLD)?;
    if adm.verdict != Verdict::Admissible {
        return Err(Error::Inadmissible(format!("envelope `{}`: {:?}", seq.envelope.name(), adm.relative_changes)));
    }
    let cfg = SamplerConfig { t_max: grid.horizon(), ..SamplerConfig::default() };
    for &k in &seq.n_list {
        let f = seq.member(k).f;
        require_sampled(check_osgood_a1(&f, cfg, HYPOTHESIS_SAMPLES)?)?;
        require_sampled(check_lipschitz_z_a2(&f, cfg, HYPOTHESIS_SAMPLES)?)?;
        require_sampled(check_linear_growth_a4(&f, cfg, HYPOTHESIS_SAMPLES)?)?;
    }
    let mut report = ExperimentReport::new(
        "stability",
        vec![
            describe_ensemble(ens),
            describe_problem(base),
            format!(
                "envelope {} terminal_scale={} generator_rate={} n_list={:?} betas={:?} uniform={}",
                seq.envelope.name(),
                seq.terminal_scale,
                seq.generator_rate,
                seq.n_list,
                seq.betas,
                seq.uniform
            ),
            setup.describe(),
            format!("mu={mu} tol_stab={tol_stab}"),
        ],
    );
    let y0 = setup.solve(base, ens)?;
    report.consume(&y0);
    let (n, m, d) = (ens.n_paths(), ens.steps(), ens.dim());
    let dt: Vec<f64> = (0..m).map(|i| grid.dt(i)).collect();
    let mut s1s = Vec::new();
    let mut s2s = vec![Vec::new(); seq.betas.len()];
    let mut s3s = Vec::new();
    let mut rows = Vec::new();
    for &k in &seq.n_list {
        let yn = setup.solve(&seq.member(k), ens)?;
        report.consume(&yn);
        let mut s1 = Estimate::exact(0.0);
        for i in 0..=m {
            let (a, c) = (yn.y_at(i), y0.y_at(i));
            let e = mean_estimate_by(n, |p| psi_unchecked(fabs(a[p] - c[p]), mu));
            if e.value > s1.value {
                s1 = e;
            }
        }
        let sup_psi: Vec<f64> = (0..n)
            .map(|p| (0..=m).map(|i| psi_unchecked(fabs(yn.y(p, i) - y0.y(p, i)), mu)).fold(0.0, f64::max))
            .collect();
        let z_energy: Vec<f64> = (0..n)
            .map(|p| {
                (0..m)
                    .map(|i| {
                        let (za, zb) = (yn.z(p, i), y0.z(p, i));
                        (0..d).map(|j| (za[j] - zb[j]) * (za[j] - zb[j])).sum::<f64>() * dt[i]
                    })
                    .sum()
            })
            .collect();
        let mut row = vec![k as f64, seq.rate(k), s1.value, s1.stderr];
        report.push_estimate(format!("S1[n={k}]"), s1);
        s1s.push(s1);
        for (bi, &beta) in seq.betas.iter().enumerate() {
            let e = mean_estimate_by(n, |p| pow(sup_psi[p], beta) + pow(z_energy[p], beta / 2.0));
            report.push_estimate(format!("S2[n={k},beta={beta}]"), e);
            row.extend([e.value, e.stderr]);
            s2s[bi].push(e);
        }
        if seq.uniform {
            let e = mean_estimate_by(n, |p| sup_psi[p]);
            report.push_estimate(format!("S3[n={k}]"), e);
            row.extend([e.value, e.stderr]);
            s3s.push(e);
        }
        rows.push(row);
    }
    report.push_verdict("S1_nonincreasing", nonincreasing_within_noise(&s1s), format!("{:?}", s1s.iter().map(|e| e.value).collect::<Vec<_>>()));
    for (bi, beta) in seq.betas.iter().enumerate() {
        report.push_verdict(
            format!("S2_beta={beta}_nonincreasing"),
            nonincreasing_within_noise(&s2s[bi]),
            format!("{:?}", s2s[bi].iter().map(|e| e.value).collect::<Vec<_>>()),
        );
    }
    if seq.uniform {
        report.push_verdict("S3_nonincreasing", nonincreasing_within_noise(&s3s), format!("{:?}", s3s.iter().map(|e| e.value).collect::<Vec<_>>()));
    }
    let last = s1s.last().map(|e| e.value).unwrap_or(f64::NAN);
    report.push_metric("tol_stab", tol_stab);
    report.push_verdict("final_S1_within_tolerance", last <= tol_stab, format!("{last:e} <= {tol_stab:e}"));
    let mut columns: Vec<String> = ["n", "l_n", "S1", "S1_stderr"].iter().map(|s| s.to_string()).collect();
    for beta in &seq.betas {
        columns.push(format!("S2_beta={beta}"));
        columns.push(format!("S2_beta={beta}_stderr"));
    }
    if seq.uniform {
        columns.push("S3".into());
        columns.push("S3_stderr".into());
    }
    report.series.push(Series { name: "stability".into(), columns, rows });
    Ok(report)
}

/// `ψ(δ, μ)`: the largest `S1` compatible with `sup |ΔY| ≤ δ`.
pub fn stability_tolerance(delta: f64, mu: f64) -> f64 {
    psi_unchecked(delta.max(0.0), mu)
}
