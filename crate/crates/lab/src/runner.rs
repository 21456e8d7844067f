//! Wiring from a resolved config to the harness experiments.

use std::path::{Path, PathBuf};

use bsdelab_core::brownian::simulate_brownian;
use bsdelab_core::harness::{
    apriori_bound_experiment, class_d_diagnostic, comparison_experiment, describe_ensemble, girsanov_experiment,
    heavy_tail_surrogate, oracle_experiment, stability_experiment, uniqueness_experiment,
    uniqueness_refinement_experiment, ExperimentReport, Series, SolverSetup, StabilitySequence, StoppingTimeFamily,
};
use bsdelab_core::measure::{admissibility_check, Verdict};
use bsdelab_core::psi::{inequality_suite, RESIDUAL_TOL};
use bsdelab_core::{BrownianEnsemble, BsdeProblem, Error, GeneratorSpec, PsiParams, SolutionEnsemble, TerminalSpec, TimeGrid};

use crate::config::{self, ConfigError, ExperimentConfig, ExperimentKind, SpecRef};
use crate::report::{self, Outcome, RunReport};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(self, RunError::Core(e) if e.is_hypothesis_violation())
    }

    /// 2 for violated hypotheses, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.is_hypothesis_violation() {
            2
        } else {
            1
        }
    }
}

/// Result of [`run`]: the report as written and where it went.
#[derive(Debug)]
pub struct RunSummary {
    pub report: RunReport,
    pub report_path: PathBuf,
    pub experiment: Option<ExperimentReport>,
}

impl RunSummary {
    pub fn exit_code(&self) -> i32 {
        self.report.verdict.exit_code()
    }
}

fn generator(cfg: &ExperimentConfig, spec: Option<&SpecRef>) -> Result<GeneratorSpec, RunError> {
    let spec = spec.ok_or_else(|| missing(cfg, "generator"))?;
    Ok(GeneratorSpec::builtin(&spec.name, &spec.params, cfg.ensemble.dim)?)
}

fn terminal(cfg: &ExperimentConfig, spec: Option<&SpecRef>) -> Result<TerminalSpec, RunError> {
    let spec = spec.ok_or_else(|| missing(cfg, "terminal"))?;
    Ok(TerminalSpec::builtin(&spec.name, &spec.params)?)
}

fn missing(cfg: &ExperimentConfig, section: &str) -> RunError {
    RunError::Config(ConfigError::Schema(format!("`{}` experiments need a `{section}` section", cfg.experiment.tag())))
}

fn section<'a, T>(cfg: &ExperimentConfig, value: &'a Option<T>, name: &str) -> Result<&'a T, RunError> {
    value.as_ref().ok_or_else(|| missing(cfg, name))
}

fn grid(cfg: &ExperimentConfig) -> Result<TimeGrid, RunError> {
    Ok(TimeGrid::uniform(cfg.grid.horizon, cfg.grid.steps)?)
}

fn ensemble(cfg: &ExperimentConfig, grid: &TimeGrid) -> Result<BrownianEnsemble, RunError> {
    Ok(simulate_brownian(grid, cfg.ensemble.dim, cfg.ensemble.n_paths, cfg.ensemble.seed)?)
}

fn problem(cfg: &ExperimentConfig, grid: &TimeGrid) -> Result<BsdeProblem, RunError> {
    Ok(BsdeProblem::new(grid.clone(), generator(cfg, cfg.generator.as_ref())?, terminal(cfg, cfg.terminal.as_ref())?))
}

fn setup(cfg: &ExperimentConfig) -> SolverSetup {
    let s = cfg.solver();
    SolverSetup { scheme: s.scheme, basis: cfg.basis(), opts: s.options }
}

/// Run the experiment a resolved config describes, without touching disk.
/// Also returns the solution of a `solve` run.
pub fn execute(cfg: &ExperimentConfig) -> Result<(ExperimentReport, Option<SolutionEnsemble>), RunError> {
    let tol = cfg.tolerances();
    let mu = cfg.psi.mu;
    let report = match cfg.experiment {
        ExperimentKind::PsiCheck => psi_check(cfg)?,
        ExperimentKind::Solve => {
            let g = grid(cfg)?;
            let (p, ens) = (problem(cfg, &g)?, ensemble(cfg, &g)?);
            let s = setup(cfg);
            let sol = s.solve(&p, &ens)?;
            return Ok((solve_report(cfg, &ens, &s, &sol), Some(sol)));
        }
        ExperimentKind::Oracle => {
            let g = grid(cfg)?;
            oracle_experiment(&problem(cfg, &g)?, &ensemble(cfg, &g)?, &setup(cfg))?
        }
        ExperimentKind::Price => {
            let g = grid(cfg)?;
            let reference = cfg.price.as_ref().and_then(|p| p.reference);
            girsanov_experiment(&problem(cfg, &g)?, &ensemble(cfg, &g)?, &setup(cfg), mu, reference)?
        }
        ExperimentKind::Admissibility => admissibility(cfg)?,
        ExperimentKind::Uniqueness => {
            let u = section(cfg, &cfg.uniqueness, "uniqueness")?;
            let g = grid(cfg)?;
            let (p, ens) = (problem(cfg, &g)?, ensemble(cfg, &g)?);
            let opts = cfg.solver().options;
            let setups: Vec<SolverSetup> = u
                .bases
                .iter()
                .flat_map(|b| u.schemes.iter().map(move |s| SolverSetup { scheme: *s, basis: *b, opts }))
                .collect();
            if u.refine {
                uniqueness_refinement_experiment(&p, &ens, &setups, tol.unique)?
            } else {
                uniqueness_experiment(&p, &ens, &setups, tol.unique)?
            }
        }
        ExperimentKind::Comparison => {
            let c = section(cfg, &cfg.comparison, "comparison")?;
            let g = grid(cfg)?;
            let lower = problem(cfg, &g)?;
            let upper = BsdeProblem::new(
                g.clone(),
                generator(cfg, c.upper_generator.as_ref().or(cfg.generator.as_ref()))?,
                terminal(cfg, c.upper_terminal.as_ref().or(cfg.terminal.as_ref()))?,
            );
            comparison_experiment(&lower, &upper, &ensemble(cfg, &g)?, &setup(cfg), c.mode, tol.cmp, c.probe_delta)?
        }
        ExperimentKind::Stability => {
            let s = section(cfg, &cfg.stability, "stability")?;
            let g = grid(cfg)?;
            let seq = StabilitySequence {
                base: problem(cfg, &g)?,
                envelope: terminal(cfg, Some(&s.envelope))?,
                terminal_scale: s.terminal_scale,
                generator_rate: s.generator_rate,
                n_list: s.n_list.clone(),
                betas: s.betas.clone(),
                uniform: s.uniform,
            };
            stability_experiment(&seq, &ensemble(cfg, &g)?, &setup(cfg), mu, tol.stab)?
        }
        ExperimentKind::ClassD => {
            let c = section(cfg, &cfg.class_d, "class_d")?;
            let g = grid(cfg)?;
            let ens = ensemble(cfg, &g)?;
            let sol = if c.heavy_tail_self_test {
                heavy_tail_surrogate(ens.n_paths(), ens.steps(), ens.dim(), cfg.ensemble.seed)?
            } else {
                setup(cfg).solve(&problem(cfg, &g)?, &ens)?
            };
            let family = StoppingTimeFamily::standard(&g, &sol);
            class_d_diagnostic(&ens, &sol, &family, mu, &c.k_ladder, tol.eps_ui)?
        }
        ExperimentKind::Apriori => {
            let g = grid(cfg)?;
            let (p, ens) = (problem(cfg, &g)?, ensemble(cfg, &g)?);
            let s = setup(cfg);
            let sol = s.solve(&p, &ens)?;
            let mut r = apriori_bound_experiment(&p, &ens, &sol, &s.basis, mu)?;
            let frac = r.value("violation_fraction").unwrap_or(f64::NAN);
            r.verdicts.retain(|v| v.rule != "violation_fraction");
            r.push_verdict(
                "violation_fraction",
                frac <= tol.apriori_max_violation,
                format!("{frac:e} <= {:e}", tol.apriori_max_violation),
            );
            r
        }
    };
    Ok((report, None))
}

fn psi_check(cfg: &ExperimentConfig) -> Result<ExperimentReport, RunError> {
    let c = section(cfg, &cfg.psi_check, "psi_check")?;
    let mut r = ExperimentReport::new(
        "psi-check",
        vec![format!("samples={} seed={} tol={RESIDUAL_TOL:e}", c.samples, cfg.ensemble.seed)],
    );
    for res in inequality_suite(c.samples, cfg.ensemble.seed, RESIDUAL_TOL) {
        let name = format!("{:?}", res.inequality).to_lowercase();
        r.push_metric(format!("{name}.violations"), res.violations as f64);
        r.push_metric(format!("{name}.worst_margin"), res.worst_margin);
        r.push_verdict(
            format!("{name}_holds"),
            res.violations == 0,
            format!("{} of {} samples violate; worst at {:?}", res.violations, res.samples, res.worst_args),
        );
    }
    Ok(r)
}

fn admissibility(cfg: &ExperimentConfig) -> Result<ExperimentReport, RunError> {
    let a = section(cfg, &cfg.admissibility, "admissibility")?;
    let g = grid(cfg)?;
    let xi = terminal(cfg, cfg.terminal.as_ref())?;
    let b = match &cfg.generator {
        Some(_) => generator(cfg, cfg.generator.as_ref())?.require_b()?,
        None => 0.0,
    };
    let params = PsiParams::new(cfg.psi.mu, b, g.horizon())?;
    let threshold = cfg.tolerances().admissibility_threshold;
    let rep = admissibility_check(&xi, &params, &g, a.base_paths, cfg.ensemble.seed, threshold)?;
    let mut r = ExperimentReport::new(
        "admissibility",
        vec![format!(
            "xi={} mu={} b={b} T={} n={} seed={} threshold={threshold}",
            xi.name(),
            params.mu,
            g.horizon(),
            a.base_paths,
            cfg.ensemble.seed
        )],
    );
    r.push_metric("bound_rhs", rep.bound_rhs);
    for (n, est) in &rep.psi_moments {
        r.push_estimate(format!("psi_moment@{n}"), *est);
    }
    for (k, c) in rep.relative_changes.iter().enumerate() {
        r.push_metric(format!("relative_change_{k}"), *c);
    }
    if let Some(q) = rep.q_abs_xi {
        r.push_metric("q_abs_xi", q.value);
    }
    r.push_metric("ess", rep.ess);
    if let Some(bound) = rep.declared_bound {
        r.notes.push(format!("declared pathwise bound {bound}"));
    }
    r.push_verdict("admissible", rep.verdict == Verdict::Admissible, format!("{:?}", rep.verdict));
    Ok(r)
}

fn solve_report(cfg: &ExperimentConfig, ens: &BrownianEnsemble, setup: &SolverSetup, sol: &SolutionEnsemble) -> ExperimentReport {
    let mut inputs = vec![describe_ensemble(ens), setup.describe()];
    if let (Some(f), Some(x)) = (&cfg.generator, &cfg.terminal) {
        inputs.push(format!("generator {} {:?} terminal {} {:?}", f.name, f.params, x.name, x.params));
    }
    let mut r = ExperimentReport::new("solve", inputs);
    r.consume(sol);
    r.push_estimate("Y0", sol.y0());
    let m = &sol.meta;
    r.push_metric("iterations", m.iterations as f64);
    r.push_metric("inner_fallbacks", m.inner_fallbacks as f64);
    r.push_metric("clip_events", m.clip_events as f64);
    r.push_metric("max_condition", m.max_condition);
    let n = sol.n_paths() as f64;
    let rows = (0..=sol.steps())
        .map(|i| {
            let mean_y = sol.y_at(i).iter().sum::<f64>() / n;
            let mean_z = if i < sol.steps() { sol.z_at(i).iter().sum::<f64>() / n } else { f64::NAN };
            vec![i as f64, ens.grid().time(i), mean_y, mean_z]
        })
        .collect();
    r.series.push(Series {
        name: "node_means".into(),
        columns: vec!["node".into(), "t".into(), "mean_Y".into(), "mean_Z".into()],
        rows,
    });
    r.push_verdict("converged", m.converged, format!("{} sweeps", m.iterations));
    r
}

/// `path,node,Y,Z1..Zd`; `Z` is empty at the terminal node.
pub fn write_solution_csv(path: &Path, sol: &SolutionEnsemble) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["path".to_string(), "node".into(), "Y".into()];
    header.extend((1..=sol.dim()).map(|k| format!("Z{k}")));
    w.write_record(&header)?;
    for p in 0..sol.n_paths() {
        for i in 0..=sol.steps() {
            let mut rec = vec![p.to_string(), i.to_string(), format!("{:e}", sol.y(p, i))];
            if i < sol.steps() {
                rec.extend(sol.z(p, i).iter().map(|v| format!("{v:e}")));
            } else {
                rec.extend((0..sol.dim()).map(|_| String::new()));
            }
            w.write_record(&rec)?;
        }
    }
    w.flush()
}

/// `path,step,dim,increment`.
pub fn write_ensemble_csv(path: &Path, ens: &BrownianEnsemble) -> std::io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["path", "step", "dim", "increment"])?;
    for p in 0..ens.n_paths() {
        for i in 0..ens.steps() {
            for k in 0..ens.dim() {
                w.write_record([p.to_string(), i.to_string(), k.to_string(), format!("{:e}", ens.increment(p, i, k))])?;
            }
        }
    }
    w.flush()
}

/// Simulate the ensemble a config describes.
pub fn config_ensemble(cfg: &ExperimentConfig) -> Result<BrownianEnsemble, RunError> {
    ensemble(cfg, &grid(cfg)?)
}

/// Resolve, execute and write a report. Hypothesis violations produce an
/// aborted report on disk; other errors are returned.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let resolved = config::resolve(cfg);
    let hash = config::config_hash(&resolved);
    let out = resolved.output();
    match execute(&resolved) {
        Ok((exp, sol)) => {
            let rep = RunReport::from_experiment(resolved, hash, &exp);
            let path = report::write_all(&out.dir, &rep, Some(&exp))?;
            if let (true, Some(sol)) = (out.write_solution, sol) {
                write_solution_csv(&out.dir.join(format!("{}.solution.csv", rep.tag)), &sol)?;
            }
            Ok(RunSummary { report: rep, report_path: path, experiment: Some(exp) })
        }
        Err(e) if e.is_hypothesis_violation() => {
            let rep = RunReport::aborted(resolved, hash, e.to_string());
            let path = report::write_all(&out.dir, &rep, None)?;
            Ok(RunSummary { report: rep, report_path: path, experiment: None })
        }
        Err(e) => Err(e),
    }
}

impl Outcome {
    pub fn is_pass(&self) -> bool {
        *self == Outcome::Pass
    }
}
