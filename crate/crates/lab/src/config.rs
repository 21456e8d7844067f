//! Experiment configuration: a JSON document validated against a closed
//! schema. Unknown keys are rejected, defaults are filled in by [`resolve`],
//! and the hash is taken over the canonical form of the resolved config.

use std::collections::BTreeMap;
use std::path::PathBuf;

use bsdelab_core::harness::{
    default_k_ladder, ComparisonMode, Tolerance, APRIORI_MAX_VIOLATION, EPS_UI, TOL_CMP, TOL_STAB, TOL_UNIQUE,
};
use bsdelab_core::measure::ADMISSIBILITY_THRESHOLD;
use bsdelab_core::regression::RegressionBasis;
use bsdelab_core::solver::{Scheme, SolverOptions};
use bsdelab_core::stats::digest_bytes;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config: {0}")]
    Schema(String),
    #[error("invalid override `{0}`: expected key.path=value")]
    Override(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PsiCheck,
    Solve,
    Oracle,
    Price,
    Admissibility,
    Uniqueness,
    Comparison,
    Stability,
    ClassD,
    Apriori,
}

impl ExperimentKind {
    pub fn tag(&self) -> &'static str {
        match self {
            ExperimentKind::PsiCheck => "psi-check",
            ExperimentKind::Solve => "solve",
            ExperimentKind::Oracle => "oracle",
            ExperimentKind::Price => "price",
            ExperimentKind::Admissibility => "admissibility",
            ExperimentKind::Uniqueness => "uniqueness",
            ExperimentKind::Comparison => "comparison",
            ExperimentKind::Stability => "stability",
            ExperimentKind::ClassD => "class-d",
            ExperimentKind::Apriori => "apriori",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n_paths: usize,
    #[serde(default = "one")]
    pub dim: usize,
    pub seed: u64,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiConfig {
    pub mu: f64,
}

/// A built-in generator or terminal value by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecRef {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default)]
    pub options: SolverOptions,
}

fn default_scheme() -> Scheme {
    Scheme::BackwardEuler
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { scheme: default_scheme(), options: SolverOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceConfig {
    #[serde(default = "tol_unique")]
    pub unique: Tolerance,
    #[serde(default = "tol_cmp")]
    pub cmp: Tolerance,
    #[serde(default = "tol_stab")]
    pub stab: f64,
    #[serde(default = "eps_ui")]
    pub eps_ui: f64,
    #[serde(default = "apriori_max")]
    pub apriori_max_violation: f64,
    #[serde(default = "admissibility_threshold")]
    pub admissibility_threshold: f64,
}

fn tol_unique() -> Tolerance {
    TOL_UNIQUE
}
fn tol_cmp() -> Tolerance {
    TOL_CMP
}
fn tol_stab() -> f64 {
    TOL_STAB
}
fn eps_ui() -> f64 {
    EPS_UI
}
fn apriori_max() -> f64 {
    APRIORI_MAX_VIOLATION
}
fn admissibility_threshold() -> f64 {
    ADMISSIBILITY_THRESHOLD
}

impl Default for ToleranceConfig {
    fn default() -> Self {
        Self {
            unique: tol_unique(),
            cmp: tol_cmp(),
            stab: tol_stab(),
            eps_ui: eps_ui(),
            apriori_max_violation: apriori_max(),
            admissibility_threshold: admissibility_threshold(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out")]
    pub dir: PathBuf,
    /// Also write the solution `(Y, Z)` of a `solve` run as CSV.
    #[serde(default)]
    pub write_solution: bool,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_out(), write_solution: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiCheckConfig {
    #[serde(default = "psi_samples")]
    pub samples: usize,
}

fn psi_samples() -> usize {
    100_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriceConfig {
    /// Expected `Y_0`, held to the same tolerance as the price.
    #[serde(default)]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdmissibilityConfig {
    /// Smallest of the nested sample sizes `n`, `2n`, `4n`.
    pub base_paths: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    /// Bases to cross with every scheme.
    pub bases: Vec<RegressionBasis>,
    pub schemes: Vec<Scheme>,
    /// Also run on the Brownian-bridge refinement and require `U` to shrink.
    #[serde(default)]
    pub refine: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComparisonConfig {
    /// The upper problem; missing parts copy the main problem.
    #[serde(default)]
    pub upper_generator: Option<SpecRef>,
    #[serde(default)]
    pub upper_terminal: Option<SpecRef>,
    #[serde(default = "comparison_mode")]
    pub mode: ComparisonMode,
    #[serde(default = "probe_delta")]
    pub probe_delta: f64,
}

fn comparison_mode() -> ComparisonMode {
    ComparisonMode::Osgood
}
fn probe_delta() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub envelope: SpecRef,
    pub terminal_scale: f64,
    pub generator_rate: f64,
    pub n_list: Vec<usize>,
    pub betas: Vec<f64>,
    #[serde(default)]
    pub uniform: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassDConfig {
    #[serde(default = "default_k_ladder")]
    pub k_ladder: Vec<f64>,
    /// Replace the solution by the heavy-tailed surrogate (self-test).
    #[serde(default)]
    pub heavy_tail_self_test: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub grid: GridConfig,
    pub ensemble: EnsembleConfig,
    pub psi: PsiConfig,
    #[serde(default)]
    pub generator: Option<SpecRef>,
    #[serde(default)]
    pub terminal: Option<SpecRef>,
    #[serde(default)]
    pub basis: Option<RegressionBasis>,
    #[serde(default)]
    pub solver: Option<SolverConfig>,
    #[serde(default)]
    pub tolerances: Option<ToleranceConfig>,
    #[serde(default)]
    pub output: Option<OutputConfig>,
    #[serde(default)]
    pub psi_check: Option<PsiCheckConfig>,
    #[serde(default)]
    pub price: Option<PriceConfig>,
    #[serde(default)]
    pub admissibility: Option<AdmissibilityConfig>,
    #[serde(default)]
    pub uniqueness: Option<UniquenessConfig>,
    #[serde(default)]
    pub comparison: Option<ComparisonConfig>,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default)]
    pub class_d: Option<ClassDConfig>,
}

impl ExperimentConfig {
    pub fn tolerances(&self) -> ToleranceConfig {
        self.tolerances.clone().unwrap_or_default()
    }

    pub fn basis(&self) -> RegressionBasis {
        self.basis.unwrap_or_default()
    }

    pub fn solver(&self) -> SolverConfig {
        self.solver.clone().unwrap_or_default()
    }

    pub fn output(&self) -> OutputConfig {
        self.output.clone().unwrap_or_default()
    }
}

/// Parse a config document; errors carry serde's line and column.
pub fn parse(text: &str) -> Result<ExperimentConfig, ConfigError> {
    serde_json::from_str(text).map_err(|e| ConfigError::Schema(e.to_string()))
}

pub fn load(path: &std::path::Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
    parse(&text).map_err(|e| match e {
        ConfigError::Schema(msg) => ConfigError::Schema(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Apply `key.path=value` overrides; the value is read as JSON when possible
/// and as a string otherwise. The result is validated again.
pub fn apply_overrides(cfg: &ExperimentConfig, overrides: &[String]) -> Result<ExperimentConfig, ConfigError> {
    if overrides.is_empty() {
        return Ok(cfg.clone());
    }
    let mut doc = serde_json::to_value(cfg).map_err(|e| ConfigError::Schema(e.to_string()))?;
    for item in overrides {
        let (key, raw) = item.split_once('=').ok_or_else(|| ConfigError::Override(item.clone()))?;
        if key.is_empty() {
            return Err(ConfigError::Override(item.clone()));
        }
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut doc;
        for part in key.split('.') {
            if slot.is_null() {
                *slot = Value::Object(Default::default());
            }
            let obj = slot
                .as_object_mut()
                .ok_or_else(|| ConfigError::Schema(format!("override `{key}`: `{part}` is not inside an object")))?;
            slot = obj.entry(part.to_string()).or_insert(Value::Null);
        }
        *slot = value;
    }
    serde_json::from_value(doc).map_err(|e| ConfigError::Schema(format!("after overrides: {e}")))
}

/// Fill every default explicitly so the report shows the full configuration.
pub fn resolve(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut r = cfg.clone();
    r.basis = Some(cfg.basis());
    r.solver = Some(cfg.solver());
    r.tolerances = Some(cfg.tolerances());
    r.output = Some(cfg.output());
    match r.experiment {
        ExperimentKind::PsiCheck => {
            r.psi_check.get_or_insert(PsiCheckConfig { samples: psi_samples() });
        }
        ExperimentKind::Price => {
            r.price.get_or_insert(PriceConfig { reference: None });
        }
        ExperimentKind::Admissibility => {
            let n = (cfg.ensemble.n_paths / 4).max(1);
            r.admissibility.get_or_insert(AdmissibilityConfig { base_paths: n });
        }
        ExperimentKind::Comparison => {
            let c = r.comparison.get_or_insert(ComparisonConfig {
                upper_generator: None,
                upper_terminal: None,
                mode: comparison_mode(),
                probe_delta: probe_delta(),
            });
            if c.upper_generator.is_none() {
                c.upper_generator = cfg.generator.clone();
            }
            if c.upper_terminal.is_none() {
                c.upper_terminal = cfg.terminal.clone();
            }
        }
        ExperimentKind::ClassD => {
            r.class_d.get_or_insert(ClassDConfig { k_ladder: default_k_ladder(), heavy_tail_self_test: false });
        }
        _ => {}
    }
    r
}

/// Canonical JSON: object keys sorted, no whitespace.
pub fn canonical_json(cfg: &ExperimentConfig) -> String {
    // serde_json's default map is ordered by key, so a round trip through
    // `Value` sorts every object.
    let v = serde_json::to_value(cfg).expect("configs always serialize");
    serde_json::to_string(&v).expect("values always serialize")
}

/// SHA-256 of the canonical resolved config, in hex.
///
/// The output directory is left out: where a report lands does not change
/// what was computed.
pub fn config_hash(resolved: &ExperimentConfig) -> String {
    let mut c = resolved.clone();
    if let Some(o) = c.output.as_mut() {
        o.dir = default_out();
    }
    digest_bytes(canonical_json(&c).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_output_dir_only() {
        let base = resolve(&parse(MINIMAL).unwrap());
        let moved = apply_overrides(&base, &["output.dir=\"elsewhere\"".into()]).unwrap();
        assert_eq!(config_hash(&base), config_hash(&moved));
        let reseeded = apply_overrides(&base, &["ensemble.seed=2".into()]).unwrap();
        assert_ne!(config_hash(&base), config_hash(&reseeded));
    }

    const MINIMAL: &str = r#"{
        "experiment": "solve",
        "grid": {"horizon": 1.0, "steps": 10},
        "ensemble": {"n_paths": 100, "seed": 1},
        "psi": {"mu": 1.0},
        "generator": {"name": "linear", "params": {"a": 0.0, "b": 0.5, "c": 0.0}},
        "terminal": {"name": "level"}
    }"#;

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = MINIMAL.replace("\"seed\": 1", "\"seed\": 1, \"sede\": 2");
        let err = parse(&bad).unwrap_err().to_string();
        assert!(err.contains("sede") && err.contains("line 4"), "{err}");
        let bad = MINIMAL.replace("\"steps\": 10", "\"steps\": 10, \"dt\": 0.1");
        assert!(parse(&bad).is_err());
    }

    #[test]
    fn nested_core_types_are_closed_too() {
        let bad = MINIMAL.replace("\"psi\"", "\"basis\": {\"degre\": 3}, \"psi\"");
        assert!(parse(&bad).unwrap_err().to_string().contains("degre"));
    }

    #[test]
    fn hash_ignores_formatting_and_tracks_content() {
        let a = resolve(&parse(MINIMAL).unwrap());
        let compact: String = MINIMAL.split_whitespace().collect();
        let b = resolve(&parse(&compact).unwrap());
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = resolve(&apply_overrides(&parse(MINIMAL).unwrap(), &["ensemble.seed=2".into()]).unwrap());
        assert_ne!(config_hash(&a), config_hash(&c));
    }

    #[test]
    fn overrides_reach_nested_keys() {
        let cfg = parse(MINIMAL).unwrap();
        let o = apply_overrides(&cfg, &["basis.degree=5".into(), "generator.params.b=0.25".into()]).unwrap();
        assert_eq!(o.basis().degree, 5);
        assert_eq!(o.generator.unwrap().params["b"], 0.25);
        assert!(apply_overrides(&cfg, &["grid.dt=0.1".into()]).is_err());
        assert!(apply_overrides(&cfg, &["nonsense".into()]).is_err());
    }

    #[test]
    fn resolution_is_explicit() {
        let r = resolve(&parse(MINIMAL).unwrap());
        let json = canonical_json(&r);
        for key in ["\"basis\"", "\"solver\"", "\"tolerances\"", "\"ridge\"", "\"control_variate\""] {
            assert!(json.contains(key), "{key} missing from {json}");
        }
        assert_eq!(resolve(&r), r);
    }
}
