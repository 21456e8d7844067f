//! Terminal values `ξ`, either functions of the terminal level `W_T` or general
//! functionals of a whole increment path.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use libm::{exp, fabs, sin};

use crate::brownian::BrownianEnsemble;
use crate::generator::BuiltinSchema;
use crate::{Error, Result};

pub type LevelFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
/// Receives the path's increments (`steps × dim`, step-major) and the grid step
/// lengths.
pub type PathFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
enum Kind {
    Level(Arc<LevelFn>),
    Path(Arc<PathFn>),
}

#[derive(Clone)]
pub struct TerminalSpec {
    name: String,
    kind: Kind,
    bound: Option<f64>,
}

impl fmt::Debug for TerminalSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            Kind::Level(_) => "level",
            Kind::Path(_) => "path",
        };
        f.debug_struct("TerminalSpec")
            .field("name", &self.name)
            .field("kind", &kind)
            .field("bound", &self.bound)
            .finish()
    }
}

impl TerminalSpec {
    /// `ξ = h(W_T)`.
    pub fn of_level<F>(name: impl Into<String>, h: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), kind: Kind::Level(Arc::new(h)), bound: None }
    }

    pub fn of_path<F>(name: impl Into<String>, h: F) -> Self
    where
        F: Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self { name: name.into(), kind: Kind::Path(Arc::new(h)), bound: None }
    }

    /// Declare `|ξ| ≤ bound` pathwise.
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn constant(c: f64) -> Self {
        Self::of_level(format!("constant({c})"), move |_| c).with_bound(fabs(c))
    }

    /// `ξ = W_T` (first component).
    pub fn level() -> Self {
        Self::of_level("level", |w| w[0])
    }

    pub fn bounded_sin(scale: f64) -> Self {
        Self::of_level(format!("bounded_sin({scale})"), move |w| scale * sin(w[0])).with_bound(fabs(scale))
    }

    pub fn abs_level() -> Self {
        Self::of_level("abs_WT", |w| fabs(w[0]))
    }

    pub fn abs_sin() -> Self {
        Self::of_level("abs_sin", |w| fabs(sin(w[0]))).with_bound(1.0)
    }

    /// `exp(min(W_T, κ))`.
    pub fn exp_clipped(kappa: f64) -> Self {
        Self::of_level(format!("exp_clipped({kappa})"), move |w| exp(w[0].min(kappa))).with_bound(exp(kappa))
    }

    /// `exp(W_T²)`: not integrable once `T ≥ 1/2`.
    pub fn exp_square() -> Self {
        Self::of_level("exp_square", |w| exp(w[0] * w[0]))
    }

    /// `max_{t_i} W_{t_i}` (first component): a genuinely path-dependent claim.
    pub fn running_max() -> Self {
        Self::of_path("running_max", |inc, dt| {
            let dim = inc.len() / dt.len();
            let mut level = 0.0f64;
            let mut best = 0.0f64;
            for step in 0..dt.len() {
                level += inc[step * dim];
                best = best.max(level);
            }
            best
        })
    }

    /// `ξ + c`.
    pub fn shifted(&self, c: f64) -> Self {
        self.plus_scaled(&Self::constant(1.0), c).named(format!("{}{:+}", self.name, c))
    }

    /// `ξ + s·η`, evaluated on the same path.
    pub fn plus_scaled(&self, other: &TerminalSpec, s: f64) -> Self {
        if s == 0.0 {
            return self.clone();
        }
        let bound = match (self.bound, other.bound) {
            (Some(a), Some(b)) => Some(a + fabs(s) * b),
            _ => None,
        };
        let name = format!("{}{:+}*{}", self.name, s, other.name);
        let kind = match (&self.kind, &other.kind) {
            (Kind::Level(f), Kind::Level(g)) => {
                let (f, g) = (f.clone(), g.clone());
                Kind::Level(Arc::new(move |w: &[f64]| f(w) + s * g(w)))
            }
            _ => {
                let (f, g) = (self.clone(), other.clone());
                Kind::Path(Arc::new(move |inc: &[f64], dt: &[f64]| {
                    f.eval_increments(inc, dt) + s * g.eval_increments(inc, dt)
                }))
            }
        };
        Self { name, kind, bound }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn is_level_function(&self) -> bool {
        matches!(self.kind, Kind::Level(_))
    }

    /// `h` for level functions, used by quadrature references.
    pub fn eval_level(&self, w: &[f64]) -> Option<f64> {
        match &self.kind {
            Kind::Level(h) => Some(h(w)),
            Kind::Path(_) => None,
        }
    }

    fn eval_increments(&self, inc: &[f64], dt: &[f64]) -> f64 {
        match &self.kind {
            Kind::Level(h) => {
                let dim = inc.len() / dt.len();
                let mut w = [0.0f64; 8];
                let mut heap;
                let level: &mut [f64] = if dim <= 8 {
                    &mut w[..dim]
                } else {
                    heap = alloc::vec![0.0; dim];
                    &mut heap[..]
                };
                for step in 0..dt.len() {
                    for k in 0..dim {
                        level[k] += inc[step * dim + k];
                    }
                }
                h(level)
            }
            Kind::Path(h) => h(inc, dt),
        }
    }

    /// `ξ` on one path of an ensemble.
    pub fn eval_path(&self, ens: &BrownianEnsemble, path: usize, dt: &[f64]) -> f64 {
        self.eval_increments(ens.path_increments(path), dt)
    }

    /// `ξ` on every path.
    pub fn evaluate(&self, ens: &BrownianEnsemble) -> Vec<f64> {
        let dt: Vec<f64> = (0..ens.steps()).map(|i| ens.grid().dt(i)).collect();
        match &self.kind {
            Kind::Level(h) => {
                let dim = ens.dim();
                let levels = ens.terminal_levels();
                levels.chunks(dim).map(|w| h(w)).collect()
            }
            Kind::Path(_) => (0..ens.n_paths()).map(|p| self.eval_path(ens, p, &dt)).collect(),
        }
    }

    pub fn builtin(name: &str, params: &BTreeMap<String, f64>) -> Result<Self> {
        let schema = TERMINAL_BUILTINS
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Domain(format!("unknown terminal `{name}`")))?;
        let get = schema.resolver(params)?;
        Ok(match name {
            "abs_WT" => Self::abs_level(),
            "abs_sin" => Self::abs_sin(),
            "bounded_sin" => Self::bounded_sin(get("scale")),
            "constant" => Self::constant(get("c")),
            "exp_clipped" => Self::exp_clipped(get("kappa")),
            "exp_square" => Self::exp_square(),
            "level" => Self::level(),
            "running_max" => Self::running_max(),
            _ => unreachable!("schema table and constructor table disagree"),
        })
    }
}

pub const TERMINAL_BUILTINS: &[BuiltinSchema] = &[
    BuiltinSchema { name: "abs_WT", params: &[], doc: "|W_T|" },
    BuiltinSchema { name: "abs_sin", params: &[], doc: "|sin(W_T)|" },
    BuiltinSchema { name: "bounded_sin", params: &["scale"], doc: "scale*sin(W_T)" },
    BuiltinSchema { name: "constant", params: &["c"], doc: "c" },
    BuiltinSchema { name: "exp_clipped", params: &["kappa"], doc: "exp(min(W_T, kappa))" },
    BuiltinSchema { name: "exp_square", params: &[], doc: "exp(W_T^2)" },
    BuiltinSchema { name: "level", params: &[], doc: "W_T" },
    BuiltinSchema { name: "running_max", params: &[], doc: "max_i W_{t_i}" },
];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::simulate_brownian;
    use crate::grid::TimeGrid;

    #[test]
    fn level_and_path_forms_agree() {
        let ens = simulate_brownian(&TimeGrid::uniform(1.0, 8).unwrap(), 1, 50, 3).unwrap();
        let xi = TerminalSpec::level().evaluate(&ens);
        let as_path = TerminalSpec::of_path("sum", |inc, _| inc.iter().sum()).evaluate(&ens);
        for (a, b) in xi.iter().zip(&as_path) {
            assert!((a - b).abs() < 1e-12);
        }
        let mixed = TerminalSpec::level().plus_scaled(&TerminalSpec::running_max(), 2.0).evaluate(&ens);
        let rm = TerminalSpec::running_max().evaluate(&ens);
        for i in 0..50 {
            assert!((mixed[i] - (xi[i] + 2.0 * rm[i])).abs() < 1e-12);
            assert!(rm[i] >= 0.0 && rm[i] >= xi[i] - 1e-12);
        }
    }

    #[test]
    fn bounds_hold_on_samples() {
        let ens = simulate_brownian(&TimeGrid::uniform(2.0, 4).unwrap(), 1, 2000, 9).unwrap();
        for spec in [TerminalSpec::bounded_sin(3.0), TerminalSpec::exp_clipped(0.5), TerminalSpec::abs_sin().shifted(0.5)] {
            let b = spec.bound().unwrap();
            assert!(spec.evaluate(&ens).iter().all(|v| v.abs() <= b), "{}", spec.name());
        }
    }

    #[test]
    fn builtins_resolve() {
        let mut p = BTreeMap::new();
        p.insert("kappa".into(), 2.0);
        let t = TerminalSpec::builtin("exp_clipped", &p).unwrap();
        assert_eq!(t.eval_level(&[5.0]), Some(exp(2.0)));
        assert!(TerminalSpec::builtin("exp_clipped", &BTreeMap::new()).is_err());
    }
}
