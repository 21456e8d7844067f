//! Generators `f(t, y, z)` with their declared structural constants, the Osgood
//! moduli `ρ`, and the Girsanov kernel that removes the `z`-dependence.
//!
//! The constants a generator declares (`a`, `b`, `r`, `ρ`) are claims; the
//! checkers in [`crate::checks`] test them by sampling.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use libm::log;

use crate::brownian::dot;
use crate::{Error, Result};

pub type GeneratorFn = dyn Fn(f64, f64, &[f64]) -> f64 + Send + Sync;

/// Concave, nondecreasing modulus with `ρ(0) = 0`.
///
/// Both library members satisfy `∫_{0+} du/ρ(u) = +∞`:
/// - `Linear{k}`: `∫_0^ε du/(k·u) = ∞` (logarithmic divergence at 0).
/// - `Log{k}`: near 0, `∫ du/(k·u(1 − ln u)) = (1/k)·[−ln(1 − ln u)]`, which
///   diverges as `u → 0+`.
///
/// The divergence is an analytic fact about the formula and is not checked
/// numerically.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub enum OsgoodFunction {
    /// `ρ(u) = k·u`.
    Linear { k: f64 },
    /// `ρ(u) = k·u·(1 − ln u)` on `(0, 1]`, continued by its tangent at `u = 1`
    /// (which is flat, so `ρ = k` for `u ≥ 1`).
    Log { k: f64 },
}

impl OsgoodFunction {
    pub fn eval(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        match *self {
            OsgoodFunction::Linear { k } => k * u,
            OsgoodFunction::Log { k } => {
                if u >= 1.0 {
                    k
                } else {
                    k * u * (1.0 - log(u))
                }
            }
        }
    }

    /// A constant `l` with `ρ(u) ≤ l·(u + 1)`.
    pub fn linear_growth(&self) -> f64 {
        match *self {
            OsgoodFunction::Linear { k } | OsgoodFunction::Log { k } => k,
        }
    }

    pub fn divergence_certificate(&self) -> &'static str {
        match self {
            OsgoodFunction::Linear { .. } => "int_0^eps du/(k u) = (1/k) [ln u]_0^eps = +inf",
            OsgoodFunction::Log { .. } => "int_0^eps du/(k u (1 - ln u)) = (1/k) [-ln(1 - ln u)]_0^eps = +inf",
        }
    }

    pub fn describe(&self) -> String {
        match *self {
            OsgoodFunction::Linear { k } => format!("{k}*u"),
            OsgoodFunction::Log { k } => format!("{k}*u*(1-ln u) on (0,1], {k} beyond"),
        }
    }
}

/// `f(t, y, z) = a·y + b·z + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineForm {
    pub a: f64,
    pub b: Vec<f64>,
    pub c: f64,
}

#[derive(Clone)]
pub struct GeneratorSpec {
    name: String,
    dim: usize,
    eval: Arc<GeneratorFn>,
    zero_z: Vec<f64>,
    a: Option<f64>,
    b: Option<f64>,
    r: Option<f64>,
    rho: Option<OsgoodFunction>,
    z_coefficients: Option<Vec<f64>>,
    affine: Option<AffineForm>,
}

impl fmt::Debug for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneratorSpec")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("a", &self.a)
            .field("b", &self.b)
            .field("r", &self.r)
            .field("rho", &self.rho)
            .field("z_coefficients", &self.z_coefficients)
            .finish()
    }
}

fn unit(dim: usize, scale: f64) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[0] = scale;
    v
}

// Any positive modulus works for generators that are nonincreasing in y.
fn linear_modulus(slope: f64) -> OsgoodFunction {
    OsgoodFunction::Linear { k: if slope > 0.0 { slope } else { 1.0 } }
}

impl GeneratorSpec {
    /// A generator with no declared constants.
    pub fn custom<F>(name: impl Into<String>, dim: usize, f: F) -> Self
    where
        F: Fn(f64, f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        assert!(dim >= 1, "dimension must be positive");
        Self {
            name: name.into(),
            dim,
            eval: Arc::new(f),
            zero_z: vec![0.0; dim],
            a: None,
            b: None,
            r: None,
            rho: None,
            z_coefficients: None,
            affine: None,
        }
    }

    pub fn with_a(mut self, a: f64) -> Self {
        self.a = Some(a);
        self
    }

    pub fn with_b(mut self, b: f64) -> Self {
        self.b = Some(b);
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = Some(r);
        self
    }

    pub fn with_rho(mut self, rho: OsgoodFunction) -> Self {
        self.rho = Some(rho);
        self
    }

    /// Declare `f(t,y,z) − f(t,y,0) = coefficients·z`.
    pub fn with_z_coefficients(mut self, coefficients: Vec<f64>) -> Self {
        assert_eq!(coefficients.len(), self.dim);
        self.z_coefficients = Some(coefficients);
        self
    }

    /// `f ≡ 0`.
    pub fn zero(dim: usize) -> Self {
        Self::linear(dim, 0.0, 0.0, 0.0).named("zero")
    }

    /// `f = a·y + b·z₁ + c`.
    pub fn linear(dim: usize, a: f64, b: f64, c: f64) -> Self {
        let mut g = Self::custom("linear", dim, move |_, y, z| a * y + b * z[0] + c)
            .with_a(a.abs())
            .with_b(b.abs())
            .with_r(a.abs())
            .with_rho(linear_modulus(a))
            .with_z_coefficients(unit(dim, b));
        g.affine = Some(AffineForm { a, b: unit(dim, b), c });
        g
    }

    /// `f = −y³ + b·z₁`: monotone in `y`, not Lipschitz, no linear growth.
    pub fn cubic_decay(dim: usize, b: f64) -> Self {
        Self::custom("cubic_decay", dim, move |_, y, z| -y * y * y + b * z[0])
            .with_b(b.abs())
            .with_rho(OsgoodFunction::Linear { k: 1.0 })
            .with_z_coefficients(unit(dim, b))
    }

    /// `f = k·sign(y)·ρ_log(|y|)`: increasing in `y` with modulus of continuity
    /// `u(1 − ln u)` at the origin. One-sided Osgood with `ρ = 2k·ρ_log`.
    pub fn osgood_log(dim: usize, k: f64) -> Self {
        let base = OsgoodFunction::Log { k: 1.0 };
        Self::custom("osgood_log", dim, move |_, y, _| {
            let v = k * base.eval(y.abs());
            if y < 0.0 {
                -v
            } else {
                v
            }
        })
        .with_b(0.0)
        .with_rho(OsgoodFunction::Log { k: 2.0 * k.abs() })
        .with_z_coefficients(vec![0.0; dim])
    }

    /// `f = a·sin(y)`.
    pub fn sine(dim: usize, a: f64) -> Self {
        Self::custom("sine", dim, move |_, y, _| a * libm::sin(y))
            .with_a(a.abs())
            .with_b(0.0)
            .with_r(a.abs())
            .with_rho(linear_modulus(a.abs()))
            .with_z_coefficients(vec![0.0; dim])
    }

    /// `f + c`. Every declared constant carries over.
    pub fn shifted(&self, c: f64) -> Self {
        if c == 0.0 {
            return self.clone();
        }
        let inner = self.eval.clone();
        let mut g = self.clone();
        g.eval = Arc::new(move |t, y, z| inner(t, y, z) + c);
        g.name = format!("{}{:+}", self.name, c);
        if let Some(aff) = g.affine.as_mut() {
            aff.c += c;
        }
        g
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    #[inline]
    pub fn eval(&self, t: f64, y: f64, z: &[f64]) -> f64 {
        (self.eval)(t, y, z)
    }

    /// `f(t, y, 0)`.
    #[inline]
    pub fn eval_zero_z(&self, t: f64, y: f64) -> f64 {
        (self.eval)(t, y, &self.zero_z)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn a(&self) -> Option<f64> {
        self.a
    }

    pub fn b(&self) -> Option<f64> {
        self.b
    }

    pub fn r(&self) -> Option<f64> {
        self.r
    }

    pub fn rho(&self) -> Option<OsgoodFunction> {
        self.rho
    }

    pub fn z_coefficients(&self) -> Option<&[f64]> {
        self.z_coefficients.as_deref()
    }

    /// Present for generators of the form `a·y + b·z + c`.
    pub fn affine_form(&self) -> Option<&AffineForm> {
        self.affine.as_ref()
    }

    pub fn require_a(&self) -> Result<f64> {
        self.a.ok_or(Error::MissingConstant("a"))
    }

    pub fn require_b(&self) -> Result<f64> {
        self.b.ok_or(Error::MissingConstant("b"))
    }

    pub fn require_r(&self) -> Result<f64> {
        self.r.ok_or(Error::MissingConstant("r"))
    }

    pub fn require_rho(&self) -> Result<OsgoodFunction> {
        self.rho.ok_or(Error::MissingConstant("rho"))
    }

    /// Resolve a named built-in from a parameter map. Unknown or missing
    /// parameters are errors.
    pub fn builtin(name: &str, params: &BTreeMap<String, f64>, dim: usize) -> Result<Self> {
        let schema = GENERATOR_BUILTINS
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Domain(format!("unknown generator `{name}`")))?;
        let get = schema.resolver(params)?;
        Ok(match name {
            "zero" => Self::zero(dim),
            "linear" => Self::linear(dim, get("a"), get("b"), get("c")),
            "cubic_decay" => Self::cubic_decay(dim, get("b")),
            "osgood_log" => Self::osgood_log(dim, get("K")),
            "sine" => Self::sine(dim, get("a")),
            _ => unreachable!("schema table and constructor table disagree"),
        })
    }
}

/// Name and parameter list of a configurable built-in.
#[derive(Debug, Clone, Copy)]
pub struct BuiltinSchema {
    pub name: &'static str,
    pub params: &'static [&'static str],
    pub doc: &'static str,
}

impl BuiltinSchema {
    /// `name{p1,p2}`.
    pub fn signature(&self) -> String {
        format!("{}{{{}}}", self.name, self.params.join(","))
    }

    pub(crate) fn resolver<'a>(&self, params: &'a BTreeMap<String, f64>) -> Result<impl Fn(&str) -> f64 + 'a> {
        for key in params.keys() {
            if !self.params.contains(&key.as_str()) {
                return Err(Error::Domain(format!("`{}` has no parameter `{key}`", self.name)));
            }
        }
        for p in self.params {
            match params.get(*p) {
                Some(v) if v.is_finite() => {}
                Some(v) => return Err(Error::Domain(format!("`{}.{p}` must be finite, got {v}", self.name))),
                None => return Err(Error::Domain(format!("`{}` needs parameter `{p}`", self.name))),
            }
        }
        Ok(move |k: &str| params[&k.to_string()])
    }
}

pub const GENERATOR_BUILTINS: &[BuiltinSchema] = &[
    BuiltinSchema { name: "cubic_decay", params: &["b"], doc: "-y^3 + b*z1" },
    BuiltinSchema { name: "linear", params: &["a", "b", "c"], doc: "a*y + b*z1 + c" },
    BuiltinSchema { name: "osgood_log", params: &["K"], doc: "K*sign(y)*rho_log(|y|)" },
    BuiltinSchema { name: "sine", params: &["a"], doc: "a*sin(y)" },
    BuiltinSchema { name: "zero", params: &[], doc: "0" },
];

pub const OSGOOD_BUILTINS: &[BuiltinSchema] = &[
    BuiltinSchema { name: "linear_modulus", params: &["K"], doc: "K*u" },
    BuiltinSchema { name: "log_modulus", params: &["K"], doc: "K*u*(1 - ln u) on (0,1], K beyond" },
];

/// `1_{|z|≠0}·(f(t,y,z) − f(t,y,0))·z/|z|²`, written into `out`.
pub fn girsanov_kernel_into(f: &GeneratorSpec, t: f64, y: f64, z: &[f64], out: &mut [f64]) {
    let nz2 = dot(z, z);
    if nz2 == 0.0 {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    // A declared linear z-part gives the difference exactly, without cancelling large y-terms.
    let diff = match f.z_coefficients() {
        Some(b) => dot(b, z),
        None => f.eval(t, y, z) - f.eval_zero_z(t, y),
    };
    let coef = diff / nz2;
    for (o, zk) in out.iter_mut().zip(z) {
        *o = coef * zk;
    }
}

pub fn girsanov_kernel(f: &GeneratorSpec, t: f64, y: f64, z: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; z.len()];
    girsanov_kernel_into(f, t, y, z, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::brownian::norm;

    #[test]
    fn kernel_examples() {
        let f = GeneratorSpec::linear(1, 0.0, 0.7, 0.0);
        assert_eq!(girsanov_kernel(&f, 0.0, 1.0, &[0.0]), vec![0.0]);
        for z in [-3.0, -1e-3, 0.2, 5.0] {
            assert!((girsanov_kernel(&f, 0.3, 2.0, &[z])[0] - 0.7).abs() < 1e-12);
        }
        // d = 2, f = β (z·u) with a unit vector u, evaluated at z = u.
        let (beta, u) = (1.3, [0.6, 0.8]);
        let f2 = GeneratorSpec::custom("dir", 2, move |_, _, z| beta * (z[0] * u[0] + z[1] * u[1]));
        let g = girsanov_kernel(&f2, 0.0, 0.0, &u);
        assert!((g[0] - beta * u[0]).abs() < 1e-14 && (g[1] - beta * u[1]).abs() < 1e-14);
    }

    #[test]
    fn kernel_is_bounded_by_b_for_nonlinear_z() {
        let b = 0.8;
        let f = GeneratorSpec::custom("abs_z", 2, move |_, y, z| y + b * norm(z)).with_b(b);
        let mut rng = crate::rng::CounterRng::new(5, crate::rng::STREAM_SAMPLERS);
        for _ in 0..10_000 {
            let z = [rng.normal() * 3.0, rng.normal() * 3.0];
            let g = girsanov_kernel(&f, 0.0, rng.normal(), &z);
            assert!(norm(&g) <= b * (1.0 + 1e-12));
        }
    }

    #[test]
    fn affine_kernel_is_the_declared_coefficient() {
        let f = GeneratorSpec::cubic_decay(1, 0.5);
        let coef = f.z_coefficients().unwrap()[0];
        for &(y, z) in &[(0.3, 1.0), (-2.0, -0.01), (5.0, 40.0)] {
            assert!((girsanov_kernel(&f, 0.0, y, &[z])[0] - coef).abs() < 1e-9);
        }
    }

    #[test]
    fn osgood_moduli_shape() {
        let lg = OsgoodFunction::Log { k: 2.0 };
        assert_eq!(lg.eval(0.0), 0.0);
        assert_eq!(lg.eval(1.0), 2.0);
        assert_eq!(lg.eval(7.0), 2.0);
        assert!((lg.eval(0.5) - 2.0 * 0.5 * (1.0 + core::f64::consts::LN_2)).abs() < 1e-15);
        assert_eq!(OsgoodFunction::Linear { k: 3.0 }.eval(2.0), 6.0);
    }

    #[test]
    fn shifted_keeps_constants_and_moves_affine_offset() {
        let f = GeneratorSpec::linear(1, -1.0, 0.5, 0.0).shifted(0.25);
        assert_eq!(f.eval(0.0, 1.0, &[2.0]), -1.0 + 1.0 + 0.25);
        assert_eq!(f.affine_form().unwrap().c, 0.25);
        assert_eq!(f.b(), Some(0.5));
    }

    #[test]
    fn builtins_resolve_and_reject_bad_params() {
        let mut p = BTreeMap::new();
        p.insert("b".to_string(), 0.5);
        let f = GeneratorSpec::builtin("cubic_decay", &p, 1).unwrap();
        assert_eq!(f.eval(0.0, 2.0, &[1.0]), -7.5);
        p.insert("q".to_string(), 1.0);
        assert!(GeneratorSpec::builtin("cubic_decay", &p, 1).is_err());
        assert!(GeneratorSpec::builtin("linear", &BTreeMap::new(), 1).is_err());
        assert!(GeneratorSpec::builtin("nope", &BTreeMap::new(), 1).is_err());
        assert_eq!(GENERATOR_BUILTINS[1].signature(), "linear{a,b,c}");
    }
}
