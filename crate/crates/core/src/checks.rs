//! Sampling checkers for the structural assumptions a generator declares.
//!
//! Every assumption quantifies over all of `ℝ × ℝ^d`; a checker samples a box,
//! a cloud of near-origin pairs with log-scale separations, and heavy-tailed
//! points, and reports the samples where the declared inequality fails.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use libm::{fabs, pow, tan};

use crate::brownian::norm;
use crate::generator::{GeneratorSpec, OsgoodFunction};
use crate::rng::{CounterRng, STREAM_SAMPLERS};
use crate::Result;

/// Slack relative to the magnitudes involved.
pub const CHECK_TOL: f64 = 1e-9;
/// Violations kept verbatim in a report.
pub const MAX_LISTED: usize = 16;

const HEAVY_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SamplerConfig {
    pub t_max: f64,
    pub y_box: f64,
    pub z_box: f64,
    /// Share of pairs placed near the origin with separations `10^{-u}`.
    pub near_fraction: f64,
    /// Share of Cauchy-distributed points.
    pub heavy_fraction: f64,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { t_max: 1.0, y_box: 10.0, z_box: 10.0, near_fraction: 0.25, heavy_fraction: 0.1, seed: 20_240_601 }
    }
}

/// A pair of points `(t, y, z)`, `(t, y′, z′)` sharing `t`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SamplePair {
    pub t: f64,
    pub y: f64,
    pub y2: f64,
    pub z: Vec<f64>,
    pub z2: Vec<f64>,
}

struct Sampler {
    cfg: SamplerConfig,
    dim: usize,
    rng: CounterRng,
}

impl Sampler {
    fn new(cfg: SamplerConfig, dim: usize, salt: u32) -> Self {
        Self { cfg, dim, rng: CounterRng::new(cfg.seed, STREAM_SAMPLERS + 16 + salt) }
    }

    fn cauchy(&mut self, scale: f64) -> f64 {
        let v = scale * tan(core::f64::consts::PI * (self.rng.uniform() - 0.5));
        v.clamp(-HEAVY_CAP, HEAVY_CAP)
    }

    fn next(&mut self) -> SamplePair {
        let c = self.cfg;
        let t = self.rng.uniform_in(0.0, c.t_max);
        let kind = self.rng.uniform();
        let (y, y2, zs): (f64, f64, f64) = if kind < c.near_fraction {
            let y = self.rng.sign() * pow(10.0, self.rng.uniform_in(-12.0, 0.0));
            let sep = self.rng.sign() * pow(10.0, self.rng.uniform_in(-12.0, 0.0));
            (y, y + sep, 1e-3)
        } else if kind < c.near_fraction + c.heavy_fraction {
            (self.cauchy(c.y_box), self.cauchy(c.y_box), c.z_box * 100.0)
        } else {
            (self.rng.uniform_in(-c.y_box, c.y_box), self.rng.uniform_in(-c.y_box, c.y_box), c.z_box)
        };
        let heavy = zs > c.z_box;
        let mut z = vec![0.0; self.dim];
        let mut z2 = vec![0.0; self.dim];
        for k in 0..self.dim {
            if heavy {
                z[k] = self.cauchy(c.z_box);
                z2[k] = self.cauchy(c.z_box);
            } else {
                z[k] = self.rng.uniform_in(-zs.max(c.z_box * 1e-3), zs.max(c.z_box * 1e-3));
                z2[k] = z[k] + self.rng.uniform_in(-zs, zs);
            }
        }
        // A share of exact zeros exercises the indicator conventions.
        if self.rng.uniform() < 0.02 {
            z.iter_mut().for_each(|v| *v = 0.0);
        }
        SamplePair { t, y, y2, z, z2 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Violation {
    pub sample: SamplePair,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ViolationReport {
    pub assumption: String,
    pub samples: usize,
    pub skipped_ties: usize,
    pub violation_count: usize,
    /// Largest `lhs − rhs` seen, negative when everything passed.
    pub max_excess: f64,
    pub violations: Vec<Violation>,
    pub sampler: SamplerConfig,
}

impl ViolationReport {
    fn new(assumption: String, sampler: SamplerConfig) -> Self {
        Self {
            assumption,
            samples: 0,
            skipped_ties: 0,
            violation_count: 0,
            max_excess: f64::NEG_INFINITY,
            violations: Vec::new(),
            sampler,
        }
    }

    pub fn passed(&self) -> bool {
        self.violation_count == 0
    }

    fn record(&mut self, sample: &SamplePair, lhs: f64, rhs: f64, scale: f64) {
        self.samples += 1;
        let excess = lhs - rhs;
        if excess > self.max_excess || excess.is_nan() {
            self.max_excess = excess;
        }
        if !(excess <= CHECK_TOL * (1.0 + scale)) {
            self.violation_count += 1;
            if self.violations.len() < MAX_LISTED {
                self.violations.push(Violation { sample: sample.clone(), lhs, rhs });
            }
        }
    }
}

fn run<F>(name: String, f: &GeneratorSpec, cfg: SamplerConfig, n: usize, salt: u32, mut body: F) -> ViolationReport
where
    F: FnMut(&mut ViolationReport, &SamplePair),
{
    let mut sampler = Sampler::new(cfg, f.dim(), salt);
    let mut report = ViolationReport::new(name, cfg);
    for _ in 0..n {
        let s = sampler.next();
        body(&mut report, &s);
    }
    report
}

/// One-sided Osgood: `sign(y − y′)·(f(t,y,z) − f(t,y′,z)) ≤ ρ(|y − y′|)`.
/// Exact ties are skipped, since the left side is 0 there by convention.
pub fn check_osgood_a1(f: &GeneratorSpec, cfg: SamplerConfig, n: usize) -> Result<ViolationReport> {
    let rho = f.require_rho()?;
    Ok(run(format!("A1 rho={}", rho.describe()), f, cfg, n, 1, |rep, s| {
        let d = s.y - s.y2;
        if d == 0.0 {
            rep.skipped_ties += 1;
            return;
        }
        let f1 = f.eval(s.t, s.y, &s.z);
        let f2 = f.eval(s.t, s.y2, &s.z);
        let lhs = if d > 0.0 { f1 - f2 } else { f2 - f1 };
        let rhs = rho.eval(fabs(d));
        rep.record(s, lhs, rhs, fabs(rhs) + fabs(f1) + fabs(f2));
    }))
}

/// `|f(t,y,z) − f(t,y,z′)| ≤ b·|z − z′|`.
pub fn check_lipschitz_z_a2(f: &GeneratorSpec, cfg: SamplerConfig, n: usize) -> Result<ViolationReport> {
    let b = f.require_b()?;
    let mut dz = vec![0.0; f.dim()];
    Ok(run(format!("A2 b={b}"), f, cfg, n, 2, |rep, s| {
        let f1 = f.eval(s.t, s.y, &s.z);
        let f2 = f.eval(s.t, s.y, &s.z2);
        for k in 0..dz.len() {
            dz[k] = s.z[k] - s.z2[k];
        }
        let rhs = b * norm(&dz);
        rep.record(s, fabs(f1 - f2), rhs, rhs + fabs(f1) + fabs(f2));
    }))
}

/// `|f(t,y,z) − f(t,0,z)| ≤ a·|y|`.
pub fn check_linear_growth_a4(f: &GeneratorSpec, cfg: SamplerConfig, n: usize) -> Result<ViolationReport> {
    let a = f.require_a()?;
    Ok(run(format!("A4 a={a}"), f, cfg, n, 4, |rep, s| {
        let f1 = f.eval(s.t, s.y, &s.z);
        let f0 = f.eval(s.t, 0.0, &s.z);
        let rhs = a * fabs(s.y);
        rep.record(s, fabs(f1 - f0), rhs, rhs + fabs(f1) + fabs(f0));
    }))
}

/// `|f(t,y,z) − f(t,y′,z)| ≤ r·|y − y′|`.
pub fn check_lipschitz_y_a5(f: &GeneratorSpec, cfg: SamplerConfig, n: usize) -> Result<ViolationReport> {
    let r = f.require_r()?;
    Ok(run(format!("A5 r={r}"), f, cfg, n, 5, |rep, s| {
        let f1 = f.eval(s.t, s.y, &s.z);
        let f2 = f.eval(s.t, s.y2, &s.z);
        let rhs = r * fabs(s.y - s.y2);
        rep.record(s, fabs(f1 - f2), rhs, rhs + fabs(f1) + fabs(f2));
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ModulusRow {
    pub delta: f64,
    /// `max |f(t,y+h,z) − f(t,y,z)|` over samples with `|h| ≤ δ`.
    pub modulus: f64,
}

/// Empirical modulus of continuity in `y` on a shrinking `δ` ladder.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ModulusTable {
    pub rows: Vec<ModulusRow>,
    pub samples_per_delta: usize,
    pub sampler: SamplerConfig,
}

impl ModulusTable {
    /// Moduli nonincreasing down the ladder and the last below `eps`.
    pub fn looks_continuous(&self, eps: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].modulus <= w[0].modulus * (1.0 + 1e-12))
            && self.rows.last().map_or(true, |r| r.modulus < eps)
    }
}

pub fn check_continuity_a3(f: &GeneratorSpec, cfg: SamplerConfig, n: usize, ladder: &[f64]) -> ModulusTable {
    // Base points are shared across the ladder so rows are comparable.
    let mut sampler = Sampler::new(cfg, f.dim(), 3);
    let points: Vec<(SamplePair, f64)> = (0..n)
        .map(|_| {
            let s = sampler.next();
            let u = sampler.rng.uniform_in(-1.0, 1.0);
            (s, u)
        })
        .collect();
    let rows = ladder
        .iter()
        .map(|&delta| {
            let modulus = points.iter().fold(0.0f64, |m, (s, u)| {
                let base = s.y.clamp(-cfg.y_box, cfg.y_box);
                let diff = fabs(f.eval(s.t, base + u * delta, &s.z) - f.eval(s.t, base, &s.z));
                m.max(diff)
            });
            ModulusRow { delta, modulus }
        })
        .collect();
    ModulusTable { rows, samples_per_delta: n, sampler: cfg }
}

/// Sampled shape checks for a modulus: `ρ(0) = 0`, monotone, midpoint-concave,
/// and `ρ(u) ≤ l·(u + 1)`.
pub fn check_osgood_function(rho: &OsgoodFunction, n: usize, seed: u64) -> ViolationReport {
    let cfg = SamplerConfig { seed, ..SamplerConfig::default() };
    let mut rep = ViolationReport::new(format!("rho={}", rho.describe()), cfg);
    let mut rng = CounterRng::new(seed, STREAM_SAMPLERS + 15);
    let l = rho.linear_growth();
    let zero = SamplePair { t: 0.0, y: 0.0, y2: 0.0, z: Vec::new(), z2: Vec::new() };
    rep.record(&zero, fabs(rho.eval(0.0)), 0.0, 0.0);
    for _ in 0..n {
        let u = pow(10.0, rng.uniform_in(-8.0, 3.0));
        let v = pow(10.0, rng.uniform_in(-8.0, 3.0));
        let (lo, hi) = if u < v { (u, v) } else { (v, u) };
        let s = SamplePair { t: 0.0, y: lo, y2: hi, z: Vec::new(), z2: Vec::new() };
        let (rl, rh, rm) = (rho.eval(lo), rho.eval(hi), rho.eval(0.5 * (lo + hi)));
        rep.record(&s, rl, rh, rh);
        rep.record(&s, 0.5 * (rl + rh), rm, rm);
        rep.record(&s, rh, l * (hi + 1.0), rh);
    }
    rep
}
