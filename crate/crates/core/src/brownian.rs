//! Brownian ensembles on a time grid, predictable processes, left-endpoint Itô
//! sums and stochastic exponentials.
//!
//! Increments are stored path-major, `ΔW[path][step][dim]`; levels are derived
//! on demand. Every increment is a pure function of
//! `(seed, path, step, dim, stream)`, so regeneration is bit-identical and
//! independent of how paths are partitioned.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, sqrt};

use crate::grid::TimeGrid;
use crate::rng::{normal_at, STREAM_BRIDGE, STREAM_INCREMENTS};
use crate::{Error, Result};

/// Default cap on the number of stored increments (512 MiB of `f64`).
pub const DEFAULT_VALUE_BUDGET: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianEnsemble {
    grid: TimeGrid,
    dim: usize,
    n_paths: usize,
    seed: u64,
    refinements: u32,
    increments: Vec<f64>,
}

/// Runs `f(chunk_index, chunk)` over consecutive chunks of `data`, in parallel
/// when the `parallel` feature is on.
pub(crate) fn for_each_chunk<F>(data: &mut [f64], chunk: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Send + Sync,
{
    if chunk == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, c) in data.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}

fn check_budget(requested: usize, budget: usize) -> Result<()> {
    if requested > budget {
        Err(Error::ResourceLimit { requested, budget })
    } else {
        Ok(())
    }
}

/// Seeded Gaussian increments with variance `Δt_i` on every step.
pub fn simulate_brownian(grid: &TimeGrid, dim: usize, n_paths: usize, seed: u64) -> Result<BrownianEnsemble> {
    BrownianEnsemble::simulate_with_budget(grid, dim, n_paths, seed, DEFAULT_VALUE_BUDGET)
}

impl BrownianEnsemble {
    pub fn simulate_with_budget(
        grid: &TimeGrid,
        dim: usize,
        n_paths: usize,
        seed: u64,
        budget: usize,
    ) -> Result<Self> {
        if n_paths == 0 || dim == 0 {
            return Err(Error::Domain(format!("need n_paths >= 1 and d >= 1, got {n_paths} and {dim}")));
        }
        if n_paths > u32::MAX as usize || grid.steps() > u32::MAX as usize {
            return Err(Error::Domain("path and step indices must fit in 32 bits".into()));
        }
        let m = grid.steps();
        let requested = n_paths.saturating_mul(m).saturating_mul(dim);
        check_budget(requested, budget)?;
        let sd: Vec<f64> = (0..m).map(|i| sqrt(grid.dt(i))).collect();
        let mut increments = vec![0.0; requested];
        for_each_chunk(&mut increments, m * dim, |p, chunk| {
            for i in 0..m {
                for k in 0..dim {
                    chunk[i * dim + k] = sd[i] * normal_at(seed, p as u32, i as u32, k as u32, STREAM_INCREMENTS);
                }
            }
        });
        Ok(Self { grid: grid.clone(), dim, n_paths, seed, refinements: 0, increments })
    }

    /// Halve every step by a Brownian-bridge split of each increment. The new
    /// midpoint noise comes from a dedicated stream, so `W` at the old nodes is
    /// unchanged up to rounding.
    pub fn refine(&self) -> Result<Self> {
        let m = self.steps();
        let d = self.dim;
        let grid = self.grid.refine();
        check_budget(self.increments.len() * 2, DEFAULT_VALUE_BUDGET)?;
        let stream = STREAM_BRIDGE + self.refinements;
        let seed = self.seed;
        let old = &self.increments;
        let half_sd: Vec<f64> = (0..m).map(|i| 0.5 * sqrt(self.grid.dt(i))).collect();
        let mut increments = vec![0.0; old.len() * 2];
        for_each_chunk(&mut increments, 2 * m * d, |p, chunk| {
            for i in 0..m {
                for k in 0..d {
                    let dw = old[(p * m + i) * d + k];
                    let xi = normal_at(seed, p as u32, i as u32, k as u32, stream);
                    let first = 0.5 * dw + half_sd[i] * xi;
                    chunk[(2 * i) * d + k] = first;
                    chunk[(2 * i + 1) * d + k] = dw - first;
                }
            }
        });
        Ok(Self {
            grid,
            dim: d,
            n_paths: self.n_paths,
            seed,
            refinements: self.refinements + 1,
            increments,
        })
    }

    /// An ensemble with the same layout and explicitly given increments.
    pub(crate) fn with_increments(&self, increments: Vec<f64>) -> Self {
        debug_assert_eq!(increments.len(), self.increments.len());
        Self { increments, ..self.clone() }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn steps(&self) -> usize {
        self.grid.steps()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn refinements(&self) -> u32 {
        self.refinements
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    #[inline]
    pub fn increment(&self, path: usize, step: usize, k: usize) -> f64 {
        self.increments[(path * self.steps() + step) * self.dim + k]
    }

    /// `ΔW_i` for one path and step, length `d`.
    #[inline]
    pub fn step_increment(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * self.steps() + step) * self.dim;
        &self.increments[base..base + self.dim]
    }

    /// All increments of one path, `M·d` values.
    pub fn path_increments(&self, path: usize) -> &[f64] {
        let len = self.steps() * self.dim;
        &self.increments[path * len..(path + 1) * len]
    }

    /// `W_T` per path, `n·d` values.
    pub fn terminal_levels(&self) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; self.n_paths * d];
        for p in 0..self.n_paths {
            let inc = self.path_increments(p);
            for i in 0..self.steps() {
                for k in 0..d {
                    out[p * d + k] += inc[i * d + k];
                }
            }
        }
        out
    }

    /// Levels `W_{t_i}` for every node.
    pub fn levels(&self) -> Levels {
        let (n, m, d) = (self.n_paths, self.steps(), self.dim);
        let mut data = vec![0.0; n * (m + 1) * d];
        for p in 0..n {
            let inc = self.path_increments(p);
            for i in 0..m {
                for k in 0..d {
                    data[((i + 1) * n + p) * d + k] = data[(i * n + p) * d + k] + inc[i * d + k];
                }
            }
        }
        Levels { n_paths: n, nodes: m + 1, dim: d, data }
    }

    /// Digest of the generating inputs and the increments.
    pub fn digest(&self) -> alloc::string::String {
        let head = [self.seed as f64, self.n_paths as f64, self.dim as f64, self.refinements as f64];
        crate::stats::digest_f64s([&head[..], self.grid.nodes(), &self.increments[..]])
    }
}

/// Brownian levels stored node-major: `W[node][path][dim]`.
#[derive(Debug, Clone)]
pub struct Levels {
    n_paths: usize,
    nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl Levels {
    /// Levels of every path at `node`, `n·d` values.
    #[inline]
    pub fn at_node(&self, node: usize) -> &[f64] {
        let len = self.n_paths * self.dim;
        &self.data[node * len..(node + 1) * len]
    }

    #[inline]
    pub fn level(&self, path: usize, node: usize, k: usize) -> f64 {
        self.data[(node * self.n_paths + path) * self.dim + k]
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// What a predictable process may look at when choosing its value on step `i`:
/// the increments of steps `< i` only.
#[derive(Debug)]
pub struct History<'a> {
    pub path: usize,
    pub step: usize,
    pub time: f64,
    /// `ΔW_0 … ΔW_{i−1}`, flattened with stride `d`.
    pub past_increments: &'a [f64],
    /// `W_{t_i}`.
    pub level: &'a [f64],
}

/// A predictable process `φ[path][step][dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedProcess {
    n_paths: usize,
    steps: usize,
    dim: usize,
    values: Vec<f64>,
}

impl AdaptedProcess {
    pub fn zeros(ens: &BrownianEnsemble) -> Self {
        Self {
            n_paths: ens.n_paths(),
            steps: ens.steps(),
            dim: ens.dim(),
            values: vec![0.0; ens.n_paths() * ens.steps() * ens.dim()],
        }
    }

    pub fn constant(ens: &BrownianEnsemble, c: &[f64]) -> Result<Self> {
        if c.len() != ens.dim() {
            return Err(Error::DimensionMismatch(format!("constant has {} components, d = {}", c.len(), ens.dim())));
        }
        let mut p = Self::zeros(ens);
        for chunk in p.values.chunks_mut(ens.dim()) {
            chunk.copy_from_slice(c);
        }
        Ok(p)
    }

    /// Build `φ` step by step; the closure sees only increments strictly before
    /// the step it is choosing a value for.
    pub fn from_history<F>(ens: &BrownianEnsemble, f: F) -> Self
    where
        F: Fn(&History<'_>, &mut [f64]),
    {
        let (m, d) = (ens.steps(), ens.dim());
        let mut p = Self::zeros(ens);
        let mut level = vec![0.0; d];
        for path in 0..ens.n_paths() {
            let inc = ens.path_increments(path);
            level.iter_mut().for_each(|w| *w = 0.0);
            for i in 0..m {
                let h = History {
                    path,
                    step: i,
                    time: ens.grid().time(i),
                    past_increments: &inc[..i * d],
                    level: &level,
                };
                let base = (path * m + i) * d;
                f(&h, &mut p.values[base..base + d]);
                for k in 0..d {
                    level[k] += inc[i * d + k];
                }
            }
        }
        p
    }

    /// Wrap values that are predictable by construction (e.g. solver output).
    pub(crate) fn from_predictable(n_paths: usize, steps: usize, dim: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_paths * steps * dim);
        Self { n_paths, steps, dim, values }
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, path: usize, step: usize) -> &[f64] {
        let base = (path * self.steps + step) * self.dim;
        &self.values[base..base + self.dim]
    }

    /// `max |φ|` (Euclidean norm per path and step).
    pub fn max_norm(&self) -> f64 {
        self.values.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }

    fn check_against(&self, ens: &BrownianEnsemble) -> Result<()> {
        if self.n_paths != ens.n_paths() || self.steps != ens.steps() || self.dim != ens.dim() {
            return Err(Error::DimensionMismatch(format!(
                "process is {}x{}x{}, ensemble is {}x{}x{}",
                self.n_paths,
                self.steps,
                self.dim,
                ens.n_paths(),
                ens.steps(),
                ens.dim()
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    sqrt(v.iter().map(|x| x * x).sum::<f64>())
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Σ_{i < up_to} φ_i·ΔW_i` per path.
pub fn ito_integral(ens: &BrownianEnsemble, phi: &AdaptedProcess, up_to: usize) -> Result<Vec<f64>> {
    phi.check_against(ens)?;
    if up_to > ens.steps() {
        return Err(Error::Domain(format!("up_to = {up_to} exceeds {} steps", ens.steps())));
    }
    Ok((0..ens.n_paths())
        .map(|p| {
            let mut s = 0.0;
            for i in 0..up_to {
                s += dot(phi.value(p, i), ens.step_increment(p, i));
            }
            s
        })
        .collect())
}

/// Density paths `D_{t_i} = exp(Σ_{j<i} φ_j·ΔW_j − ½ Σ_{j<i} |φ_j|² Δt_j)`,
/// stored as logarithms.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticExponential {
    n_paths: usize,
    nodes: usize,
    log_density: Vec<f64>,
}

impl StochasticExponential {
    #[inline]
    pub fn log_density(&self, path: usize, node: usize) -> f64 {
        self.log_density[path * self.nodes + node]
    }

    #[inline]
    pub fn density(&self, path: usize, node: usize) -> f64 {
        exp(self.log_density(path, node))
    }

    /// `D_{t_node}` for every path.
    pub fn densities_at(&self, node: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.density(p, node)).collect()
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }
}

/// `E(φ•W)` on every node. Errors if `|φ|` exceeds `bound` anywhere.
pub fn stochastic_exponential(
    ens: &BrownianEnsemble,
    phi: &AdaptedProcess,
    bound: f64,
) -> Result<StochasticExponential> {
    phi.check_against(ens)?;
    let (n, m) = (ens.n_paths(), ens.steps());
    let slack = bound * 1e-12 + 1e-15;
    let mut log_density = vec![0.0; n * (m + 1)];
    for p in 0..n {
        let mut acc = 0.0;
        for i in 0..m {
            let v = phi.value(p, i);
            let nv = norm(v);
            if !(nv <= bound + slack) {
                return Err(Error::KernelBound { path: p, step: i, norm: nv, bound });
            }
            acc += dot(v, ens.step_increment(p, i)) - 0.5 * nv * nv * ens.grid().dt(i);
            log_density[p * (m + 1) + i + 1] = acc;
        }
    }
    Ok(StochasticExponential { n_paths: n, nodes: m + 1, log_density })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{mean, mean_estimate};

    fn grid(m: usize) -> TimeGrid {
        TimeGrid::uniform(1.0, m).unwrap()
    }

    #[test]
    fn regeneration_is_bit_identical() {
        let g = grid(5);
        let a = simulate_brownian(&g, 2, 3, 99).unwrap();
        let b = simulate_brownian(&g, 2, 3, 99).unwrap();
        assert_eq!(a, b);
        let one = simulate_brownian(&g, 2, 1, 99).unwrap();
        assert_eq!(one.path_increments(0), a.path_increments(0));
    }

    #[test]
    fn increment_mean_is_centred() {
        let n = 100_000;
        let e = simulate_brownian(&grid(1), 1, n, 7).unwrap();
        let m = mean(e.increments());
        assert!(m.abs() < 4.0 / sqrt(n as f64), "mean {m}");
    }

    #[test]
    fn per_step_variance_matches_dt() {
        let n = 100_000;
        let e = simulate_brownian(&grid(2), 1, n, 8).unwrap();
        for step in 0..2 {
            let xs: Vec<f64> = (0..n).map(|p| e.increment(p, step, 0)).collect();
            let m = mean(&xs);
            let v = crate::stats::pairwise_sum_by(n, |i| (xs[i] - m) * (xs[i] - m)) / (n - 1) as f64;
            assert!((v / 0.5 - 1.0).abs() < 0.05, "step {step}: variance {v}");
        }
    }

    #[test]
    fn budget_is_enforced() {
        let r = BrownianEnsemble::simulate_with_budget(&grid(10), 1, 100, 1, 999);
        assert!(matches!(r, Err(Error::ResourceLimit { requested: 1000, budget: 999 })));
        assert!(simulate_brownian(&grid(1), 1, 0, 1).is_err());
    }

    #[test]
    fn refinement_keeps_terminal_levels() {
        let e = simulate_brownian(&grid(8), 2, 500, 3).unwrap();
        let r = e.refine().unwrap();
        assert_eq!(r.steps(), 16);
        let (a, b) = (e.terminal_levels(), r.terminal_levels());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        // Old nodes are preserved too.
        let (la, lb) = (e.levels(), r.levels());
        for p in 0..500 {
            assert!((la.level(p, 3, 1) - lb.level(p, 6, 1)).abs() < 1e-12);
        }
        // Midpoint variance is Δt/2 at the new scale.
        let xs: Vec<f64> = (0..500).map(|p| r.increment(p, 0, 0)).collect();
        let est = mean_estimate(&xs);
        assert!(est.value.abs() < 4.0 * est.stderr);
    }

    #[test]
    fn ito_integral_cases() {
        let n = 100_000;
        let e = simulate_brownian(&grid(10), 1, n, 21).unwrap();
        let zero = AdaptedProcess::zeros(&e);
        assert!(ito_integral(&e, &zero, 10).unwrap().iter().all(|&v| v == 0.0));

        let one = AdaptedProcess::constant(&e, &[1.0]).unwrap();
        let wt = ito_integral(&e, &one, 10).unwrap();
        let est = mean_estimate(&wt);
        assert!(est.value.abs() < 4.0 * est.stderr);
        let var = crate::stats::pairwise_sum_by(n, |i| wt[i] * wt[i]) / n as f64;
        assert!((var - 1.0).abs() < 0.02);

        let first = AdaptedProcess::from_history(&e, |h, out| out[0] = if h.step == 0 { 1.0 } else { 0.0 });
        let v = ito_integral(&e, &first, 10).unwrap();
        for p in 0..10 {
            assert_eq!(v[p], e.increment(p, 0, 0));
        }
        assert!(ito_integral(&e, &one, 11).is_err());
    }

    #[test]
    fn history_never_contains_the_current_increment() {
        let e = simulate_brownian(&grid(6), 2, 4, 5).unwrap();
        let phi = AdaptedProcess::from_history(&e, |h, out| {
            assert_eq!(h.past_increments.len(), h.step * 2);
            let w: f64 = h.past_increments.iter().step_by(2).sum();
            assert!((w - h.level[0]).abs() < 1e-14);
            out[0] = h.level[0];
        });
        // φ_i = W_{t_i}; the Itô sum of W against dW is predictable by construction.
        assert_eq!(phi.value(1, 0)[0], 0.0);
        assert!((phi.value(1, 2)[0] - (e.increment(1, 0, 0) + e.increment(1, 1, 0))).abs() < 1e-15);
    }

    #[test]
    fn stochastic_exponential_cases() {
        let n = 100_000;
        let e = simulate_brownian(&grid(20), 1, n, 4).unwrap();
        let zero = AdaptedProcess::zeros(&e);
        let d0 = stochastic_exponential(&e, &zero, 0.0).unwrap();
        assert!((0..100).all(|p| d0.density(p, 20) == 1.0));

        let c = 0.5;
        let phi = AdaptedProcess::constant(&e, &[c]).unwrap();
        let d = stochastic_exponential(&e, &phi, c).unwrap();
        assert!((0..n).all(|p| d.density(p, 0) == 1.0));
        let dt = d.densities_at(20);
        assert!(dt.iter().all(|&x| x > 0.0));
        let m1 = mean_estimate(&dt);
        assert!(m1.within_sigmas(1.0, 3.0), "{m1:?}");
        let sq: Vec<f64> = dt.iter().map(|x| x * x).collect();
        let m2 = mean_estimate(&sq);
        assert!(m2.within_sigmas(exp(c * c), 3.0), "{m2:?}");

        assert!(matches!(stochastic_exponential(&e, &phi, 0.4), Err(Error::KernelBound { .. })));
    }
}
