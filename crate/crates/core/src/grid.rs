use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Nodes `0 = t_0 < t_1 < … < t_M = T`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if steps == 0 {
            return Err(Error::Grid("at least one step is required".into()));
        }
        let mut nodes: Vec<f64> = (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect();
        nodes[steps] = horizon;
        Self::from_nodes(nodes)
    }

    /// Validates: first node 0, strictly increasing, no step shorter than
    /// `1e−12·T`.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Grid("a grid needs at least two nodes".into()));
        }
        if nodes[0] != 0.0 {
            return Err(Error::Grid(format!("first node must be 0, got {}", nodes[0])));
        }
        let horizon = nodes[nodes.len() - 1];
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        for (i, w) in nodes.windows(2).enumerate() {
            let dt = w[1] - w[0];
            if !(dt > 1e-12 * horizon) {
                return Err(Error::Grid(format!("step {i} has degenerate length {dt}")));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn steps(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    #[inline]
    pub fn time(&self, node: usize) -> f64 {
        self.nodes[node]
    }

    #[inline]
    pub fn dt(&self, step: usize) -> f64 {
        self.nodes[step + 1] - self.nodes[step]
    }

    pub fn max_dt(&self) -> f64 {
        (0..self.steps()).map(|i| self.dt(i)).fold(0.0, f64::max)
    }

    /// Insert the midpoint of every step.
    pub fn refine(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(self.horizon());
        Self { nodes }
    }

    /// Node closest to time `t`.
    pub fn nearest_node(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &s) in self.nodes.iter().enumerate() {
            if (s - t).abs() < (self.nodes[best] - t).abs() {
                best = i;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_ends_exactly_at_horizon() {
        let g = TimeGrid::uniform(0.7, 3).unwrap();
        assert_eq!(g.horizon(), 0.7);
        assert_eq!(g.steps(), 3);
        assert!((g.dt(1) - 0.7 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_nodes() {
        assert!(TimeGrid::from_nodes(alloc::vec![0.1, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(alloc::vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(alloc::vec![0.0, 1e-14, 1.0]).is_err());
        assert!(TimeGrid::uniform(1.0, 0).is_err());
    }

    #[test]
    fn refinement_doubles_steps() {
        let g = TimeGrid::uniform(1.0, 4).unwrap().refine();
        assert_eq!(g.steps(), 8);
        assert_eq!(g.time(1), 0.125);
        assert_eq!(g.nearest_node(0.5), 4);
    }
}
