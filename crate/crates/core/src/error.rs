use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    /// `μ ≤ b·√(T − t)`: the exponential-moment bound and everything built on it
    /// are unavailable.
    #[error("subcritical weight: mu = {mu} does not exceed b*sqrt(T - t) = {critical}")]
    Subcritical { mu: f64, critical: f64 },

    #[error("invalid time grid: {0}")]
    Grid(String),

    #[error("ensemble needs {requested} values, budget is {budget}")]
    ResourceLimit { requested: usize, budget: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("kernel bound violated at path {path}, step {step}: |phi| = {norm} > {bound}")]
    KernelBound { path: usize, step: usize, norm: f64, bound: f64 },

    #[error("missing declared constant `{0}`")]
    MissingConstant(&'static str),

    #[error("regression normal equations are singular at node {node}")]
    RankDeficient { node: usize },

    #[error("implicit step produced a non-finite value at node {node}")]
    Divergence { node: usize },

    #[error("quadrature did not converge: {0}")]
    Quadrature(String),

    #[error("effective sample size {ess:.1} below floor {floor:.1}")]
    EssCollapse { ess: f64, floor: f64 },

    #[error("terminal value is not admissible: {0}")]
    Inadmissible(String),

    /// A hypothesis of an experiment failed its sampled check.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
}

impl Error {
    /// True for errors that signal a violated mathematical hypothesis rather than
    /// a malfunction.
    pub fn is_hypothesis_violation(&self) -> bool {
        matches!(
            self,
            Error::Subcritical { .. }
                | Error::KernelBound { .. }
                | Error::Inadmissible(_)
                | Error::Hypothesis(_)
                | Error::MissingConstant(_)
        )
    }
}
