use thiserror::Error;

/// Errors surfaced by the laboratory.
#[derive(Error, Debug)]
pub enum Error {
    #[error("coupling λ = 0: {0} is undefined")]
    CouplingZero(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("self-consistent solver did not converge: |update| = {residual:.3e} after {iterations} iterations")]
    SolverDiverged { residual: f64, iterations: usize },

    #[error("branch-ambiguous spectral point: η = 0 with |E| ≥ 2")]
    BranchAmbiguous,

    #[error("matrix numerically singular in {0}")]
    Singular(&'static str),

    #[error("zero-mode singularity: ϑ requires η > 0")]
    ZeroMode,

    #[error("spectral radius of ϑ̊ℰ is {rho:.6} ≥ 1; renormalized kernel undefined")]
    SpectralRadius { rho: f64 },

    #[error("loop structure not tabulated: k={k}, ℓ0={l0}, lengths={lengths:?}")]
    NotTabulated { k: usize, l0: usize, lengths: Vec<usize> },

    #[error("pole: {0}")]
    Pole(&'static str),

    #[error("asymptotic profile requires d ≥ 3; use the exact kernel for d = {0}")]
    UseExactKernel(usize),

    #[error("empty bulk window: no eigenvalue with |λ| ≤ 2 − κ")]
    EmptyBulkWindow,

    #[error("box scale ℓ = {ell} exceeds block grid n = {n}")]
    BoxScaleTooLarge { ell: usize, n: usize },

    #[error("distinct-index sum supports p = 1 only (got p = {0})")]
    UnsupportedLoopOrder(usize),

    #[error("observable failed on sample {index}: {message}")]
    Observable { index: u64, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
