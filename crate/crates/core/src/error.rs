use std::fmt;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("problem dimension {dim} exceeds the configured cap {cap}")]
    DimensionCap { dim: usize, cap: usize },

    #[error("degenerate null space: estimated kernel dimension {estimate} (rcond {rcond:.3e})")]
    DegenerateKernel { estimate: usize, rcond: f64 },

    #[error("steady-state solve did not converge: residual {residual:.3e} exceeds {bound:.3e}")]
    NonConvergence { residual: f64, bound: f64 },

    #[error("integrator failure at t = {t}: step size {step:.3e} underflowed; try rel_tol >= {suggested_tol:.1e}")]
    Integrator { t: f64, step: f64, suggested_tol: f64 },

    #[error("phonon statistics undefined: mean phonon number {0:.3e} is below 1e-12")]
    UndefinedStatistics(f64),

    #[error("population {which} = {value:.3e} is negative beyond tolerance")]
    NegativePopulation { which: &'static str, value: f64 },

    #[error("bare-basis reconstruction inconsistent: PSD defect {0:.3e} exceeds 1e-4")]
    Reconstruction(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("basis mismatch: expected {expected}, found {found}")]
    BasisMismatch { expected: BasisTag, found: BasisTag },

    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Which single-excitation basis a two-qubit operator is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BasisTag {
    /// `{|22>, |21>, |12>, |11>}`
    Bare,
    /// `{|Psi1>, .., |Psi4>}`
    Dressed,
}

impl fmt::Display for BasisTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisTag::Bare => f.write_str("bare"),
            BasisTag::Dressed => f.write_str("dressed"),
        }
    }
}
