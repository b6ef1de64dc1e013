//! Crate-wide error type. Variants map onto the CLI exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MpError {
    /// Bad configuration, bad CLI arguments, missing required data.
    #[error("config error: {0}")]
    Config(String),

    /// Overflow at a tier. Aborts the enclosing solve rather than letting
    /// infinities propagate silently.
    #[error("overflow at tier {tier} in {context}")]
    Overflow { tier: &'static str, context: String },

    /// Exactly zero pivot after partial pivoting.
    #[error("singular matrix in {0}")]
    Singular(String),

    /// Nonpositive curvature p^T A p <= 0 inside a CG-type solver; signals
    /// the operator is not positive definite.
    #[error("indefinite matrix: {0}")]
    Indefinite(String),

    /// Iterative procedure hit its cap without meeting its tolerance where
    /// convergence is contractually required (e.g. Jacobi SVD sweeps).
    #[error("no convergence: {0}")]
    NoConvergence(String),

    /// Finite-difference step rounds to zero at the evaluation tier.
    #[error("degenerate epsilon {eps:e} at tier {tier}: rounds to zero")]
    DegenerateEpsilon { eps: f64, tier: &'static str },

    /// Operation not defined for this problem family.
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// Numeric failure that is none of the above (divergence, NaN, empty
    /// residual history, ...).
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("row {line}: {msg}")]
    ParseRow { line: usize, msg: String },

    #[error("digest mismatch for {name}: expected {expected}, got {got}")]
    DigestMismatch { name: String, expected: String, got: String },

    #[error("fetch failed for {url}: {msg}")]
    Fetch { url: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl MpError {
    /// Process exit code for the CLI: 2 config, 3 numeric/runtime.
    /// (Exit 4 is reserved for acceptance failures under `--check` and is
    /// decided by the runner, not by an error variant.)
    pub fn exit_code(&self) -> i32 {
        match self {
            MpError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, MpError>;
