//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown catalog key `{0}`")]
    UnknownCatalogKey(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("forcing has nonzero mean {mean:.3e} (tolerance {tol:.1e}); \
             the antiderivative of e is not periodic")]
    NonzeroMeanForcing { mean: f64, tol: f64 },

    #[error("integration step size underflow at t = {t:.6e}")]
    StepSizeUnderflow { t: f64 },

    #[error("non-finite right-hand side at t = {t:.6e}; \
             in untransformed coordinates this signals u' reaching the edge of the phi domain")]
    DomainEscape { t: f64 },

    #[error("integration exceeded {max_steps} steps at t = {t:.6e}")]
    MaxStepsExceeded { t: f64, max_steps: usize },

    #[error("resonant linear problem: 2x2 matching system has condition number {cond:.3e}; \
             the homogeneous equation has a nontrivial T-periodic solution")]
    ResonantLinearProblem { cond: f64 },

    #[error("singular bordered system (condition number {cond:.3e}); \
             outside the k*sup|g'| < a0*omega regime the zero-average problem \
             need not be uniquely solvable")]
    SingularBorderedSystem { cond: f64 },

    #[error("coefficient a(t) is not positive: min over nodes is {a_min:.3e}")]
    CoefficientNotPositive { a_min: f64 },

    #[error("Newton iterate left the phi domain: sup|U'| = {sup_uprime:.6e} >= {limit:.6e}")]
    IterateLeftDomain { sup_uprime: f64, limit: f64 },

    #[error("Newton did not converge at xi = {xi:.6e}, kappa = {kappa:.6e}: \
             last correction {last_correction:.3e} after {iterations} iterations")]
    NewtonDidNotConverge {
        xi: f64,
        kappa: f64,
        last_correction: f64,
        iterations: usize,
    },

    #[error("first sweep point at xi = {xi:.6e} is unsolvable: {source}")]
    FirstPointUnsolvable { xi: f64, source: Box<Error> },

    #[error("root bracketing failed: {0}")]
    BracketNotFound(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
