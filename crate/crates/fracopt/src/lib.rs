//! Solver kit for linear-quadratic optimal control problems governed by the
//! spectral fractional Laplacian on bounded 2-D domains.
//!
//! The fractional state equation is localized as a degenerate elliptic problem
//! on a semi-infinite cylinder `Ω × (0, ∞)` with weight `y^α`, `α = 1 - 2s`,
//! truncated at a height `Y` chosen so the truncation error is negligible
//! against discretization error. The cylinder is meshed with tensor products
//! of a shape-regular base triangulation and a partition of `[0, Y]` graded
//! toward `y = 0`, where the weight degenerates. Controls live on the base
//! domain (piecewise linear or piecewise constant, box constrained) and are
//! found by a projected quasi-Newton iteration on the reduced cost.
//!
//! Module map:
//! - [`params`]: fractional order bookkeeping (`α`, normalization constants),
//! - [`bessel`]: modified Bessel functions of fractional order,
//! - [`quadrature`]: Gauss rules on intervals and triangles,
//! - [`spectral`]: sine-series reference solutions and extension profiles,
//! - [`sparse`]: CSR matrices, conjugate gradients, incomplete Cholesky,
//! - [`mesh`]: base triangulations, graded partitions, cylinder meshes,
//! - [`assembly`]: weighted stiffness/mass assembly and load vectors,
//! - [`solve`]: discrete state/adjoint solves and error functionals,
//! - [`control`]: reduced cost, projected BFGS, active set classification,
//! - [`harness`]: experiment configuration, convergence studies, reports.

pub mod assembly;
pub mod bessel;
pub mod control;
pub mod harness;
pub mod mesh;
pub mod params;
pub mod quadrature;
pub mod solve;
pub mod sparse;
pub mod spectral;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter was outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    /// The linear solver stopped without reaching the requested tolerance.
    #[error(
        "conjugate gradient stalled after {iters} iterations \
         (relative residual {rel_residual:.3e}, last residuals {history:?})"
    )]
    SolverStalled {
        iters: usize,
        rel_residual: f64,
        history: Vec<f64>,
    },
    /// Incomplete Cholesky broke down even with diagonal shifts.
    #[error("incomplete Cholesky breakdown at row {row} (shift {shift:.1e})")]
    FactorBreakdown { row: usize, shift: f64 },
    /// The optimizer's line search could not make progress.
    #[error(
        "line search failed at outer iteration {iter}: j = {cost:.6e}, \
         projected gradient {pg_norm:.3e}"
    )]
    LineSearchFailed {
        iter: usize,
        cost: f64,
        pg_norm: f64,
        /// `(iteration, cost, projected gradient norm)` per outer iteration.
        history: Vec<(usize, f64, f64)>,
    },
    /// Configuration file or key/value override could not be interpreted.
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
