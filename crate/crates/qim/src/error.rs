use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not square: {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix has no rows")]
    EmptyMatrix,

    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },

    #[error("dimension mismatch: {expected} vs {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigendecomposition failed for a {dim}x{dim} operator (spread estimate {spread:.3e})")]
    DecompositionFailure { dim: usize, spread: f64 },

    #[error("scalar function is not finite at eigenvalue {eigenvalue}")]
    FunctionDomain { eigenvalue: f64 },

    #[error("Schatten exponent must lie in (0, inf], got {p}")]
    InvalidSchattenExponent { p: f64 },

    #[error("Schatten norm overflowed for exponent {p}")]
    SchattenOverflow { p: f64 },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("exponents must sum to 1 within 1e-12, got {sum}")]
    ExponentSum { sum: f64 },

    #[error("Hamiltonian spectrum dips below the identity: min eigenvalue {min_eigenvalue}")]
    HamiltonianBelowIdentity { min_eigenvalue: f64 },

    #[error("every Boltzmann weight underflowed; rescale the Hamiltonian")]
    BoltzmannUnderflow,

    #[error("perturbed Hamiltonian is singular (min |eigenvalue| {min_abs_eigenvalue:.3e}); the resolvent does not exist without renormalization")]
    SingularPerturbation { min_abs_eigenvalue: f64 },

    #[error("n-point budget exceeded: order {order} at dimension {dim} (cost grows as dim^order)")]
    BudgetExceeded { order: usize, dim: usize },

    #[error("quadrature did not converge within budget: estimate {estimate}, error bound {error_bound:.3e}")]
    QuadratureBudget { estimate: f64, error_bound: f64 },

    #[error("need at least {needed} finite coefficients for a radius estimate, got {got}")]
    InsufficientCoefficients { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
