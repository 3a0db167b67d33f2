use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("Kronecker order mismatch: expected order {expected}, got {actual}")]
    Order { expected: usize, actual: usize },

    /// The pair (A, B) has an unstable mode that the input cannot reach, so the
    /// LQR problem on the linearization has no stabilizing solution.
    #[error("(A, B) is not stabilizable: uncontrollable mode with eigenvalue {re:.6e}{im:+.6e}i")]
    NotStabilizable { re: f64, im: f64 },

    #[error("control penalty R is not symmetric positive definite")]
    IndefiniteR,

    #[error("state penalty Q is not symmetric positive semidefinite")]
    IndefiniteQ,

    #[error("Riccati solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    RiccatiFailed { residual: f64, iterations: usize },

    /// The closed-loop matrix has spectral abscissa at or above the threshold, so
    /// the k-way Lyapunov operator is singular or numerically singular.
    #[error("closed-loop matrix is not Hurwitz (spectral abscissa {abscissa:.3e})")]
    NotHurwitz { abscissa: f64 },

    #[error("k-way solve residual {residual:.3e} exceeds tolerance {tol:.1e} (order {order})")]
    Residual { order: usize, residual: f64, tol: f64 },

    #[error("k-way solve returned a non-real solution (imaginary part {imag:.3e})")]
    ComplexSolution { imag: f64 },

    #[error("degree {degree} needs {elements} coefficients, above the element budget {budget}")]
    MemoryBudget {
        degree: usize,
        elements: u128,
        budget: u128,
    },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("model construction failed: {0}")]
    Model(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),
}
