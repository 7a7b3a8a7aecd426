use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("no triangle quadrature rule of degree {0} (supported: 1..=12)")]
    QuadratureDegree(usize),

    #[error("mesh size {h0} does not produce an exact structured grid on the {domain} domain")]
    MeshSizing { domain: &'static str, h0: f64 },

    #[error("polynomial degree {0} is not supported (need m >= 2)")]
    Degree(usize),

    #[error("unknown refraction index `{0}` (expected n16 or affine)")]
    UnknownCoefficient(String),

    #[error("coefficient check failed at ({x}, {y}): {reason}")]
    Coefficients { x: f64, y: f64, reason: String },

    #[error("point ({x}, {y}) lies outside triangle {triangle}")]
    PointOutsideTriangle { triangle: usize, x: f64, y: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("factorization of A - s B failed at shift {shift}")]
    Factorization { shift: num_complex::Complex64 },

    #[error("eigensolver did not converge after {restarts} restarts (backward errors {residuals:?})")]
    NoConvergence { restarts: usize, residuals: Vec<f64> },

    #[error("all indicators vanish; nothing to mark")]
    NothingToMark,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
