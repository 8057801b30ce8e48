use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("no resonance field in [{b_min} T, {b_max} T] for frequency {frequency_hz} Hz")]
    NoRoot { frequency_hz: f64, b_min: f64, b_max: f64 },
    #[error("temperature must be positive, got {0} K")]
    InvalidTemperature(f64),
    #[error("degenerate linewidth: {0}")]
    DegenerateLinewidth(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("field quadrature did not converge: {0}")]
    GridTooCoarse(String),
    #[error("position (y = {y} m, z = {z} m) lies outside the field map")]
    OutOfDomain { y: f64, z: f64 },
    #[error("no lattice sites fall inside the crystal volume")]
    EmptyLattice,
    #[error("singular fit: {0}")]
    SingularFit(String),
    #[error("fit stopped after {0} iterations without converging")]
    MaxIter(usize),
    #[error("finite-difference step left the model domain for parameter {0}")]
    DomainStep(usize),
    #[error("schema error at line {line}: {message}")]
    Schema { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;
