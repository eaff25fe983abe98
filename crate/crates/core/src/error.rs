use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("layout: {0}")]
    Layout(String),
    #[error("state is not on the real subspace (imaginary part {0:e})")]
    NotReal(f64),
    #[error("radius guard: {what} = {value:.3e} exceeds {limit:.3e}")]
    Radius { what: &'static str, value: f64, limit: f64 },
    #[error("flow step-halving check failed: difference {0:.3e}")]
    Halving(f64),
    #[error("flow left the admissible domain at tau = {0}")]
    DomainEscape(f64),
    #[error("Newton iteration did not converge (residual {0:.3e})")]
    Newton(f64),
    #[error("quadrature node-doubling check failed: difference {0:.3e}")]
    Quadrature(f64),
    #[error("resonant denominator for non-resonant monomial {0}")]
    Resonance(String),
    #[error("invalid generator: {0}")]
    Generator(String),
    #[error("singular linear system")]
    Singular,
    #[error("root search: {0}")]
    Root(String),
    #[error("fit: {0}")]
    Fit(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
