use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("field evaluation failed at x={x:?}, t={t}: {msg}")]
    Field { x: [f64; 2], t: f64, msg: String },

    #[error("quadrature did not converge (relative change {change:.3e} after {refinements} refinements)")]
    Quadrature { change: f64, refinements: usize },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("no mollification scale reached eps = {target}; best {best:.4e} at lambda = {lambda}")]
    EpsilonUnreachable { target: f64, best: f64, lambda: f64 },

    #[error("change of variable is not invertible near x={x:?}, t={t} (det J = {det:.3e})")]
    NotInvertible { x: [f64; 2], t: f64, det: f64 },

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverStalled {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

impl Error {
    /// True for errors caused by bad parameters rather than by a computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config(_) | Error::NotApplicable(_))
    }
}
