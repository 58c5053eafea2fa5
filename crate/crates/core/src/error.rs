use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("reference field has zero norm")]
    DegenerateNorm,

    #[error("reference value is zero at cell {index}")]
    DivisionByZero { index: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not converge at r = {radius} (estimated error {error:e})")]
    QuadratureFailure { radius: f64, error: f64 },

    #[error("no neutrinosphere: kappa * R = {kappa_r} does not exceed 2/3")]
    NoNeutrinosphere { kappa_r: f64 },

    #[error("negative {field} = {value:e} at t = {time}, cell {index}")]
    Negativity {
        field: &'static str,
        time: f64,
        index: usize,
        value: f64,
    },

    #[error("streaming component would be negative: trapped profile increases at cell {index}")]
    NegativeStreaming { index: usize },

    #[error("trapped gradient vanishes at the sphere radius; streaming normalization undefined")]
    NormalizationSingularity,

    #[error("solution unbounded at t = {time}: sup(Jt + Js) = {value}")]
    Unbounded { time: f64, value: f64 },

    #[error("singular linear system at row {row}")]
    SingularSystem { row: usize },

    #[error("diffusion source iteration did not settle at t = {time} after {iterations} sweeps")]
    SourceIteration { time: f64, iterations: usize },
}

impl Error {
    /// True for failures of a numerical model or solver (as opposed to bad input).
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::QuadratureFailure { .. }
                | Error::Negativity { .. }
                | Error::NegativeStreaming { .. }
                | Error::NormalizationSingularity
                | Error::Unbounded { .. }
                | Error::SingularSystem { .. }
                | Error::SourceIteration { .. }
        )
    }
}
