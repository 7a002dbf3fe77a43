use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("series order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("series_exp needs a zero constant term, got {0}")]
    NonZeroConstant(f64),

    #[error("degenerate point: gradient norm {grad_norm:e} below floor {floor:e}")]
    DegeneratePoint { grad_norm: f64, floor: f64 },

    #[error("det2 factor {value} is not positive; rho is outside the validity radius")]
    NonPositiveDet2 { value: f64 },

    #[error("surface too degenerate: {skipped} of {active} kernel-active samples skipped ({fraction:.3})")]
    DegenerateSurface { skipped: u64, active: u64, fraction: f64 },

    #[error("projection solver did not converge after {iterations} iterations (residual {residual:e})")]
    SolverDivergence { iterations: usize, residual: f64 },

    #[error("too many distance-solver failures: {failures} of {samples}")]
    TooManyFailures { failures: u64, samples: u64 },

    #[error("region is not convex: Hessian eigenvalue {min_eigenvalue:e} at a probe point")]
    NotConvex { min_eigenvalue: f64 },

    #[error("resolution guard violated: 4 * spacing * sqrt(lambda2) = {value:.4} >= 1")]
    Resolution { value: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed field sample file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// `true` for errors caused by bad inputs rather than numerical failure.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::OrderMismatch { .. }
                | Error::NonZeroConstant(_)
                | Error::Resolution { .. }
                | Error::InvalidArgument(_)
                | Error::NotConvex { .. }
                | Error::Format(_)
        )
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
