use crate::expr::ExprError;

/// Errors produced by the library.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("at t = {t}: {source}")]
    ExprAt { t: f64, source: ExprError },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("singular matrix: {0}")]
    SingularMatrix(String),
    #[error("partial Hessian is singular{} (condition number {condition:.3e})", fmt_time(*t))]
    SingularHessian { condition: f64, t: Option<f64> },
    #[error("input inversion did not converge{} (residual {residual:.3e} after {iterations} iterations)", fmt_time(*t))]
    NoConvergence {
        residual: f64,
        iterations: usize,
        t: Option<f64>,
    },
    #[error("shooting diverged: residual {residual:.3e} after {iterations} iterations")]
    ShootingDivergence { residual: f64, iterations: usize },
    #[error("load consistency violated: max |y_S - y - y_L| = {max:.3e}")]
    ConsistencyViolation { max: f64 },
    #[error("unsupported system class: {0}")]
    Unsupported(String),
}

fn fmt_time(t: Option<f64>) -> String {
    t.map(|t| format!(" at t = {t}")).unwrap_or_default()
}

impl Error {
    /// Attaches a time stamp to errors raised during integration.
    pub fn at_time(self, time: f64) -> Self {
        match self {
            Error::Expr(source) => Error::ExprAt { t: time, source },
            Error::SingularHessian { condition, t: None } => Error::SingularHessian {
                condition,
                t: Some(time),
            },
            Error::NoConvergence {
                residual,
                iterations,
                t: None,
            } => Error::NoConvergence {
                residual,
                iterations,
                t: Some(time),
            },
            other => other,
        }
    }

    /// Short machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Expr(_) | Error::ExprAt { .. } => "expression",
            Error::Dimension(_) => "dimension",
            Error::InvalidSystem(_) => "invalid_system",
            Error::InvalidProblem(_) => "invalid_problem",
            Error::SingularMatrix(_) => "singular_matrix",
            Error::SingularHessian { .. } => "singular_hessian",
            Error::NoConvergence { .. } => "no_convergence",
            Error::ShootingDivergence { .. } => "shooting_divergence",
            Error::ConsistencyViolation { .. } => "consistency_violation",
            Error::Unsupported(_) => "unsupported",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
