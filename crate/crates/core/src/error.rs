use thiserror::Error;

/// Errors produced by the modeling, planning, and simulation layers.
#[derive(Error, Debug)]
pub enum HsaError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter validation failed: {0}")]
    InvalidParams(String),

    #[error("inertia matrix lost positive definiteness: {0}")]
    NonSpdInertia(String),

    #[error("dynamics are numerically singular (cond(M) = {cond:.3e})")]
    SingularDynamics { cond: f64 },

    #[error("collocated transform is singular at the requested configuration (|det J_h| = {det:.3e})")]
    CollocationSingularity { det: f64 },

    #[error("planner did not converge: residual {residual:.3e} after {iters} iterations")]
    PlannerNoConverge {
        residual: f64,
        iters: usize,
        /// Best plan found so far, for diagnostics.
        best: Box<crate::planning::PlanResult>,
    },

    #[error("rollout did not settle: |q_dot| = {qdot_norm:.3e} at t_ss = {t_ss} s")]
    SteadyStateNotReached { qdot_norm: f64, t_ss: f64 },

    #[error("integration diverged at t = {t} s")]
    IntegrationDiverged { t: f64 },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("ill-posed regression: {0}")]
    IllPosedRegression(String),

    #[error("rest-strain calibration failed: {0}")]
    CalibrationFailed(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HsaError>;

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(HsaError::InvalidArgument(format!("{what} must be finite")));
    }
    Ok(())
}
