use thiserror::Error;

/// Errors raised by the grid, transport and verification routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid box: {0}")]
    InvalidBox(String),

    #[error("invalid grid shape: {0}")]
    InvalidShape(String),

    #[error("potential failed midpoint-convexity audit at pair {pair} (excess {excess:e})")]
    ConvexityAuditFailed { pair: usize, excess: f64 },

    #[error("grid mass underflow: density vanishes on every node")]
    MassUnderflow,

    #[error("conditional slice on axis {axis} has zero mass")]
    ZeroMassSlice { axis: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("conditioning must fix a coordinate prefix: {0}")]
    NotPrefix(String),

    #[error("inner minimization did not converge within {budget} sweeps (last change {change:e})")]
    NonConvergence { budget: usize, change: f64 },

    #[error("difference quotients diverge under refinement (ratio {ratio:.3})")]
    NonLipschitzOnGrid { ratio: f64 },

    #[error("jacobian entry {axis} is indistinguishable from zero")]
    DegenerateJacobian { axis: usize },

    #[error("target measure is not absolutely continuous with respect to the source")]
    AbsoluteContinuityViolated,

    #[error("moment table undefined at prefix on axis {axis}")]
    UndefinedPrefix { axis: usize },

    #[error("point lies outside the support on axis {axis}")]
    OutOfSupport { axis: usize },

    #[error("integrability condition failed: {0}")]
    IntegrabilityFailed(String),

    #[error("covariance matrix is not positive definite (min eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("degenerate convex hull")]
    DegenerateHull,

    #[error("body is not barycentered (barycenter {0:?})")]
    NotBarycentered(Vec<f64>),

    #[error("component {0} fails the martingale-increment check")]
    ComponentNotMartingale(usize),

    #[error("law fails the martingale-increment check (worst violation {0:e})")]
    NotMartingaleIncrements(f64),

    #[error("sample set is not isotropic (max deviation {0:e})")]
    NotIsotropic(f64),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
