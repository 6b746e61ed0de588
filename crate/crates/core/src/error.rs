use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, CoreError>;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// A physical or configuration parameter violates its precondition.
    InvalidParameter(String),
    /// Pointwise kernel evaluation at v = v2; the 1/|v-v2| singularity is
    /// integrable but the pointwise value is undefined.
    SingularInput,
    /// A grid function was paired with a grid of different shape.
    GridMismatch { expected: usize, got: usize },
    /// Dense assembly would exceed the configured node budget.
    AssemblyOverflow { nodes: usize, budget: usize },
    /// Oracle sampling budget below the minimum for a meaningful estimate.
    BudgetTooSmall { budget: usize, min: usize },
    /// Impact direction must be a unit vector (tolerance 1e-12).
    NonUnitNormal { norm: f64 },
    /// Iterative eigensolver failed to converge.
    NonConvergence { iterations: usize, residual: f64 },
    /// Explicit time step exceeds the stability bound.
    CflViolation { dt: f64, max_dt: f64 },
    /// Transport step size must shift every velocity by an integer cell count.
    IncommensurateStep { dt: f64 },
    /// Decay-rate fit window holds fewer samples than required.
    InsufficientSamples { have: usize, need: usize },
    /// Decay-rate fit window reaches distances below the floating-point floor.
    UnderflowWindow { distance: f64 },
    /// Entropy functionals require nonnegative densities.
    NegativeInput { value: f64 },
    /// Measured normalization constants disagree with their analytic values.
    CalibrationMismatch { measured: f64, analytic: f64 },
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            CoreError::SingularInput => {
                write!(f, "kernel is singular at coinciding velocities")
            }
            CoreError::GridMismatch { expected, got } => {
                write!(f, "grid mismatch: expected {expected} values, got {got}")
            }
            CoreError::AssemblyOverflow { nodes, budget } => {
                write!(f, "dense assembly of {nodes} nodes exceeds budget of {budget}")
            }
            CoreError::BudgetTooSmall { budget, min } => {
                write!(f, "budget {budget} below minimum {min}")
            }
            CoreError::NonUnitNormal { norm } => {
                write!(f, "impact direction has norm {norm}, expected 1")
            }
            CoreError::NonConvergence { iterations, residual } => {
                write!(f, "no convergence after {iterations} iterations (residual {residual:.3e})")
            }
            CoreError::CflViolation { dt, max_dt } => {
                write!(f, "dt = {dt} violates stability bound {max_dt}")
            }
            CoreError::IncommensurateStep { dt } => {
                write!(f, "dt = {dt} does not shift velocities by whole cells")
            }
            CoreError::InsufficientSamples { have, need } => {
                write!(f, "fit window holds {have} samples, need {need}")
            }
            CoreError::UnderflowWindow { distance } => {
                write!(f, "fit window reaches distance {distance:.3e}, below 1e-13")
            }
            CoreError::NegativeInput { value } => {
                write!(f, "density must be nonnegative, found {value:.3e}")
            }
            CoreError::CalibrationMismatch { measured, analytic } => {
                write!(f, "calibration measured {measured}, analytic value {analytic}")
            }
        }
    }
}

impl core::error::Error for CoreError {}
