//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value {value} outside admissible range [{min}, {max}]")]
    OutOfRange { value: f64, min: f64, max: f64 },

    #[error("unknown flux `{0}` (expected `burgers` or `quartic`)")]
    UnknownFlux(String),

    #[error("position {x} outside segment [{left}, {right}]")]
    OutsideSegment { x: f64, left: f64, right: f64 },

    #[error("segment [{left}, {right}] is empty")]
    EmptySegment { left: f64, right: f64 },

    #[error("value {u} not between segment endpoint values {lo} and {hi}")]
    OutsideValueSpan { u: f64, lo: f64, hi: f64 },

    #[error("inverse interpolant undefined on a constant segment (u = {0})")]
    ConstantSegment(f64),

    #[error("window [{a}, {b}] is not a valid interval")]
    InvalidWindow { a: f64, b: f64 },

    #[error("sequence lengths differ: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("particle field must contain at least one particle")]
    EmptyField,

    #[error(
        "particles {index} and {next} share position x = {x} with distinct states; \
         merge them before evaluating the right-hand side",
        next = index + 1
    )]
    PendingMerge { index: usize, x: f64 },

    #[error(
        "cannot merge particles {index} and {next}: position gap {gap:e} exceeds {max:e}",
        next = index + 1
    )]
    MergeGap { index: usize, gap: f64, max: f64 },

    #[error(
        "merge of particles {index} and {next}: inner states differ by {residual:e} \
         (tolerance {tol:e}); the collision event was resolved too late",
        next = index + 1
    )]
    MergeResidual {
        index: usize,
        residual: f64,
        tol: f64,
    },

    #[error("step size underflow at t = {t} (dt = {dt:e}); problem too stiff for this stepper")]
    StepUnderflow { t: f64, dt: f64 },

    #[error("non-finite state produced at t = {t}")]
    NonFiniteState { t: f64 },

    #[error("step budget of {0} exhausted before reaching t_end")]
    StepBudget(usize),

    #[error("implicit solve failed to converge at t = {t} (residual {residual:e})")]
    ImplicitSolve { t: f64, residual: f64 },

    #[error("traveling-wave ODE is singular at v = {v} (f'(v) = wave speed away from the sonic value)")]
    SingularProfile { v: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
