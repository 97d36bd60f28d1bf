//! An exact particle method for scalar 1D conservation laws
//! `u_t + f(u)_x = 0` and stiff balance laws `u_t + f(u)_x = psi(u)`.
//!
//! The solution is carried by *shock particles* `(x, u^-, u^+)` — moving
//! discontinuities that degenerate to characteristic particles when the jump
//! height is zero — separated by similarity-solution interpolants in which
//! `f'(U)` is linear in `x`. Evolving the particles by an ODE system and
//! merging colliding pairs reproduces the unique weak entropy solution
//! exactly, up to the accuracy of the ODE solver; nothing else is
//! approximated once the initial condition is representable by finitely many
//! particles.
//!
//! Module map:
//!
//! - [`flux`] — flux functions `f`, their derivatives and shock speeds;
//! - [`interpolant`] — the similarity interpolant, exact areas and cell
//!   averages, initial-condition sampling, L1 error;
//! - [`particles`] — shock-particle state, equations of motion, collisions
//!   and merging;
//! - [`integrator`] — RK2/RK4 stepping with dense output, collision events
//!   and the evolve loop;
//! - [`reaction`] — stiff bistable balance laws: sonic particles and the
//!   area-balance correction that keeps detonation waves at the right speed;
//! - [`fvref`] — a self-contained finite-volume baseline (Godunov /
//!   MUSCL-minmod with Strang-split source) for comparison runs;
//! - [`convergence`] — small helpers for fitting observed orders.

pub mod convergence;
pub mod error;
pub mod flux;
pub mod fvref;
pub mod integrator;
pub mod interpolant;
pub mod particles;
pub mod reaction;

pub use error::{Error, Result};
pub use flux::FluxFunction;
pub use particles::{ParticleField, ShockParticle};
