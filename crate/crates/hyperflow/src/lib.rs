//! Numerical synthesis of hyperbolic and bi-hyperbolic trajectories of a
//! massless body moving in the time-periodic gravitational field of N
//! primaries (the planar restricted (N+1)-body problem), by direct
//! minimization of the Lagrangian action.
//!
//! The crate is organized around the pipeline
//!
//! ```text
//! ephemeris -> action -> minimize -> {hyperbolic, bihyperbolic}
//!                 \-> collision, asymptotics (diagnostics and certificates)
//!                 \-> verify (independent oracles: ODE integration, conics)
//! ```
//!
//! All positions are planar and represented as `num_complex::Complex64`;
//! the real axis is x, the imaginary axis is y.

pub mod action;
pub mod asymptotics;
pub mod bihyperbolic;
pub mod collision;
pub mod ephemeris;
pub mod hyperbolic;
pub mod minimize;
pub mod verify;

mod error;
mod lbfgs;
mod quadrature;

pub use error::{Error, Result};

pub use num_complex::Complex64;

/// Cross product of two planar vectors, `a ∧ b = ax*by - ay*bx`.
pub fn wedge(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

/// Dot product of two planar vectors.
pub fn dot(a: Complex64, b: Complex64) -> f64 {
    a.re * b.re + a.im * b.im
}

/// Fractional part of `t` with respect to a period `period`, in `[0, period)`.
pub fn frac_mod(t: f64, period: f64) -> f64 {
    let f = t.rem_euclid(period);
    if f >= period {
        0.0
    } else {
        f
    }
}

/// Angle difference between successive planar vectors, in `(-pi, pi]`.
///
/// Returns `None` when either vector vanishes.
pub fn angle_step(from: Complex64, to: Complex64) -> Option<f64> {
    if from.norm() == 0.0 || to.norm() == 0.0 {
        return None;
    }
    Some(wedge(from, to).atan2(dot(from, to)))
}
