//! Numerical solver for the free boundary problem of branching Brownian
//! motion with selection of the leftmost particle.
//!
//! The density ρ on `x > L_t` solves `ρ_t = ½ρ_xx + ρ`, vanishes on the
//! free boundary `L_t` and keeps unit mass. Its scaled gradient
//! `v = e^{-t}ρ_x` solves the heat equation with `v(L_t,t) = 2e^{-t}` and
//! the boundary moves with `L̇ = −¼eᵗv_x(L_t,t)`. The crate represents `v`
//! by heat potentials, reduces the boundary traces to weakly singular
//! Volterra equations and finds the boundary as a fixed point of the map
//! `K[L](t) = b − ¼∫₀ᵗ e^τ v_x(L_τ,τ) dτ`. A branching-Brownian particle
//! simulator provides an independent Monte Carlo view of the same density.

pub mod datum;
pub mod density;
pub mod error;
pub mod fixed_point;
pub mod halfline_heat;
pub mod kernels;
pub mod particle;
pub mod quadrature;
pub mod volterra;

pub use datum::InitialDatum;
pub use error::{FbpError, Result};
