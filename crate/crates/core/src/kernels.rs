//! Gaussian heat kernel for the generator ½∂²ₓ, its spatial derivative, the
//! standard normal tail and quadrature of compactly supported data against
//! the kernel.

use std::f64::consts::SQRT_2;

use crate::datum::InitialDatum;
use crate::error::{domain, Result};
use crate::quadrature::gauss8;

/// Time separations below this are treated as the kernel's diagonal.
pub const DIAGONAL_GAP: f64 = 1e-14;

/// Half-width, in units of √t, of the window outside of which the Gaussian
/// weight is below e⁻⁵⁰ and is dropped.
const WINDOW: f64 = 10.0;

pub(crate) const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_87;

/// A point (x, t) of the space-time half plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimePoint {
    pub x: f64,
    pub t: f64,
}

impl SpaceTimePoint {
    pub fn new(x: f64, t: f64) -> Result<Self> {
        if !x.is_finite() || !t.is_finite() || t < 0.0 {
            return domain(format!("invalid space-time point ({x}, {t})"));
        }
        Ok(Self { x, t })
    }
}

#[inline]
fn gap(t: f64, tau: f64) -> Result<f64> {
    let dt = t - tau;
    if !(dt >= DIAGONAL_GAP) {
        return domain(format!("heat kernel needs t > tau (t = {t}, tau = {tau})"));
    }
    Ok(dt)
}

/// G(x,t;ξ,τ) = (2π(t−τ))^{-1/2} exp(−|x−ξ|²/(2(t−τ))).
pub fn heat_kernel(x: f64, t: f64, xi: f64, tau: f64) -> Result<f64> {
    let dt = gap(t, tau)?;
    Ok(gaussian(x - xi, dt))
}

/// ∂ₓG(x,t;ξ,τ) = −(x−ξ)/(t−τ)·G.
pub fn heat_kernel_dx(x: f64, t: f64, xi: f64, tau: f64) -> Result<f64> {
    let dt = gap(t, tau)?;
    let d = x - xi;
    Ok(-d / dt * gaussian(d, dt))
}

#[inline]
pub(crate) fn gaussian(d: f64, dt: f64) -> f64 {
    INV_SQRT_2PI / dt.sqrt() * (-d * d / (2.0 * dt)).exp()
}

/// Ψ(z) = ∫_z^∞ (2π)^{-1/2} e^{-s²/2} ds.
pub fn normal_tail(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return 1.0;
    }
    0.5 * libm::erfc(z / SQRT_2)
}

/// ∫ h(ξ) G(x,t;ξ,0) dξ for the datum's h.
pub fn convolve_initial(datum: &InitialDatum, x: f64, t: f64) -> Result<f64> {
    gaussian_convolution(|xi| datum.h(xi), datum.support(), x, t)
}

/// ∫ f(ξ) G(x,t;ξ,0) dξ over the compact support `[a, b]`.
///
/// Gauss–Legendre panels of width at most √t/2 (and at least eight of them)
/// cover the part of the support within 10√t of `x`.
pub fn gaussian_convolution<F: Fn(f64) -> f64>(
    f: F,
    support: (f64, f64),
    x: f64,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("convolution needs t > 0 (t = {t})"));
    }
    let sd = t.sqrt();
    let lo = support.0.max(x - WINDOW * sd);
    let hi = support.1.min(x + WINDOW * sd);
    if hi <= lo {
        return Ok(0.0);
    }
    let rule = gauss8();
    let panels = panel_count(hi - lo, 0.5 * sd);
    let width = (hi - lo) / panels as f64;
    let norm = INV_SQRT_2PI / sd;
    let inv2t = 1.0 / (2.0 * t);
    let mut acc = 0.0;
    for p in 0..panels {
        let a = lo + p as f64 * width;
        acc += rule.integrate(a, a + width, |xi| {
            let d = x - xi;
            f(xi) * (-d * d * inv2t).exp()
        });
    }
    Ok(norm * acc)
}

/// ∫ f(ξ) Ψ((x−ξ)/√t) dξ over `[a, b]`, i.e. ∫ f(ξ) ∫_x^∞ G(y,t;ξ,0) dy dξ.
pub fn tail_convolution<F: Fn(f64) -> f64>(
    f: F,
    support: (f64, f64),
    x: f64,
    t: f64,
) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("convolution needs t > 0 (t = {t})"));
    }
    let sd = t.sqrt();
    let rule = gauss8();
    let lo = support.0.max(x - WINDOW * sd);
    if support.1 <= lo {
        return Ok(0.0);
    }
    // inside the window the weight varies on the √t scale; beyond it Ψ ≡ 1
    let mid = support.1.min(x + WINDOW * sd);
    let mut acc = 0.0;
    if mid > lo {
        let panels = panel_count(mid - lo, 0.5 * sd);
        let width = (mid - lo) / panels as f64;
        for p in 0..panels {
            let a = lo + p as f64 * width;
            acc += rule.integrate(a, a + width, |xi| f(xi) * normal_tail((x - xi) / sd));
        }
    }
    let start = mid.max(lo);
    if support.1 > start {
        let panels = panel_count(support.1 - start, (support.1 - support.0) / 64.0);
        let width = (support.1 - start) / panels as f64;
        for p in 0..panels {
            let a = start + p as f64 * width;
            acc += rule.integrate(a, a + width, &f);
        }
    }
    Ok(acc)
}

fn panel_count(length: f64, max_width: f64) -> usize {
    ((length / max_width).ceil() as usize).max(8)
}

/// Left-limit value of the convolution as t → 0⁺ at the left end of the
/// support: half the right-limit of f there.
pub fn half_line_limit(f_at_start: f64) -> f64 {
    0.5 * f_at_start
}
