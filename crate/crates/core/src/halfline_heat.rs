//! Heat potentials on the half line to the right of a given boundary curve.
//!
//! For a curve `L` with `L₀ = b` the function
//!
//! ```text
//! v(x,t) = ∫ h(ξ) G(x,t;ξ,0) dξ + ∫₀ᵗ G_x(x,t;L_τ,τ) φ(τ) dτ
//! ```
//!
//! solves the heat equation for `x > L_t` with `v(·,0) = h`, and the
//! boundary condition `v(L_t,t) = 2e^{-t}` turns, through the jump of the
//! single-layer potential, into a Volterra equation for the density `φ`.
//! A second Volterra equation gives the boundary gradient
//! `q(t) = v_x(L_t,t)` that drives the boundary update.
//!
//! Time integrals at arbitrary `(x, t)` use the substitution `τ = t − σ²`,
//! which turns the kernel singularity at `τ → t` into a bounded integrand
//! of width `x − L_t` in `σ`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::InitialDatum;
use crate::error::{FbpError, Result};
use crate::kernels::{gaussian_convolution, half_line_limit, INV_SQRT_2PI};
use crate::quadrature::adaptive;
use crate::volterra::{solve_weakly_singular, GridFunction, SingularKernel, TimeGrid};

/// Relative slack when testing curve membership in the Lipschitz class.
const CLASS_SLACK: f64 = 1e-9;

/// Free boundary sampled on a time grid, piecewise linear in between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    grid: TimeGrid,
    values: Vec<f64>,
    lipschitz_budget: f64,
}

impl BoundaryCurve {
    /// Curve in the class of Lipschitz curves with constant `budget`.
    pub fn new(grid: TimeGrid, values: Vec<f64>, budget: f64) -> Result<Self> {
        let curve = Self::unchecked(grid, values, budget)?;
        let seminorm = curve.seminorm();
        if seminorm > budget * (1.0 + CLASS_SLACK) {
            return Err(FbpError::CurveClass { seminorm, budget });
        }
        Ok(curve)
    }

    /// Same as [`BoundaryCurve::new`] without the Lipschitz check.
    pub fn unchecked(grid: TimeGrid, values: Vec<f64>, budget: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FbpError::Domain(format!(
                "curve has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) || !(budget >= 0.0) {
            return Err(FbpError::Domain("curve values and budget must be finite".into()));
        }
        Ok(Self { grid, values, lipschitz_budget: budget })
    }

    pub fn flat(grid: &TimeGrid, b: f64, budget: f64) -> Self {
        Self { grid: grid.clone(), values: vec![b; grid.len()], lipschitz_budget: budget }
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &TimeGrid, budget: f64, f: F) -> Result<Self> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self::new(grid.clone(), values, budget)
    }

    /// `b + Σ aₖ[sin(ωₖt + pₖ) − sin pₖ]` with four random modes whose
    /// total slope is at most `max_slope`.
    pub fn random_smooth(grid: &TimeGrid, b: f64, max_slope: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64)> = (0..4)
            .map(|_| (rng.random_range(-1.0..1.0), rng.random_range(1.0..8.0), rng.random_range(0.0..6.3)))
            .collect();
        let slope: f64 = modes.iter().map(|(a, w, _)| (a * w).abs()).sum();
        let scale = max_slope / slope;
        let values = grid
            .nodes()
            .iter()
            .map(|&t| b + scale * modes.iter().map(|(a, w, p)| a * ((w * t + p).sin() - p.sin())).sum::<f64>())
            .collect();
        Self { grid: grid.clone(), values, lipschitz_budget: max_slope }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn b(&self) -> f64 {
        self.values[0]
    }

    pub fn lipschitz_budget(&self) -> f64 {
        self.lipschitz_budget
    }

    pub fn with_budget(mut self, budget: f64) -> Self {
        self.lipschitz_budget = budget;
        self
    }

    /// Largest |ΔL/Δt| over adjacent nodes.
    pub fn seminorm(&self) -> f64 {
        (1..self.values.len())
            .map(|i| self.segment_slope(i - 1).abs())
            .fold(0.0, f64::max)
    }

    /// Slope on `[t_j, t_{j+1}]`.
    #[inline]
    pub fn segment_slope(&self, j: usize) -> f64 {
        (self.values[j + 1] - self.values[j]) / (self.grid.t(j + 1) - self.grid.t(j))
    }

    /// Backward difference at node `i` (forward difference at `i = 0`).
    pub fn slope_before(&self, i: usize) -> f64 {
        self.segment_slope(i.max(1) - 1)
    }

    /// Slope of the segment ending at or containing `t`.
    pub fn slope_at(&self, t: f64) -> f64 {
        self.segment_slope(self.segment_ending_at(t))
    }

    fn segment_ending_at(&self, t: f64) -> usize {
        // nodes are right ends of the segment to their left
        let idx = self.grid.nodes().partition_point(|&s| s < t);
        idx.clamp(1, self.grid.intervals()) - 1
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= g.horizon() {
            return *self.values.last().expect("non-empty");
        }
        let j = g.locate(t);
        self.values[j] + self.segment_slope(j) * (t - g.t(j))
    }

    /// `L_t − L_{t−s}` without cancellation for small `s`.
    pub fn drop_since(&self, t: f64, s: f64) -> f64 {
        let k = self.segment_ending_at(t);
        let tau = t - s;
        let j = if tau <= 0.0 { 0 } else { self.grid.locate(tau).min(k) };
        if j == k {
            return self.segment_slope(k) * s;
        }
        (self.value_at(t) - self.values[j + 1]) + self.segment_slope(j) * (self.grid.t(j + 1) - tau)
    }

    pub fn as_grid_function(&self) -> GridFunction {
        GridFunction { grid: self.grid.clone(), values: self.values.clone() }
    }
}

/// Whether the boundary source `2e^{-t}` is on. Switching it off is only
/// meaningful for degenerate test configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum BoundarySource {
    #[default]
    Standard,
    Zeroed,
}

impl BoundarySource {
    fn scale(self) -> f64 {
        match self {
            BoundarySource::Standard => 1.0,
            BoundarySource::Zeroed => 0.0,
        }
    }
}

/// `√(t−τ)·G_x(L_t,t;L_τ,τ)` at node pair `(i, j)`; the diagonal is the
/// limit `−L̇(tᵢ)/√(2π)` with the backward-difference slope.
fn gx_factor(curve: &BoundaryCurve, i: usize, j: usize) -> f64 {
    if j == i {
        return -curve.slope_before(i) * INV_SQRT_2PI;
    }
    let s = curve.grid.t(i) - curve.grid.t(j);
    let d = curve.values[i] - curve.values[j];
    -(d / s) * INV_SQRT_2PI * (-d * d / (2.0 * s)).exp()
}

/// `√(t−τ)·e^{-τ}·G(L_t,t;L_τ,τ)` at node pair `(i, j)`.
fn source_factor(curve: &BoundaryCurve, i: usize, j: usize) -> f64 {
    let tj = curve.grid.t(j);
    if j == i {
        return (-tj).exp() * INV_SQRT_2PI;
    }
    let s = curve.grid.t(i) - tj;
    let d = curve.values[i] - curve.values[j];
    (-tj).exp() * INV_SQRT_2PI * (-d * d / (2.0 * s)).exp()
}

fn check_compatible(curve: &BoundaryCurve, datum: &InitialDatum) -> Result<()> {
    let seminorm = curve.seminorm();
    if seminorm > curve.lipschitz_budget * (1.0 + CLASS_SLACK) {
        return Err(FbpError::CurveClass { seminorm, budget: curve.lipschitz_budget });
    }
    if (curve.b() - datum.b()).abs() > 1e-12 * datum.b().abs().max(1.0) {
        return Err(FbpError::Domain(format!(
            "curve starts at {} but the datum at {}",
            curve.b(),
            datum.b()
        )));
    }
    Ok(())
}

/// Single-layer density φ for `curve` with the boundary source on.
pub fn boundary_density(curve: &BoundaryCurve, datum: &InitialDatum) -> Result<GridFunction> {
    boundary_density_with(curve, datum, BoundarySource::Standard)
}

/// Solves `φ(t) = ψ(t) + ∫₀ᵗ G_x(L_t,t;L_τ,τ) φ(τ) dτ` with
/// `ψ(t) = −2e^{-t} + ∫ h(ξ) G(L_t,t;ξ,0) dξ`.
///
/// `φ(0)` is the limit `ψ(0⁺) = −2 + h(b)/2`: at `t → 0` the Gaussian
/// centred on the boundary sees only the half of `h` to its right.
pub fn boundary_density_with(
    curve: &BoundaryCurve,
    datum: &InitialDatum,
    source: BoundarySource,
) -> Result<GridFunction> {
    check_compatible(curve, datum)?;
    let grid = curve.grid();
    let src = source.scale();
    let forcing: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let t = grid.t(i);
            if i == 0 {
                return Ok(-2.0 * src + half_line_limit(datum.h(datum.b())));
            }
            let conv = gaussian_convolution(|xi| datum.h(xi), datum.support(), curve.values[i], t)?;
            Ok(-2.0 * src * (-t).exp() + conv)
        })
        .collect::<Result<_>>()?;
    let kernel = SingularKernel::new(|i, j| gx_factor(curve, i, j));
    solve_weakly_singular(&kernel, &GridFunction::new(grid.clone(), forcing)?)
}

/// Boundary gradient `q(t) = v_x(L_t,t)` with the boundary source on.
pub fn boundary_gradient(curve: &BoundaryCurve, datum: &InitialDatum) -> Result<GridFunction> {
    boundary_gradient_with(curve, datum, BoundarySource::Standard)
}

/// Coefficient `κ = 2(h(b) − 2·source)` of the part `κ·G(L_t,t;b,0)` of q
/// that is singular at `t = 0`. It vanishes for valid data, where the
/// initial and boundary values of v agree at the corner `(b, 0)`.
pub fn gradient_singularity(datum: &InitialDatum, source: BoundarySource) -> f64 {
    let kappa = 2.0 * (datum.h(datum.b()) - 2.0 * source.scale());
    if kappa.abs() < 1e-12 {
        0.0
    } else {
        kappa
    }
}

/// `G(L_τ,τ;b,0)`.
pub fn corner_kernel(curve: &BoundaryCurve, tau: f64) -> f64 {
    let d = curve.value_at(tau) - curve.b();
    INV_SQRT_2PI / tau.sqrt() * (-d * d / (2.0 * tau)).exp()
}

/// Solves
///
/// ```text
/// q(t) = 2∫ h′(ξ) G(L_t,t;ξ,0) dξ − ∫₀ᵗ G_x(L_t,t;L_τ,τ) q(τ) dτ + 4∫₀ᵗ e^{-τ} G(L_t,t;L_τ,τ) dτ
/// ```
///
/// with `q(0) = h′(b⁺)`. The last forcing term is itself an Abel-type
/// integral and uses the same product weights.
///
/// When [`gradient_singularity`] is nonzero the returned values are the
/// regular part `q − κG(L_t,t;b,0)`.
pub fn boundary_gradient_with(
    curve: &BoundaryCurve,
    datum: &InitialDatum,
    source: BoundarySource,
) -> Result<GridFunction> {
    check_compatible(curve, datum)?;
    let grid = curve.grid();
    let src = source.scale();
    let kappa = gradient_singularity(datum, source);
    let forcing: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            if i == 0 {
                // ∫G_x(L_t;L_τ)G(L_τ;b,0)dτ → −L̇/2
                return Ok(2.0 * half_line_limit(datum.h_xi(datum.b())) + 0.5 * kappa * curve.segment_slope(0));
            }
            let t = grid.t(i);
            let conv = gaussian_convolution(|xi| datum.h_xi(xi), datum.support(), curve.values[i], t)?;
            let boundary = if src != 0.0 {
                let w = grid.abel_weights(i);
                (0..=i).map(|j| w[j] * source_factor(curve, i, j)).sum::<f64>()
            } else {
                0.0
            };
            let corner = if kappa != 0.0 {
                two_ended_integral(grid, t, |tau, s| {
                    let d = curve.drop_since(t, s);
                    -(d / s) * INV_SQRT_2PI / s.sqrt() * (-d * d / (2.0 * s)).exp() * corner_kernel(curve, tau)
                })
            } else {
                0.0
            };
            Ok(2.0 * conv + 4.0 * src * boundary - kappa * corner)
        })
        .collect::<Result<_>>()?;
    let kernel = SingularKernel::new(|i, j| -gx_factor(curve, i, j));
    solve_weakly_singular(&kernel, &GridFunction::new(grid.clone(), forcing)?)
}

/// Everything needed to evaluate v for a fixed boundary curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldSolution {
    pub curve: BoundaryCurve,
    pub datum: InitialDatum,
    pub phi: GridFunction,
    /// Regular part of the boundary gradient.
    pub q: GridFunction,
    /// See [`gradient_singularity`]; zero for valid data.
    pub q_singular: f64,
    pub source: BoundarySource,
}

impl FieldSolution {
    /// Solves both boundary equations for `curve`.
    pub fn solve(curve: &BoundaryCurve, datum: &InitialDatum, source: BoundarySource) -> Result<Self> {
        let (phi, q) = rayon::join(
            || boundary_density_with(curve, datum, source),
            || boundary_gradient_with(curve, datum, source),
        );
        Ok(Self {
            curve: curve.clone(),
            datum: datum.clone(),
            phi: phi?,
            q: q?,
            q_singular: gradient_singularity(datum, source),
            source,
        })
    }

    /// `q(t) = v_x(L_t,t)`, including the singular part.
    pub fn gradient_at(&self, t: f64) -> f64 {
        let regular = self.q.interpolate(t);
        if self.q_singular == 0.0 {
            regular
        } else {
            regular + self.q_singular * corner_kernel(&self.curve, t)
        }
    }

    pub fn horizon(&self) -> f64 {
        self.curve.grid.horizon()
    }

    pub fn boundary_at(&self, t: f64) -> f64 {
        self.curve.value_at(t)
    }

    fn source_scale(&self) -> f64 {
        self.source.scale()
    }

    /// Right edge beyond which v and ρ are negligible: `b + s + 8√T`.
    pub fn x_max(&self) -> f64 {
        self.datum.b() + self.datum.support_width() + 8.0 * self.horizon().sqrt()
    }
}

/// Absolute and relative tolerances of the time integrals.
const TIME_ABS_TOL: f64 = 1e-10;
const TIME_REL_TOL: f64 = 1e-10;
/// Grid nodes closer than this fraction of `√t` in `σ` share a panel.
const MIN_PANEL: f64 = 1.0 / 128.0;

/// `∫₀ᵗ f(τ, t−τ) dτ` computed as `∫₀^{√t} f(t−σ², σ²) 2σ dσ`, split at the
/// grid nodes (merged into panels no shorter than `MIN_PANEL·√t`) and at
/// multiples of the spatial offset `offset`.
fn sigma_integral<F: Fn(f64, f64) -> f64>(grid: &TimeGrid, t: f64, offset: f64, f: F) -> f64 {
    sigma_integral_to(grid, t, offset, t.sqrt(), f)
}

/// As [`sigma_integral`] over `τ ∈ [t − σ_max², t]`.
fn sigma_integral_to<F: Fn(f64, f64) -> f64>(grid: &TimeGrid, t: f64, offset: f64, sigma_max: f64, f: F) -> f64 {
    let root = t.sqrt();
    let mut bps: Vec<f64> = Vec::with_capacity(grid.len() + 12);
    bps.push(0.0);
    let min_gap = root * MIN_PANEL;
    for &tj in grid.nodes().iter().rev() {
        if tj < t {
            let sigma = (t - tj).sqrt();
            if sigma >= sigma_max {
                break;
            }
            if sigma - bps[bps.len() - 1] >= min_gap {
                bps.push(sigma);
            }
        }
    }
    if offset > 0.0 {
        let mut s = offset / 16.0;
        while s < sigma_max && s < 16.0 * offset {
            bps.push(s);
            s *= 2.0;
        }
    }
    bps.push(sigma_max);
    bps.sort_by(f64::total_cmp);
    bps.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * root);
    adaptive(
        |sigma| {
            let s = sigma * sigma;
            f(t - s, s) * 2.0 * sigma
        },
        &bps,
        TIME_ABS_TOL,
        TIME_REL_TOL,
    )
}

/// `∫₀ᵗ f(τ, t−τ) dτ` for integrands with inverse square-root
/// singularities at both ends: `τ = u²` on `[0, t/2]` and `τ = t − σ²`
/// on `[t/2, t]`.
fn two_ended_integral<F: Fn(f64, f64) -> f64>(grid: &TimeGrid, t: f64, f: F) -> f64 {
    let half = (0.5 * t).sqrt();
    let upper = sigma_integral_to(grid, t, 0.0, half, &f);
    let mut bps: Vec<f64> = vec![0.0];
    let min_gap = half * MIN_PANEL;
    for &tj in grid.nodes() {
        let u = tj.sqrt();
        if u >= half {
            break;
        }
        if u - bps[bps.len() - 1] >= min_gap {
            bps.push(u);
        }
    }
    bps.push(half);
    let lower = adaptive(|u| f(u * u, t - u * u) * 2.0 * u, &bps, TIME_ABS_TOL, TIME_REL_TOL);
    lower + upper
}

fn check_point(curve: &BoundaryCurve, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) || t > curve.grid.horizon() * (1.0 + 1e-12) {
        return Err(FbpError::Domain(format!("t = {t} outside (0, T]")));
    }
    let offset = x - curve.value_at(t);
    if offset < -1e-12 * x.abs().max(1.0) || !x.is_finite() {
        return Err(FbpError::Domain(format!("x = {x} lies left of the boundary at t = {t}")));
    }
    Ok(offset.max(0.0))
}

/// `w_φ(x,t) = ∫₀ᵗ G(x,t;L_τ,τ) φ(τ) dτ` for `x ≥ L_t`.
pub fn single_layer_potential(phi: &GridFunction, curve: &BoundaryCurve, x: f64, t: f64) -> Result<f64> {
    let offset = check_point(curve, x, t)?;
    Ok(sigma_integral(curve.grid(), t, offset, |tau, s| {
        let d = offset + curve.drop_since(t, s);
        INV_SQRT_2PI / s.sqrt() * (-d * d / (2.0 * s)).exp() * phi.interpolate(tau)
    }))
}

/// `∫₀ᵗ G_x(x,t;L_τ,τ) f(τ) dτ` with `x = L_t + offset`. At `offset = 0`
/// this is the boundary value of the integral, not the one-sided limit.
fn double_layer_integral(curve: &BoundaryCurve, f: &GridFunction, offset: f64, t: f64) -> f64 {
    sigma_integral(curve.grid(), t, offset, |tau, s| {
        let d = offset + curve.drop_since(t, s);
        -(d / s) * INV_SQRT_2PI / s.sqrt() * (-d * d / (2.0 * s)).exp() * f.interpolate(tau)
    })
}

/// Limit of `∂ₓw_φ` as `x → L_t⁺`: `−φ(t) + ∫₀ᵗ G_x(L_t,t;L_τ,τ)φ(τ)dτ`.
pub fn jump_limit(phi: &GridFunction, curve: &BoundaryCurve, t: f64) -> Result<f64> {
    check_point(curve, curve.value_at(t), t)?;
    Ok(-phi.interpolate(t) + double_layer_integral(curve, phi, 0.0, t))
}

/// v(x,t) from the single-layer representation. At `x = L_t` the boundary
/// limit is returned.
pub fn evaluate_v(field: &FieldSolution, x: f64, t: f64) -> Result<f64> {
    let offset = check_point(&field.curve, x, t)?;
    let initial = gaussian_convolution(|xi| field.datum.h(xi), field.datum.support(), x, t)?;
    if offset == 0.0 {
        return Ok(initial - field.phi.interpolate(t) + double_layer_integral(&field.curve, &field.phi, 0.0, t));
    }
    Ok(initial + double_layer_integral(&field.curve, &field.phi, offset, t))
}

/// v(x,t) from Green's identity on the moving domain:
///
/// ```text
/// v = ∫hG − ½∫₀ᵗ G q dτ + ∫₀ᵗ e^{-τ} [G_ξ − 2L̇_τ G] dτ
/// ```
///
/// with `G = G(x,t;L_τ,τ)`. The `L̇_τ` term is the flux of `vG` through the
/// moving boundary and vanishes for a flat curve.
pub fn evaluate_v_greens(field: &FieldSolution, x: f64, t: f64) -> Result<f64> {
    let offset = check_point(&field.curve, x, t)?;
    if offset == 0.0 {
        return Err(FbpError::Domain("Green's representation is evaluated off the boundary".into()));
    }
    let curve = &field.curve;
    let src = field.source_scale();
    let initial = gaussian_convolution(|xi| field.datum.h(xi), field.datum.support(), x, t)?;
    let boundary = sigma_integral(curve.grid(), t, offset, |tau, s| {
        let d = offset + curve.drop_since(t, s);
        let g = INV_SQRT_2PI / s.sqrt() * (-d * d / (2.0 * s)).exp();
        let g_xi = d / s * g;
        let flux = src * (-tau).exp() * (g_xi - 2.0 * curve.slope_at(tau) * g);
        -0.5 * g * field.q.interpolate(tau) + flux
    });
    let corner = if field.q_singular != 0.0 {
        -0.5 * field.q_singular
            * two_ended_integral(curve.grid(), t, |tau, s| {
                let d = offset + curve.drop_since(t, s);
                INV_SQRT_2PI / s.sqrt() * (-d * d / (2.0 * s)).exp() * corner_kernel(curve, tau)
            })
    } else {
        0.0
    };
    Ok(initial + boundary + corner)
}

/// Sup-norm bound on `q` obtained from the Gronwall-type inequality of the
/// boundary-gradient equation, with estimated constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallDiagnostic {
    /// Kernel constant `A/√(2π)`, with `A` the curve's measured seminorm.
    pub c1: f64,
    /// Source constant `4/√(2π)`.
    pub c2: f64,
    /// `sup |h′|`.
    pub c3: f64,
    /// `(1 + 2C₁√T)·exp(πC₁²T)·(C₂√T + C₃)`.
    pub bound: f64,
    pub sup_q: f64,
    /// Largest `|q(t)| / [(1+2C₁√T)e^{πC₁²T}(C₂√t + C₃)]` over the grid.
    pub worst_ratio: f64,
}

impl GronwallDiagnostic {
    /// The bound controls `½|q|`, hence the factor 2.
    pub const SAFETY: f64 = 2.0;

    pub fn holds(&self) -> bool {
        self.worst_ratio <= Self::SAFETY
    }
}

pub const GRONWALL_C2: f64 = 4.0 * INV_SQRT_2PI;

/// `(1 + 2C₁√T)·exp(πC₁²T)`.
pub fn gronwall_factor(c1: f64, horizon: f64) -> f64 {
    (1.0 + 2.0 * c1 * horizon.sqrt()) * (std::f64::consts::PI * c1 * c1 * horizon).exp()
}

pub fn gronwall_diagnostic(curve: &BoundaryCurve, datum: &InitialDatum, q: &GridFunction) -> GronwallDiagnostic {
    let horizon = curve.grid().horizon();
    let c1 = curve.seminorm() * INV_SQRT_2PI;
    let c2 = GRONWALL_C2;
    let c3 = datum.sup_h_xi();
    let factor = gronwall_factor(c1, horizon);
    let worst_ratio = q
        .grid
        .nodes()
        .iter()
        .zip(&q.values)
        .map(|(&t, v)| v.abs() / (factor * (c2 * t.sqrt() + c3)))
        .fold(0.0, f64::max);
    GronwallDiagnostic {
        c1,
        c2,
        c3,
        bound: factor * (c2 * horizon.sqrt() + c3),
        sup_q: q.sup_norm(),
        worst_ratio,
    }
}

/// Richardson extrapolation to `ε → 0` of samples at `4ε, 2ε, ε`, assuming
/// an expansion `f₀ + aε + bε² + …`.
pub fn richardson3(f4: f64, f2: f64, f1: f64) -> f64 {
    let r_fine = 2.0 * f1 - f2;
    let r_coarse = 2.0 * f2 - f4;
    (4.0 * r_fine - r_coarse) / 3.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    fn flat(m: usize, t: f64) -> BoundaryCurve {
        BoundaryCurve::flat(&TimeGrid::uniform(t, m).unwrap(), 1.0, 1.0)
    }

    #[test]
    fn flat_curve_zero_datum_density() {
        let curve = flat(64, 0.5);
        let phi = boundary_density(&curve, &InitialDatum::zero(1.0)).unwrap();
        for (t, p) in curve.grid().nodes().iter().zip(&phi.values) {
            assert!((p + 2.0 * (-t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn density_starts_at_half_line_limit() {
        let curve = flat(256, 0.25);
        let datum = InitialDatum::quartic(1.0);
        let phi = boundary_density(&curve, &datum).unwrap();
        assert_eq!(phi.values[0], -1.0);
        // ψ(t) → −2 + h(b)/2 = −1, continuously
        assert!((phi.values[1] + 1.0).abs() < 0.05);
    }

    #[test]
    fn zero_forcing_gives_zero_gradient() {
        let grid = TimeGrid::uniform(0.25, 32).unwrap();
        let curve = BoundaryCurve::from_fn(&grid, 2.0, |t| 1.0 + t).unwrap();
        let q = boundary_gradient_with(&curve, &InitialDatum::zero(1.0), BoundarySource::Zeroed).unwrap();
        assert!(q.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn class_violations_are_rejected() {
        let grid = TimeGrid::uniform(1.0, 8).unwrap();
        let err = BoundaryCurve::from_fn(&grid, 0.5, |t| 1.0 + t).unwrap_err();
        assert!(matches!(err, FbpError::CurveClass { .. }));
        let curve = BoundaryCurve::flat(&grid, 2.0, 1.0);
        assert!(boundary_density(&curve, &InitialDatum::quartic(1.0)).is_err());
    }

    #[test]
    fn drop_since_is_exact_on_segments() {
        let grid = TimeGrid::uniform(1.0, 4).unwrap();
        let curve = BoundaryCurve::from_fn(&grid, 10.0, |t| (3.0 * t).sin()).unwrap();
        for &(t, s) in &[(0.5, 1e-12), (0.6, 0.3), (1.0, 1.0), (0.25, 0.1)] {
            let direct = curve.value_at(t) - curve.value_at(t - s);
            assert!((curve.drop_since(t, s) - direct).abs() < 1e-14);
        }
        assert!((curve.drop_since(0.5, 1e-12) / 1e-12 - curve.segment_slope(1)).abs() < 1e-9);
    }

    #[test]
    fn single_layer_potential_simple_cases() {
        let curve = flat(64, 0.25);
        let zero = GridFunction::constant(curve.grid(), 0.0);
        assert_eq!(single_layer_potential(&zero, &curve, 1.3, 0.2).unwrap(), 0.0);
        let one = GridFunction::constant(curve.grid(), 1.0);
        let far = single_layer_potential(&one, &curve, 1.0 + 10.0 * 0.5 + 0.01, 0.25).unwrap();
        assert!(far < 1e-12);
        assert!(single_layer_potential(&one, &curve, 0.9, 0.2).is_err());
        // flat boundary, φ ≡ 1: ∫₀ᵗ (2πs)^{-1/2} ds = √(2t/π)
        let at = single_layer_potential(&one, &curve, 1.0, 0.2).unwrap();
        assert!((at - (0.4 / std::f64::consts::PI).sqrt()).abs() < 1e-11);
    }

    #[test]
    fn flat_jump_relation() {
        let curve = flat(64, 0.25);
        let one = GridFunction::constant(curve.grid(), 1.0);
        let t = 0.2;
        let w0 = single_layer_potential(&one, &curve, 1.0, t).unwrap();
        let dq = |e: f64| (single_layer_potential(&one, &curve, 1.0 + e, t).unwrap() - w0) / e;
        let e = 1e-4;
        let lim = richardson3(dq(4.0 * e), dq(2.0 * e), dq(e));
        assert!((lim + 1.0).abs() < 1e-6, "{lim}");
        assert!((jump_limit(&one, &curve, t).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_field_is_zero() {
        let curve = flat(16, 0.25);
        let field = FieldSolution {
            curve: curve.clone(),
            datum: InitialDatum::zero(1.0),
            phi: GridFunction::constant(curve.grid(), 0.0),
            q: GridFunction::constant(curve.grid(), 0.0),
            q_singular: 0.0,
            source: BoundarySource::Zeroed,
        };
        assert_eq!(evaluate_v(&field, 1.2, 0.1).unwrap(), 0.0);
        assert_eq!(evaluate_v_greens(&field, 1.2, 0.1).unwrap(), 0.0);
        assert!(evaluate_v(&field, 0.5, 0.1).is_err());
        assert!(evaluate_v(&field, 1.5, 0.0).is_err());
    }

    #[test]
    fn flat_zero_datum_boundary_trace() {
        let curve = flat(256, 0.25);
        let field = FieldSolution::solve(&curve, &InitialDatum::zero(1.0), BoundarySource::Standard).unwrap();
        for &t in &[0.0625, 0.125, 0.25] {
            let v = |e: f64| evaluate_v(&field, 1.0 + e, t).unwrap();
            let e = 1e-4;
            let lim = richardson3(v(4.0 * e), v(2.0 * e), v(e));
            assert!((lim - 2.0 * (-t).exp()).abs() < 1e-6, "t={t} lim={lim}");
            assert!((v(0.0) - 2.0 * (-t).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn wave_gradient_matches_closed_form() {
        let grid = TimeGrid::uniform(0.25, 256).unwrap();
        let datum = InitialDatum::traveling_wave(1.0, SQRT_2).unwrap();
        let curve = BoundaryCurve::from_fn(&grid, 2.0, |t| 1.0 + SQRT_2 * t).unwrap();
        let q = boundary_gradient(&curve, &datum).unwrap();
        for (t, v) in grid.nodes().iter().zip(&q.values) {
            let exact = -4.0 * SQRT_2 * (-t).exp();
            assert!(((v - exact) / exact).abs() < 1e-2, "t={t}: {v} vs {exact}");
        }
        let diag = gronwall_diagnostic(&curve, &datum, &q);
        assert!(diag.holds(), "{diag:?}");
    }

    #[test]
    fn richardson_removes_linear_and_quadratic_terms() {
        let f = |e: f64| 3.0 + 2.0 * e - 5.0 * e * e;
        assert!((richardson3(f(0.4), f(0.2), f(0.1)) - 3.0).abs() < 1e-13);
    }
}
