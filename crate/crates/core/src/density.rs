//! Reconstruction of ρ from v and the checks of the original problem.

use std::f64::consts::SQRT_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::InitialDatum;
use crate::error::{FbpError, Result};
use crate::halfline_heat::{evaluate_v, richardson3, single_layer_potential, FieldSolution};
use crate::kernels::tail_convolution;
use crate::quadrature::{adaptive, gauss8};

/// Closed-form traveling wave ρ(x,t) = w(x − b − ct), the profile solving
/// `½w″ + cw′ + w = 0`, `w(0) = 0`, `w′(0) = 2`, `∫w = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelingWave {
    pub c: f64,
    pub lam1: f64,
    pub lam2: f64,
    pub amplitude: f64,
}

/// Speeds within this distance of √2 use the double-root form.
const CRITICAL_GAP: f64 = 1e-12;

impl TravelingWave {
    pub fn new(c: f64) -> Result<Self> {
        if !(c >= SQRT_2 - CRITICAL_GAP) || !c.is_finite() {
            return Err(FbpError::Domain(format!(
                "traveling waves need c ≥ √2 (got {c}); slower profiles change sign"
            )));
        }
        if self::is_critical(c) {
            return Ok(Self { c, lam1: -SQRT_2, lam2: -SQRT_2, amplitude: 2.0 });
        }
        let disc = (c * c - 2.0).sqrt();
        let lam1 = -c + disc;
        let lam2 = -c - disc;
        Ok(Self { c, lam1, lam2, amplitude: 2.0 / (lam1 - lam2) })
    }

    pub fn critical() -> Self {
        Self::new(SQRT_2).expect("√2 is admissible")
    }

    fn critical_form(&self) -> bool {
        self.lam1 == self.lam2
    }

    /// Smallest decay rate |λ₁|.
    pub fn slow_decay_rate(&self) -> f64 {
        self.lam1.abs()
    }

    pub fn w(&self, u: f64) -> f64 {
        if u < 0.0 {
            return 0.0;
        }
        if self.critical_form() {
            2.0 * u * (-SQRT_2 * u).exp()
        } else {
            self.amplitude * ((self.lam1 * u).exp() - (self.lam2 * u).exp())
        }
    }

    pub fn dw(&self, u: f64) -> f64 {
        if self.critical_form() {
            (2.0 - 2.0 * SQRT_2 * u) * (-SQRT_2 * u).exp()
        } else {
            self.amplitude * (self.lam1 * (self.lam1 * u).exp() - self.lam2 * (self.lam2 * u).exp())
        }
    }

    pub fn d2w(&self, u: f64) -> f64 {
        if self.critical_form() {
            (4.0 * u - 4.0 * SQRT_2) * (-SQRT_2 * u).exp()
        } else {
            self.amplitude
                * (self.lam1 * self.lam1 * (self.lam1 * u).exp()
                    - self.lam2 * self.lam2 * (self.lam2 * u).exp())
        }
    }

    /// ∫₀^U w in closed form.
    pub fn mass_up_to(&self, u: f64) -> f64 {
        if self.critical_form() {
            let a = SQRT_2;
            2.0 * (1.0 / (a * a) - (-a * u).exp() * (u / a + 1.0 / (a * a)))
        } else {
            let (l1, l2) = (self.lam1, self.lam2);
            self.amplitude * (((l1 * u).exp() - 1.0) / l1 - ((l2 * u).exp() - 1.0) / l2)
        }
    }
}

fn is_critical(c: f64) -> bool {
    (c - SQRT_2).abs() <= CRITICAL_GAP
}

/// Closed-form wave fixture of speed `c`.
pub fn traveling_wave(c: f64) -> Result<TravelingWave> {
    TravelingWave::new(c)
}

/// Nodes of a [`DensitySnapshot`].
pub const SNAPSHOT_NODES: usize = 512;
/// `ε₀ = (x_max − b) / BOUNDARY_STEP_DIVISOR` for the one-sided boundary
/// differences.
pub const BOUNDARY_STEP_DIVISOR: f64 = 2048.0;

/// ρ and v at one time on `SNAPSHOT_NODES` nodes of `[L_t, x_max]`,
/// clustered quadratically towards the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub t: f64,
    pub x_nodes: Vec<f64>,
    pub rho_values: Vec<f64>,
    pub v_values: Vec<f64>,
    pub mass: f64,
    pub boundary_slope: f64,
    pub boundary_curvature: f64,
    /// Smallest ρ on the nodes; slightly negative values are reported, not rejected.
    pub min_rho: f64,
}

/// The default quartic datum `ρ₀(x) = 2u(1 − u/√10)³`, `u = x − b`.
pub fn make_initial_datum(b: f64) -> InitialDatum {
    InitialDatum::quartic(b)
}

fn check_time(field: &FieldSolution, t: f64) -> Result<()> {
    if !(t >= 0.0) || t > field.horizon() * (1.0 + 1e-12) {
        return Err(FbpError::Domain(format!("t = {t} outside [0, T]")));
    }
    Ok(())
}

fn check_interior_time(field: &FieldSolution, t: f64) -> Result<()> {
    check_time(field, t)?;
    if t == 0.0 {
        return Err(FbpError::Domain("t must be positive".into()));
    }
    Ok(())
}

/// `ρ(x,t) = eᵗ ∫_{L_t}^x v(y,t) dy`; at `t = 0` this is ρ₀.
pub fn reconstruct_rho(field: &FieldSolution, x: f64, t: f64) -> Result<f64> {
    check_time(field, t)?;
    if t == 0.0 {
        if x < field.datum.b() {
            return Err(FbpError::Domain(format!("x = {x} lies left of b")));
        }
        return Ok(field.datum.rho0(x));
    }
    let lt = field.boundary_at(t);
    if x < lt - 1e-12 * lt.abs().max(1.0) {
        return Err(FbpError::Domain(format!("x = {x} lies left of the boundary at t = {t}")));
    }
    if x <= lt {
        return Ok(0.0);
    }
    let width = x - lt;
    let mut bps: Vec<f64> = (0..8).map(|k| lt + width * 0.5f64.powi(8 - k)).collect();
    bps.insert(0, lt);
    bps.push(x);
    let integral = adaptive(|y| evaluate_v(field, y, t).unwrap_or(f64::NAN), &bps, 1e-11, 1e-10);
    Ok(t.exp() * integral)
}

/// ρ from the potentials directly:
/// `ρ = eᵗ[∫₀ᵗ G(x,t;L_τ,τ)φ(τ)dτ − ∫ h(ξ) Ψ((x−ξ)/√t) dξ]`, with `Ψ` the
/// standard normal tail.
pub fn rho_by_potentials(field: &FieldSolution, x: f64, t: f64) -> Result<f64> {
    check_interior_time(field, t)?;
    let layer = single_layer_potential(&field.phi, &field.curve, x, t)?;
    let datum = &field.datum;
    let tail = tail_convolution(|xi| datum.h(xi), datum.support(), x, t)?;
    Ok(t.exp() * (layer - tail))
}

/// Panel edges on `[lt, x_max]`, geometrically refined towards `lt`.
fn spatial_panels(lt: f64, x_max: f64) -> Vec<f64> {
    let w = x_max - lt;
    let mut edges = vec![lt];
    edges.extend((1..=9).map(|k| lt + w * 0.5f64.powi(10 - k)));
    edges.extend([0.5, 0.625, 0.75, 0.875].iter().map(|r| lt + w * r));
    edges.push(x_max);
    edges
}

/// `(∫ρ, ∫v)` over `[L_t, x_max]` from one set of evaluations of v;
/// `∫ρ = eᵗ∫(x_max − y)v(y)dy`.
pub fn conservation(field: &FieldSolution, t: f64) -> Result<(f64, f64)> {
    check_time(field, t)?;
    if t == 0.0 {
        let datum = &field.datum;
        return Ok((datum.mass(), datum.integrate(|x| datum.h(x))));
    }
    let lt = field.boundary_at(t);
    let x_max = field.x_max();
    let rule = gauss8();
    let edges = spatial_panels(lt, x_max);
    let points: Vec<(f64, f64)> = edges
        .windows(2)
        .flat_map(|e| {
            let (half, mid) = (0.5 * (e[1] - e[0]), 0.5 * (e[1] + e[0]));
            rule.nodes.iter().zip(&rule.weights).map(move |(&z, &w)| (mid + half * z, w * half))
        })
        .collect();
    let values: Vec<f64> = points
        .par_iter()
        .map(|&(y, _)| evaluate_v(field, y, t))
        .collect::<Result<_>>()?;
    let mut moment = 0.0;
    let mut total = 0.0;
    for (&(y, w), v) in points.iter().zip(&values) {
        moment += w * (x_max - y) * v;
        total += w * v;
    }
    Ok((t.exp() * moment, total))
}

/// `∫_{L_t}^{x_max} ρ(x,t) dx` with `x_max = b + s + 8√T`.
pub fn mass(field: &FieldSolution, t: f64) -> Result<f64> {
    conservation(field, t).map(|(m, _)| m)
}

/// `∫_{L_t}^{x_max} v(x,t) dx`.
pub fn v_mass(field: &FieldSolution, t: f64) -> Result<f64> {
    conservation(field, t).map(|(_, v)| v)
}

/// `ε₀ = (x_max − b)/2048`.
pub fn boundary_step(field: &FieldSolution) -> f64 {
    (field.x_max() - field.datum.b()) / BOUNDARY_STEP_DIVISOR
}

/// `ρ(L_t + ε, t)` by an 8-point rule on `[L_t, L_t + ε]`.
fn rho_near_boundary(field: &FieldSolution, t: f64, eps: f64) -> Result<f64> {
    let lt = field.boundary_at(t);
    let rule = gauss8();
    let mut err = None;
    let integral = rule.integrate(lt, lt + eps, |y| {
        evaluate_v(field, y, t).unwrap_or_else(|e| {
            err = Some(e);
            0.0
        })
    });
    match err {
        Some(e) => Err(e),
        None => Ok(t.exp() * integral),
    }
}

/// ρ_x(L_t,t): extrapolated `ρ(L_t+ε)/ε` over `ε ∈ {4ε₀, 2ε₀, ε₀}`.
pub fn boundary_slope(field: &FieldSolution, t: f64) -> Result<f64> {
    check_time(field, t)?;
    if t == 0.0 {
        return Ok(field.datum.h(field.datum.b()));
    }
    let e = boundary_step(field);
    let d = |k: f64| rho_near_boundary(field, t, k * e).map(|r| r / (k * e));
    Ok(richardson3(d(4.0)?, d(2.0)?, d(1.0)?))
}

/// ρ_xx(L_t,t): extrapolated `[ρ(L_t+2ε) − 2ρ(L_t+ε)]/ε²`.
pub fn boundary_curvature(field: &FieldSolution, t: f64) -> Result<f64> {
    check_interior_time(field, t)?;
    let e = boundary_step(field);
    let d = |k: f64| -> Result<f64> {
        let h = k * e;
        Ok((rho_near_boundary(field, t, 2.0 * h)? - 2.0 * rho_near_boundary(field, t, h)?) / (h * h))
    };
    Ok(richardson3(d(4.0)?, d(2.0)?, d(1.0)?))
}

/// `v(L_t⁺, t)` extrapolated from `v(L_t + ε)` at `ε ∈ {4ε₀, 2ε₀, ε₀}`.
pub fn boundary_trace(field: &FieldSolution, t: f64) -> Result<f64> {
    check_interior_time(field, t)?;
    let lt = field.boundary_at(t);
    let e = boundary_step(field);
    let v = |k: f64| evaluate_v(field, lt + k * e, t);
    Ok(richardson3(v(4.0)?, v(2.0)?, v(1.0)?))
}

/// `(L̇, −¼ρ_xx(L_t,t))` at the grid node nearest to `t`, with `L̇` the
/// centered difference of the curve.
pub fn stefan_velocity_check(field: &FieldSolution, t: f64) -> Result<(f64, f64)> {
    check_interior_time(field, t)?;
    let grid = field.curve.grid();
    let i = grid
        .nodes()
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map(|(i, _)| i)
        .expect("non-empty grid");
    if i == 0 || i == grid.intervals() {
        return Err(FbpError::Domain(format!("t = {t} is not interior to the grid")));
    }
    let l = field.curve.values();
    let lhs = (l[i + 1] - l[i - 1]) / (grid.t(i + 1) - grid.t(i - 1));
    let rhs = -0.25 * boundary_curvature(field, grid.t(i))?;
    Ok((lhs, rhs))
}

/// Snapshot of ρ and v at `t`; ρ is accumulated with Simpson's rule
/// between the nodes.
pub fn snapshot(field: &FieldSolution, t: f64) -> Result<DensitySnapshot> {
    check_interior_time(field, t)?;
    let lt = field.boundary_at(t);
    let width = field.x_max() - lt;
    let n = SNAPSHOT_NODES;
    let x_nodes: Vec<f64> = (0..n)
        .map(|k| {
            let r = k as f64 / (n - 1) as f64;
            lt + width * r * r
        })
        .collect();
    let sample: Vec<f64> = (0..2 * n - 1)
        .map(|k| if k % 2 == 0 { x_nodes[k / 2] } else { 0.5 * (x_nodes[k / 2] + x_nodes[k / 2 + 1]) })
        .collect();
    let v_all: Vec<f64> = sample
        .par_iter()
        .map(|&x| evaluate_v(field, x, t))
        .collect::<Result<_>>()?;
    let scale = t.exp();
    let mut rho_values = Vec::with_capacity(n);
    rho_values.push(0.0);
    for k in 1..n {
        let h = x_nodes[k] - x_nodes[k - 1];
        let inc = h / 6.0 * (v_all[2 * k - 2] + 4.0 * v_all[2 * k - 1] + v_all[2 * k]);
        rho_values.push(rho_values[k - 1] + scale * inc);
    }
    let v_values: Vec<f64> = v_all.iter().step_by(2).copied().collect();
    let min_rho = rho_values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DensitySnapshot {
        t,
        mass: mass(field, t)?,
        boundary_slope: boundary_slope(field, t)?,
        boundary_curvature: boundary_curvature(field, t)?,
        x_nodes,
        rho_values,
        v_values,
        min_rho,
    })
}
