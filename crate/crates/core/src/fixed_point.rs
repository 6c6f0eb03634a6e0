//! The boundary map `K[L](t) = b − ¼∫₀ᵗ e^τ q(τ) dτ` and a damped Picard
//! iteration for its fixed point.

use serde::{Deserialize, Serialize};

use crate::datum::InitialDatum;
use crate::error::{FbpError, Result};
use crate::halfline_heat::{
    boundary_gradient_with, corner_kernel, gradient_singularity, gronwall_factor, BoundaryCurve, BoundarySource,
    FieldSolution, GRONWALL_C2,
};
use crate::kernels::INV_SQRT_2PI;
use crate::quadrature::{cumulative_trapezoid, gauss8};
use crate::volterra::{GridFunction, GridSpacing, TimeGrid, DEFAULT_INTERVALS};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const MAX_HALVINGS: usize = 6;
/// Safety factor applied to the Gronwall estimate in [`lipschitz_budget`].
pub const BUDGET_SAFETY: f64 = 1.5;
const BUDGET_SWEEPS: usize = 3;
/// Non-decreasing residuals in a row that switch the damping to the fallback.
const STALL_LIMIT: usize = 3;
pub const FALLBACK_DAMPING: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub b: f64,
    pub horizon: f64,
    pub intervals: usize,
    pub spacing: GridSpacing,
    /// `None` selects [`lipschitz_budget`] for the datum and horizon.
    pub lipschitz_budget: Option<f64>,
    pub damping: f64,
    pub tol_fp: f64,
    pub max_iter: usize,
    pub adaptive_horizon: bool,
    pub source: BoundarySource,
}

impl SolverConfig {
    pub fn new(b: f64, horizon: f64) -> Self {
        Self {
            b,
            horizon,
            intervals: DEFAULT_INTERVALS,
            spacing: GridSpacing::Uniform,
            lipschitz_budget: None,
            damping: 1.0,
            tol_fp: DEFAULT_TOLERANCE,
            max_iter: DEFAULT_MAX_ITER,
            adaptive_horizon: true,
            source: BoundarySource::Standard,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FbpError::Config(m.to_string()));
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad("T must be positive");
        }
        if !self.b.is_finite() {
            return bad("b must be finite");
        }
        if self.intervals < 2 {
            return bad("M must be at least 2");
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping must lie in (0, 1]");
        }
        if !(self.tol_fp > 0.0) {
            return bad("tol_fp must be positive");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1");
        }
        if let Some(a) = self.lipschitz_budget {
            if !(a > 0.0) || !a.is_finite() {
                return bad("A must be positive and finite");
            }
        }
        Ok(())
    }

    fn budget_for(&self, datum: &InitialDatum, horizon: f64) -> f64 {
        self.lipschitz_budget.unwrap_or_else(|| lipschitz_budget(datum, horizon))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub iterates: usize,
    /// `sup |K[L] − L|` at the returned curve.
    pub final_residual: f64,
    /// Residual `sup |K[Lᵏ] − Lᵏ|` of every iterate of the last attempt.
    pub residuals: Vec<f64>,
    pub contraction_ratios: Vec<f64>,
    pub lipschitz_seminorm: f64,
    pub lipschitz_budget: f64,
    pub horizon_used: f64,
    pub halvings: usize,
    pub damping_used: f64,
    /// Largest second difference of L divided by the step, i.e. the largest
    /// slope change between adjacent segments.
    pub slope_variation: f64,
}

/// Result of [`solve_fbp`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FbpSolution {
    pub curve: BoundaryCurve,
    pub field: FieldSolution,
    pub report: FixedPointReport,
}

pub fn lipschitz_seminorm(curve: &BoundaryCurve) -> f64 {
    curve.seminorm()
}

/// Recommended Lipschitz constant
/// `A = ¼eᵀ(1+2Ĉ₁√T)exp(πĈ₁²T)(Ĉ₂√T+Ĉ₃)·1.5` with `Ĉ₁ = A/√(2π)`,
/// resolved by three sweeps from `A = 0`. The sweeps can grow very fast
/// when the implicit equation has no solution; the returned value is then
/// large and the budget check is effectively inactive.
pub fn lipschitz_budget(datum: &InitialDatum, horizon: f64) -> f64 {
    let c3 = datum.sup_h_xi();
    let mut a = 0.0;
    for _ in 0..BUDGET_SWEEPS {
        let c1 = a * INV_SQRT_2PI;
        a = 0.25 * horizon.exp() * gronwall_factor(c1, horizon) * (GRONWALL_C2 * horizon.sqrt() + c3) * BUDGET_SAFETY;
    }
    a
}

/// `b − ¼∫₀ᵗ e^τ q(τ) dτ` by the composite trapezoid rule.
pub fn k_from_gradient(b: f64, q: &GridFunction) -> Vec<f64> {
    let nodes = q.grid.nodes();
    let integrand: Vec<f64> = nodes.iter().zip(&q.values).map(|(t, v)| t.exp() * v).collect();
    cumulative_trapezoid(nodes, &integrand)
        .into_iter()
        .map(|c| b - 0.25 * c)
        .collect()
}

/// `∫₀^{tᵢ} e^τ G(L_τ,τ;b,0) dτ` at every node, integrated in `u = √τ`.
fn corner_cumulative(curve: &BoundaryCurve) -> Vec<f64> {
    let nodes = curve.grid().nodes();
    let rule = gauss8();
    let mut out = vec![0.0];
    for w in nodes.windows(2) {
        let inc = rule.integrate(w[0].sqrt(), w[1].sqrt(), |u| {
            let tau = u * u;
            tau.exp() * corner_kernel(curve, tau) * 2.0 * u
        });
        out.push(out[out.len() - 1] + inc);
    }
    out
}

/// `K[L]` at the nodes from the regular gradient `q` and the coefficient
/// `kappa` of its singular part.
pub fn k_image(curve: &BoundaryCurve, b: f64, q: &GridFunction, kappa: f64) -> Vec<f64> {
    let mut values = k_from_gradient(b, q);
    if kappa != 0.0 {
        for (v, c) in values.iter_mut().zip(corner_cumulative(curve)) {
            *v -= 0.25 * kappa * c;
        }
    }
    values
}

/// `K[L]` together with the gradient it was built from.
pub fn apply_k_with(
    curve: &BoundaryCurve,
    datum: &InitialDatum,
    source: BoundarySource,
) -> Result<(BoundaryCurve, GridFunction)> {
    let q = boundary_gradient_with(curve, datum, source)?;
    let values = k_image(curve, datum.b(), &q, gradient_singularity(datum, source));
    let budget = curve.lipschitz_budget();
    let image = BoundaryCurve::unchecked(curve.grid().clone(), values, budget)?;
    let seminorm = image.seminorm();
    if seminorm > budget {
        return Err(FbpError::Budget { seminorm, budget });
    }
    Ok((image, q))
}

#[allow(non_snake_case)]
pub fn apply_K(curve: &BoundaryCurve, datum: &InitialDatum) -> Result<BoundaryCurve> {
    apply_k_with(curve, datum, BoundarySource::Standard).map(|(c, _)| c)
}

fn sup_difference(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn slope_variation(curve: &BoundaryCurve) -> f64 {
    let g = curve.grid();
    (1..g.intervals())
        .map(|i| (curve.segment_slope(i) - curve.segment_slope(i - 1)).abs())
        .fold(0.0, f64::max)
}

enum Attempt {
    Done(FbpSolution),
    OverBudget { seminorm: f64, budget: f64 },
}

/// Damped Picard iteration `Lᵏ⁺¹ = (1−θ)Lᵏ + θK[Lᵏ]` from `L⁰ ≡ b`.
///
/// A budget violation halves the horizon (at most six times) when
/// `adaptive_horizon` is set and is returned as an error otherwise.
pub fn solve_fbp(config: &SolverConfig, datum: &InitialDatum) -> Result<FbpSolution> {
    config.validate()?;
    if (config.b - datum.b()).abs() > 1e-12 * config.b.abs().max(1.0) {
        return Err(FbpError::Config(format!("b = {} does not match the datum start {}", config.b, datum.b())));
    }
    let mut horizon = config.horizon;
    let mut halvings = 0;
    loop {
        match attempt(config, datum, horizon, halvings)? {
            Attempt::Done(sol) => return Ok(sol),
            Attempt::OverBudget { seminorm, budget } => {
                if !config.adaptive_horizon {
                    return Err(FbpError::Budget { seminorm, budget });
                }
                if halvings == MAX_HALVINGS {
                    return Err(FbpError::NoConvergence {
                        iterations: 0,
                        last_residual: f64::NAN,
                        residuals: Vec::new(),
                    });
                }
                horizon *= 0.5;
                halvings += 1;
            }
        }
    }
}

fn attempt(config: &SolverConfig, datum: &InitialDatum, horizon: f64, halvings: usize) -> Result<Attempt> {
    let grid = TimeGrid::new(horizon, config.intervals, config.spacing)?;
    let budget = config.budget_for(datum, horizon);
    let mut curve = BoundaryCurve::flat(&grid, datum.b(), budget);
    let mut theta = config.damping;
    let mut residuals: Vec<f64> = Vec::new();
    let mut stalls = 0;
    for _ in 0..config.max_iter {
        let image = match apply_k_with(&curve, datum, config.source) {
            Ok((image, _)) => image,
            Err(FbpError::Budget { seminorm, budget }) => return Ok(Attempt::OverBudget { seminorm, budget }),
            Err(e) => return Err(e),
        };
        let residual = sup_difference(image.values(), curve.values());
        if let Some(&last) = residuals.last() {
            stalls = if residual >= last { stalls + 1 } else { 0 };
            if stalls >= STALL_LIMIT && theta > FALLBACK_DAMPING {
                theta = FALLBACK_DAMPING;
                stalls = 0;
            }
        }
        residuals.push(residual);
        if residual <= config.tol_fp {
            return finish(image, datum, config, residuals, horizon, halvings, theta).map(Attempt::Done);
        }
        let next: Vec<f64> = curve
            .values()
            .iter()
            .zip(image.values())
            .map(|(l, k)| (1.0 - theta) * l + theta * k)
            .collect();
        curve = BoundaryCurve::unchecked(grid.clone(), next, budget)?;
    }
    Err(FbpError::NoConvergence {
        iterations: residuals.len(),
        last_residual: residuals.last().copied().unwrap_or(f64::NAN),
        residuals,
    })
}

fn finish(
    curve: BoundaryCurve,
    datum: &InitialDatum,
    config: &SolverConfig,
    residuals: Vec<f64>,
    horizon: f64,
    halvings: usize,
    theta: f64,
) -> Result<FbpSolution> {
    let field = FieldSolution::solve(&curve, datum, config.source)?;
    let image = k_image(&field.curve, datum.b(), &field.q, field.q_singular);
    let final_residual = sup_difference(&image, curve.values());
    let contraction_ratios = residuals.windows(2).map(|w| w[1] / w[0]).collect();
    let report = FixedPointReport {
        iterates: residuals.len(),
        final_residual,
        residuals,
        contraction_ratios,
        lipschitz_seminorm: curve.seminorm(),
        lipschitz_budget: curve.lipschitz_budget(),
        horizon_used: horizon,
        halvings,
        damping_used: theta,
        slope_variation: slope_variation(&curve),
    };
    Ok(FbpSolution { curve, field, report })
}

/// Pointwise `|K[L](t) − L(t)|` at the nodes of a solved field.
pub fn k_residual(field: &FieldSolution) -> Vec<f64> {
    let image = k_image(&field.curve, field.datum.b(), &field.q, field.q_singular);
    image.iter().zip(field.curve.values()).map(|(k, l)| (k - l).abs()).collect()
}
