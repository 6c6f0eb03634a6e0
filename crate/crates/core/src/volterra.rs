//! Second-kind Volterra equations with Abel-type kernels
//!
//! ```text
//! φ(t) = ψ(t) + ∫₀ᵗ k(t,τ) (t−τ)^{-1/2} φ(τ) dτ
//! ```
//!
//! discretised by product integration: on every grid interval `k(tᵢ,·)φ(·)`
//! is replaced by its linear interpolant and the weight `(tᵢ−τ)^{-1/2}` is
//! integrated against it exactly. The unknown at node `i` appears through
//! the diagonal weight and is found by a scalar solve, so the march is
//! implicit and causal.

use serde::{Deserialize, Serialize};

use crate::error::{FbpError, Result};

/// Strictly increasing time nodes `0 = t₀ < t₁ < … < t_M = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

/// Spacing of a [`TimeGrid`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridSpacing {
    Uniform,
    /// `tᵢ = (i/M)² T`, refined near `t = 0`.
    Graded,
}

pub const DEFAULT_INTERVALS: usize = 256;

impl TimeGrid {
    pub fn new(horizon: f64, intervals: usize, spacing: GridSpacing) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(FbpError::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if intervals < 1 {
            return Err(FbpError::Domain("time grid needs at least one interval".into()));
        }
        let m = intervals as f64;
        let nodes = (0..=intervals)
            .map(|i| {
                let r = i as f64 / m;
                match spacing {
                    GridSpacing::Uniform => r * horizon,
                    GridSpacing::Graded => r * r * horizon,
                }
            })
            .collect();
        Ok(Self { nodes })
    }

    pub fn uniform(horizon: f64, intervals: usize) -> Result<Self> {
        Self::new(horizon, intervals, GridSpacing::Uniform)
    }

    pub fn graded(horizon: f64, intervals: usize) -> Result<Self> {
        Self::new(horizon, intervals, GridSpacing::Graded)
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(FbpError::Domain("time grid must start at 0 and have two nodes".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) || !nodes.iter().all(|t| t.is_finite()) {
            return Err(FbpError::Domain("time grid must be strictly increasing".into()));
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of nodes, `M + 1`.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of intervals `M`.
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        *self.nodes.last().expect("grid has nodes")
    }

    #[inline]
    pub fn t(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    /// Index `j` of the interval `[t_j, t_{j+1}]` containing `t`, clamped to the grid.
    pub fn locate(&self, t: f64) -> usize {
        let idx = self.nodes.partition_point(|&s| s <= t);
        idx.saturating_sub(1).min(self.intervals() - 1)
    }

    /// Product-integration weights `w_{ij}`, `j = 0..=i`, such that
    /// `Σ_j w_{ij} f(t_j) = ∫₀^{tᵢ} (tᵢ−τ)^{-1/2} f̃(τ) dτ` with `f̃` the
    /// piecewise-linear interpolant of `f`.
    pub fn abel_weights(&self, i: usize) -> Vec<f64> {
        let mut w = vec![0.0; i + 1];
        self.abel_weights_into(i, &mut w);
        w
    }

    pub(crate) fn abel_weights_into(&self, i: usize, w: &mut [f64]) {
        let ti = self.nodes[i];
        w[..=i].iter_mut().for_each(|x| *x = 0.0);
        for j in 0..i {
            let (left, right) = abel_interval_weights(
                ti - self.nodes[j + 1],
                ti - self.nodes[j],
                self.nodes[j + 1] - self.nodes[j],
            );
            w[j] += left;
            w[j + 1] += right;
        }
        if i >= 1 {
            self.add_starting_correction(i, w);
        }
    }

    /// Starting weights on the first nodes so that `√τ` is integrated
    /// exactly, keeping exactness for `1` (and for `τ` once three nodes are
    /// available). Solutions of Abel-type equations carry a `√t` term that
    /// the linear interpolant resolves only to first order on `[0, t₁]`.
    fn add_starting_correction(&self, i: usize, w: &mut [f64]) {
        let ti = self.nodes[i];
        let exact = 0.5 * std::f64::consts::PI * ti;
        let approx: f64 = (0..=i).map(|j| w[j] * self.nodes[j].sqrt()).sum();
        let residual = exact - approx;
        if i == 1 {
            // nodes {0, 1}: Σc = 0, Σc√t = r
            let c1 = residual / self.nodes[1].sqrt();
            w[0] -= c1;
            w[1] += c1;
            return;
        }
        // nodes {0, 1, 2}: Σc = 0, Σc·t = 0, Σc·√t = r
        let (t1, t2) = (self.nodes[1], self.nodes[2]);
        let (s1, s2) = (t1.sqrt(), t2.sqrt());
        // c1 t1 + c2 t2 = 0  and  c1 s1 + c2 s2 = r
        let det = s1 * t2 - s2 * t1;
        let c1 = residual * t2 / det;
        let c2 = -residual * t1 / det;
        w[0] -= c1 + c2;
        w[1] += c1;
        w[2] += c2;
    }
}

/// Weights of `∫_a^b s^{-1/2} f̃ ds` (with `s = tᵢ − τ`) against the values
/// at the left (`s = b`) and right (`s = a`) ends of the interval, in a
/// cancellation-free form.
#[inline]
pub(crate) fn abel_interval_weights(a: f64, b: f64, h: f64) -> (f64, f64) {
    let p = a.max(0.0).sqrt();
    let q = b.sqrt();
    let s = (p + q) * (p + q);
    let c = 2.0 * h / 3.0 / s;
    (c * (q + 2.0 * p), c * (2.0 * q + p))
}

/// Values aligned with the nodes of a [`TimeGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFunction {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(FbpError::Domain(format!(
                "grid function has {} values for {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(FbpError::Domain("grid function has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &TimeGrid, f: F) -> Self {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn constant(grid: &TimeGrid, c: f64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    /// Piecewise-linear interpolation; constant extrapolation outside the grid.
    pub fn interpolate(&self, t: f64) -> f64 {
        let g = &self.grid;
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= g.horizon() {
            return *self.values.last().expect("non-empty");
        }
        let j = g.locate(t);
        let (t0, t1) = (g.t(j), g.t(j + 1));
        let r = (t - t0) / (t1 - t0);
        self.values[j] + r * (self.values[j + 1] - self.values[j])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &GridFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

/// Kernel `k(t,τ)/√(t−τ)` with the smooth factor `k` sampled at node pairs
/// `(i, j)`, `j ≤ i`; the pair `(i, i)` is the diagonal limit.
pub struct SingularKernel<F> {
    factor: F,
}

impl<F: Fn(usize, usize) -> f64> SingularKernel<F> {
    pub fn new(factor: F) -> Self {
        Self { factor }
    }

    #[inline]
    pub fn factor(&self, i: usize, j: usize) -> f64 {
        (self.factor)(i, j)
    }

    /// `K_max = max |k(tᵢ,t_j)|` over all node pairs `j ≤ i`.
    pub fn sup_bound(&self, grid: &TimeGrid) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..grid.len() {
            for j in 0..=i {
                m = m.max(self.factor(i, j).abs());
            }
        }
        m
    }
}

/// Pure Abel kernel `λ/√(t−τ)`.
pub fn abel_kernel(lambda: f64) -> SingularKernel<impl Fn(usize, usize) -> f64> {
    SingularKernel::new(move |_, _| lambda)
}

/// Smallest admissible `|1 − w_{ii} k(tᵢ,tᵢ)|`.
pub const PIVOT_FLOOR: f64 = 1e-10;

/// Solve `φ = ψ + ∫ k/√(t−τ) φ` on the forcing's grid.
///
/// `forcing.values[0]` is taken as `φ(0)`.
pub fn solve_weakly_singular<F: Fn(usize, usize) -> f64>(
    kernel: &SingularKernel<F>,
    forcing: &GridFunction,
) -> Result<GridFunction> {
    let grid = &forcing.grid;
    let n = grid.len();
    let mut phi = vec![0.0; n];
    phi[0] = forcing.values[0];
    let mut w = vec![0.0; n];
    for i in 1..n {
        grid.abel_weights_into(i, &mut w);
        let memory: f64 = (0..i).map(|j| w[j] * kernel.factor(i, j) * phi[j]).sum();
        let pivot = 1.0 - w[i] * kernel.factor(i, i);
        if pivot.abs() < PIVOT_FLOOR {
            return Err(FbpError::SingularStep { node: i, margin: pivot.abs() });
        }
        phi[i] = (forcing.values[i] + memory) / pivot;
    }
    GridFunction::new(grid.clone(), phi)
}

/// Outcome of [`solve_by_picard`].
#[derive(Debug, Clone)]
pub struct PicardSolve {
    pub solution: GridFunction,
    /// Ratios of successive sup-norm updates.
    pub ratios: Vec<f64>,
    pub iterations: usize,
}

/// Fixed-point iteration `φ ← ψ + Wφ` of the same discrete operator used by
/// [`solve_weakly_singular`]. Geometric convergence is expected when
/// `2 K_max √T < 1`.
pub fn solve_by_picard<F: Fn(usize, usize) -> f64>(
    kernel: &SingularKernel<F>,
    forcing: &GridFunction,
    max_iter: usize,
    tol: f64,
) -> Result<PicardSolve> {
    let grid = &forcing.grid;
    let n = grid.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let w = grid.abel_weights(i);
            w.iter().enumerate().map(|(j, wj)| wj * kernel.factor(i, j)).collect()
        })
        .collect();
    let mut phi = forcing.values.clone();
    let mut ratios = Vec::new();
    let mut last_delta = f64::NAN;
    for iter in 1..=max_iter {
        let next: Vec<f64> = (0..n)
            .map(|i| {
                if i == 0 {
                    forcing.values[0]
                } else {
                    forcing.values[i] + rows[i].iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>()
                }
            })
            .collect();
        let delta = next.iter().zip(&phi).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if last_delta.is_finite() && last_delta > 0.0 {
            ratios.push(delta / last_delta);
        }
        last_delta = delta;
        phi = next;
        if delta <= tol {
            return Ok(PicardSolve {
                solution: GridFunction::new(grid.clone(), phi)?,
                ratios,
                iterations: iter,
            });
        }
    }
    Err(FbpError::NoConvergence {
        iterations: max_iter,
        last_residual: last_delta,
        residuals: ratios,
    })
}

/// Partial sums `Σ_{n=0}^{terms} (λΓ(½))ⁿ t^{n/2} / Γ(n/2 + 1)` of the Neumann
/// series of `φ = 1 + λ∫₀ᵗ φ(τ)/√(t−τ) dτ`. No remainder check.
pub fn abel_series_partial_sum(lambda: f64, grid: &TimeGrid, terms: usize) -> GridFunction {
    let root_pi = std::f64::consts::PI.sqrt();
    let coeffs: Vec<f64> = (0..=terms)
        .map(|n| (lambda * root_pi).powi(n as i32) / libm::tgamma(n as f64 / 2.0 + 1.0))
        .collect();
    GridFunction::from_fn(grid, |t| {
        let r = t.sqrt();
        let mut p = 1.0;
        let mut acc = 0.0;
        for c in &coeffs {
            acc += c * p;
            p *= r;
        }
        acc
    })
}

/// Tolerance on the tail of the truncated series in [`picard_series_oracle`].
pub const SERIES_REMAINDER_TOL: f64 = 1e-9;

/// Iterated Abel integrals of the constant 1, summed in closed form, for use
/// as a reference solution. Fails unless the tail after `terms` is provably
/// below [`SERIES_REMAINDER_TOL`] on the whole grid.
pub fn picard_series_oracle(lambda: f64, grid: &TimeGrid, terms: usize) -> Result<GridFunction> {
    if terms < 1 {
        return Err(FbpError::Domain("series oracle needs at least one term".into()));
    }
    let x = lambda.abs() * (std::f64::consts::PI * grid.horizon()).sqrt();
    let bound = if lambda == 0.0 {
        0.0
    } else if x >= 1.0 {
        f64::INFINITY
    } else {
        // term ratios are bounded by x from n = 1 on
        let next = x.powi(terms as i32 + 1) / libm::tgamma((terms as f64 + 1.0) / 2.0 + 1.0);
        next / (1.0 - x)
    };
    if bound > SERIES_REMAINDER_TOL {
        return Err(FbpError::SeriesConvergence { bound, tolerance: SERIES_REMAINDER_TOL });
    }
    Ok(abel_series_partial_sum(lambda, grid, terms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_construction() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = TimeGrid::graded(1.0, 2).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 1.0]);
        assert!(TimeGrid::uniform(0.0, 4).is_err());
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.5]).is_err());
        assert_eq!(g.locate(0.3), 1);
        assert_eq!(g.locate(1.0), 1);
    }

    #[test]
    fn weights_integrate_linear_functions_exactly() {
        let g = TimeGrid::graded(0.8, 17).unwrap();
        let i = 13;
        let ti = g.t(i);
        let w = g.abel_weights(i);
        // ∫₀^t (t−τ)^{-1/2} dτ = 2√t ; ∫₀^t (t−τ)^{-1/2} τ dτ = (4/3) t^{3/2}
        let s0: f64 = w.iter().sum();
        let s1: f64 = w.iter().enumerate().map(|(j, wj)| wj * g.t(j)).sum();
        assert!((s0 - 2.0 * ti.sqrt()).abs() < 1e-14);
        assert!((s1 - 4.0 / 3.0 * ti.powf(1.5)).abs() < 1e-14);
        // starting weights make √τ exact: ∫₀^t (t−τ)^{-1/2} √τ dτ = (π/2) t
        let sh: f64 = w.iter().enumerate().map(|(j, wj)| wj * g.t(j).sqrt()).sum();
        assert!((sh - 0.5 * std::f64::consts::PI * ti).abs() < 1e-14);
    }

    #[test]
    fn zero_kernel_returns_forcing() {
        let g = TimeGrid::uniform(1.0, 10).unwrap();
        let k = abel_kernel(0.0);
        let c = solve_weakly_singular(&k, &GridFunction::constant(&g, 3.5)).unwrap();
        assert!(c.values.iter().all(|&v| v == 3.5));
        let lin = GridFunction::from_fn(&g, |t| t);
        let s = solve_weakly_singular(&k, &lin).unwrap();
        assert_eq!(s.values, lin.values);
    }

    #[test]
    fn series_oracle_closed_forms() {
        let g = TimeGrid::uniform(0.25, 8).unwrap();
        let zero = picard_series_oracle(0.0, &g, 20).unwrap();
        assert!(zero.values.iter().all(|&v| v == 1.0));
        let one = abel_series_partial_sum(1.0, &g, 1);
        for (t, v) in g.nodes().iter().zip(&one.values) {
            assert!((v - (1.0 + 2.0 * t.sqrt())).abs() < 1e-14);
        }
        assert!(matches!(
            picard_series_oracle(1.0, &g, 1),
            Err(FbpError::SeriesConvergence { .. })
        ));
        assert!(picard_series_oracle(0.5, &g, 0).is_err());
    }

    #[test]
    fn abel_problem_matches_series_oracle() {
        let g = TimeGrid::uniform(0.25, 1024).unwrap();
        let oracle = picard_series_oracle(0.5, &g, 20).unwrap();
        let phi = solve_weakly_singular(&abel_kernel(0.5), &GridFunction::constant(&g, 1.0)).unwrap();
        let err = phi.sup_distance(&oracle);
        assert!(err < 1e-6, "sup error {err:e}");
    }

    #[test]
    fn singular_pivot_is_reported() {
        let g = TimeGrid::uniform(1.0, 4).unwrap();
        let w11 = g.abel_weights(1)[1];
        let k = SingularKernel::new(move |_, _| 1.0 / w11);
        let err = solve_weakly_singular(&k, &GridFunction::constant(&g, 1.0)).unwrap_err();
        assert!(matches!(err, FbpError::SingularStep { node: 1, .. }));
    }
}
