//! Branching Brownian motion with selection: `N` particles diffuse with
//! generator `½∂²ₓ`, each branches at rate 1 and every branching removes
//! the leftmost particle, so the population stays at `N`.
//!
//! Events are simulated exactly: the waiting time to the next branching is
//! exponential with rate `N` and all particles receive an independent
//! Gaussian increment of variance `Δt` between events.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datum::{InitialDatum, InverseCdf};
use crate::density::snapshot;
use crate::error::{FbpError, Result};
use crate::halfline_heat::FieldSolution;

/// Size of the cumulative table used to sample initial positions.
pub const INITIAL_TABLE_POINTS: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Dynamics {
    #[default]
    BranchingSelection,
    /// Free Brownian motion, no branching; for calibration only.
    DiffusionOnly,
}

#[derive(Debug, Clone)]
pub struct ParticleEnsemble {
    positions: Vec<f64>,
    time: f64,
    seed: u64,
    n_branch_events: u64,
    dynamics: Dynamics,
    next_event: f64,
    rng: ChaCha8Rng,
    waiting: Exp<f64>,
}

impl ParticleEnsemble {
    /// `n` i.i.d. samples of ρ₀ on stream 0 of `seed`.
    pub fn new(n: usize, datum: &InitialDatum, seed: u64) -> Result<Self> {
        Self::with_stream(n, datum, seed, 0, Dynamics::BranchingSelection)
    }

    /// Ensemble driven by stream `stream` of `seed`; replicas use distinct
    /// streams of one seed.
    pub fn with_stream(n: usize, datum: &InitialDatum, seed: u64, stream: u64, dynamics: Dynamics) -> Result<Self> {
        let table = datum.inverse_cdf_table(INITIAL_TABLE_POINTS);
        Self::from_sampler(n, &table, seed, stream, dynamics)
    }

    fn from_sampler(n: usize, table: &InverseCdf, seed: u64, stream: u64, dynamics: Dynamics) -> Result<Self> {
        if n < 2 {
            return Err(FbpError::Domain(format!("need at least two particles, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let positions = (0..n).map(|_| table.quantile(rng.random::<f64>())).collect();
        let waiting = Exp::new(n as f64).map_err(|e| FbpError::Domain(e.to_string()))?;
        let mut ensemble =
            Self { positions, time: 0.0, seed, n_branch_events: 0, dynamics, next_event: 0.0, rng, waiting };
        ensemble.next_event = ensemble.draw_waiting_time();
        Ok(ensemble)
    }

    fn draw_waiting_time(&mut self) -> f64 {
        match self.dynamics {
            Dynamics::BranchingSelection => self.waiting.sample(&mut self.rng),
            Dynamics::DiffusionOnly => f64::INFINITY,
        }
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_branch_events(&self) -> u64 {
        self.n_branch_events
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    fn diffuse(&mut self, dt: f64) {
        if dt <= 0.0 {
            return;
        }
        let sd = dt.sqrt();
        for p in self.positions.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *p += sd * z;
        }
    }

    fn branch(&mut self) {
        let n = self.positions.len();
        let parent = self.rng.random_range(0..n);
        self.positions.push(self.positions[parent]);
        let mut left = 0;
        for (i, &p) in self.positions.iter().enumerate().skip(1) {
            if p < self.positions[left] {
                left = i;
            }
        }
        self.positions.swap_remove(left);
        self.n_branch_events += 1;
    }

    /// Runs the dynamics up to time `t ≥ self.time()`.
    pub fn advance_to(&mut self, t: f64) -> Result<()> {
        if !(t >= self.time) || !t.is_finite() {
            return Err(FbpError::Domain(format!("cannot advance from {} to {t}", self.time)));
        }
        while self.next_event <= t {
            let dt = self.next_event - self.time;
            self.diffuse(dt);
            self.time = self.next_event;
            self.branch();
            self.next_event = self.time + self.draw_waiting_time();
        }
        self.diffuse(t - self.time);
        self.time = t;
        Ok(())
    }

    pub fn measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::new(self.time, self.positions.clone())
    }
}

/// Sorted sample of particle positions at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    pub t: f64,
    pub sorted_positions: Vec<f64>,
    pub leftmost: f64,
}

impl EmpiricalMeasure {
    pub fn new(t: f64, mut positions: Vec<f64>) -> Self {
        positions.sort_by(f64::total_cmp);
        let leftmost = positions.first().copied().unwrap_or(f64::NAN);
        Self { t, sorted_positions: positions, leftmost }
    }

    pub fn len(&self) -> usize {
        self.sorted_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_positions.is_empty()
    }
}

/// Fraction of particles at or below `x`.
pub fn empirical_cdf(measure: &EmpiricalMeasure, x: f64) -> f64 {
    let below = measure.sorted_positions.partition_point(|&p| p <= x);
    below as f64 / measure.len() as f64
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || !times.iter().all(|t| t.is_finite() && *t >= 0.0) {
        return Err(FbpError::Domain("snapshot times must be finite and non-negative".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(FbpError::Domain("snapshot times must be sorted".into()));
    }
    Ok(())
}

/// Snapshots at `0` and `t_end`.
pub fn simulate(n: usize, datum: &InitialDatum, t_end: f64, seed: u64) -> Result<Vec<EmpiricalMeasure>> {
    if !(t_end > 0.0) {
        return Err(FbpError::Domain(format!("t_end must be positive, got {t_end}")));
    }
    simulate_at(n, datum, &[0.0, t_end], seed)
}

/// Snapshots at the sorted `times`.
pub fn simulate_at(n: usize, datum: &InitialDatum, times: &[f64], seed: u64) -> Result<Vec<EmpiricalMeasure>> {
    check_times(times)?;
    let mut ensemble = ParticleEnsemble::new(n, datum, seed)?;
    run(&mut ensemble, times)
}

fn run(ensemble: &mut ParticleEnsemble, times: &[f64]) -> Result<Vec<EmpiricalMeasure>> {
    times
        .iter()
        .map(|&t| {
            ensemble.advance_to(t)?;
            Ok(ensemble.measure())
        })
        .collect()
}

/// Independent replicas on streams `0..replicas` of `seed`, run in parallel.
/// Each entry holds the snapshots and the final branch-event count.
pub fn simulate_replicas(
    n: usize,
    datum: &InitialDatum,
    times: &[f64],
    seed: u64,
    replicas: usize,
    dynamics: Dynamics,
) -> Result<Vec<(Vec<EmpiricalMeasure>, u64)>> {
    check_times(times)?;
    let table = datum.inverse_cdf_table(INITIAL_TABLE_POINTS);
    (0..replicas as u64)
        .into_par_iter()
        .map(|stream| {
            let mut ensemble = ParticleEnsemble::from_sampler(n, &table, seed, stream, dynamics)?;
            let snaps = run(&mut ensemble, times)?;
            Ok((snaps, ensemble.n_branch_events()))
        })
        .collect()
}

/// Cumulative distribution `F(x) = ∫_{L_t}^x ρ(y,t) dy` of a PDE solution,
/// tabulated on the snapshot nodes and interpolated by cubic Hermite
/// polynomials with slopes ρ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdeCdf {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub cdf: Vec<f64>,
}

impl PdeCdf {
    pub fn from_field(field: &FieldSolution, t: f64) -> Result<Self> {
        let snap = snapshot(field, t)?;
        let scale = t.exp();
        let (x, rho) = (snap.x_nodes, snap.rho_values);
        let v = snap.v_values;
        let mut cdf = Vec::with_capacity(x.len());
        cdf.push(0.0);
        for k in 1..x.len() {
            let h = x[k] - x[k - 1];
            // v at the midpoint from the Simpson relation of the snapshot
            let inc = rho[k] - rho[k - 1];
            let v_mid = (6.0 * inc / (scale * h) - v[k - 1] - v[k]) / 4.0;
            let rho_mid = rho[k - 1] + scale * h / 24.0 * (5.0 * v[k - 1] + 8.0 * v_mid - v[k]);
            cdf.push(cdf[k - 1] + h / 6.0 * (rho[k - 1] + 4.0 * rho_mid + rho[k]));
        }
        Ok(Self { t, x, rho, cdf })
    }

    pub fn total(&self) -> f64 {
        *self.cdf.last().expect("non-empty table")
    }

    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.x[0] {
            return 0.0;
        }
        let n = self.x.len();
        if x >= self.x[n - 1] {
            return self.cdf[n - 1];
        }
        let k = self.x.partition_point(|&s| s <= x).clamp(1, n - 1);
        let (x0, x1) = (self.x[k - 1], self.x[k]);
        let h = x1 - x0;
        let s = (x - x0) / h;
        let (h00, h10) = ((1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s), s * (1.0 - s) * (1.0 - s));
        let (h01, h11) = (s * s * (3.0 - 2.0 * s), s * s * (s - 1.0));
        h00 * self.cdf[k - 1] + h10 * h * self.rho[k - 1] + h01 * self.cdf[k] + h11 * h * self.rho[k]
    }

    pub fn inverse(&self) -> InverseCdf {
        InverseCdf::from_table(self.x.clone(), self.cdf.clone())
    }
}

/// `sup_x |F_N(x) − F(x)|` for a sorted sample and a continuous `F`.
pub fn ks_distance<F: Fn(f64) -> f64>(measure: &EmpiricalMeasure, cdf: F) -> f64 {
    let n = measure.len() as f64;
    measure
        .sorted_positions
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t: f64,
    pub ks_distance: f64,
    pub leftmost: f64,
    pub boundary: f64,
    /// `|leftmost − L_t|`.
    pub leftmost_gap: f64,
}

/// Kolmogorov distance and leftmost-particle offset of every snapshot
/// against the PDE solution. Snapshots at `t = 0` are compared with ρ₀.
pub fn compare_to_pde(measures: &[EmpiricalMeasure], field: &FieldSolution) -> Result<Vec<Comparison>> {
    measures
        .iter()
        .map(|m| {
            if m.t > field.horizon() * (1.0 + 1e-12) {
                return Err(FbpError::Domain(format!("snapshot at {} beyond the horizon", m.t)));
            }
            let ks = if m.t == 0.0 {
                let datum = &field.datum;
                let table = InitialCdf::new(datum);
                ks_distance(m, |x| table.eval(x))
            } else {
                let cdf = PdeCdf::from_field(field, m.t)?;
                ks_distance(m, |x| cdf.eval(x))
            };
            let boundary = field.boundary_at(m.t);
            Ok(Comparison { t: m.t, ks_distance: ks, leftmost: m.leftmost, boundary, leftmost_gap: (m.leftmost - boundary).abs() })
        })
        .collect()
}

/// Fine cumulative table of ρ₀ for comparisons at `t = 0`.
struct InitialCdf {
    x: Vec<f64>,
    cdf: Vec<f64>,
}

impl InitialCdf {
    fn new(datum: &InitialDatum) -> Self {
        let (lo, hi) = datum.support();
        let n = INITIAL_TABLE_POINTS;
        let x: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        let rule = crate::quadrature::gauss8();
        let mut cdf = vec![0.0];
        for k in 1..n {
            let inc = rule.integrate(x[k - 1], x[k], |s| datum.rho0(s));
            cdf.push(cdf[k - 1] + inc);
        }
        Self { x, cdf }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return 0.0;
        }
        if x >= self.x[n - 1] {
            return self.cdf[n - 1];
        }
        let k = self.x.partition_point(|&s| s <= x).clamp(1, n - 1);
        let s = (x - self.x[k - 1]) / (self.x[k] - self.x[k - 1]);
        self.cdf[k - 1] + s * (self.cdf[k] - self.cdf[k - 1])
    }
}

/// `n` samples drawn directly from ρ(·,t) of the PDE solution, without
/// dynamics; the calibration control for [`compare_to_pde`].
pub fn sample_from_field(field: &FieldSolution, t: f64, n: usize, seed: u64) -> Result<EmpiricalMeasure> {
    let table = PdeCdf::from_field(field, t)?.inverse();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions = (0..n).map(|_| table.quantile(rng.random::<f64>())).collect();
    Ok(EmpiricalMeasure::new(t, positions))
}

/// Critical value of the Kolmogorov statistic at 99% confidence, `1.63/√n`.
pub fn ks_critical_99(n: usize) -> f64 {
    1.63 / (n as f64).sqrt()
}
