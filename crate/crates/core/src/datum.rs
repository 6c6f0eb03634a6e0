//! Initial data ρ₀ and h = ρ₀′ for the free boundary problem.

use serde::{Deserialize, Serialize};

use crate::density::TravelingWave;
use crate::error::{FbpError, Result};
use crate::quadrature::{adaptive, gauss8};

/// Shape of the initial profile on `[b, b + s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatumShape {
    /// ρ₀(x) = 2u(1 − u/s)³ with u = x − b and s = √10.
    Quartic,
    /// Traveling-wave profile truncated at `u_max` and renormalised by `norm`.
    Wave { wave: TravelingWave, norm: f64 },
    /// ρ₀ sampled on a uniform table starting at b, linearly interpolated.
    Tabulated { step: f64, rho: Vec<f64>, h: Vec<f64>, h_xi: Vec<f64> },
    /// ρ₀ ≡ 0. Degenerate, used to switch the initial data off in tests.
    Zero,
}

/// ρ₀ with compact support `[b, b + s]` together with h = ρ₀′ and h′.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDatum {
    b: f64,
    support_width: f64,
    shape: DatumShape,
}

/// Distance, in decay lengths, at which the wave profile is cut off.
pub const WAVE_CUTOFF_DECAY_LENGTHS: f64 = 40.0;

const QUARTIC_WIDTH: f64 = 3.162_277_660_168_379_3; // √10

impl InitialDatum {
    /// Default quartic datum starting at `b`.
    pub fn quartic(b: f64) -> Self {
        Self { b, support_width: QUARTIC_WIDTH, shape: DatumShape::Quartic }
    }

    /// Wave profile `w(x − b)` of speed `c`, cut off where it has decayed by
    /// e⁻⁴⁰ and rescaled to unit mass.
    pub fn traveling_wave(b: f64, c: f64) -> Result<Self> {
        let wave = TravelingWave::new(c)?;
        let u_max = WAVE_CUTOFF_DECAY_LENGTHS / wave.slow_decay_rate();
        let norm = 1.0 / wave.mass_up_to(u_max);
        Ok(Self { b, support_width: u_max, shape: DatumShape::Wave { wave, norm } })
    }

    /// ρ₀ from samples on `b, b + step, …`. The table is rescaled to unit
    /// trapezoid mass; h and h′ are centered differences of the table.
    pub fn tabulated(b: f64, step: f64, rho: Vec<f64>) -> Result<Self> {
        if rho.len() < 3 || !(step > 0.0) {
            return Err(FbpError::InvalidDatum("table needs three samples and a positive step".into()));
        }
        let n = rho.len();
        let mass: f64 = step * (rho.iter().sum::<f64>() - 0.5 * (rho[0] + rho[n - 1]));
        if !(mass > 0.0) {
            return Err(FbpError::InvalidDatum("table has no positive mass".into()));
        }
        let rho: Vec<f64> = rho.iter().map(|r| r / mass).collect();
        let h = centered_difference(&rho, step);
        let h_xi = centered_difference(&h, step);
        let datum = Self {
            b,
            support_width: step * (n - 1) as f64,
            shape: DatumShape::Tabulated { step, rho, h, h_xi },
        };
        datum.validate()?;
        Ok(datum)
    }

    /// ρ₀ ≡ 0 on a nominal unit support. Does not satisfy the datum
    /// constraints and is meant for degenerate test configurations.
    pub fn zero(b: f64) -> Self {
        Self { b, support_width: 1.0, shape: DatumShape::Zero }
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn support_width(&self) -> f64 {
        self.support_width
    }

    pub fn support(&self) -> (f64, f64) {
        (self.b, self.b + self.support_width)
    }

    pub fn shape(&self) -> &DatumShape {
        &self.shape
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.shape, DatumShape::Zero)
    }

    #[inline]
    fn local(&self, x: f64) -> Option<f64> {
        let u = x - self.b;
        if u < 0.0 || u > self.support_width {
            None
        } else {
            Some(u)
        }
    }

    pub fn rho0(&self, x: f64) -> f64 {
        let Some(u) = self.local(x) else { return 0.0 };
        match &self.shape {
            DatumShape::Quartic => {
                let r = 1.0 - u / self.support_width;
                2.0 * u * r * r * r
            }
            DatumShape::Wave { wave, norm } => norm * wave.w(u),
            DatumShape::Tabulated { step, rho, .. } => lerp_table(rho, *step, u),
            DatumShape::Zero => 0.0,
        }
    }

    /// h = ρ₀′ (right derivative at b).
    pub fn h(&self, x: f64) -> f64 {
        let Some(u) = self.local(x) else { return 0.0 };
        match &self.shape {
            DatumShape::Quartic => {
                let r = u / self.support_width;
                2.0 * (1.0 - r) * (1.0 - r) * (1.0 - 4.0 * r)
            }
            DatumShape::Wave { wave, norm } => norm * wave.dw(u),
            DatumShape::Tabulated { step, h, .. } => lerp_table(h, *step, u),
            DatumShape::Zero => 0.0,
        }
    }

    /// h′ = ρ₀″ on the open support.
    pub fn h_xi(&self, x: f64) -> f64 {
        let Some(u) = self.local(x) else { return 0.0 };
        match &self.shape {
            DatumShape::Quartic => {
                let s = self.support_width;
                let r = u / s;
                12.0 / s * (1.0 - r) * (2.0 * r - 1.0)
            }
            DatumShape::Wave { wave, norm } => norm * wave.d2w(u),
            DatumShape::Tabulated { step, h_xi, .. } => lerp_table(h_xi, *step, u),
            DatumShape::Zero => 0.0,
        }
    }

    /// sup |h′| over the support.
    pub fn sup_h_xi(&self) -> f64 {
        match &self.shape {
            // attained at u = 0 for both closed forms
            DatumShape::Quartic => 12.0 / self.support_width,
            DatumShape::Wave { wave, norm } => norm * wave.d2w(0.0).abs(),
            DatumShape::Tabulated { h_xi, .. } => h_xi.iter().fold(0.0, |m, v| m.max(v.abs())),
            DatumShape::Zero => 0.0,
        }
    }

    pub fn sup_h(&self) -> f64 {
        match &self.shape {
            DatumShape::Tabulated { h, .. } => h.iter().fold(0.0, |m, v| m.max(v.abs())),
            DatumShape::Zero => 0.0,
            _ => {
                let g = 4096;
                (0..=g)
                    .map(|k| self.h(self.b + self.support_width * k as f64 / g as f64).abs())
                    .fold(0.0, f64::max)
            }
        }
    }

    /// ∫ f over the support with panels fine enough for the profile.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        let (lo, hi) = self.support();
        let panels = 256;
        let width = (hi - lo) / panels as f64;
        let rule = gauss8();
        (0..panels)
            .map(|p| {
                let a = lo + p as f64 * width;
                rule.integrate(a, a + width, &f)
            })
            .sum()
    }

    pub fn mass(&self) -> f64 {
        match &self.shape {
            DatumShape::Tabulated { step, rho, .. } => {
                let n = rho.len();
                step * (rho.iter().sum::<f64>() - 0.5 * (rho[0] + rho[n - 1]))
            }
            _ => self.integrate(|x| self.rho0(x)),
        }
    }

    /// Checks ρ₀(b) = 0, h(b) = 2, unit mass and non-negativity.
    pub fn validate(&self) -> Result<()> {
        if self.is_zero() {
            return Err(FbpError::InvalidDatum("the zero datum violates ρ₀′(b) = 2".into()));
        }
        if !self.b.is_finite() || !(self.support_width > 0.0) {
            return Err(FbpError::InvalidDatum("support must be a finite non-empty interval".into()));
        }
        let tabulated = matches!(self.shape, DatumShape::Tabulated { .. });
        let rho_b = self.rho0(self.b);
        if rho_b.abs() > 1e-12 {
            return Err(FbpError::InvalidDatum(format!("ρ₀(b) = {rho_b:e}, expected 0")));
        }
        let slope_tol = if tabulated { 1e-2 } else { 1e-6 };
        let hb = self.h(self.b);
        if (hb - 2.0).abs() > slope_tol {
            return Err(FbpError::InvalidDatum(format!("ρ₀′(b) = {hb}, expected 2")));
        }
        let mass = self.mass();
        if (mass - 1.0).abs() > 1e-10 {
            return Err(FbpError::InvalidDatum(format!("∫ρ₀ = {mass}, expected 1")));
        }
        let n = 2048;
        for k in 0..=n {
            let x = self.b + self.support_width * k as f64 / n as f64;
            if self.rho0(x) < -1e-12 {
                return Err(FbpError::InvalidDatum(format!("ρ₀({x}) < 0")));
            }
        }
        Ok(())
    }

    /// Quantile function of ρ₀ built from a cumulative table of `points` nodes.
    pub fn inverse_cdf_table(&self, points: usize) -> InverseCdf {
        InverseCdf::from_density(|x| self.rho0(x), self.support(), points)
    }
}

/// Monotone piecewise-linear inverse of a cumulative distribution table.
#[derive(Debug, Clone)]
pub struct InverseCdf {
    x: Vec<f64>,
    cdf: Vec<f64>,
}

impl InverseCdf {
    pub fn from_density<F: Fn(f64) -> f64>(density: F, support: (f64, f64), points: usize) -> Self {
        let points = points.max(2);
        let (lo, hi) = support;
        let dx = (hi - lo) / (points - 1) as f64;
        let x: Vec<f64> = (0..points).map(|k| lo + k as f64 * dx).collect();
        let rule = gauss8();
        let mut cdf = Vec::with_capacity(points);
        let mut acc = 0.0;
        cdf.push(0.0);
        for k in 1..points {
            acc += rule.integrate(x[k - 1], x[k], |s| density(s).max(0.0));
            cdf.push(acc);
        }
        Self::from_table(x, cdf)
    }

    /// From nodes and an unnormalised non-decreasing cumulative table.
    pub fn from_table(x: Vec<f64>, mut cdf: Vec<f64>) -> Self {
        let total = *cdf.last().expect("non-empty table");
        let mut run = 0.0f64;
        for c in cdf.iter_mut() {
            run = run.max(*c / total);
            *c = run;
        }
        Self { x, cdf }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let k = self.cdf.partition_point(|&c| c < u);
        if k == 0 {
            return self.x[0];
        }
        if k >= self.cdf.len() {
            return *self.x.last().expect("non-empty");
        }
        let (c0, c1) = (self.cdf[k - 1], self.cdf[k]);
        if c1 <= c0 {
            return self.x[k];
        }
        self.x[k - 1] + (u - c0) / (c1 - c0) * (self.x[k] - self.x[k - 1])
    }
}

fn centered_difference(v: &[f64], step: f64) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|k| {
            if k == 0 {
                (-3.0 * v[0] + 4.0 * v[1] - v[2]) / (2.0 * step)
            } else if k == n - 1 {
                (3.0 * v[n - 1] - 4.0 * v[n - 2] + v[n - 3]) / (2.0 * step)
            } else {
                (v[k + 1] - v[k - 1]) / (2.0 * step)
            }
        })
        .collect()
}

fn lerp_table(table: &[f64], step: f64, u: f64) -> f64 {
    let pos = u / step;
    let k = (pos.floor() as usize).min(table.len() - 2);
    let r = pos - k as f64;
    table[k] + r * (table[k + 1] - table[k])
}

/// Unit-mass check of a profile by adaptive quadrature, independent of the
/// panel rule used by [`InitialDatum::mass`].
pub fn mass_by_adaptive_quadrature(datum: &InitialDatum) -> f64 {
    let (lo, hi) = datum.support();
    let breaks: Vec<f64> = (0..=32).map(|k| lo + (hi - lo) * k as f64 / 32.0).collect();
    adaptive(|x| datum.rho0(x), &breaks, 1e-15, 1e-15)
}
