//! Flat `key = value` run configuration.
//!
//! Keys and defaults:
//!
//! | key | default | meaning |
//! |---|---|---|
//! | `datum` | `quartic` | `quartic` or `wave` |
//! | `wave_speed` | `1.4142135623730951` | speed of the wave datum |
//! | `b` | `1` | start of the support |
//! | `T` | `0.25` | horizon |
//! | `M` | `256` | time intervals |
//! | `spacing` | `uniform` | `uniform` or `graded` |
//! | `A` | `auto` | Lipschitz budget, `auto` derives it from the datum |
//! | `damping` | `1` | relaxation θ |
//! | `tol_fp` | `1e-8` | fixed-point tolerance |
//! | `max_iter` | `100` | iteration cap |
//! | `adaptive_T` | `true` | halve T when the budget is exceeded |
//! | `snapshot_times` | `auto` | comma-separated times, `auto` is T/4, T/2, T |
//! | `N` | `10000` | particles |
//! | `seed` | none | required when comparing with a PDE run |
//! | `dynamics` | `branching` | `branching` or `diffusion` |
//! | `workers` | `0` | worker threads, 0 uses every processor |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use fbp_core::fixed_point::SolverConfig;
use fbp_core::particle::Dynamics;
use fbp_core::volterra::GridSpacing;
use fbp_core::InitialDatum;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatumKind {
    Quartic,
    Wave,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub datum: DatumKind,
    pub wave_speed: f64,
    pub b: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "M")]
    pub intervals: usize,
    pub spacing: GridSpacing,
    #[serde(rename = "A")]
    pub lipschitz_budget: Option<f64>,
    pub damping: f64,
    pub tol_fp: f64,
    pub max_iter: usize,
    #[serde(rename = "adaptive_T")]
    pub adaptive_horizon: bool,
    /// `None` means T/4, T/2, T.
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(rename = "N")]
    pub particles: usize,
    pub seed: Option<u64>,
    pub dynamics: Dynamics,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            datum: DatumKind::Quartic,
            wave_speed: std::f64::consts::SQRT_2,
            b: 1.0,
            horizon: 0.25,
            intervals: 256,
            spacing: GridSpacing::Uniform,
            lipschitz_budget: None,
            damping: 1.0,
            tol_fp: fbp_core::fixed_point::DEFAULT_TOLERANCE,
            max_iter: fbp_core::fixed_point::DEFAULT_MAX_ITER,
            adaptive_horizon: true,
            snapshot_times: None,
            particles: 10_000,
            seed: None,
            dynamics: Dynamics::BranchingSelection,
            workers: 0,
        }
    }
}

fn number<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse `{value}`")))
}

fn boolean(key: &str, value: &str) -> Result<bool, CliError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(CliError::Config(format!("{key}: expected true or false, got `{value}`"))),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if seen.insert(key.to_string(), value.to_string()).is_some() {
                return Err(CliError::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
        }
        let mut config = Self::default();
        for (key, value) in &seen {
            config.set(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        match key {
            "datum" => {
                self.datum = match value {
                    "quartic" => DatumKind::Quartic,
                    "wave" => DatumKind::Wave,
                    _ => return Err(CliError::Config(format!("datum: unknown datum `{value}`"))),
                }
            }
            "wave_speed" => self.wave_speed = number(key, value)?,
            "b" => self.b = number(key, value)?,
            "T" => self.horizon = number(key, value)?,
            "M" => self.intervals = number(key, value)?,
            "spacing" => {
                self.spacing = match value {
                    "uniform" => GridSpacing::Uniform,
                    "graded" => GridSpacing::Graded,
                    _ => return Err(CliError::Config(format!("spacing: unknown spacing `{value}`"))),
                }
            }
            "A" => self.lipschitz_budget = if value == "auto" { None } else { Some(number(key, value)?) },
            "damping" => self.damping = number(key, value)?,
            "tol_fp" => self.tol_fp = number(key, value)?,
            "max_iter" => self.max_iter = number(key, value)?,
            "adaptive_T" => self.adaptive_horizon = boolean(key, value)?,
            "snapshot_times" => {
                self.snapshot_times = if value == "auto" {
                    None
                } else {
                    Some(value.split(',').map(|s| number(key, s.trim())).collect::<Result<_, _>>()?)
                }
            }
            "N" => self.particles = number(key, value)?,
            "seed" => self.seed = Some(number(key, value)?),
            "dynamics" => {
                self.dynamics = match value {
                    "branching" => Dynamics::BranchingSelection,
                    "diffusion" => Dynamics::DiffusionOnly,
                    _ => return Err(CliError::Config(format!("dynamics: unknown dynamics `{value}`"))),
                }
            }
            "workers" => self.workers = number(key, value)?,
            _ => return Err(CliError::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.solver_config().validate()?;
        if self.particles == 0 {
            return Err(CliError::Config("N must be positive".into()));
        }
        let times = self.times();
        if times.is_empty() {
            return Err(CliError::Config("snapshot_times is empty".into()));
        }
        if times.iter().any(|&t| !(t >= 0.0) || t > self.horizon) {
            return Err(CliError::Config("snapshot_times must lie in [0, T]".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CliError::Config("snapshot_times must be strictly increasing".into()));
        }
        self.initial_datum()?;
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        match &self.snapshot_times {
            Some(t) => t.clone(),
            None => vec![0.25 * self.horizon, 0.5 * self.horizon, self.horizon],
        }
    }

    pub fn initial_datum(&self) -> Result<InitialDatum, CliError> {
        Ok(match self.datum {
            DatumKind::Quartic => InitialDatum::quartic(self.b),
            DatumKind::Wave => InitialDatum::traveling_wave(self.b, self.wave_speed)?,
        })
    }

    pub fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::new(self.b, self.horizon);
        c.intervals = self.intervals;
        c.spacing = self.spacing;
        c.lipschitz_budget = self.lipschitz_budget;
        c.damping = self.damping;
        c.tol_fp = self.tol_fp;
        c.max_iter = self.max_iter;
        c.adaptive_horizon = self.adaptive_horizon;
        c
    }

    /// The configuration in the input format; parsing it gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let datum = match self.datum {
            DatumKind::Quartic => "quartic",
            DatumKind::Wave => "wave",
        };
        let spacing = match self.spacing {
            GridSpacing::Uniform => "uniform",
            GridSpacing::Graded => "graded",
        };
        let dynamics = match self.dynamics {
            Dynamics::BranchingSelection => "branching",
            Dynamics::DiffusionOnly => "diffusion",
        };
        let _ = writeln!(s, "datum = {datum}");
        let _ = writeln!(s, "wave_speed = {:?}", self.wave_speed);
        let _ = writeln!(s, "b = {:?}", self.b);
        let _ = writeln!(s, "T = {:?}", self.horizon);
        let _ = writeln!(s, "M = {}", self.intervals);
        let _ = writeln!(s, "spacing = {spacing}");
        match self.lipschitz_budget {
            Some(a) => writeln!(s, "A = {a:?}"),
            None => writeln!(s, "A = auto"),
        }
        .ok();
        let _ = writeln!(s, "damping = {:?}", self.damping);
        let _ = writeln!(s, "tol_fp = {:?}", self.tol_fp);
        let _ = writeln!(s, "max_iter = {}", self.max_iter);
        let _ = writeln!(s, "adaptive_T = {}", self.adaptive_horizon);
        match &self.snapshot_times {
            Some(t) => {
                let list: Vec<String> = t.iter().map(|x| format!("{x:?}")).collect();
                writeln!(s, "snapshot_times = {}", list.join(", "))
            }
            None => writeln!(s, "snapshot_times = auto"),
        }
        .ok();
        let _ = writeln!(s, "N = {}", self.particles);
        if let Some(seed) = self.seed {
            let _ = writeln!(s, "seed = {seed}");
        }
        let _ = writeln!(s, "dynamics = {dynamics}");
        let _ = writeln!(s, "workers = {}", self.workers);
        s
    }
}
