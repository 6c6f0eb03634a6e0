//! Runs of the free boundary solver and the particle simulator, with their
//! CSV and JSON artifacts.

pub mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fbp_core::density::{self, traveling_wave, TravelingWave};
use fbp_core::fixed_point::{k_residual, solve_fbp, FbpSolution, FixedPointReport};
use fbp_core::halfline_heat::FieldSolution;
use fbp_core::particle::{compare_to_pde, ks_critical_99, sample_from_field, simulate_replicas, EmpiricalMeasure};
use fbp_core::{FbpError, InitialDatum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{DatumKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NO_CONVERGENCE: i32 = 2;

pub const BOUNDARY_FILE: &str = "boundary.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SOLUTION_FILE: &str = "solution.json";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const PARTICLE_REPORT_FILE: &str = "particles_report.json";
pub const WAVE_FILE: &str = "wave.csv";
/// Rows of the wave fixture.
pub const WAVE_ROWS: usize = 1025;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Solver(#[from] FbpError),
    #[error("malformed file {path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Solver(FbpError::Config(_) | FbpError::InvalidDatum(_)) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_NO_CONVERGENCE,
            _ => EXIT_CONFIG,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.to_path_buf(), source }
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

fn read_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RunConfig::parse(&text)
}

/// Number formatting shared by every CSV: 17 significant digits.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// File-name fragment of a snapshot time.
pub fn time_label(t: f64) -> String {
    format!("{t}")
}

fn csv(header: &str, rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(fmt_num).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    s
}

/// Worker count: `FBP_WORKERS`, else the config, else every processor.
pub fn worker_count(config: &RunConfig) -> usize {
    std::env::var("FBP_WORKERS")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or(config.workers)
}

fn with_workers<T: Send>(config: &RunConfig, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_count(config))
        .build()
        .map_err(|e| CliError::Config(format!("cannot start workers: {e}")))?;
    Ok(pool.install(f))
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub solve_seconds: f64,
    pub snapshot_seconds: f64,
    pub diagnostic_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimeDiagnostics {
    pub t: f64,
    pub mass: f64,
    pub v_mass: f64,
    pub boundary_slope: f64,
    pub boundary_trace: f64,
    /// Grid time at which the Stefan condition was checked; absent at t = 0.
    pub stefan_time: Option<f64>,
    pub stefan_velocity: Option<f64>,
    pub stefan_curvature_term: Option<f64>,
    pub stefan_residual: Option<f64>,
    pub min_rho: f64,
    /// Largest |ρ − w| on the snapshot nodes for the wave datum.
    pub wave_rho_error: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WaveOracle {
    pub speed: f64,
    pub boundary_error: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub status: String,
    pub config: RunConfig,
    pub config_text: String,
    pub message: Option<String>,
    pub fixed_point: Option<FixedPointReport>,
    pub residual_history: Vec<f64>,
    pub diagnostics: Vec<TimeDiagnostics>,
    /// Requested times beyond a shrunken horizon.
    pub skipped_times: Vec<f64>,
    pub wave_oracle: Option<WaveOracle>,
    pub timings: Timings,
}

impl RunReport {
    fn new(config: &RunConfig, status: &str) -> Self {
        Self {
            status: status.into(),
            config: config.clone(),
            config_text: config.to_text(),
            message: None,
            fixed_point: None,
            residual_history: Vec::new(),
            diagnostics: Vec::new(),
            skipped_times: Vec::new(),
            wave_oracle: None,
            timings: Timings::default(),
        }
    }
}

fn wave_of(config: &RunConfig) -> Option<TravelingWave> {
    match config.datum {
        DatumKind::Wave => traveling_wave(config.wave_speed).ok(),
        DatumKind::Quartic => None,
    }
}

/// `fbp solve`: returns the exit status after writing the artifacts.
pub fn run_solve(config_path: &Path, out: &Path) -> Result<i32, CliError> {
    let config = read_config(config_path)?;
    solve_with(&config, out)
}

pub fn solve_with(config: &RunConfig, out: &Path) -> Result<i32, CliError> {
    with_workers(config, || solve_inner(config, out))?
}

fn solve_inner(config: &RunConfig, out: &Path) -> Result<i32, CliError> {
    let datum = config.initial_datum()?;
    fs::create_dir_all(out.join(SNAPSHOT_DIR)).map_err(io_err(out))?;
    let started = Instant::now();
    let result = solve_fbp(&config.solver_config(), &datum);
    let solve_seconds = started.elapsed().as_secs_f64();
    let sol = match result {
        Ok(sol) => sol,
        Err(e @ (FbpError::Config(_) | FbpError::InvalidDatum(_))) => return Err(e.into()),
        Err(e) => {
            let mut report = RunReport::new(config, "no_convergence");
            report.message = Some(e.to_string());
            report.timings.solve_seconds = solve_seconds;
            if let FbpError::NoConvergence { residuals, .. } = &e {
                report.residual_history = residuals.clone();
            }
            write_json(&out.join(REPORT_FILE), &report)?;
            eprintln!("{e}");
            return Ok(EXIT_NO_CONVERGENCE);
        }
    };

    let mut report = RunReport::new(config, "converged");
    report.timings.solve_seconds = solve_seconds;
    report.residual_history = sol.report.residuals.clone();
    write_boundary(&sol, &out.join(BOUNDARY_FILE))?;
    write_json(&out.join(SOLUTION_FILE), &sol)?;

    let wave = wave_of(config);
    if let Some(w) = &wave {
        let err = sol
            .curve
            .grid()
            .nodes()
            .iter()
            .zip(sol.curve.values())
            .map(|(t, l)| (l - config.b - w.c * t).abs())
            .fold(0.0, f64::max);
        report.wave_oracle = Some(WaveOracle { speed: w.c, boundary_error: err });
    }

    let horizon = sol.report.horizon_used;
    for t in config.times() {
        if t > horizon * (1.0 + 1e-12) {
            report.skipped_times.push(t);
            continue;
        }
        let clock = Instant::now();
        let (x, rho, v) = snapshot_columns(&sol.field, t)?;
        let path = out.join(SNAPSHOT_DIR).join(format!("rho_{}.csv", time_label(t)));
        write_file(&path, &csv("x,rho,v", (0..x.len()).map(|k| vec![x[k], rho[k], v[k]])))?;
        report.timings.snapshot_seconds += clock.elapsed().as_secs_f64();

        let clock = Instant::now();
        let mut diag = diagnostics(&sol.field, t, &rho)?;
        if let Some(w) = &wave {
            let lt = sol.field.boundary_at(t);
            diag.wave_rho_error =
                Some(x.iter().zip(&rho).map(|(x, r)| (r - w.w(x - lt)).abs()).fold(0.0, f64::max));
        }
        report.diagnostics.push(diag);
        report.timings.diagnostic_seconds += clock.elapsed().as_secs_f64();
    }
    report.fixed_point = Some(sol.report);
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(EXIT_OK)
}

fn write_boundary(sol: &FbpSolution, path: &Path) -> Result<(), CliError> {
    let field = &sol.field;
    let residual = k_residual(field);
    let nodes = sol.curve.grid().nodes();
    let rows = (0..nodes.len()).map(|i| {
        let q = if i == 0 { field.q.values[0] } else { field.gradient_at(nodes[i]) };
        vec![nodes[i], sol.curve.values()[i], q, residual[i]]
    });
    write_file(path, &csv("t,L,q,K_residual", rows))
}

/// `(x, ρ, v)` at `t`; at `t = 0` the datum on a uniform table of its support.
fn snapshot_columns(field: &FieldSolution, t: f64) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), CliError> {
    if t == 0.0 {
        let datum = &field.datum;
        let (lo, hi) = datum.support();
        let n = density::SNAPSHOT_NODES;
        let x: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
        let rho = x.iter().map(|&x| datum.rho0(x)).collect();
        let v = x.iter().map(|&x| datum.h(x)).collect();
        return Ok((x, rho, v));
    }
    let s = density::snapshot(field, t)?;
    Ok((s.x_nodes, s.rho_values, s.v_values))
}

fn diagnostics(field: &FieldSolution, t: f64, rho: &[f64]) -> Result<TimeDiagnostics, CliError> {
    let (mass, v_mass) = density::conservation(field, t)?;
    let min_rho = rho.iter().copied().fold(f64::INFINITY, f64::min);
    let slope = density::boundary_slope(field, t)?;
    if t == 0.0 {
        let h = field.datum.h(field.datum.b());
        return Ok(TimeDiagnostics {
            t,
            mass,
            v_mass,
            boundary_slope: slope,
            boundary_trace: h,
            stefan_time: None,
            stefan_velocity: None,
            stefan_curvature_term: None,
            stefan_residual: None,
            min_rho,
            wave_rho_error: None,
        });
    }
    let grid = field.curve.grid();
    let last_interior = grid.t(grid.intervals() - 1);
    let (stefan_time, stefan) = if grid.intervals() >= 2 {
        let ts = t.min(last_interior).max(grid.t(1));
        (Some(ts), Some(density::stefan_velocity_check(field, ts)?))
    } else {
        (None, None)
    };
    Ok(TimeDiagnostics {
        t,
        mass,
        v_mass,
        boundary_slope: slope,
        boundary_trace: density::boundary_trace(field, t)?,
        stefan_time,
        stefan_velocity: stefan.map(|s| s.0),
        stefan_curvature_term: stefan.map(|s| s.1),
        stefan_residual: stefan.map(|s| (s.0 - s.1).abs()),
        min_rho,
        wave_rho_error: None,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    write_file(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Format { path: path.to_path_buf(), message: e.to_string() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRow {
    pub t: f64,
    pub dynamics_ks: f64,
    /// KS distance of a direct sample of ρ(·,t); absent at t = 0.
    pub direct_sample_ks: Option<f64>,
    pub leftmost_gap: f64,
    pub ks_critical_99: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParticleReport {
    pub config: RunConfig,
    pub config_text: String,
    pub seed: u64,
    pub seed_generated: bool,
    pub branch_events: u64,
    pub pde_dir: Option<PathBuf>,
    pub comparison: Vec<CalibrationRow>,
    pub simulation_seconds: f64,
    pub comparison_seconds: f64,
}

fn fresh_seed() -> u64 {
    use std::hash::{BuildHasher, Hasher};
    let mut h = std::collections::hash_map::RandomState::new().build_hasher();
    h.write_u128(std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0));
    h.finish()
}

/// `fbp particles`: returns the exit status after writing the artifacts.
pub fn run_particles(config_path: &Path, out: &Path, pde: Option<&Path>) -> Result<i32, CliError> {
    let config = read_config(config_path)?;
    particles_with(&config, out, pde)
}

pub fn particles_with(config: &RunConfig, out: &Path, pde: Option<&Path>) -> Result<i32, CliError> {
    with_workers(config, || particles_inner(config, out, pde))?
}

fn load_field(config: &RunConfig, pde: &Path) -> Result<FieldSolution, CliError> {
    let solve_report: RunReport = read_json(&pde.join(REPORT_FILE))?;
    let theirs = &solve_report.config;
    let same_datum = theirs.datum == config.datum
        && theirs.b == config.b
        && (config.datum == DatumKind::Quartic || theirs.wave_speed == config.wave_speed);
    if !same_datum {
        return Err(CliError::Config(format!("{} was solved for a different datum", pde.display())));
    }
    let sol: FbpSolution = read_json(&pde.join(SOLUTION_FILE))?;
    Ok(sol.field)
}

fn particles_inner(config: &RunConfig, out: &Path, pde: Option<&Path>) -> Result<i32, CliError> {
    if pde.is_some() && config.seed.is_none() {
        return Err(CliError::Config("a seed is required when comparing with a PDE run".into()));
    }
    let seed_generated = config.seed.is_none();
    let mut config = config.clone();
    let seed = *config.seed.get_or_insert_with(fresh_seed);
    let datum: InitialDatum = config.initial_datum()?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let times = config.times();

    let clock = Instant::now();
    let mut runs = simulate_replicas(config.particles, &datum, &times, seed, 1, config.dynamics)?;
    let (measures, branch_events) = runs.pop().expect("one replica");
    let simulation_seconds = clock.elapsed().as_secs_f64();
    for m in &measures {
        let path = out.join(format!("particles_{}.csv", time_label(m.t)));
        write_file(&path, &csv("x", m.sorted_positions.iter().map(|&x| vec![x])))?;
    }

    let clock = Instant::now();
    let mut comparison = Vec::new();
    if let Some(dir) = pde {
        let field = load_field(&config, dir)?;
        let rows = compare_to_pde(&measures, &field)?;
        let table = rows.iter().map(|r| vec![r.t, r.ks_distance, r.leftmost, r.boundary]);
        write_file(&out.join(COMPARISON_FILE), &csv("t,ks_distance,leftmost,L_t", table))?;
        for (r, m) in rows.iter().zip(&measures) {
            comparison.push(CalibrationRow {
                t: r.t,
                dynamics_ks: r.ks_distance,
                direct_sample_ks: direct_ks(&field, m, seed)?,
                leftmost_gap: r.leftmost_gap,
                ks_critical_99: ks_critical_99(m.len()),
            });
        }
    }
    let report = ParticleReport {
        config_text: config.to_text(),
        config,
        seed,
        seed_generated,
        branch_events,
        pde_dir: pde.map(Path::to_path_buf),
        comparison,
        simulation_seconds,
        comparison_seconds: clock.elapsed().as_secs_f64(),
    };
    write_json(&out.join(PARTICLE_REPORT_FILE), &report)?;
    Ok(EXIT_OK)
}

fn direct_ks(field: &FieldSolution, m: &EmpiricalMeasure, seed: u64) -> Result<Option<f64>, CliError> {
    if m.t == 0.0 {
        return Ok(None);
    }
    let sample = sample_from_field(field, m.t, m.len(), seed)?;
    Ok(Some(compare_to_pde(&[sample], field)?[0].ks_distance))
}

/// `fbp wave`: tabulates the closed-form profile of speed `c`.
pub fn run_wave(c: f64, out: &Path) -> Result<i32, CliError> {
    let wave = traveling_wave(c).map_err(|e| CliError::Config(e.to_string()))?;
    fs::create_dir_all(out).map_err(io_err(out))?;
    let u_max = fbp_core::datum::WAVE_CUTOFF_DECAY_LENGTHS / wave.slow_decay_rate();
    let rows = (0..WAVE_ROWS).map(|k| {
        let u = u_max * k as f64 / (WAVE_ROWS - 1) as f64;
        vec![u, wave.w(u), wave.dw(u), wave.d2w(u)]
    });
    write_file(&out.join(WAVE_FILE), &csv("u,w,dw,d2w", rows))?;
    Ok(EXIT_OK)
}
