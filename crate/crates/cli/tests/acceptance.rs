//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::f64::consts::SQRT_2;
use std::fs;
use std::path::Path;
use std::time::Instant;

use fbp_cli::{particles_with, solve_with, RunConfig, EXIT_OK};
use fbp_core::density::{boundary_slope, boundary_trace, conservation, stefan_velocity_check};
use fbp_core::fixed_point::{solve_fbp, FbpSolution, SolverConfig};
use fbp_core::halfline_heat::{
    evaluate_v, evaluate_v_greens, jump_limit, richardson3, single_layer_potential, BoundaryCurve, FieldSolution,
};
use fbp_core::particle::{compare_to_pde, ks_critical_99, sample_from_field, simulate_at};
use fbp_core::volterra::{abel_kernel, picard_series_oracle, solve_weakly_singular, GridFunction, TimeGrid};
use fbp_core::InitialDatum;

const B: f64 = 1.0;
const T: f64 = 0.25;

const WAVE_TRACKING_TOL: f64 = 5e-3;
const WAVE_REFINEMENT_FACTOR: f64 = 1.8;
const MASS_TOL: f64 = 1e-3;
const V_MASS_TOL: f64 = 1e-3;
const SLOPE_TOL: f64 = 1e-2;
const TRACE_TOL: f64 = 1e-3;
const STEFAN_TOL: f64 = 5e-2;
const JUMP_TOL: f64 = 1e-3;
const JUMP_STEP: f64 = 1e-4;
const ABEL_LAMBDA: f64 = 0.5;
const ABEL_TOL: f64 = 1e-6;
const ABEL_MIN_ORDER: f64 = 1.0;
const ABEL_SERIES_TERMS: usize = 30;
const DUAL_TOL: f64 = 1e-3;
const HEALTHY_ITERATIONS: usize = 5;
const PARTICLES: usize = 10_000;
const PARTICLE_SEED: u64 = 0;
const PARTICLE_TIMES: [f64; 2] = [0.1, 0.25];
const KS_TOL: f64 = 0.03;
const LEFTMOST_TOL: f64 = 0.05;

struct Outcome {
    pass: bool,
    detail: String,
}

fn wave_datum() -> InitialDatum {
    InitialDatum::traveling_wave(B, SQRT_2).unwrap()
}

fn solve(datum: &InitialDatum, m: usize) -> FbpSolution {
    let mut config = SolverConfig::new(B, T);
    config.intervals = m;
    solve_fbp(&config, datum).unwrap()
}

fn wave_error(sol: &FbpSolution) -> f64 {
    let grid = sol.curve.grid();
    grid.nodes()
        .iter()
        .zip(sol.curve.values())
        .map(|(t, l)| (l - B - SQRT_2 * t).abs())
        .fold(0.0, f64::max)
}

fn wave_tracking() -> Outcome {
    let coarse = solve(&wave_datum(), 256);
    let fine = solve(&wave_datum(), 512);
    let (e1, e2) = (wave_error(&coarse), wave_error(&fine));
    let ratio = e1 / e2;
    Outcome {
        pass: e1 < WAVE_TRACKING_TOL && ratio >= WAVE_REFINEMENT_FACTOR,
        detail: format!("sup error M=256 {e1:.3e}, M=512 {e2:.3e}, ratio {ratio:.3} (need < {WAVE_TRACKING_TOL:e} and ratio >= {WAVE_REFINEMENT_FACTOR})"),
    }
}

fn conservation_suite(quartic: &FbpSolution, wave: &FbpSolution) -> Outcome {
    let mut worst_mass: f64 = 0.0;
    let mut worst_v: f64 = 0.0;
    for sol in [quartic, wave] {
        for &t in sol.curve.grid().nodes() {
            let (m, vm) = conservation(&sol.field, t).unwrap();
            worst_mass = worst_mass.max((m - 1.0).abs());
            worst_v = worst_v.max(vm.abs());
        }
    }
    Outcome {
        pass: worst_mass < MASS_TOL && worst_v < V_MASS_TOL,
        detail: format!("max |mass-1| {worst_mass:.3e}, max |v_mass| {worst_v:.3e} over all grid times, quartic and wave"),
    }
}

fn boundary_conditions(quartic: &FbpSolution, wave: &FbpSolution) -> Outcome {
    let mut worst_slope: f64 = 0.0;
    let mut worst_trace: f64 = 0.0;
    for sol in [quartic, wave] {
        let grid = sol.curve.grid();
        for i in 1..grid.intervals() {
            let t = grid.t(i);
            worst_slope = worst_slope.max((boundary_slope(&sol.field, t).unwrap() - 2.0).abs());
            worst_trace = worst_trace.max((boundary_trace(&sol.field, t).unwrap() - 2.0 * (-t).exp()).abs());
        }
    }
    Outcome {
        pass: worst_slope < SLOPE_TOL && worst_trace < TRACE_TOL,
        detail: format!("max |rho_x - 2| {worst_slope:.3e}, max |v(L+) - 2e^-t| {worst_trace:.3e} at interior grid times"),
    }
}

fn stefan_residual(sol: &FbpSolution) -> f64 {
    let grid = sol.curve.grid();
    (1..grid.intervals())
        .map(|i| {
            let (lhs, rhs) = stefan_velocity_check(&sol.field, grid.t(i)).unwrap();
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max)
}

fn stefan_velocity(quartic: &FbpSolution) -> Outcome {
    let coarse = stefan_residual(&solve(&InitialDatum::quartic(B), 128));
    let fine = stefan_residual(quartic);
    Outcome {
        pass: fine < STEFAN_TOL && coarse < STEFAN_TOL && fine < coarse,
        detail: format!("max |L' + rho_xx/4| M=128 {coarse:.3e}, M=256 {fine:.3e}"),
    }
}

fn jump_relation() -> Outcome {
    let grid = TimeGrid::uniform(T, 128).unwrap();
    let densities = [
        GridFunction::constant(&grid, 1.0),
        GridFunction::from_fn(&grid, |t| 1.0 + 2.0 * t),
        GridFunction::from_fn(&grid, |t| (5.0 * t).cos() * (-t).exp()),
    ];
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let curve = BoundaryCurve::random_smooth(&grid, B, 2.0, seed);
        for phi in &densities {
            for &t in &[T / 4.0, T / 2.0, T] {
                let lt = curve.value_at(t);
                let w0 = single_layer_potential(phi, &curve, lt, t).unwrap();
                let d = |e: f64| (single_layer_potential(phi, &curve, lt + e, t).unwrap() - w0) / e;
                let one_sided = richardson3(d(4.0 * JUMP_STEP), d(2.0 * JUMP_STEP), d(JUMP_STEP));
                worst = worst.max((one_sided - jump_limit(phi, &curve, t).unwrap()).abs());
            }
        }
    }
    Outcome { pass: worst < JUMP_TOL, detail: format!("max mismatch {worst:.3e} on 5 curves x 3 densities x 3 times") }
}

fn volterra_convergence() -> Outcome {
    let sizes = [128, 256, 512, 1024];
    let errors: Vec<f64> = sizes
        .iter()
        .map(|&m| {
            let grid = TimeGrid::uniform(T, m).unwrap();
            let oracle = picard_series_oracle(ABEL_LAMBDA, &grid, ABEL_SERIES_TERMS).unwrap();
            let phi = solve_weakly_singular(&abel_kernel(ABEL_LAMBDA), &GridFunction::constant(&grid, 1.0)).unwrap();
            phi.sup_distance(&oracle)
        })
        .collect();
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let min_order = orders.iter().copied().fold(f64::INFINITY, f64::min);
    Outcome {
        pass: errors[3] < ABEL_TOL && min_order >= ABEL_MIN_ORDER,
        detail: format!("errors {:.3e} {:.3e} {:.3e} {:.3e}, min order {min_order:.3}", errors[0], errors[1], errors[2], errors[3]),
    }
}

fn dual_gap(field: &FieldSolution) -> f64 {
    let mut worst: f64 = 0.0;
    for &t in &[0.05, 0.1, 0.15, 0.2, 0.25] {
        let lt = field.boundary_at(t);
        for &dx in &[0.05, 0.2, 0.5, 1.0, 2.0] {
            let x = lt + dx;
            worst = worst.max((evaluate_v(field, x, t).unwrap() - evaluate_v_greens(field, x, t).unwrap()).abs());
        }
    }
    worst
}

fn dual_representations(quartic: &FbpSolution) -> Outcome {
    let gaps = [dual_gap(&solve(&InitialDatum::quartic(B), 64).field), dual_gap(&solve(&InitialDatum::quartic(B), 128).field), dual_gap(&quartic.field)];
    Outcome {
        pass: gaps[2] < DUAL_TOL && gaps[1] < gaps[0] && gaps[2] < gaps[1],
        detail: format!("max gap M=64 {:.3e}, M=128 {:.3e}, M=256 {:.3e}", gaps[0], gaps[1], gaps[2]),
    }
}

fn fixed_point_health(wave: &FbpSolution) -> Outcome {
    let r = &wave.report;
    let head = &r.residuals[..HEALTHY_ITERATIONS.min(r.residuals.len())];
    let decreasing = head.len() == HEALTHY_ITERATIONS && head.windows(2).all(|w| w[1] < w[0]);
    let listed: Vec<String> = head.iter().map(|x| format!("{x:.3e}")).collect();
    Outcome {
        pass: decreasing && r.lipschitz_seminorm <= r.lipschitz_budget,
        detail: format!(
            "first residuals [{}], seminorm {:.4} <= A {:.4e}",
            listed.join(", "),
            r.lipschitz_seminorm,
            r.lipschitz_budget
        ),
    }
}

fn particle_cross_check(wave: &FbpSolution) -> Outcome {
    let measures = simulate_at(PARTICLES, &wave_datum(), &PARTICLE_TIMES, PARTICLE_SEED).unwrap();
    let rows = compare_to_pde(&measures, &wave.field).unwrap();
    let critical = ks_critical_99(PARTICLES);
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &rows {
        let direct = sample_from_field(&wave.field, r.t, PARTICLES, PARTICLE_SEED).unwrap();
        let calib = compare_to_pde(&[direct], &wave.field).unwrap()[0].ks_distance;
        pass &= r.ks_distance < KS_TOL && r.leftmost_gap < LEFTMOST_TOL && calib < critical;
        parts.push(format!("t={}: KS {:.4}, |leftmost-L| {:.4}, calibration KS {:.4}", r.t, r.ks_distance, r.leftmost_gap, calib));
    }
    Outcome { pass, detail: format!("{} (critical {critical:.4})", parts.join("; ")) }
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let name = path.strip_prefix(dir).unwrap().display().to_string();
                files.push((name, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

fn determinism() -> Outcome {
    let config = RunConfig::parse("datum = wave\nM = 64\nN = 2000\nseed = 11\nsnapshot_times = 0, 0.1, 0.25\n").unwrap();
    let root = std::env::temp_dir().join(format!("fbp-acceptance-{}", std::process::id()));
    let runs: Vec<Vec<(String, Vec<u8>)>> = (0..2)
        .map(|k| {
            let dir = root.join(format!("run{k}"));
            let pde = dir.join("pde");
            assert_eq!(solve_with(&config, &pde).unwrap(), EXIT_OK);
            assert_eq!(particles_with(&config, &dir.join("particles"), Some(&pde)).unwrap(), EXIT_OK);
            csv_files(&dir)
        })
        .collect();
    let _ = fs::remove_dir_all(&root);
    let identical = runs[0] == runs[1] && !runs[0].is_empty();
    Outcome { pass: identical, detail: format!("{} CSV files compared byte for byte", runs[0].len()) }
}

fn main() {
    let started = Instant::now();
    let quartic = solve(&InitialDatum::quartic(B), 256);
    let wave = solve(&wave_datum(), 256);
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("traveling-wave tracking", Box::new(wave_tracking)),
        ("conservation", Box::new(|| conservation_suite(&quartic, &wave))),
        ("boundary conditions", Box::new(|| boundary_conditions(&quartic, &wave))),
        ("Stefan velocity", Box::new(|| stefan_velocity(&quartic))),
        ("jump relation", Box::new(jump_relation)),
        ("Volterra convergence", Box::new(volterra_convergence)),
        ("dual representations", Box::new(|| dual_representations(&quartic))),
        ("fixed-point health", Box::new(|| fixed_point_health(&wave))),
        ("particle cross-check", Box::new(|| particle_cross_check(&wave))),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let outcome = check();
        if !outcome.pass {
            failed += 1;
        }
        println!(
            "criterion {:>2} {:<24} {}  {} [{:.1}s]",
            k + 1,
            name,
            if outcome.pass { "PASS" } else { "FAIL" },
            outcome.detail,
            clock.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", criteria.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
