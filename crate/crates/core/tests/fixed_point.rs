use std::f64::consts::SQRT_2;

use fbp_core::fixed_point::*;
use fbp_core::halfline_heat::{BoundaryCurve, BoundarySource};
use fbp_core::volterra::{GridSpacing, TimeGrid};
use fbp_core::{FbpError, InitialDatum};

fn wave() -> InitialDatum {
    InitialDatum::traveling_wave(1.0, SQRT_2).unwrap()
}

fn sup_line_error(curve: &BoundaryCurve) -> f64 {
    curve
        .grid()
        .nodes()
        .iter()
        .zip(curve.values())
        .map(|(t, l)| (l - 1.0 - SQRT_2 * t).abs())
        .fold(0.0, f64::max)
}

#[test]
fn k_maps_the_wave_boundary_to_itself() {
    let grid = TimeGrid::uniform(0.25, 256).unwrap();
    let line = BoundaryCurve::from_fn(&grid, 10.0, |t| 1.0 + SQRT_2 * t).unwrap();
    let image = apply_K(&line, &wave()).unwrap();
    assert!(sup_line_error(&image) < 1e-2);
    assert!(image.values().windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn zero_gradient_leaves_the_start_point() {
    let grid = TimeGrid::uniform(0.25, 32).unwrap();
    let curve = BoundaryCurve::from_fn(&grid, 1.0, |t| 1.0 + 0.5 * t).unwrap();
    let (image, _) = apply_k_with(&curve, &InitialDatum::zero(1.0), BoundarySource::Zeroed).unwrap();
    assert!(image.values().iter().all(|&l| l == 1.0));
}

#[test]
fn wave_fixed_point() {
    let config = SolverConfig::new(1.0, 0.25);
    let sol = solve_fbp(&config, &wave()).unwrap();
    assert!(sup_line_error(&sol.curve) < 5e-3);
    let r = &sol.report;
    assert!(r.final_residual <= config.tol_fp);
    assert!(r.lipschitz_seminorm <= r.lipschitz_budget);
    assert!(r.contraction_ratios.iter().all(|c| c.is_finite() && *c < 1.0));
    assert_eq!(r.horizon_used, 0.25);
    assert_eq!(r.halvings, 0);
}

#[test]
fn graded_grid_and_damping_reach_the_same_boundary() {
    let mut config = SolverConfig::new(1.0, 0.25);
    config.intervals = 128;
    config.spacing = GridSpacing::Graded;
    config.damping = 0.5;
    let sol = solve_fbp(&config, &wave()).unwrap();
    assert!(sup_line_error(&sol.curve) < 5e-3);
    assert_eq!(sol.report.damping_used, 0.5);
}

#[test]
fn small_budget_shrinks_the_horizon() {
    let datum = InitialDatum::quartic(1.0);
    let mut config = SolverConfig::new(1.0, 0.25);
    config.intervals = 64;
    config.lipschitz_budget = Some(0.955);
    let sol = solve_fbp(&config, &datum).unwrap();
    assert!(sol.report.halvings >= 1);
    assert!(sol.report.horizon_used < 0.25);
    assert!(sol.report.lipschitz_seminorm <= 0.955);

    config.adaptive_horizon = false;
    assert!(matches!(solve_fbp(&config, &datum), Err(FbpError::Budget { .. })));
}

#[test]
fn budget_below_the_initial_slope_is_unreachable() {
    let mut config = SolverConfig::new(1.0, 0.25);
    config.intervals = 32;
    config.lipschitz_budget = Some(0.5);
    assert!(matches!(
        solve_fbp(&config, &InitialDatum::quartic(1.0)),
        Err(FbpError::NoConvergence { iterations: 0, .. })
    ));
}

#[test]
fn iteration_cap_reports_the_residual_history() {
    let mut config = SolverConfig::new(1.0, 0.25);
    config.intervals = 32;
    config.max_iter = 1;
    match solve_fbp(&config, &InitialDatum::quartic(1.0)) {
        Err(FbpError::NoConvergence { iterations, residuals, .. }) => {
            assert_eq!(iterations, 1);
            assert_eq!(residuals.len(), 1);
        }
        other => panic!("expected no convergence, got {other:?}"),
    }
}

#[test]
fn k_is_stable_on_random_curves() {
    let grid = TimeGrid::uniform(0.25, 64).unwrap();
    let datum = InitialDatum::quartic(1.0);
    let mut worst: f64 = 0.0;
    for seed in 0..6 {
        let a = BoundaryCurve::random_smooth(&grid, 1.0, 1.5, seed).with_budget(1e6);
        let bump = BoundaryCurve::random_smooth(&grid, 0.0, 0.05, 100 + seed);
        let values: Vec<f64> = a.values().iter().zip(bump.values()).map(|(x, y)| x + y).collect();
        let b = BoundaryCurve::new(grid.clone(), values, 1e6).unwrap();
        let (ka, kb) = (apply_K(&a, &datum).unwrap(), apply_K(&b, &datum).unwrap());
        let num = ka.values().iter().zip(kb.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let den = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        worst = worst.max(num / den);
    }
    assert!(worst.is_finite() && worst < 10.0, "{worst}");
}

#[test]
fn boundary_slope_variation_stays_bounded() {
    let datum = InitialDatum::quartic(1.0);
    let variation: Vec<f64> = [64, 128, 256]
        .iter()
        .map(|&m| {
            let mut config = SolverConfig::new(1.0, 0.25);
            config.intervals = m;
            solve_fbp(&config, &datum).unwrap().report.slope_variation
        })
        .collect();
    for w in variation.windows(2) {
        assert!(w[1] <= 1.5 * w[0], "{variation:?}");
    }
}

#[test]
fn residual_sequence_contracts_on_the_quartic_datum() {
    let sol = solve_fbp(&SolverConfig::new(1.0, 0.25), &InitialDatum::quartic(1.0)).unwrap();
    let r = &sol.report.residuals;
    assert!(r.windows(2).all(|w| w[1] < w[0]));
    assert!(sol.report.contraction_ratios.iter().all(|&c| c < 1.0));
}
