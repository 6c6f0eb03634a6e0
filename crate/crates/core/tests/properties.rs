use std::f64::consts::PI;

use fbp_core::halfline_heat::{richardson3, BoundaryCurve};
use fbp_core::kernels::{heat_kernel, heat_kernel_dx, normal_tail};
use fbp_core::particle::{empirical_cdf, ks_distance, EmpiricalMeasure};
use fbp_core::quadrature::gauss8;
use fbp_core::volterra::{abel_kernel, solve_weakly_singular, GridFunction, GridSpacing, TimeGrid};
use proptest::prelude::*;

fn random_grid() -> impl Strategy<Value = TimeGrid> {
    prop::collection::vec(0.05f64..1.0, 2..40).prop_map(|steps| {
        let mut t = 0.0;
        let mut nodes = vec![0.0];
        for s in steps {
            t += s;
            nodes.push(t);
        }
        TimeGrid::from_nodes(nodes).unwrap()
    })
}

proptest! {
    #[test]
    fn heat_kernel_is_a_probability_density(x in -3.0f64..3.0, dt in 0.01f64..2.0) {
        let w = 12.0 * dt.sqrt();
        let mass: f64 = (0..16)
            .map(|k| {
                let a = x - w + 2.0 * w * k as f64 / 16.0;
                gauss8().integrate(a, a + 2.0 * w / 16.0, |xi| heat_kernel(x, dt, xi, 0.0).unwrap())
            })
            .sum();
        prop_assert!((mass - 1.0).abs() < 1e-10);
        prop_assert!(heat_kernel(x, dt, x + 0.3, 0.0).unwrap() == heat_kernel(x + 0.3, dt, x, 0.0).unwrap());
    }

    #[test]
    fn kernel_derivative_matches_differences(x in -2.0f64..2.0, xi in -2.0f64..2.0, dt in 0.05f64..1.0) {
        let h = 1e-5;
        let fd = (heat_kernel(x + h, dt, xi, 0.0).unwrap() - heat_kernel(x - h, dt, xi, 0.0).unwrap()) / (2.0 * h);
        let exact = heat_kernel_dx(x, dt, xi, 0.0).unwrap();
        prop_assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs() / dt));
    }

    #[test]
    fn kernel_rejects_non_positive_gaps(t in 0.0f64..1.0, lag in 0.0f64..1.0) {
        prop_assert!(heat_kernel(0.0, t, 0.0, t + lag).is_err());
    }

    #[test]
    fn normal_tail_is_a_survival_function(z in -6.0f64..6.0) {
        prop_assert!((normal_tail(z) + normal_tail(-z) - 1.0).abs() < 1e-14);
        prop_assert!(normal_tail(z) >= normal_tail(z + 0.1));
    }

    #[test]
    fn locate_brackets_the_time(grid in random_grid(), r in 0.0f64..1.0) {
        let t = r * grid.horizon();
        let j = grid.locate(t);
        prop_assert!(j < grid.intervals());
        prop_assert!(grid.t(j) <= t && t <= grid.t(j + 1));
    }

    #[test]
    fn interpolation_reproduces_nodes_and_lines(grid in random_grid(), a in -2.0f64..2.0, c in -2.0f64..2.0, r in 0.0f64..1.0) {
        let f = GridFunction::from_fn(&grid, |t| a + c * t);
        for (i, &t) in grid.nodes().iter().enumerate() {
            prop_assert_eq!(f.interpolate(t), f.values[i]);
        }
        let t = r * grid.horizon();
        prop_assert!((f.interpolate(t) - a - c * t).abs() < 1e-12 * (1.0 + grid.horizon()));
    }

    #[test]
    fn abel_weights_integrate_the_resolved_functions(grid in random_grid()) {
        for i in 1..grid.len() {
            let w = grid.abel_weights(i);
            let ti = grid.t(i);
            let sum = |f: &dyn Fn(f64) -> f64| w.iter().zip(grid.nodes()).map(|(w, &t)| w * f(t)).sum::<f64>();
            let scale = 1.0 + ti;
            prop_assert!((sum(&|_| 1.0) - 2.0 * ti.sqrt()).abs() < 1e-12 * scale);
            prop_assert!((sum(&|t| t.sqrt()) - 0.5 * PI * ti).abs() < 1e-12 * scale);
            if i >= 2 {
                prop_assert!((sum(&|t| t) - 4.0 / 3.0 * ti.powf(1.5)).abs() < 1e-11 * scale * scale);
            }
        }
    }

    #[test]
    fn abel_solver_is_linear(grid in random_grid(), lambda in -0.5f64..0.5, a in -2.0f64..2.0) {
        let k = abel_kernel(lambda);
        let f1 = GridFunction::from_fn(&grid, |t| (t).cos());
        let f2 = GridFunction::from_fn(&grid, |t| 1.0 + t);
        let mix = GridFunction::from_fn(&grid, |t| a * t.cos() + 1.0 + t);
        let (s1, s2, s) = (
            solve_weakly_singular(&k, &f1).unwrap(),
            solve_weakly_singular(&k, &f2).unwrap(),
            solve_weakly_singular(&k, &mix).unwrap(),
        );
        for i in 0..grid.len() {
            let expected = a * s1.values[i] + s2.values[i];
            prop_assert!((s.values[i] - expected).abs() < 1e-9 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn richardson_removes_linear_and_quadratic_terms(c0 in -5.0f64..5.0, c1 in -5.0f64..5.0, c2 in -5.0f64..5.0, e in 1e-4f64..1e-1) {
        let f = |h: f64| c0 + c1 * h + c2 * h * h;
        prop_assert!((richardson3(f(4.0 * e), f(2.0 * e), f(e)) - c0).abs() < 1e-10);
    }

    #[test]
    fn random_curves_respect_their_slope(seed in 0u64..1000, slope in 0.1f64..3.0, m in 8usize..80) {
        let grid = TimeGrid::new(0.25, m, GridSpacing::Uniform).unwrap();
        let curve = BoundaryCurve::random_smooth(&grid, 1.0, slope, seed);
        prop_assert_eq!(curve.values()[0], 1.0);
        prop_assert!(curve.seminorm() <= slope * (1.0 + 1e-12));
        for i in 1..grid.len() {
            let t = grid.t(i);
            for s in [0.0, 0.3 * t, t] {
                let direct = curve.value_at(t) - curve.value_at(t - s);
                prop_assert!((curve.drop_since(t, s) - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_cdf_is_a_distribution(mut xs in prop::collection::vec(-5.0f64..5.0, 1..200), probes in prop::collection::vec(-6.0f64..6.0, 1..20)) {
        let m = EmpiricalMeasure::new(0.0, xs.clone());
        xs.sort_by(f64::total_cmp);
        prop_assert_eq!(m.leftmost, xs[0]);
        let mut probes = probes;
        probes.sort_by(f64::total_cmp);
        let values: Vec<f64> = probes.iter().map(|&x| empirical_cdf(&m, x)).collect();
        prop_assert!(values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!(values.iter().all(|&v| (0.0..=1.0).contains(&v)));
        let ks = ks_distance(&m, |x| 1.0 / (1.0 + (-x).exp()));
        prop_assert!((0.0..=1.0).contains(&ks));
    }
}
