use anneal_ipm::boltzmann::moments;
use anneal_ipm::equivalence::{
    central_path, compare_paths, default_grid, heat_path, heat_path_sampled, log_grid, objective_increases,
    reweighting_update, HeatSampling,
};
use anneal_ipm::ipm::{newton_direction, EntropicBarrier, LogBarrier};
use anneal_ipm::{BoltzmannParams, ConvexBody};
use nalgebra::DVector;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

#[test]
fn triangle_paths_coincide_and_log_barrier_does_not() {
    let body = ConvexBody::simplex(2).unwrap();
    let obj = v(&[1.0, 0.4]);
    let grid = default_grid(&body, 7);
    let heat = heat_path(&body, &obj, &grid).unwrap();
    let eb = EntropicBarrier::new(&body).unwrap();
    let cmp = compare_paths(&heat, &central_path(&obj, &eb, &grid).unwrap()).unwrap();
    assert!(cmp.max_residual <= 1e-4, "{}", cmp.max_residual);
    let lb = LogBarrier::from_body(&body).unwrap();
    let neg = compare_paths(&heat, &central_path(&obj, &lb, &grid).unwrap()).unwrap();
    assert!(neg.max_residual >= 1e-2, "{}", neg.max_residual);
}

#[test]
fn sampled_heat_matches_central_within_monte_carlo_error() {
    let body = ConvexBody::cube(2, 0.0, 1.0).unwrap();
    let obj = v(&[1.0, 0.0]);
    let grid = default_grid(&body, 7);
    let cfg = HeatSampling {
        seed: 5,
        ..HeatSampling::default()
    };
    let sampled = heat_path_sampled(&body, &obj, &grid, &cfg).unwrap();
    let eb = EntropicBarrier::new(&body).unwrap();
    let cmp = compare_paths(&sampled, &central_path(&obj, &eb, &grid).unwrap()).unwrap();
    for (row, pt) in cmp.rows.iter().zip(&sampled) {
        let se = pt.std_error.as_ref().unwrap();
        let se_norm = se.iter().map(|s| s * s).sum::<f64>().sqrt();
        assert!(row.residual <= 3.0 * se_norm, "t={}: {} > 3·{}", row.t, row.residual, se_norm);
    }
}

#[test]
fn consecutive_gaps_shrink_as_grid_refines() {
    let body = ConvexBody::simplex(2).unwrap();
    let obj = v(&[1.0, 1.0]);
    let mut prev = f64::INFINITY;
    for pts in [4, 8, 16, 32] {
        let hp = heat_path(&body, &obj, &log_grid(2.0, 0.02, pts)).unwrap();
        let gap = hp
            .windows(2)
            .map(|w| (w[0].point() - w[1].point()).norm())
            .fold(0.0, f64::max);
        assert!(gap < prev);
        prev = gap;
    }
}

#[test]
fn heat_objective_is_monotone_on_fixtures() {
    let fixtures = [
        (ConvexBody::cube(2, 0.0, 1.0).unwrap(), v(&[1.0, 0.0])),
        (ConvexBody::simplex(2).unwrap(), v(&[1.0, 0.4])),
        (ConvexBody::unit_ball(2).unwrap(), v(&[0.0, -1.0])),
    ];
    for (body, obj) in fixtures {
        let hp = heat_path(&body, &obj, &log_grid(10.0, 0.01, 25)).unwrap();
        assert!(objective_increases(&hp, &obj, 1e-12).is_empty(), "{:?}", body.kind());
    }
}

#[test]
fn reweighting_error_is_quadratic() {
    let body = ConvexBody::cube(1, 0.0, 1.0).unwrap();
    let theta = v(&[1.0]);
    let err = |d: f64| {
        let tp = v(&[1.0 + d]);
        let r = reweighting_update(&body, &theta, &tp).unwrap();
        let exact = moments(&BoltzmannParams::new(&body, tp).unwrap()).unwrap();
        (r.approx - exact.mean).norm()
    };
    let ratio = err(0.05) / err(0.025);
    assert!((3.0..=5.0).contains(&ratio), "{ratio}");
}

#[test]
fn reweighting_step_is_the_entropic_newton_direction() {
    let body = ConvexBody::simplex(2).unwrap();
    let theta = v(&[1.0, 2.0]);
    let theta_prime = v(&[1.3, 1.8]);
    let r = reweighting_update(&body, &theta, &theta_prime).unwrap();
    // At x(θ) with target tθ̂ = θ′ the Newton step is Σ_θ(θ′ − θ).
    let eb = EntropicBarrier::new(&body).unwrap();
    let (step, _) = newton_direction(&eb, &r.mean, 1.0, &theta_prime).unwrap();
    assert!((&step + &r.first_order_step).norm() < 1e-7 * step.norm());
    assert!(r.damping < 1.0 && r.damping > 0.9);
}
