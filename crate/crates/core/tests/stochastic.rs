use nmv_core::model::{builtin, truncate};
use nmv_core::noise::{NoiseBundle, StreamId};
use nmv_core::solver::solve_limit_ode;
use nmv_core::stats::mean_and_stderr;
use nmv_core::stochastic::{
    cloud_noise, simulate_frozen, simulate_frozen_discretized, simulate_particles, sup_gap,
};
use nmv_core::{PathGrid, SolverOptions, TimeGrid};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn noise(g: &TimeGrid, seed: u64, replica: u64) -> NoiseBundle {
    NoiseBundle::generate(
        seed,
        StreamId::new(replica, 0),
        1,
        g.horizon_steps(),
        g.step(),
    )
    .unwrap()
}

#[test]
fn particle_mean_follows_the_mean_equation() {
    let g = TimeGrid::new(0.5, 1.0, 1.0 / 128.0).unwrap();
    let spec = builtin("TEST-1").unwrap();
    let xi = PathGrid::constant(g, &[1.0]);
    // with a linear drift the mean solves the limit equation itself
    let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &opts()).unwrap();
    let nb = cloud_noise(2024, 0, 256, &spec, &g).unwrap();
    let cloud = simulate_particles(&spec, &xi.initial_segment(), 0.1, &g, &nb, &opts()).unwrap();
    let last = g.node_count() - 1;
    let ends: Vec<f64> = cloud.paths().iter().map(|p| p.node(last)[0]).collect();
    let (mean, se) = mean_and_stderr(&ends);
    let target = x0.node(last)[0];
    assert!(
        (mean - target).abs() <= 3.0 * se,
        "{mean} vs {target} (se {se})"
    );
}

#[test]
fn schilder_variance_at_horizon_is_eps() {
    let g = TimeGrid::new(0.25, 1.0, 1.0 / 32.0).unwrap();
    let spec = builtin("SCHILDER").unwrap();
    let xi = PathGrid::constant(g, &[0.0]);
    let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &opts()).unwrap();
    let eps = 0.2;
    let last = g.node_count() - 1;
    let squares: Vec<f64> = (0..10_000)
        .map(|r| {
            let y = simulate_frozen(
                &spec,
                &xi.initial_segment(),
                eps,
                &g,
                &noise(&g, 5, r),
                &x0,
                &opts(),
            )
            .unwrap();
            y.node(last)[0] * y.node(last)[0]
        })
        .collect();
    let (var, se) = mean_and_stderr(&squares);
    assert!((var - eps).abs() <= 3.0 * se, "{var} vs {eps} (se {se})");
}

#[test]
fn halving_eps_shrinks_every_schilder_deviation() {
    let g = TimeGrid::new(0.25, 1.0, 1.0 / 64.0).unwrap();
    let spec = builtin("SCHILDER").unwrap();
    let xi = PathGrid::constant(g, &[0.0]);
    let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &opts()).unwrap();
    for r in 0..200 {
        let nb = noise(&g, 9, r);
        let big =
            simulate_frozen(&spec, &xi.initial_segment(), 0.4, &g, &nb, &x0, &opts()).unwrap();
        let small =
            simulate_frozen(&spec, &xi.initial_segment(), 0.2, &g, &nb, &x0, &opts()).unwrap();
        let (a, b) = (sup_gap(&big, &x0), sup_gap(&small, &x0));
        assert!(b < a || a == 0.0);
        assert!((b - a / 2f64.sqrt()).abs() <= 1e-12 * (1.0 + a));
    }
}

#[test]
fn discretization_gap_decreases_in_n() {
    let g = TimeGrid::new(0.5, 1.0, 1.0 / 128.0).unwrap();
    let spec = builtin("TEST-1").unwrap();
    let xi = PathGrid::constant(g, &[1.0]);
    let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &opts()).unwrap();
    let ns = [8, 64];
    let mut sums = [0.0; 2];
    for r in 0..1000 {
        let nb = noise(&g, 77, r);
        let y = simulate_frozen(&spec, &xi.initial_segment(), 0.1, &g, &nb, &x0, &opts()).unwrap();
        for (s, &n) in sums.iter_mut().zip(&ns) {
            let yn = simulate_frozen_discretized(
                &spec,
                &xi.initial_segment(),
                0.1,
                n,
                &g,
                &nb,
                &x0,
                &opts(),
            )
            .unwrap();
            *s += sup_gap(&y, &yn);
        }
    }
    assert!(sums[1] < sums[0], "{sums:?}");
}

#[test]
fn truncation_tail_decreases_with_radius() {
    let g = TimeGrid::new(0.5, 1.0, 1.0 / 64.0).unwrap();
    let spec = builtin("TEST-1").unwrap();
    let xi = PathGrid::constant(g, &[1.5]);
    let x0 = solve_limit_ode(&spec, &xi.initial_segment(), &g, &opts()).unwrap();
    let models: Vec<_> = [1.0, 2.0, 4.0]
        .iter()
        .map(|&r| truncate(&spec, r).unwrap())
        .collect();
    let mut hits = [0u32; 3];
    for r in 0..2000 {
        let nb = noise(&g, 31, r);
        let y = simulate_frozen(&spec, &xi.initial_segment(), 0.1, &g, &nb, &x0, &opts()).unwrap();
        for (h, m) in hits.iter_mut().zip(&models) {
            let yr = simulate_frozen(m, &xi.initial_segment(), 0.1, &g, &nb, &x0, &opts()).unwrap();
            *h += u32::from(sup_gap(&y, &yr) > 0.1);
        }
    }
    assert!(hits[0] > hits[1] && hits[1] >= hits[2], "{hits:?}");
}
