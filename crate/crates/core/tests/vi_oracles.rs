mod common;

use common::{deterministic_scan, synthetic, synthetic_obstacle, Trinomial};
use habit_entry::vi::{auto_grid, extract_boundary, solve_vi, Grid2D, Obstacle, Region, Scheme};
use habit_entry::ModelConfig;

#[test]
fn zero_obstacle_gives_zero_surface() {
    let c = ModelConfig::figure1(0.25);
    let grid = Grid2D::centered(&c.market, 51, 81, 5.0).unwrap();
    let sol = solve_vi(&c.market, &grid, &Obstacle::zeros(&grid), Scheme::default()).unwrap();
    assert!(sol.values.iter().all(|&v| v == 0.0));
    assert!(extract_boundary(&sol)
        .iter()
        .all(|r| r.region == Region::FullStop));
}

#[test]
fn trinomial_snell_envelope_agrees() {
    let c = ModelConfig::figure1(0.25);
    let m = &c.market;
    let lattice = Trinomial::new(m, 400, 60);
    let grid = lattice.grid(c.horizon());
    let obs = synthetic_obstacle(&grid, m.mu_bar);
    let sol = solve_vi(m, &grid, &obs, Scheme::default()).unwrap();
    let tree = lattice.snell(m, |t, eta| synthetic(t, eta, m.mu_bar));
    let pde = sol.row(0);
    let mid = lattice.half_nodes;
    let rel = (pde[mid] - tree[mid]).abs() / tree[mid].abs();
    assert!(
        rel < 1e-2,
        "pde {} tree {} rel {rel:e}",
        pde[mid],
        tree[mid]
    );
}

#[test]
fn comparison_of_ordered_obstacles() {
    let c = ModelConfig::figure1(0.25);
    let grid = Grid2D::centered(&c.market, 41, 81, 4.0).unwrap();
    let low = synthetic_obstacle(&grid, 0.25);
    let high = Obstacle::from_fn(&grid, |t, eta| {
        synthetic(t, eta, 0.25) + 0.1 * (1.0 - t / 12.5)
    });
    let scheme = Scheme::default();
    let a = solve_vi(&c.market, &grid, &low, scheme).unwrap();
    let b = solve_vi(&c.market, &grid, &high, scheme).unwrap();
    for (x, y) in a.values.iter().zip(&b.values) {
        assert!(*x <= y + 10.0 * scheme.psor_tol);
    }
}

#[test]
fn crank_nicolson_close_to_implicit() {
    let c = ModelConfig::figure1(0.25);
    let grid = Grid2D::centered(&c.market, 201, 121, 4.0).unwrap();
    let obs = synthetic_obstacle(&grid, 0.25);
    let implicit = solve_vi(&c.market, &grid, &obs, Scheme::default()).unwrap();
    let cn = solve_vi(
        &c.market,
        &grid,
        &obs,
        Scheme {
            theta: 0.5,
            ..Scheme::default()
        },
    )
    .unwrap();
    let (a, b) = (implicit.initial_value(0.25), cn.initial_value(0.25));
    assert!((a - b).abs() < 2e-2 * a.abs(), "{a} vs {b}");
    assert!(cn.min_gap() >= -1e-12);
}

#[test]
fn still_drift_matches_scan_at_every_node() {
    // λ = 0, σ_μ = 0: each drift level is its own deterministic problem
    let mut c = ModelConfig::figure1(0.25);
    c.market.sigma_mu = 0.0;
    c.market.lambda = 0.0;
    let grid = Grid2D::centered(&c.market, 101, 21, 2.0).unwrap();
    let obs = synthetic_obstacle(&grid, 0.25);
    let sol = solve_vi(&c.market, &grid, &obs, Scheme::default()).unwrap();
    for (j, &eta) in grid.eta_nodes.iter().enumerate() {
        c.market.mu0 = eta;
        let (_, best) = deterministic_scan(&c, 100, |t, mu| synthetic(t, mu, 0.25));
        assert!((sol.value(0, j) - best).abs() < 1e-12);
    }
}

#[test]
fn model_surface_sits_on_zero_terminal_data() {
    let c = ModelConfig::figure1(0.25);
    let (grid, obs) = auto_grid(&c, 41, 121).unwrap();
    let sol = solve_vi(&c.market, &grid, &obs, Scheme::default()).unwrap();
    assert!(sol.min_gap() >= 0.0);
    assert!(sol.row(grid.n_t() - 1).iter().all(|&v| v == 0.0));
    // ṽ ∈ [Ψ, 0] up to the PSOR tolerance
    let top = sol.values.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    assert!(
        top <= 10.0 * Scheme::default().psor_tol * obs.max_abs(),
        "{top:e}"
    );
    assert!(sol.complementarity_residual() <= 1e-6);
}
