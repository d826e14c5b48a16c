mod common;

use common::*;
use jnet_core::montecarlo::lyapunov_check;
use jnet_core::spectral::{dense_perron_root, estimate_log_rstar_e, top_eigen};
use jnet_core::{EigenOptions, KilledGenerator, Network, RateEnv};

#[test]
fn monotone_in_killing_set_and_box() {
    let net = example2();
    let ns = [10, 20, 30];
    let table = estimate_log_rstar_e(&net, &[-1, 0, 2, 4], &ns, EigenOptions::default()).unwrap();
    assert!(table.killing_monotonicity_violations(1e-9).is_empty());
    for row in &table.rows {
        assert!(row.converged && row.residual <= 1e-10, "{row:?}");
        assert!(row.rho > 0.0 && row.rho <= 1.0);
        for other in &table.rows {
            if other.kill_radius == row.kill_radius && other.n_box > row.n_box {
                assert!(row.theta <= other.theta + 1e-9, "{row:?} vs {other:?}");
            }
            if other.n_box == row.n_box && other.kill_radius == -1 {
                assert!(row.theta <= other.theta + 1e-9);
            }
        }
    }
}

#[test]
fn dense_matches_power_iteration_up_to_2000_states() {
    let mut r = rng(21);
    let mut cases: Vec<(Network, i64, usize)> = vec![];
    for k in [-1, 0, 2] {
        cases.push((Network::mm1(1.0, 4.0).unwrap(), k, 400));
        cases.push((Network::mm1(4.0, 1.0).unwrap(), k, 300));
        cases.push((example2(), k, 43));
        cases.push((non_ergodic(), k, 30));
        cases.push((random_network(&mut r, 3), k, 11));
    }
    for (net, k, n) in cases {
        let g = KilledGenerator::build(&net, k, n).unwrap();
        assert!(g.len() <= 2000);
        let power = top_eigen(&g, EigenOptions::default());
        let dense = dense_perron_root(&g).unwrap();
        let rho_dense = 1.0 + dense / g.lambda_u();
        assert!((power.rho - rho_dense).abs() <= 1e-8, "k={k} N={n}: {} vs {rho_dense}", power.rho);
    }
}

#[test]
fn transient_queue_decays_at_its_birth_death_rate() {
    let net = Network::mm1(4.0, 1.0).unwrap();
    let g = KilledGenerator::build(&net, -1, 400).unwrap();
    let e = top_eigen(&g, EigenOptions::default());
    assert!((e.theta + 1.0).abs() <= 0.1, "{}", e.theta);
}

#[test]
fn lyapunov_certificate_bounds_the_decay_rate() {
    let env = RateEnv::new(example2()).unwrap();
    let a = env.boundary_minimizer(0).unwrap().alpha;
    let b = env.boundary_minimizer(1).unwrap().alpha;
    let report = lyapunov_check(&env, &a, &b, 200, 0.01).unwrap();
    let k = report.n_eps.unwrap() as i64;
    let g = KilledGenerator::build(env.network(), k, 60).unwrap();
    let theta = top_eigen(&g, EigenOptions::default()).theta;
    assert!(theta <= report.certified_bound + 1e-3, "{theta} vs {}", report.certified_bound);
}
