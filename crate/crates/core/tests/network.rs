use jnet_core::{Classification, Network, NetworkSpec};
use proptest::prelude::*;

fn network_spec(max_d: usize) -> impl Strategy<Value = NetworkSpec> {
    (1..=max_d).prop_flat_map(|d| {
        (
            prop::collection::vec(0.05f64..5.0, d),
            prop::collection::vec(0.1f64..8.0, d),
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, d), d),
            prop::collection::vec(0.0f64..0.95, d),
        )
            .prop_map(|(lambda, mu, weights, totals)| {
                let routing = weights
                    .iter()
                    .enumerate()
                    .map(|(i, row)| {
                        let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, w)| w).sum();
                        row.iter()
                            .enumerate()
                            .map(|(j, w)| if j == i || off == 0.0 { 0.0 } else { w * totals[i] / off })
                            .collect()
                    })
                    .collect();
                NetworkSpec::new(lambda, mu, routing)
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn traffic_residual(spec in network_spec(5)) {
        let net = spec.validate().unwrap();
        let sol = net.solve_traffic().unwrap();
        prop_assert!(sol.relative_residual(&net) <= 1e-12, "residual {}", sol.relative_residual(&net));
        let ergodic = sol.slack.iter().all(|&s| s > 0.0);
        if sol.boundary.is_empty() {
            prop_assert_eq!(ergodic, sol.classification == Classification::Ergodic);
        }
    }

    #[test]
    fn classification_is_time_scale_free(spec in network_spec(4), c in 0.01f64..100.0) {
        let net = spec.validate().unwrap();
        let a = net.solve_traffic().unwrap().classification;
        let b = net.rescaled(c).solve_traffic().unwrap().classification;
        prop_assert_eq!(a, b);
    }

    #[test]
    fn generator_is_conservative(
        spec in network_spec(4),
        raw in prop::collection::vec(0i64..4, 4),
    ) {
        let net = spec.validate().unwrap();
        let state = &raw[..net.dim()];
        let row = net.generator_row(state).unwrap();
        let out: f64 = row.iter().map(|t| t.rate).sum();
        let expected: f64 = net.lambda().iter().sum::<f64>()
            + (0..net.dim()).filter(|&i| state[i] > 0).map(|i| net.mu()[i]).sum::<f64>();
        prop_assert!((out - expected).abs() <= 1e-12 * expected);
        for t in &row {
            prop_assert!(t.rate > 0.0);
            prop_assert!(t.target(state).iter().all(|&x| x >= 0));
        }
    }
}

#[test]
fn boundary_classification() {
    let null = NetworkSpec::new(vec![1.0, 1.0], vec![1.25, 2.0], vec![vec![0.0, 0.2], vec![0.2, 0.0]])
        .validate()
        .unwrap();
    let sol = null.solve_traffic().unwrap();
    assert_eq!(sol.classification, Classification::RecurrentNonErgodic);
    assert_eq!(sol.boundary, vec![0]);
    assert_eq!(
        Network::mm1(4.0, 1.0).unwrap().solve_traffic().unwrap().classification,
        Classification::Transient
    );
}
