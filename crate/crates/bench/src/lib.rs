//! Fixtures for the benchmarks.

use jnet_core::{BallCover, Network, NetworkSpec, SampledPath};

pub fn two_station() -> Network {
    NetworkSpec::new(
        vec![1.0, 1.0],
        vec![4.0, 5.0],
        vec![vec![0.0, 0.2], vec![0.2, 0.0]],
    )
    .validate()
    .expect("valid network")
}

pub fn single_queue() -> Network {
    Network::mm1(1.0, 4.0).expect("valid network")
}

/// Grid cover for `N = 1`, `ε = 0.5` in the plane.
pub fn plane_cover() -> BallCover {
    BallCover::grid(2, 1.0, 0.5).expect("valid cover")
}

/// Spiral of radius `1 + t/2` on `[0, T]`.
pub fn spiral(horizon: u32) -> SampledPath {
    SampledPath::from_fn(horizon, |t| {
        let r = 1.0 + 0.5 * t;
        let a = std::f64::consts::FRAC_PI_2 * t;
        vec![r * a.cos(), r * a.sin()]
    })
    .expect("valid path")
}
