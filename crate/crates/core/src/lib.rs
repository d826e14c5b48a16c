//! Spectral radius `r*` and essential spectral radius `r*_e` of open Jackson
//! networks, by closed-form large-deviation formulas, path-action
//! minimisation, truncated-generator eigenvalues and simulation.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Index loops over several parallel arrays read better than zipped iterators.
#![allow(clippy::needless_range_loop)]

pub mod cluster;
pub mod linalg;
pub mod montecarlo;
pub mod network;
pub mod pathopt;
pub mod ratefn;
pub mod spectral;

pub use network::{
    Classification, Network, NetworkError, NetworkSpec, Step, TrafficSolution, Transition,
};
pub use ratefn::{FaceSet, Istar0, Istar0Method, LocalRate, RateEnv, RateError};
pub use pathopt::{ActionValue, LoopMinimum, MinimizeOptions, PathError, PlPath};
pub use cluster::{BallCover, Cluster, ClusterError, SampledPath};
pub use montecarlo::{DecayEstimate, InitialLaw, LyapunovReport, MonteCarloError, Trajectory};
pub use spectral::{EigenOptions, KilledGenerator, SpectralEstimate, SpectralError, SpectralTable};
