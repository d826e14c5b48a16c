//! Open Jackson networks: validation, traffic equations, and the generator.
//!
//! Stations are indexed `0..d` in code. Error messages and the config format
//! number them `1..=d`.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve_dense, BandMatrix};

/// Relative tolerance below which `ν_i` and `μ_i` are treated as equal.
pub const RECURRENCE_TIE_TOL: f64 = 1e-9;
const ROW_SUM_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network must have at least one station")]
    NoStations,
    #[error("key `{key}`: expected {expected} entries, found {found}")]
    LengthMismatch {
        key: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("key `routing`, row {row}: expected {expected} entries, found {found}")]
    RoutingRowLength {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("key `{key}`, station {station}: value {value} is not finite")]
    NonFinite {
        key: &'static str,
        station: usize,
        value: f64,
    },
    #[error("key `{key}`, station {station}: negative rate or probability {value}")]
    NegativeRate {
        key: &'static str,
        station: usize,
        value: f64,
    },
    #[error("key `mu`, station {station}: service rate must be strictly positive")]
    ZeroServiceRate { station: usize },
    #[error("key `routing`, row {row}: probabilities sum to {sum} > 1")]
    RowSumExceedsOne { row: usize, sum: f64 },
    #[error("key `routing`, row {row}: diagonal entry {value} must be zero")]
    DiagonalNonzero { row: usize, value: f64 },
    #[error("routing matrix has spectral radius {radius} >= 1")]
    RoutingSpectralRadiusGEOne { radius: f64 },
    #[error("station {station} never receives customers")]
    UnreachableStation { station: usize },
    #[error("traffic equations are singular")]
    SingularSystem,
    #[error("state coordinate {index} is negative")]
    NegativeCoordinate { index: usize },
    #[error("state has {found} coordinates, network has {expected} stations")]
    StateDimension { expected: usize, found: usize },
}

/// Unvalidated network description, as read from a config file.
///
/// ```toml
/// d = 2
/// lambda = [1.0, 1.0]
/// mu = [4.0, 5.0]
/// routing = [[0.0, 0.2], [0.2, 0.0]]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub d: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub routing: Vec<Vec<f64>>,
}

impl NetworkSpec {
    pub fn new(lambda: Vec<f64>, mu: Vec<f64>, routing: Vec<Vec<f64>>) -> Self {
        Self {
            d: lambda.len(),
            lambda,
            mu,
            routing,
        }
    }

    pub fn validate(self) -> Result<Network, NetworkError> {
        Network::validate(self)
    }
}

/// A validated open Jackson network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    lambda: Vec<f64>,
    mu: Vec<f64>,
    routing: Vec<Vec<f64>>,
    exit: Vec<f64>,
    routing_radius: f64,
}

impl Network {
    /// Checks every structural assumption and returns the validated network.
    ///
    /// The routing spectral radius is the Perron root of the routing matrix,
    /// found by bisection on the M-matrix test for `sI − P`.
    pub fn validate(spec: NetworkSpec) -> Result<Self, NetworkError> {
        let NetworkSpec {
            d,
            lambda,
            mu,
            routing,
        } = spec;
        if d == 0 {
            return Err(NetworkError::NoStations);
        }
        for (key, v) in [("lambda", &lambda), ("mu", &mu)] {
            if v.len() != d {
                return Err(NetworkError::LengthMismatch {
                    key,
                    expected: d,
                    found: v.len(),
                });
            }
        }
        if routing.len() != d {
            return Err(NetworkError::LengthMismatch {
                key: "routing",
                expected: d,
                found: routing.len(),
            });
        }
        for (key, v) in [("lambda", &lambda), ("mu", &mu)] {
            for (i, &x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(NetworkError::NonFinite {
                        key,
                        station: i + 1,
                        value: x,
                    });
                }
                if x < 0.0 {
                    return Err(NetworkError::NegativeRate {
                        key,
                        station: i + 1,
                        value: x,
                    });
                }
            }
        }
        if let Some(i) = mu.iter().position(|&m| m == 0.0) {
            return Err(NetworkError::ZeroServiceRate { station: i + 1 });
        }
        let mut exit = Vec::with_capacity(d);
        for (i, row) in routing.iter().enumerate() {
            if row.len() != d {
                return Err(NetworkError::RoutingRowLength {
                    row: i + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            for &p in row {
                if !p.is_finite() {
                    return Err(NetworkError::NonFinite {
                        key: "routing",
                        station: i + 1,
                        value: p,
                    });
                }
                if p < 0.0 {
                    return Err(NetworkError::NegativeRate {
                        key: "routing",
                        station: i + 1,
                        value: p,
                    });
                }
            }
            if row[i] != 0.0 {
                return Err(NetworkError::DiagonalNonzero {
                    row: i + 1,
                    value: row[i],
                });
            }
            let sum: f64 = row.iter().sum();
            if sum > 1.0 + ROW_SUM_SLACK {
                return Err(NetworkError::RowSumExceedsOne { row: i + 1, sum });
            }
            exit.push((1.0 - sum).max(0.0));
        }

        let routing_radius = BandMatrix::from_dense(&routing).metzler_perron_root().max(0.0);
        if routing_radius >= 1.0 - 1e-10 {
            return Err(NetworkError::RoutingSpectralRadiusGEOne {
                radius: routing_radius,
            });
        }

        // Station i is fed iff some j with λ_j > 0 reaches i in the routing graph.
        let mut reached = vec![false; d];
        let mut queue: VecDeque<usize> = (0..d).filter(|&j| lambda[j] > 0.0).collect();
        for &j in &queue {
            reached[j] = true;
        }
        while let Some(j) = queue.pop_front() {
            for (k, &p) in routing[j].iter().enumerate() {
                if p > 0.0 && !reached[k] {
                    reached[k] = true;
                    queue.push_back(k);
                }
            }
        }
        if let Some(i) = reached.iter().position(|&r| !r) {
            return Err(NetworkError::UnreachableStation { station: i + 1 });
        }

        Ok(Self {
            lambda,
            mu,
            routing,
            exit,
            routing_radius,
        })
    }

    /// M/M/1 queue with arrival rate `lambda` and service rate `mu`.
    pub fn mm1(lambda: f64, mu: f64) -> Result<Self, NetworkError> {
        NetworkSpec::new(vec![lambda], vec![mu], vec![vec![0.0]]).validate()
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn routing(&self) -> &[Vec<f64>] {
        &self.routing
    }

    /// Exit probabilities `p_i0 = 1 − Σ_j p_ij`.
    pub fn exit(&self) -> &[f64] {
        &self.exit
    }

    pub fn routing_radius(&self) -> f64 {
        self.routing_radius
    }

    /// `Σλ_i + Σμ_i`, the largest total jump rate over all states.
    pub fn max_exit_rate(&self) -> f64 {
        self.lambda.iter().sum::<f64>() + self.mu.iter().sum::<f64>()
    }

    pub fn spec(&self) -> NetworkSpec {
        NetworkSpec::new(self.lambda.clone(), self.mu.clone(), self.routing.clone())
    }

    /// Same network with every rate multiplied by `c > 0`.
    pub fn rescaled(&self, c: f64) -> Self {
        assert!(c > 0.0 && c.is_finite());
        let mut out = self.clone();
        out.lambda.iter_mut().for_each(|x| *x *= c);
        out.mu.iter_mut().for_each(|x| *x *= c);
        out
    }

    /// Solves `ν = λ + νP` and classifies recurrence.
    pub fn solve_traffic(&self) -> Result<TrafficSolution, NetworkError> {
        let d = self.dim();
        // (I − Pᵀ) ν = λ
        let a: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| {
                        let id = if i == j { 1.0 } else { 0.0 };
                        id - self.routing[j][i]
                    })
                    .collect()
            })
            .collect();
        let nu = solve_dense(a, self.lambda.clone()).ok_or(NetworkError::SingularSystem)?;
        let slack: Vec<f64> = self.mu.iter().zip(&nu).map(|(m, n)| m - n).collect();

        let mut boundary = Vec::new();
        let mut transient = false;
        for i in 0..d {
            let scale = self.mu[i].max(nu[i].abs());
            if slack[i].abs() <= RECURRENCE_TIE_TOL * scale {
                boundary.push(i);
            } else if slack[i] < 0.0 {
                transient = true;
            }
        }
        let classification = if transient {
            Classification::Transient
        } else if boundary.is_empty() {
            Classification::Ergodic
        } else {
            Classification::RecurrentNonErgodic
        };
        Ok(TrafficSolution {
            nu,
            classification,
            slack,
            boundary,
        })
    }

    /// Outgoing transitions of the chain from `state`, zero-rate moves omitted.
    /// Service moves only fire at stations with a nonempty queue.
    pub fn generator_row(&self, state: &[i64]) -> Result<Vec<Transition>, NetworkError> {
        let d = self.dim();
        if state.len() != d {
            return Err(NetworkError::StateDimension {
                expected: d,
                found: state.len(),
            });
        }
        if let Some(index) = state.iter().position(|&x| x < 0) {
            return Err(NetworkError::NegativeCoordinate { index });
        }
        let mut out = Vec::with_capacity(d * (d + 1));
        self.for_each_transition(state, |t| out.push(t));
        Ok(out)
    }

    /// Allocation-free variant of [`Network::generator_row`] for hot loops.
    /// The state must already be valid.
    #[inline]
    pub fn for_each_transition(&self, state: &[i64], mut f: impl FnMut(Transition)) {
        let d = self.dim();
        for i in 0..d {
            if self.lambda[i] > 0.0 {
                f(Transition {
                    step: Step::Arrival(i),
                    rate: self.lambda[i],
                });
            }
        }
        for i in 0..d {
            if state[i] <= 0 {
                continue;
            }
            let out = self.mu[i] * self.exit[i];
            if out > 0.0 {
                f(Transition {
                    step: Step::Departure(i),
                    rate: out,
                });
            }
            for j in 0..d {
                let r = self.mu[i] * self.routing[i][j];
                if j != i && r > 0.0 {
                    f(Transition {
                        step: Step::Route { from: i, to: j },
                        rate: r,
                    });
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Classification {
    Ergodic,
    RecurrentNonErgodic,
    Transient,
}

impl Classification {
    pub fn is_recurrent(self) -> bool {
        !matches!(self, Classification::Transient)
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Ergodic => "ergodic",
            Classification::RecurrentNonErgodic => "recurrent (null)",
            Classification::Transient => "transient",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrafficSolution {
    pub nu: Vec<f64>,
    pub classification: Classification,
    /// `μ_i − ν_i`.
    pub slack: Vec<f64>,
    /// Stations where `ν_i = μ_i` within [`RECURRENCE_TIE_TOL`].
    pub boundary: Vec<usize>,
}

impl TrafficSolution {
    /// `‖ν − λ − νP‖∞ / ‖ν‖∞`.
    pub fn relative_residual(&self, net: &Network) -> f64 {
        let d = net.dim();
        let norm = self.nu.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let worst = (0..d)
            .map(|i| {
                let inflow: f64 = (0..d).map(|j| self.nu[j] * net.routing()[j][i]).sum();
                (self.nu[i] - net.lambda()[i] - inflow).abs()
            })
            .fold(0.0f64, f64::max);
        if norm == 0.0 {
            worst
        } else {
            worst / norm
        }
    }
}

/// One jump of the queue-length process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    /// `+ε_i`
    Arrival(usize),
    /// `−ε_i`
    Departure(usize),
    /// `ε_to − ε_from`
    Route { from: usize, to: usize },
}

impl Step {
    pub fn apply(self, state: &mut [i64]) {
        match self {
            Step::Arrival(i) => state[i] += 1,
            Step::Departure(i) => state[i] -= 1,
            Step::Route { from, to } => {
                state[from] -= 1;
                state[to] += 1;
            }
        }
    }

    /// Change in `⟨a, x⟩` caused by this step.
    #[inline]
    pub fn dot(self, a: &[f64]) -> f64 {
        match self {
            Step::Arrival(i) => a[i],
            Step::Departure(i) => -a[i],
            Step::Route { from, to } => a[to] - a[from],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Transition {
    pub step: Step,
    pub rate: f64,
}

impl Transition {
    pub fn target(&self, state: &[i64]) -> Vec<i64> {
        let mut y = state.to_vec();
        self.step.apply(&mut y);
        y
    }
}
