//! Event-driven simulation, survival-decay estimation and Lyapunov
//! certificates for `log r*_e`.
//!
//! Trajectory `i` of a batch draws from ChaCha8 stream `i` of the batch seed,
//! so results do not depend on how rayon schedules the work.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::network::{Network, NetworkError, Step, Transition};
use crate::ratefn::{FaceSet, RateEnv, RateError};
use crate::spectral::{self, EigenOptions, KilledGenerator, SpectralError};

/// Fit window for survival frequencies.
pub const WINDOW: (f64, f64) = (1e-3, 0.5);
pub const MIN_TRAJECTORIES: usize = 1000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MonteCarloError {
    #[error("survival never entered [{lo}, {hi}] on at least two grid points; enlarge t_max or n_traj", lo = WINDOW.0, hi = WINDOW.1)]
    WindowEmpty,
    #[error("need at least {MIN_TRAJECTORIES} trajectories, got {0}")]
    TooFewTrajectories(usize),
    #[error("initial state {0:?} lies in the killing set")]
    InitialInsideK(Vec<i64>),
    #[error("time grid must be nonempty, finite and strictly increasing")]
    BadGrid,
    #[error("initial distribution is empty or has non-positive total mass")]
    BadDistribution,
    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub seed: u64,
    pub initial: Vec<i64>,
    /// `(time, state)` after each jump.
    pub events: Vec<(f64, Vec<i64>)>,
    pub t_max: f64,
}

impl Trajectory {
    /// State at time `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> &[i64] {
        match self.events.partition_point(|(s, _)| *s <= t) {
            0 => &self.initial,
            k => &self.events[k - 1].1,
        }
    }

    /// Time spent in states satisfying `pred` during `[0, t_max]`.
    pub fn occupation(&self, pred: impl Fn(&[i64]) -> bool) -> f64 {
        let mut total = 0.0;
        let mut prev_t = 0.0;
        let mut prev = &self.initial;
        for (t, x) in &self.events {
            if pred(prev) {
                total += t - prev_t;
            }
            prev_t = *t;
            prev = x;
        }
        if pred(prev) {
            total += self.t_max - prev_t;
        }
        total
    }
}

/// One jump from `state`: holding time and chosen transition, or `None` when
/// the total rate is zero.
fn next_event<R: Rng>(
    net: &Network,
    state: &[i64],
    buf: &mut Vec<Transition>,
    rng: &mut R,
) -> Option<(f64, Step)> {
    buf.clear();
    let mut total = 0.0;
    net.for_each_transition(state, |t| {
        total += t.rate;
        buf.push(t);
    });
    if total <= 0.0 {
        return None;
    }
    let dt = rng.sample::<f64, _>(Exp1) / total;
    let mut u = rng.random::<f64>() * total;
    for t in buf.iter() {
        if u < t.rate {
            return Some((dt, t.step));
        }
        u -= t.rate;
    }
    Some((dt, buf.last().unwrap().step))
}

fn check_state(net: &Network, x: &[i64]) -> Result<(), NetworkError> {
    if x.len() != net.dim() {
        return Err(NetworkError::StateDimension {
            expected: net.dim(),
            found: x.len(),
        });
    }
    if let Some(index) = x.iter().position(|&c| c < 0) {
        return Err(NetworkError::NegativeCoordinate { index });
    }
    Ok(())
}

/// Exact event-driven simulation on `[0, t_max]`.
pub fn simulate(net: &Network, x0: &[i64], t_max: f64, seed: u64) -> Result<Trajectory, MonteCarloError> {
    check_state(net, x0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::new();
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut events = Vec::new();
    while let Some((dt, step)) = next_event(net, &x, &mut buf, &mut rng) {
        t += dt;
        if t > t_max {
            break;
        }
        step.apply(&mut x);
        events.push((t, x.clone()));
    }
    Ok(Trajectory {
        seed,
        initial: x0.to_vec(),
        events,
        t_max,
    })
}

/// Where each trajectory starts.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw {
    Point(Vec<i64>),
    /// States with (unnormalised) weights.
    Distribution(Vec<(Vec<i64>, f64)>),
}

impl InitialLaw {
    /// Quasi-stationary law of the chain killed on `{Σx <= k}` and outside
    /// `Box(n_box)`: the left Perron vector of the truncated generator.
    pub fn quasi_stationary(net: &Network, k: i64, n_box: usize) -> Result<Self, MonteCarloError> {
        let g = KilledGenerator::build(net, k, n_box)?;
        let pair = spectral::top_eigen_pair(&g, EigenOptions::default());
        let q = pair.quasi_stationary();
        Ok(InitialLaw::Distribution(
            g.states()
                .iter()
                .cloned()
                .zip(q)
                .filter(|(_, w)| *w > 0.0)
                .collect(),
        ))
    }
}

struct Sampler {
    states: Vec<Vec<i64>>,
    cumulative: Vec<f64>,
}

impl Sampler {
    fn new(law: &InitialLaw) -> Result<Self, MonteCarloError> {
        let pairs: Vec<(Vec<i64>, f64)> = match law {
            InitialLaw::Point(x) => vec![(x.clone(), 1.0)],
            InitialLaw::Distribution(v) => v.clone(),
        };
        let mut acc = 0.0;
        let mut cumulative = Vec::with_capacity(pairs.len());
        let mut states = Vec::with_capacity(pairs.len());
        for (x, w) in pairs {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(MonteCarloError::BadDistribution);
            }
            acc += w;
            cumulative.push(acc);
            states.push(x);
        }
        if !(acc > 0.0) {
            return Err(MonteCarloError::BadDistribution);
        }
        Ok(Self { states, cumulative })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> &[i64] {
        if self.states.len() == 1 {
            return &self.states[0];
        }
        let u = rng.random::<f64>() * self.cumulative.last().unwrap();
        let i = self.cumulative.partition_point(|&c| c <= u);
        &self.states[i.min(self.states.len() - 1)]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayEstimate {
    pub t_grid: Vec<f64>,
    pub survivors: Vec<u64>,
    pub total: u64,
    /// `P̂(τ_K > t)` on the grid.
    pub survival: Vec<f64>,
    /// Fitted `d/dt log P(τ_K > t)` (1/time).
    pub slope: f64,
    pub std_error: f64,
    /// Grid indices `[first, last]` used by the fit.
    pub window: (usize, usize),
}

impl DecayEstimate {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,survivors,total\n");
        for (t, n) in self.t_grid.iter().zip(&self.survivors) {
            s.push_str(&format!("{t},{n},{}\n", self.total));
        }
        s
    }

    /// `|slope − target| / std_error`.
    pub fn z_score(&self, target: f64) -> f64 {
        (self.slope - target) / self.std_error
    }
}

/// Options for [`survival_decay`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurvivalOptions {
    pub kill_radius: i64,
    pub t_grid: Vec<f64>,
    pub n_traj: usize,
    pub seed: u64,
}

/// Hitting time of `K = {Σx <= k}`, or `+∞` if it exceeds `t_end`.
fn hitting_time(net: &Network, x0: &[i64], k: i64, t_end: f64, rng: &mut ChaCha8Rng) -> f64 {
    let mut buf = Vec::with_capacity(net.dim() * (net.dim() + 1));
    let mut x = x0.to_vec();
    let mut sum: i64 = x.iter().sum();
    let mut t = 0.0;
    while let Some((dt, step)) = next_event(net, &x, &mut buf, rng) {
        t += dt;
        if t > t_end {
            break;
        }
        step.apply(&mut x);
        sum += match step {
            Step::Arrival(_) => 1,
            Step::Departure(_) => -1,
            Step::Route { .. } => 0,
        };
        if sum <= k {
            return t;
        }
    }
    f64::INFINITY
}

/// Monte-Carlo survival curve `P(τ_K > t)` and its log-linear slope.
///
/// The slope is fitted on grid points with `P̂ ∈ [1e-3, 0.5]` to
/// `log P̂ + (1 − P̂)/(2nP̂)` (second-order bias correction) by iteratively
/// reweighted least squares with binomial weights `n P/(1 − P)` evaluated on
/// the fitted curve. Survival counts at different times are nested, so the
/// standard error uses the full covariance `(1 − P_s)/(n P_s)`, `s` the
/// earlier time, in a sandwich estimate.
pub fn survival_decay(
    net: &Network,
    law: &InitialLaw,
    opts: &SurvivalOptions,
) -> Result<DecayEstimate, MonteCarloError> {
    if opts.n_traj < MIN_TRAJECTORIES {
        return Err(MonteCarloError::TooFewTrajectories(opts.n_traj));
    }
    let grid = &opts.t_grid;
    if grid.is_empty() || grid.iter().any(|t| !t.is_finite()) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MonteCarloError::BadGrid);
    }
    let sampler = Sampler::new(law)?;
    for x in &sampler.states {
        check_state(net, x)?;
        if x.iter().sum::<i64>() <= opts.kill_radius {
            return Err(MonteCarloError::InitialInsideK(x.clone()));
        }
    }
    let t_end = *grid.last().unwrap();
    let mut times: Vec<f64> = (0..opts.n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i);
            let x0 = sampler.draw(&mut rng).to_vec();
            hitting_time(net, &x0, opts.kill_radius, t_end, &mut rng)
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n = opts.n_traj as u64;
    let survivors: Vec<u64> = grid
        .iter()
        .map(|&t| n - times.partition_point(|&h| h <= t) as u64)
        .collect();
    let survival: Vec<f64> = survivors.iter().map(|&s| s as f64 / n as f64).collect();

    let idx: Vec<usize> = (0..grid.len())
        .filter(|&i| survival[i] >= WINDOW.0 && survival[i] <= WINDOW.1)
        .collect();
    if idx.len() < 2 {
        return Err(MonteCarloError::WindowEmpty);
    }
    let (slope, std_error) = fit_log_slope(
        &idx.iter().map(|&i| grid[i]).collect::<Vec<_>>(),
        &idx.iter().map(|&i| survival[i]).collect::<Vec<_>>(),
        n as f64,
    );
    Ok(DecayEstimate {
        t_grid: grid.clone(),
        survivors,
        total: n,
        survival,
        slope,
        std_error,
        window: (idx[0], *idx.last().unwrap()),
    })
}

/// Weighted fit of `log s` against `t`; returns slope and its standard error.
fn fit_log_slope(t: &[f64], s: &[f64], n: f64) -> (f64, f64) {
    let m = t.len();
    let y: Vec<f64> = s.iter().map(|&p| p.ln() + (1.0 - p) / (2.0 * n * p)).collect();
    let mut fitted = s.to_vec();
    let mut coef = (0.0, 0.0);
    let mut a_rows = [vec![0.0; m], vec![0.0; m]];
    for _ in 0..6 {
        let w: Vec<f64> = fitted.iter().map(|&p| n * p / (1.0 - p).max(1e-12)).collect();
        let (mut sw, mut st, mut stt, mut sy, mut sty) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for i in 0..m {
            sw += w[i];
            st += w[i] * t[i];
            stt += w[i] * t[i] * t[i];
            sy += w[i] * y[i];
            sty += w[i] * t[i] * y[i];
        }
        let det = sw * stt - st * st;
        let intercept = (stt * sy - st * sty) / det;
        let slope = (sw * sty - st * sy) / det;
        coef = (intercept, slope);
        // Rows of (XᵀWX)⁻¹XᵀW.
        for i in 0..m {
            a_rows[0][i] = w[i] * (stt - st * t[i]) / det;
            a_rows[1][i] = w[i] * (sw * t[i] - st) / det;
        }
        fitted = t.iter().map(|&ti| (intercept + slope * ti).exp().min(1.0)).collect();
    }
    let mut var = 0.0;
    for i in 0..m {
        for j in 0..m {
            let early = fitted[i.min(j)];
            let c = (1.0 - early) / (n * early);
            var += a_rows[1][i] * c * a_rows[1][j];
        }
    }
    (coef.1, var.max(0.0).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovReport {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub r_alpha: f64,
    pub r_beta: f64,
    pub margin: f64,
    pub box_radius: usize,
    /// Largest shell index where the drift inequality can fail; `None` if no
    /// two consecutive shells up to `box_radius` pass.
    pub n_eps: Option<usize>,
    /// `max (Gf/f − (M + ε))` over lattice points with `n_eps < Σx <= box_radius`.
    pub max_violation_beyond: f64,
    /// `max_violation_beyond <= 0`.
    pub consistent: bool,
    /// `max(R(α), R(β)) + ε`, an upper bound on `log r*_e` when consistent.
    pub certified_bound: f64,
    /// `max |Gf/f − (R(α) w_α + R(β) w_β)|` over interior points.
    pub interior_identity_error: f64,
    pub points_checked: usize,
}

/// `Gf(x)/f(x)` for `f = e^{⟨α,x⟩} + e^{⟨β,x⟩}`, by direct generator
/// application. The weights `w_α = e^{⟨α,x⟩}/f(x)` are formed from the
/// exponent difference so nothing overflows.
fn drift_ratio(net: &Network, alpha: &[f64], beta: &[f64], x: &[i64]) -> (f64, f64) {
    let diff: f64 = x
        .iter()
        .zip(alpha.iter().zip(beta))
        .map(|(&c, (a, b))| c as f64 * (b - a))
        .sum();
    let wa = 1.0 / (1.0 + diff.exp());
    let wb = 1.0 - wa;
    let mut g = 0.0;
    net.for_each_transition(x, |t| {
        let ratio = wa * t.step.dot(alpha).exp() + wb * t.step.dot(beta).exp();
        g += t.rate * (ratio - 1.0);
    });
    (g, wa)
}

/// Checks that `f(x) = e^{⟨α,x⟩} + e^{⟨β,x⟩}` is `(M + ε)`-superharmonic
/// outside a finite set, `M = max(R(α), R(β))`. Shells `Σx = s` are scanned
/// from `s = 1`; `N(ε)` is one less than the first of two consecutive
/// passing shells.
pub fn lyapunov_check(
    env: &RateEnv,
    alpha: &[f64],
    beta: &[f64],
    box_radius: usize,
    margin: f64,
) -> Result<LyapunovReport, MonteCarloError> {
    if env.dim() != 2 {
        return Err(MonteCarloError::HypothesisViolated(format!(
            "two stations required, got {}",
            env.dim()
        )));
    }
    if alpha.len() != 2 || beta.len() != 2 {
        return Err(MonteCarloError::HypothesisViolated("alpha and beta must have length 2".into()));
    }
    if !env.in_b(FaceSet::from_stations(&[0]), alpha) {
        return Err(MonteCarloError::HypothesisViolated("alpha is not in B_{1}".into()));
    }
    if !env.in_b(FaceSet::from_stations(&[1]), beta) {
        return Err(MonteCarloError::HypothesisViolated("beta is not in B_{2}".into()));
    }
    if alpha[0] < beta[0] || beta[1] < alpha[1] {
        return Err(MonteCarloError::HypothesisViolated(
            "need alpha_1 >= beta_1 and beta_2 >= alpha_2".into(),
        ));
    }
    let r_alpha = env.r(alpha)?;
    let r_beta = env.r(beta)?;
    let level = r_alpha.max(r_beta) + margin;
    let net = env.network();

    let mut shell_max = vec![f64::NEG_INFINITY; box_radius + 1];
    let mut identity = 0.0f64;
    let mut points = 0;
    for s in 1..=box_radius as i64 {
        for x0 in 0..=s {
            let x = [x0, s - x0];
            let (g, wa) = drift_ratio(net, alpha, beta, &x);
            points += 1;
            shell_max[s as usize] = shell_max[s as usize].max(g - level);
            if x[0] > 0 && x[1] > 0 {
                let formula = r_alpha * wa + r_beta * (1.0 - wa);
                identity = identity.max((g - formula).abs());
            }
        }
    }
    let n_eps = (1..box_radius).find(|&s| shell_max[s] <= 0.0 && shell_max[s + 1] <= 0.0).map(|s| s - 1);
    let max_violation_beyond = match n_eps {
        Some(n) => shell_max[n + 1..].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        None => f64::INFINITY,
    };
    Ok(LyapunovReport {
        alpha: alpha.to_vec(),
        beta: beta.to_vec(),
        r_alpha,
        r_beta,
        margin,
        box_radius,
        n_eps,
        max_violation_beyond,
        consistent: max_violation_beyond <= 0.0,
        certified_bound: level,
        interior_identity_error: identity,
        points_checked: points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub counts: Vec<u64>,
    pub expected: Vec<f64>,
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Samples `n_events` jumps from a fixed state with the simulator's jump
/// kernel and tests the counts against the generator rates.
pub fn transition_chi_square(
    net: &Network,
    state: &[i64],
    n_events: usize,
    seed: u64,
) -> Result<ChiSquareReport, MonteCarloError> {
    let row = net.generator_row(state)?;
    let total: f64 = row.iter().map(|t| t.rate).sum();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = Vec::new();
    let mut counts = vec![0u64; row.len()];
    for _ in 0..n_events {
        let (_, step) = next_event(net, state, &mut buf, &mut rng)
            .ok_or_else(|| MonteCarloError::HypothesisViolated("state has no transitions".into()))?;
        let k = row.iter().position(|t| t.step == step).expect("step from the same row");
        counts[k] += 1;
    }
    let expected: Vec<f64> = row.iter().map(|t| n_events as f64 * t.rate / total).collect();
    let statistic: f64 = counts
        .iter()
        .zip(&expected)
        .map(|(&c, &e)| (c as f64 - e).powi(2) / e)
        .sum();
    let dof = row.len().saturating_sub(1);
    let p_value = if dof == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(statistic)
    };
    Ok(ChiSquareReport {
        counts,
        expected,
        statistic,
        dof,
        p_value,
    })
}
