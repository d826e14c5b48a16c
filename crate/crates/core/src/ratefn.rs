//! Large-deviation rate functions of a Jackson network.
//!
//! For a face `Λ` (the set of stations with a nonempty queue) the partial
//! log-moment generating function is
//!
//! ```text
//! R_Λ(α) = Σ_{i∈Λ} μ_i (Σ_{j≠i} p_ij e^{α_j−α_i} + p_i0 e^{−α_i} − 1) + Σ_i λ_i (e^{α_i} − 1)
//! ```
//!
//! which is `Σ_y q(x,y)(e^{⟨α,y−x⟩} − 1)` for any state `x` on that face.
//! `R = R_{1..d}`. The local rate function on face `Λ` is
//!
//! ```text
//! L_Λ(v) = sup_α ( ⟨α,v⟩ − max_{Λ'⊇Λ} R_{Λ'}(α) )
//! ```
//!
//! so `l1 = L_∅` and `l2 = L_{1..d} = R*`. Each supremum is a concave
//! maximisation solved by damped Newton on a log-sum-exp smoothing of the
//! inner maximum, with the temperature driven to zero by continuation.

use std::fmt;
use std::sync::OnceLock;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::linalg::solve_dense;
use crate::network::{Classification, Network, Step, TrafficSolution};

/// Largest admissible `|α_i|`.
pub const ALPHA_CAP: f64 = 50.0;
/// Largest station count for which all `2^d` faces are tabulated.
pub const MAX_FACE_DIM: usize = 12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RateError {
    #[error("alpha coordinate {index} = {value} exceeds the cap {ALPHA_CAP}")]
    Overflow { index: usize, value: f64 },
    #[error("alpha coordinate {index} is not finite")]
    NonFinite { index: usize },
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("supremum is unbounded: the optimiser reached |alpha| = {ALPHA_CAP}")]
    Unbounded,
    #[error("closed form not available for d = {d}; use pathopt::minimize_loop for a variational estimate")]
    DimensionUnsupported { d: usize },
    #[error("network is not ergodic")]
    NotErgodic,
    #[error("network has {d} stations; face tables support at most {MAX_FACE_DIM}")]
    TooManyStations { d: usize },
    #[error("traffic equations: {0}")]
    Traffic(#[from] crate::network::NetworkError),
}

/// A subset of stations, stored as a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct FaceSet(u32);

impl FaceSet {
    pub const EMPTY: FaceSet = FaceSet(0);

    pub fn full(d: usize) -> Self {
        assert!(d <= 32);
        if d == 32 {
            FaceSet(u32::MAX)
        } else {
            FaceSet((1u32 << d) - 1)
        }
    }

    pub fn from_stations(stations: &[usize]) -> Self {
        FaceSet(stations.iter().fold(0, |m, &i| m | (1 << i)))
    }

    /// `{i : x_i > 0}`.
    pub fn of_point(x: &[f64]) -> Self {
        FaceSet(
            x.iter()
                .enumerate()
                .fold(0, |m, (i, &v)| if v > 0.0 { m | (1 << i) } else { m }),
        )
    }

    pub fn of_state(x: &[i64]) -> Self {
        FaceSet(
            x.iter()
                .enumerate()
                .fold(0, |m, (i, &v)| if v > 0 { m | (1 << i) } else { m }),
        )
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn is_subset_of(self, other: FaceSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn union(self, other: FaceSet) -> FaceSet {
        FaceSet(self.0 | other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn stations(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..32).filter(move |&i| bits >> i & 1 == 1)
    }

    /// Faces `Λ'` with `self ⊆ Λ' ⊆ {0..d}`, in increasing bitmask order.
    pub fn supersets(self, d: usize) -> Vec<FaceSet> {
        let free = FaceSet::full(d).0 & !self.0;
        let mut out = Vec::with_capacity(1 << free.count_ones());
        let mut sub = 0u32;
        loop {
            out.push(FaceSet(self.0 | sub));
            // next submask of `free` in increasing order
            sub = (sub | !free).wrapping_add(1) & free;
            if sub == 0 {
                break;
            }
        }
        out
    }
}

impl fmt::Debug for FaceSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.stations()).finish()
    }
}

impl Serialize for FaceSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.stations())
    }
}

/// `Σ_k c_k e^{⟨w_k,α⟩} + constant`, with every `w_k` a jump of the chain.
#[derive(Debug, Clone)]
struct ExpSum {
    terms: Vec<(f64, Step)>,
    constant: f64,
}

impl ExpSum {
    fn for_face(net: &Network, face: FaceSet) -> Self {
        let d = net.dim();
        let state: Vec<i64> = (0..d).map(|i| face.contains(i) as i64).collect();
        let mut terms = Vec::new();
        let mut total = 0.0;
        net.for_each_transition(&state, |t| {
            terms.push((t.rate, t.step));
            total += t.rate;
        });
        ExpSum {
            terms,
            constant: -total,
        }
    }

    fn value(&self, a: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|&(c, s)| c * s.dot(a).exp())
            .sum::<f64>()
            + self.constant
    }

    /// Value, gradient and (row-major) Hessian.
    fn second_order(&self, a: &[f64], grad: &mut [f64], hess: &mut [f64]) -> f64 {
        let d = a.len();
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        let mut value = self.constant;
        for &(c, s) in &self.terms {
            let w = c * s.dot(a).exp();
            value += w;
            match s {
                Step::Arrival(i) => {
                    grad[i] += w;
                    hess[i * d + i] += w;
                }
                Step::Departure(i) => {
                    grad[i] -= w;
                    hess[i * d + i] += w;
                }
                Step::Route { from, to } => {
                    grad[to] += w;
                    grad[from] -= w;
                    hess[to * d + to] += w;
                    hess[from * d + from] += w;
                    hess[to * d + from] -= w;
                    hess[from * d + to] -= w;
                }
            }
        }
        value
    }
}

/// Result of a local-rate evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalRate {
    /// `L_Λ(v)`; always `>= 0`.
    pub value: f64,
    /// Maximiser of `⟨α,v⟩ − max_{Λ'⊇Λ} R_{Λ'}(α)`.
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Istar0Method {
    /// `d = 1`: `−inf_α R(α) = (√μ − √λ)²`.
    BirthDeath,
    /// `d = 2`, ergodic: `(1 − p12 p21) min_i (√μ_i − √ν_i)²`.
    TwoStationErgodic,
    /// `d = 2`, not ergodic: equals `L_∅(0)`.
    TwoStationNonErgodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Istar0 {
    pub value: f64,
    pub method: Istar0Method,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryMinimizer {
    pub alpha: Vec<f64>,
    /// `R(α)` evaluated at the minimiser.
    pub value: f64,
}

/// Rate-function evaluator for one network.
pub struct RateEnv {
    net: Network,
    traffic: TrafficSolution,
    pieces: Vec<ExpSum>,
    zero_rates: Vec<OnceLock<Result<LocalRate, RateError>>>,
}

impl fmt::Debug for RateEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateEnv")
            .field("net", &self.net)
            .field("traffic", &self.traffic)
            .finish_non_exhaustive()
    }
}

impl RateEnv {
    pub fn new(net: Network) -> Result<Self, RateError> {
        let d = net.dim();
        if d > MAX_FACE_DIM {
            return Err(RateError::TooManyStations { d });
        }
        let traffic = net.solve_traffic()?;
        let pieces = (0..1u32 << d)
            .map(|bits| ExpSum::for_face(&net, FaceSet(bits)))
            .collect();
        let zero_rates = (0..1usize << d).map(|_| OnceLock::new()).collect();
        Ok(Self {
            net,
            traffic,
            pieces,
            zero_rates,
        })
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn traffic(&self) -> &TrafficSolution {
        &self.traffic
    }

    pub fn dim(&self) -> usize {
        self.net.dim()
    }

    fn check_alpha(&self, alpha: &[f64]) -> Result<(), RateError> {
        check_len(self.dim(), alpha)?;
        for (index, &value) in alpha.iter().enumerate() {
            if !value.is_finite() {
                return Err(RateError::NonFinite { index });
            }
            if value.abs() > ALPHA_CAP {
                return Err(RateError::Overflow { index, value });
            }
        }
        Ok(())
    }

    /// `R(α)`.
    pub fn r(&self, alpha: &[f64]) -> Result<f64, RateError> {
        self.r_face(FaceSet::full(self.dim()), alpha)
    }

    /// `R_Λ(α)`: the service sum restricted to stations in `face`.
    pub fn r_face(&self, face: FaceSet, alpha: &[f64]) -> Result<f64, RateError> {
        self.check_alpha(alpha)?;
        Ok(self.pieces[face.0 as usize].value(alpha))
    }

    /// Membership of `α` in `B_Λ`: `α_i <= log(Σ_j p_ij e^{α_j} + p_i0)` for
    /// every `i ∉ Λ`. Points on the boundary (up to rounding) count as inside.
    pub fn in_b(&self, face: FaceSet, alpha: &[f64]) -> bool {
        let d = self.dim();
        (0..d).filter(|&i| !face.contains(i)).all(|i| {
            let inner: f64 = (0..d)
                .map(|j| self.net.routing()[i][j] * alpha[j].exp())
                .sum::<f64>()
                + self.net.exit()[i];
            let bound = inner.ln();
            alpha[i] <= bound + 1e-12 * (1.0 + bound.abs())
        })
    }

    /// `L_Λ(v)`.
    pub fn local_rate(&self, face: FaceSet, v: &[f64]) -> Result<LocalRate, RateError> {
        check_len(self.dim(), v)?;
        if let Some(i) = v.iter().position(|x| !x.is_finite()) {
            return Err(RateError::NonFinite { index: i });
        }
        let pieces: Vec<&ExpSum> = face
            .supersets(self.dim())
            .into_iter()
            .map(|f| &self.pieces[f.0 as usize])
            .collect();
        let scale = self.net.max_exit_rate() + v.iter().map(|x| x.abs()).sum::<f64>();
        let (neg_min, alpha) = minimize_max_of_pieces(&pieces, v, scale)?;
        Ok(LocalRate {
            value: (-neg_min).max(0.0),
            alpha,
        })
    }

    /// `L_Λ(0)`, cached per face.
    pub fn local_rate_at_zero(&self, face: FaceSet) -> Result<LocalRate, RateError> {
        self.zero_rates[face.0 as usize]
            .get_or_init(|| self.local_rate(face, &vec![0.0; self.dim()]))
            .clone()
    }

    /// Local rate at a point of the orthant: `L(x, v) = L_{face(x)}(v)`.
    pub fn local_rate_at(&self, x: &[f64], v: &[f64]) -> Result<LocalRate, RateError> {
        self.local_rate(FaceSet::of_point(x), v)
    }

    /// `l1(v) = L_∅(v)`.
    pub fn l1(&self, v: &[f64]) -> Result<f64, RateError> {
        Ok(self.local_rate(FaceSet::EMPTY, v)?.value)
    }

    /// `l2(v) = R*(v)`.
    pub fn l2(&self, v: &[f64]) -> Result<f64, RateError> {
        Ok(self.local_rate(FaceSet::full(self.dim()), v)?.value)
    }

    /// Mean drift `∇R(0)` of the interior process.
    pub fn interior_drift(&self) -> Vec<f64> {
        let d = self.dim();
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d * d];
        self.pieces[FaceSet::full(d).0 as usize].second_order(&vec![0.0; d], &mut g, &mut h);
        g
    }

    /// `I* = L_∅(0)`, so that `log r* = −I*`.
    pub fn closed_form_istar(&self) -> Result<f64, RateError> {
        Ok(self.local_rate_at_zero(FaceSet::EMPTY)?.value)
    }

    /// `I*_0`, so that `log r*_e = −I*_0`, for `d <= 2`.
    pub fn closed_form_istar0(&self) -> Result<Istar0, RateError> {
        match self.dim() {
            1 => Ok(Istar0 {
                value: (self.net.mu()[0].sqrt() - self.net.lambda()[0].sqrt()).powi(2),
                method: Istar0Method::BirthDeath,
            }),
            2 if self.traffic.classification == Classification::Ergodic => {
                let p = self.net.routing();
                let gap = |i: usize| (self.net.mu()[i].sqrt() - self.traffic.nu[i].sqrt()).powi(2);
                Ok(Istar0 {
                    value: (1.0 - p[0][1] * p[1][0]) * gap(0).min(gap(1)),
                    method: Istar0Method::TwoStationErgodic,
                })
            }
            2 => Ok(Istar0 {
                value: self.closed_form_istar()?,
                method: Istar0Method::TwoStationNonErgodic,
            }),
            d => Err(RateError::DimensionUnsupported { d }),
        }
    }

    /// Minimiser of `R` on the boundary of `B_{{station}}` for an ergodic
    /// two-station network. For station 0 this is
    /// `α* = (log √(μ1/ν1), log(p21 √(μ1/ν1) + p20))`; station 1 is symmetric.
    pub fn boundary_minimizer(&self, station: usize) -> Result<BoundaryMinimizer, RateError> {
        if self.dim() != 2 {
            return Err(RateError::DimensionUnsupported { d: self.dim() });
        }
        if self.traffic.classification != Classification::Ergodic {
            return Err(RateError::NotErgodic);
        }
        assert!(station < 2, "station index out of range");
        let other = 1 - station;
        let root = (self.net.mu()[station] / self.traffic.nu[station]).sqrt();
        let mut alpha = vec![0.0; 2];
        alpha[station] = root.ln();
        alpha[other] = (self.net.routing()[other][station] * root + self.net.exit()[other]).ln();
        let value = self.r(&alpha)?;
        Ok(BoundaryMinimizer { alpha, value })
    }
}

fn check_len(d: usize, x: &[f64]) -> Result<(), RateError> {
    if x.len() != d {
        Err(RateError::DimensionMismatch {
            expected: d,
            found: x.len(),
        })
    } else {
        Ok(())
    }
}

/// Minimises `F(α) = max_k (P_k(α) − ⟨α,v⟩)` and returns `(min F, argmin)`.
///
/// The smoothed objective `F_β = β⁻¹ log Σ_k exp(β g_k)` overestimates `F` by
/// at most `log K / β`; β grows geometrically from `1/scale` to `1e12/scale`
/// and each stage is a damped Newton solve warm-started from the last. The
/// returned value is the exact `F` at the best iterate seen, so it is an
/// upper bound on `min F` (a lower bound on the local rate).
fn minimize_max_of_pieces(
    pieces: &[&ExpSum],
    v: &[f64],
    scale: f64,
) -> Result<(f64, Vec<f64>), RateError> {
    let d = v.len();
    let mut alpha = vec![0.0; d];
    let exact = |a: &[f64]| -> f64 {
        let dot: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
        pieces
            .iter()
            .map(|p| p.value(a) - dot)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let mut best = (exact(&alpha), alpha.clone());
    let betas: Vec<f64> = if pieces.len() == 1 {
        vec![f64::INFINITY]
    } else {
        (0..=12).map(|k| 10f64.powi(k) / scale).collect()
    };
    let mut ws = Workspace::new(pieces.len(), d);
    for beta in betas {
        newton_stage(pieces, v, beta, &mut alpha, &mut ws)?;
        let f = exact(&alpha);
        if f < best.0 {
            best = (f, alpha.clone());
        }
    }
    Ok(best)
}

struct Workspace {
    g: Vec<f64>,
    grads: Vec<Vec<f64>>,
    hesss: Vec<Vec<f64>>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

impl Workspace {
    fn new(k: usize, d: usize) -> Self {
        Self {
            g: vec![0.0; k],
            grads: vec![vec![0.0; d]; k],
            hesss: vec![vec![0.0; d * d]; k],
            grad: vec![0.0; d],
            hess: vec![0.0; d * d],
        }
    }
}

/// Smoothed objective; `beta = ∞` means the plain maximum of a single piece.
fn smoothed_value(pieces: &[&ExpSum], v: &[f64], beta: f64, a: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
    let vals: Vec<f64> = pieces.iter().map(|p| p.value(a) - dot).collect();
    soft_max(&vals, beta)
}

fn soft_max(vals: &[f64], beta: f64) -> f64 {
    let m = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if vals.len() == 1 || beta.is_infinite() || !m.is_finite() {
        return m;
    }
    m + vals.iter().map(|&g| (beta * (g - m)).exp()).sum::<f64>().ln() / beta
}

fn newton_stage(
    pieces: &[&ExpSum],
    v: &[f64],
    beta: f64,
    alpha: &mut [f64],
    ws: &mut Workspace,
) -> Result<(), RateError> {
    let d = v.len();
    let k = pieces.len();
    for _ in 0..200 {
        let dot: f64 = alpha.iter().zip(v).map(|(x, y)| x * y).sum();
        for (idx, p) in pieces.iter().enumerate() {
            ws.g[idx] = p.second_order(alpha, &mut ws.grads[idx], &mut ws.hesss[idx]) - dot;
            for (gi, vi) in ws.grads[idx].iter_mut().zip(v) {
                *gi -= vi;
            }
        }
        let m = ws.g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = if k == 1 || beta.is_infinite() {
            let mut w = vec![0.0; k];
            w[ws.g.iter().position(|&g| g == m).unwrap()] = 1.0;
            w
        } else {
            let e: Vec<f64> = ws.g.iter().map(|&g| (beta * (g - m)).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|x| x / s).collect()
        };
        let f0 = soft_max(&ws.g, beta);

        ws.grad.iter_mut().for_each(|x| *x = 0.0);
        ws.hess.iter_mut().for_each(|x| *x = 0.0);
        for idx in 0..k {
            let w = weights[idx];
            if w == 0.0 {
                continue;
            }
            for i in 0..d {
                ws.grad[i] += w * ws.grads[idx][i];
                for j in 0..d {
                    ws.hess[i * d + j] += w * ws.hesss[idx][i * d + j];
                }
            }
        }
        if k > 1 && beta.is_finite() {
            for idx in 0..k {
                let w = weights[idx];
                if w == 0.0 {
                    continue;
                }
                for i in 0..d {
                    for j in 0..d {
                        ws.hess[i * d + j] += beta * w * ws.grads[idx][i] * ws.grads[idx][j];
                    }
                }
            }
            for i in 0..d {
                for j in 0..d {
                    ws.hess[i * d + j] -= beta * ws.grad[i] * ws.grad[j];
                }
            }
        }

        let gnorm = ws.grad.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if gnorm == 0.0 {
            return Ok(());
        }
        let step = newton_direction(&ws.hess, &ws.grad, d);
        let slope: f64 = step.iter().zip(&ws.grad).map(|(p, g)| p * g).sum();
        if -slope <= 1e-24 * (1.0 + f0.abs()) {
            return Ok(());
        }
        let mut t = 1.0;
        let mut trial = alpha.to_vec();
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..d {
                trial[i] = alpha[i] + t * step[i];
            }
            if trial.iter().all(|x| x.abs() <= ALPHA_CAP) {
                let f1 = smoothed_value(pieces, v, beta, &trial);
                if f1 <= f0 + 1e-4 * t * slope {
                    accepted = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !accepted {
            if alpha.iter().zip(&step).any(|(a, p)| (a + p).abs() > ALPHA_CAP)
                && step.iter().all(|p| p.is_finite())
                && gnorm > 1e-6 * (1.0 + ws.g.iter().fold(0.0f64, |m, x| m.max(x.abs())))
            {
                return Err(RateError::Unbounded);
            }
            // No further decrease at working precision.
            return Ok(());
        }
        let moved = (0..d).fold(0.0f64, |m, i| m.max((trial[i] - alpha[i]).abs()));
        alpha.copy_from_slice(&trial);
        if moved <= 1e-15 * (1.0 + alpha.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
            return Ok(());
        }
    }
    Ok(())
}

/// Solves `H p = −g`, adding a Levenberg shift when `H` is near singular.
fn newton_direction(hess: &[f64], grad: &[f64], d: usize) -> Vec<f64> {
    let trace: f64 = (0..d).map(|i| hess[i * d + i].abs()).sum::<f64>().max(1e-300);
    let mut shift = 0.0;
    loop {
        let a: Vec<Vec<f64>> = (0..d)
            .map(|i| {
                (0..d)
                    .map(|j| hess[i * d + j] + if i == j { shift } else { 0.0 })
                    .collect()
            })
            .collect();
        let b: Vec<f64> = grad.iter().map(|g| -g).collect();
        if let Some(p) = solve_dense(a, b) {
            let descent: f64 = p.iter().zip(grad).map(|(x, y)| x * y).sum();
            if descent < 0.0 && p.iter().all(|x| x.is_finite()) {
                return p;
            }
        }
        shift = if shift == 0.0 { 1e-12 * trace } else { shift * 100.0 };
        if shift > 1e12 * trace {
            return grad.iter().map(|g| -g).collect();
        }
    }
}
