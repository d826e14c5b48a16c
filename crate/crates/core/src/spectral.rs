//! Truncated, killed generators and their Perron eigenvalue.
//!
//! The chain is restricted to `Box(N) \ K` with `K = {x : Σx_i <= k}`; every
//! jump into `K` or out of the box is lost mass. The decay rate of the
//! resulting sub-Markovian semigroup is the Perron root `θ` of the restricted
//! rate matrix, obtained by power iteration on the uniformized matrix
//! `P = I + Q/Λ_u`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::BandMatrix;
use crate::network::Network;

/// Largest state space the builder accepts.
pub const MAX_STATES: usize = 1_000_000;
/// Largest state space handed to the dense oracle.
pub const MAX_DENSE_STATES: usize = 5_000;
/// `Λ_u` is this factor times the largest exit rate. Exactly the largest exit
/// rate would make `P` periodic for birth-death chains (zero diagonal).
pub const UNIFORMIZATION_PAD: f64 = 1.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("state space of {states} states exceeds the limit of {MAX_STATES}")]
    StateSpaceTooLarge { states: f64 },
    #[error("truncation requires N > k >= -1, got N = {n_box}, k = {kill_radius}")]
    InvalidTruncation { n_box: usize, kill_radius: i64 },
    #[error("killing set covers the whole box")]
    EmptyStateSpace,
    #[error("dense oracle limited to {MAX_DENSE_STATES} states, got {states}")]
    DenseTooLarge { states: usize },
    #[error("{0} sequence must be nonempty and strictly increasing")]
    BadSequence(&'static str),
}

/// `(ρ, residual, iteration, right, left)` of the best iterate so far.
type Iterate = (f64, f64, usize, Vec<f64>, Vec<f64>);

/// Sparse rows: off-diagonal entries only.
#[derive(Debug, Clone)]
struct Csr {
    ptr: Vec<usize>,
    idx: Vec<u32>,
    val: Vec<f64>,
}

impl Csr {
    fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.ptr[i]..self.ptr[i + 1];
        self.idx[r.clone()]
            .iter()
            .zip(&self.val[r])
            .map(|(&j, &v)| (j as usize, v))
    }

    fn transpose(&self, n: usize) -> Csr {
        let mut counts = vec![0usize; n + 1];
        for &j in &self.idx {
            counts[j as usize + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut idx = vec![0u32; self.idx.len()];
        let mut val = vec![0.0; self.val.len()];
        for i in 0..n {
            for (j, v) in self.row(i) {
                let slot = next[j];
                idx[slot] = i as u32;
                val[slot] = v;
                next[j] += 1;
            }
        }
        Csr {
            ptr: counts,
            idx,
            val,
        }
    }
}

/// Rate matrix of the chain killed on `K` and outside `Box(N)`.
#[derive(Debug, Clone)]
pub struct KilledGenerator {
    d: usize,
    n_box: usize,
    kill_radius: i64,
    /// Box index (mixed radix, station 0 fastest) to state index or `u32::MAX`.
    index: Vec<u32>,
    states: Vec<Vec<i64>>,
    diag: Vec<f64>,
    rows: Csr,
    cols: Csr,
    lambda_u: f64,
    half_width: usize,
}

impl KilledGenerator {
    /// `k = -1` means no killing set.
    pub fn build(net: &Network, kill_radius: i64, n_box: usize) -> Result<Self, SpectralError> {
        if kill_radius < -1 || n_box as i64 <= kill_radius {
            return Err(SpectralError::InvalidTruncation { n_box, kill_radius });
        }
        let d = net.dim();
        let side = n_box + 1;
        let box_size = (side as f64).powi(d as i32);
        if box_size > 4.0 * MAX_STATES as f64 {
            return Err(SpectralError::StateSpaceTooLarge { states: box_size });
        }
        let box_size = side.pow(d as u32);
        let killed = |x: &[i64]| x.iter().sum::<i64>() <= kill_radius;

        let mut index = vec![u32::MAX; box_size];
        let mut states = Vec::new();
        let mut x = vec![0i64; d];
        for slot in index.iter_mut() {
            if !killed(&x) {
                *slot = states.len() as u32;
                states.push(x.clone());
            }
            for c in x.iter_mut() {
                *c += 1;
                if *c as usize <= n_box {
                    break;
                }
                *c = 0;
            }
        }
        if states.len() > MAX_STATES {
            return Err(SpectralError::StateSpaceTooLarge {
                states: states.len() as f64,
            });
        }
        if states.is_empty() {
            return Err(SpectralError::EmptyStateSpace);
        }

        let box_index = |y: &[i64]| -> Option<usize> {
            let mut b = 0usize;
            for &c in y.iter().rev() {
                if c < 0 || c as usize > n_box {
                    return None;
                }
                b = b * side + c as usize;
            }
            Some(b)
        };

        let mut ptr = Vec::with_capacity(states.len() + 1);
        ptr.push(0);
        let mut idx = Vec::new();
        let mut val = Vec::new();
        let mut diag = Vec::with_capacity(states.len());
        let mut half_width = 0usize;
        let mut y = vec![0i64; d];
        for (s, x) in states.iter().enumerate() {
            let mut total = 0.0;
            net.for_each_transition(x, |t| {
                total += t.rate;
                y.copy_from_slice(x);
                t.step.apply(&mut y);
                if let Some(b) = box_index(&y) {
                    let j = index[b];
                    if j != u32::MAX {
                        idx.push(j);
                        val.push(t.rate);
                        half_width = half_width.max(s.abs_diff(j as usize));
                    }
                }
            });
            diag.push(-total);
            ptr.push(idx.len());
        }
        let rows = Csr { ptr, idx, val };
        let cols = rows.transpose(states.len());
        Ok(Self {
            d,
            n_box,
            kill_radius,
            index,
            states,
            diag,
            rows,
            cols,
            lambda_u: UNIFORMIZATION_PAD * net.max_exit_rate(),
            half_width,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn n_box(&self) -> usize {
        self.n_box
    }

    pub fn kill_radius(&self) -> i64 {
        self.kill_radius
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn lambda_u(&self) -> f64 {
        self.lambda_u
    }

    pub fn state(&self, i: usize) -> &[i64] {
        &self.states[i]
    }

    pub fn states(&self) -> &[Vec<i64>] {
        &self.states
    }

    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.d {
            return None;
        }
        let mut b = 0usize;
        for &c in x.iter().rev() {
            if c < 0 || c as usize > self.n_box {
                return None;
            }
            b = b * (self.n_box + 1) + c as usize;
        }
        match self.index[b] {
            u32::MAX => None,
            j => Some(j as usize),
        }
    }

    pub fn diagonal(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Off-diagonal entries `(j, Q_ij)` of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.rows.row(i)
    }

    /// `Σ_j Q_ij`, minus the leak rate out of state `i`.
    pub fn row_sum(&self, i: usize) -> f64 {
        self.diag[i] + self.rows.row(i).map(|(_, v)| v).sum::<f64>()
    }

    /// `Q` as a band matrix, for the dense oracle.
    pub fn to_band(&self) -> BandMatrix {
        let mut m = BandMatrix::zeros(self.len(), self.half_width);
        for i in 0..self.len() {
            m.set(i, i, self.diag[i]);
            for (j, v) in self.rows.row(i) {
                m.set(i, j, v);
            }
        }
        m
    }

    fn apply(&self, csr: &Csr, v: &[f64], out: &mut [f64]) {
        let inv = 1.0 / self.lambda_u;
        let kernel = |(i, o): (usize, &mut f64)| {
            let (lo, hi) = (csr.ptr[i], csr.ptr[i + 1]);
            let mut off = 0.0;
            for k in lo..hi {
                off += csr.val[k] * v[csr.idx[k] as usize];
            }
            *o = v[i] + (self.diag[i] * v[i] + off) * inv;
        };
        if v.len() >= 50_000 {
            out.par_iter_mut().enumerate().for_each(kernel);
        } else {
            out.iter_mut().enumerate().for_each(kernel);
        }
    }

    /// `out = P v`.
    pub fn apply_uniformized(&self, v: &[f64], out: &mut [f64]) {
        self.apply(&self.rows, v, out)
    }

    /// `out = Pᵀ w`.
    pub fn apply_uniformized_transpose(&self, w: &[f64], out: &mut [f64]) {
        self.apply(&self.cols, w, out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralEstimate {
    /// Perron root of `P`.
    pub rho: f64,
    /// `Λ_u (ρ − 1)`.
    pub theta: f64,
    pub iterations: usize,
    /// `max(‖Pv − ρv‖∞, ‖Pᵀw − ρw‖∞)` with `‖v‖∞ = ‖w‖∞ = 1`.
    pub residual: f64,
    pub n_box: usize,
    pub kill_radius: i64,
    pub states: usize,
    pub lambda_u: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct EigenPair {
    pub estimate: SpectralEstimate,
    /// Right Perron vector, `‖·‖∞ = 1`.
    pub right: Vec<f64>,
    /// Left Perron vector, `‖·‖∞ = 1`.
    pub left: Vec<f64>,
}

impl EigenPair {
    /// Left vector normalised to a probability distribution.
    pub fn quasi_stationary(&self) -> Vec<f64> {
        let s: f64 = self.left.iter().map(|x| x.max(0.0)).sum();
        self.left.iter().map(|x| x.max(0.0) / s).collect()
    }
}

fn normalize_inf(v: &mut [f64]) -> f64 {
    let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m > 0.0 {
        v.iter_mut().for_each(|x| *x /= m);
    }
    m
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration from the uniform vector, run on `P` and `Pᵀ` together.
/// The eigenvalue is the two-sided quotient `⟨w,Pv⟩/⟨w,v⟩`, whose error is
/// quadratic in the vector errors. If `max_iter` is reached the best iterate
/// is returned with `converged = false`.
pub fn top_eigen_pair(g: &KilledGenerator, opts: EigenOptions) -> EigenPair {
    let n = g.len();
    let mut v = vec![1.0; n];
    let mut w = vec![1.0; n];
    let mut pv = vec![0.0; n];
    let mut pw = vec![0.0; n];
    let mut best: Option<Iterate> = None;
    let mut iterations = 0;
    let mut converged = false;
    let max_iter = opts.max_iter.max(1);
    for it in 1..=max_iter {
        iterations = it;
        g.apply_uniformized(&v, &mut pv);
        g.apply_uniformized_transpose(&w, &mut pw);
        // The residual check costs as much as a product; do it every 8 steps.
        if it % 8 == 0 || it == max_iter || n == 1 {
            let rho = dot(&w, &pv) / dot(&w, &v);
            let res_r = pv
                .iter()
                .zip(&v)
                .fold(0.0f64, |m, (a, b)| m.max((a - rho * b).abs()));
            let res_l = pw
                .iter()
                .zip(&w)
                .fold(0.0f64, |m, (a, b)| m.max((a - rho * b).abs()));
            let residual = res_r.max(res_l);
            if residual <= opts.tol {
                best = Some((rho, residual, it, v.clone(), w.clone()));
                converged = true;
                break;
            }
            if best.as_ref().is_none_or(|b| residual < b.1) {
                best = Some((rho, residual, it, v.clone(), w.clone()));
            }
        }
        std::mem::swap(&mut v, &mut pv);
        std::mem::swap(&mut w, &mut pw);
        normalize_inf(&mut v);
        normalize_inf(&mut w);
    }
    let (rho, residual, _, right, left) = best.expect("at least one iteration");
    EigenPair {
        estimate: SpectralEstimate {
            rho,
            theta: g.lambda_u * (rho - 1.0),
            iterations,
            residual,
            n_box: g.n_box,
            kill_radius: g.kill_radius,
            states: n,
            lambda_u: g.lambda_u,
            converged,
        },
        right,
        left,
    }
}

pub fn top_eigen(g: &KilledGenerator, opts: EigenOptions) -> SpectralEstimate {
    top_eigen_pair(g, opts).estimate
}

/// Perron root `θ` of `Q` by bisection on the M-matrix property of `sI − Q`,
/// using banded elimination. Independent of power iteration.
pub fn dense_perron_root(g: &KilledGenerator) -> Result<f64, SpectralError> {
    if g.len() > MAX_DENSE_STATES {
        return Err(SpectralError::DenseTooLarge { states: g.len() });
    }
    Ok(g.to_band().metzler_perron_root())
}

/// A grid of killed-generator estimates.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralTable {
    pub rows: Vec<SpectralEstimate>,
    /// `θ` at the largest `(k, N)`.
    pub estimate: f64,
    /// `θ` at the largest `k` and `N/2`, when that truncation is valid.
    pub half_box_theta: Option<f64>,
    /// `|θ(N) − θ(N/2)| <= 1e-2 |θ(N)|` (or `<= 1e-6` absolutely).
    pub converged_in_n: bool,
    /// Every eigen-solve reached the residual tolerance.
    pub all_converged: bool,
}

pub const CSV_HEADER: &str = "k,N,rho,theta,residual,iterations,converged";

impl SpectralTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{:.15e},{:.15e},{:.3e},{},{}",
                r.kill_radius, r.n_box, r.rho, r.theta, r.residual, r.iterations, r.converged
            );
        }
        s
    }

    /// Pairs `(a, b)` of rows with equal `N`, `k_a < k_b` and
    /// `θ_b > θ_a + slack`. Killing more states can only speed decay.
    pub fn killing_monotonicity_violations(&self, slack: f64) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ra) in self.rows.iter().enumerate() {
            for (b, rb) in self.rows.iter().enumerate() {
                if ra.n_box == rb.n_box && ra.kill_radius < rb.kill_radius && rb.theta > ra.theta + slack
                {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

fn check_increasing<T: PartialOrd>(xs: &[T], what: &'static str) -> Result<(), SpectralError> {
    if xs.is_empty() || xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(SpectralError::BadSequence(what));
    }
    Ok(())
}

/// `θ(k, N)` for every pair with `N > k`, computed in parallel.
pub fn estimate_log_rstar_e(
    net: &Network,
    ks: &[i64],
    ns: &[usize],
    opts: EigenOptions,
) -> Result<SpectralTable, SpectralError> {
    check_increasing(ks, "k")?;
    check_increasing(ns, "N")?;
    let mut jobs: Vec<(i64, usize)> = ks
        .iter()
        .flat_map(|&k| ns.iter().filter(move |&&n| n as i64 > k).map(move |&n| (k, n)))
        .collect();
    let k_max = *ks.last().unwrap();
    let n_max = *ns.last().unwrap();
    if n_max as i64 <= k_max {
        return Err(SpectralError::InvalidTruncation {
            n_box: n_max,
            kill_radius: k_max,
        });
    }
    let half = n_max / 2;
    let half_job = (half as i64 > k_max && !ns.contains(&half)).then_some((k_max, half));
    jobs.extend(half_job);

    let solved: Vec<SpectralEstimate> = jobs
        .par_iter()
        .map(|&(k, n)| KilledGenerator::build(net, k, n).map(|g| top_eigen(&g, opts)))
        .collect::<Result<_, _>>()?;
    let mut rows = solved;
    let half_row = half_job.map(|_| rows.pop().unwrap());
    let top = rows
        .iter()
        .find(|r| r.kill_radius == k_max && r.n_box == n_max)
        .unwrap()
        .theta;
    let half_box_theta = half_row.map(|r| r.theta).or_else(|| {
        rows.iter()
            .find(|r| r.kill_radius == k_max && r.n_box == half)
            .map(|r| r.theta)
    });
    let converged_in_n = half_box_theta.is_some_and(|h| {
        let diff = (top - h).abs();
        diff <= 1e-2 * top.abs() || diff <= 1e-6
    });
    let all_converged = rows.iter().all(|r| r.converged);
    Ok(SpectralTable {
        rows,
        estimate: top,
        half_box_theta,
        converged_in_n,
        all_converged,
    })
}

/// The un-killed (`k = -1`) estimates of `log r*`.
pub fn estimate_log_rstar(
    net: &Network,
    ns: &[usize],
    opts: EigenOptions,
) -> Result<SpectralTable, SpectralError> {
    estimate_log_rstar_e(net, &[-1], ns, opts)
}
