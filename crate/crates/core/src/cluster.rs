//! `(T, ε, N)`-clusters: dyadic summaries of paths that stay at norm `>= N`.
//!
//! A finite cover `V(N, ε)` of `B̄(0,2N)²` by products of open balls labels
//! each segment `[t_{i-1}, t_i]` of a dyadic partition with a pair `(x_i, y_i)`
//! such that `φ(t_{i-1}) ∈ (t_i − t_{i-1}) B(x_i, δ)` and
//! `φ(t_i) ∈ (t_i − t_{i-1}) B(y_i, δ)`. Norms are Euclidean.

use num_bigint::BigUint;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// Largest number of ball centres a grid cover may have.
pub const MAX_CENTERS: usize = 20_000;
/// Largest number of probe pairs for an explicit cover's coverage check.
pub const MAX_PROBE_PAIRS: usize = 50_000_000;
/// Work limit (pair transitions) for exhaustive counting.
pub const MAX_ENUMERATION_WORK: u128 = 500_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("cover parameters need N >= 1 and 0 < eps <= 2N, got N = {n}, eps = {eps}")]
    BadParameters { n: f64, eps: f64 },
    #[error("cover would have {centers} centres (limit {MAX_CENTERS}); increase eps or decrease N")]
    CoverTooLarge { centers: usize },
    #[error("pair {index} has radius {delta}, outside (0, eps]")]
    BadRadius { index: usize, delta: f64 },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("horizon must be a positive integer, got {0}")]
    BadHorizon(u32),
    #[error("expected {expected} grid samples, got {found}")]
    SampleCount { expected: usize, found: usize },
    #[error("precondition violated: {0}")]
    PreconditionViolated(String),
    #[error("no cover pair contains the endpoints of [{t1}, {t2}]")]
    NoCoveringPair { t1: f64, t2: f64 },
    #[error("exhaustive count needs {work} steps, above the limit {MAX_ENUMERATION_WORK}")]
    EnumerationTooLarge { work: u128 },
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
enum Pairs {
    /// All ordered pairs of centres, radius `delta`; index `i * |C| + j`.
    Product { delta: f64 },
    /// Explicit `(x index, y index, δ)` triples.
    Explicit(Vec<(usize, usize, f64)>),
}

/// An uncovered `(x, y)` pair.
pub type PointPair = (Vec<f64>, Vec<f64>);

/// A finite set `V` of centre pairs covering `B̄(0,2N)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallCover {
    n: f64,
    eps: f64,
    d: usize,
    centers: Vec<Vec<f64>>,
    pairs: Pairs,
}

impl BallCover {
    /// Grid of spacing `ε/√2` starting at `−2N` in each coordinate, keeping
    /// centres whose ball meets `B̄(0,2N)`, all ordered pairs, `δ ≡ ε`.
    /// For `d > 7` the spacing shrinks to `1.9 ε/√d` so cells stay inside a ball.
    pub fn grid(d: usize, n: f64, eps: f64) -> Result<Self, ClusterError> {
        if !(n >= 1.0) || !(eps > 0.0) || eps > 2.0 * n || !n.is_finite() {
            return Err(ClusterError::BadParameters { n, eps });
        }
        let h = if d <= 7 {
            eps / 2f64.sqrt()
        } else {
            1.9 * eps / (d as f64).sqrt()
        };
        let per_axis = (4.0 * n / h).ceil() as usize + 1;
        let total = (per_axis as f64).powi(d as i32);
        if total > 50.0 * MAX_CENTERS as f64 {
            return Err(ClusterError::CoverTooLarge {
                centers: total.min(usize::MAX as f64) as usize,
            });
        }
        let axis: Vec<f64> = (0..per_axis).map(|k| -2.0 * n + k as f64 * h).collect();
        let mut centers = Vec::new();
        let mut idx = vec![0usize; d];
        // Lexicographic order, first coordinate slowest.
        'outer: loop {
            let c: Vec<f64> = idx.iter().map(|&k| axis[k]).collect();
            if norm(&c) < 2.0 * n + eps {
                centers.push(c);
                if centers.len() > MAX_CENTERS {
                    return Err(ClusterError::CoverTooLarge {
                        centers: total as usize,
                    });
                }
            }
            for pos in (0..d).rev() {
                idx[pos] += 1;
                if idx[pos] < per_axis {
                    continue 'outer;
                }
                idx[pos] = 0;
            }
            break;
        }
        Ok(Self {
            n,
            eps,
            d,
            centers,
            pairs: Pairs::Product { delta: eps },
        })
    }

    /// A cover from explicit `(x, y, δ)` pairs, in the given order.
    pub fn from_pairs(
        n: f64,
        eps: f64,
        pairs: Vec<(Vec<f64>, Vec<f64>, f64)>,
    ) -> Result<Self, ClusterError> {
        if !(n >= 1.0) || !(eps > 0.0) || !n.is_finite() {
            return Err(ClusterError::BadParameters { n, eps });
        }
        let d = pairs.first().map_or(0, |p| p.0.len());
        let mut centers = Vec::with_capacity(2 * pairs.len());
        let mut list = Vec::with_capacity(pairs.len());
        for (index, (x, y, delta)) in pairs.into_iter().enumerate() {
            for v in [&x, &y] {
                if v.len() != d {
                    return Err(ClusterError::DimensionMismatch {
                        expected: d,
                        found: v.len(),
                    });
                }
            }
            if !(delta > 0.0 && delta <= eps) {
                return Err(ClusterError::BadRadius { index, delta });
            }
            list.push((centers.len(), centers.len() + 1, delta));
            centers.push(x);
            centers.push(y);
        }
        Ok(Self {
            n,
            eps,
            d,
            centers,
            pairs: Pairs::Explicit(list),
        })
    }

    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn centers(&self) -> &[Vec<f64>] {
        &self.centers
    }

    /// `|V|`.
    pub fn len(&self) -> usize {
        match &self.pairs {
            Pairs::Product { .. } => self.centers.len() * self.centers.len(),
            Pairs::Explicit(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `(x, y, δ)` of pair `k`.
    pub fn pair(&self, k: usize) -> (&[f64], &[f64], f64) {
        match &self.pairs {
            Pairs::Product { delta } => {
                let c = self.centers.len();
                (&self.centers[k / c], &self.centers[k % c], *delta)
            }
            Pairs::Explicit(v) => {
                let (i, j, delta) = v[k];
                (&self.centers[i], &self.centers[j], delta)
            }
        }
    }

    /// First pair (in index order) with `p ∈ B(x, δ)` and `q ∈ B(y, δ)`.
    pub fn find_covering(&self, p: &[f64], q: &[f64]) -> Option<usize> {
        match &self.pairs {
            Pairs::Product { delta } => {
                let i = self.centers.iter().position(|c| dist(c, p) < *delta)?;
                let j = self.centers.iter().position(|c| dist(c, q) < *delta)?;
                Some(i * self.centers.len() + j)
            }
            Pairs::Explicit(v) => v.iter().position(|&(i, j, delta)| {
                dist(&self.centers[i], p) < delta && dist(&self.centers[j], q) < delta
            }),
        }
    }

    /// Probe points of `B̄(0,2N)` on the grid of step `ε/4`.
    fn probes(&self) -> Vec<Vec<f64>> {
        let r = 2.0 * self.n;
        let step = self.eps / 4.0;
        let k = (r / step).floor() as i64;
        let mut out = Vec::new();
        let mut idx = vec![-k; self.d];
        loop {
            let p: Vec<f64> = idx.iter().map(|&i| i as f64 * step).collect();
            if norm(&p) <= r {
                out.push(p);
            }
            let mut pos = 0;
            loop {
                if pos == self.d {
                    return out;
                }
                idx[pos] += 1;
                if idx[pos] <= k {
                    break;
                }
                idx[pos] = -k;
                pos += 1;
            }
        }
    }

    /// Checks on the probe grid that every pair of points is covered, by
    /// brute force over the pair list. Returns the first uncovered pair.
    pub fn check_coverage(&self) -> Result<Option<PointPair>, ClusterError> {
        let probes = self.probes();
        match &self.pairs {
            Pairs::Product { delta } => {
                // Products of covers cover the product.
                for p in &probes {
                    if !self.centers.iter().any(|c| dist(c, p) < *delta) {
                        return Ok(Some((p.clone(), p.clone())));
                    }
                }
                Ok(None)
            }
            Pairs::Explicit(_) => {
                let work = probes.len() * probes.len();
                if work > MAX_PROBE_PAIRS {
                    return Err(ClusterError::EnumerationTooLarge { work: work as u128 });
                }
                for p in &probes {
                    for q in &probes {
                        if self.find_covering(p, q).is_none() {
                            return Ok(Some((p.clone(), q.clone())));
                        }
                    }
                }
                Ok(None)
            }
        }
    }
}

/// Exponent `κ` with `2^{κ−1} < T <= 2^κ`.
pub fn kappa(horizon: u32) -> u32 {
    horizon.next_power_of_two().trailing_zeros()
}

/// A path on `[0, T]` sampled on the grid of step `T / 2^{κ+1}`, with
/// optional extra samples (for instance jump times) that enter the sup tests.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    horizon: u32,
    grid: Vec<Vec<f64>>,
    extra: Vec<(f64, Vec<f64>)>,
}

impl SampledPath {
    pub fn grid_len(horizon: u32) -> usize {
        (1usize << (kappa(horizon) + 1)) + 1
    }

    pub fn new(horizon: u32, grid: Vec<Vec<f64>>) -> Result<Self, ClusterError> {
        if horizon == 0 {
            return Err(ClusterError::BadHorizon(horizon));
        }
        let expected = Self::grid_len(horizon);
        if grid.len() != expected {
            return Err(ClusterError::SampleCount {
                expected,
                found: grid.len(),
            });
        }
        let d = grid[0].len();
        if let Some(bad) = grid.iter().find(|x| x.len() != d) {
            return Err(ClusterError::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        Ok(Self {
            horizon,
            grid,
            extra: Vec::new(),
        })
    }

    /// Samples `f` on the grid.
    pub fn from_fn(horizon: u32, f: impl Fn(f64) -> Vec<f64>) -> Result<Self, ClusterError> {
        if horizon == 0 {
            return Err(ClusterError::BadHorizon(horizon));
        }
        let len = Self::grid_len(horizon);
        let step = horizon as f64 / (len - 1) as f64;
        Self::new(horizon, (0..len).map(|k| f(k as f64 * step)).collect())
    }

    pub fn with_extra_samples(mut self, mut extra: Vec<(f64, Vec<f64>)>) -> Self {
        extra.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.extra = extra;
        self
    }

    pub fn horizon(&self) -> u32 {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.grid[0].len()
    }

    pub fn grid(&self) -> &[Vec<f64>] {
        &self.grid
    }

    fn step(&self) -> f64 {
        self.horizon as f64 / (self.grid.len() - 1) as f64
    }

    /// Value at a grid time.
    fn at_grid(&self, k: usize) -> &[f64] {
        &self.grid[k]
    }

    /// Largest sample norm over grid indices `[a, b]` and extras in between.
    fn sup_norm(&self, a: usize, b: usize) -> f64 {
        let step = self.step();
        let (t1, t2) = (a as f64 * step, b as f64 * step);
        let grid = self.grid[a..=b].iter().map(|x| norm(x));
        let extra = self
            .extra
            .iter()
            .filter(|(t, _)| *t >= t1 && *t <= t2)
            .map(|(_, x)| norm(x));
        grid.chain(extra).fold(0.0, f64::max)
    }
}

/// One labelled segment `[t_{i-1}, t_i]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterTriple {
    pub t: f64,
    /// Index into the cover's pair list.
    pub pair: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub horizon: u32,
    pub triples: Vec<ClusterTriple>,
}

impl Cluster {
    pub fn breakpoints(&self) -> Vec<f64> {
        std::iter::once(0.0)
            .chain(self.triples.iter().map(|tr| tr.t))
            .collect()
    }

    /// `[[t_i, x_i, y_i], ...]` with centre coordinates from `cover`.
    pub fn to_json(&self, cover: &BallCover) -> serde_json::Value {
        serde_json::to_value(TripleView {
            cluster: self,
            cover,
        })
        .expect("finite coordinates")
    }
}

struct TripleView<'a> {
    cluster: &'a Cluster,
    cover: &'a BallCover,
}

impl Serialize for TripleView<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.cluster.triples.len()))?;
        for tr in &self.cluster.triples {
            let (x, y, _) = self.cover.pair(tr.pair);
            seq.serialize_element(&(tr.t, x, y))?;
        }
        seq.end()
    }
}

/// Dyadic decomposition of `path`. On `[T1, T2]`: if the sup of `‖φ‖` over
/// the samples exceeds `N (T2 − T1)` strictly, emit the first cover pair
/// containing `φ(T1)/(T2−T1)` and `φ(T2)/(T2−T1)`; otherwise split at the
/// midpoint.
pub fn clusterize(path: &SampledPath, cover: &BallCover) -> Result<Cluster, ClusterError> {
    if path.dim() != cover.dim() {
        return Err(ClusterError::DimensionMismatch {
            expected: cover.dim(),
            found: path.dim(),
        });
    }
    let n = cover.n();
    let t = path.horizon as f64;
    for (k, x) in path.grid.iter().enumerate() {
        if norm(x) < n {
            return Err(ClusterError::PreconditionViolated(format!(
                "|phi| = {} < N at t = {}",
                norm(x),
                k as f64 * path.step()
            )));
        }
    }
    for (s, x) in &path.extra {
        if norm(x) < n {
            return Err(ClusterError::PreconditionViolated(format!(
                "|phi| = {} < N at t = {s}",
                norm(x)
            )));
        }
    }
    let last = path.grid.len() - 1;
    for k in [0, last] {
        if norm(path.at_grid(k)) > 2.0 * t * n {
            return Err(ClusterError::PreconditionViolated(format!(
                "|phi| exceeds 2TN at t = {}",
                k as f64 * path.step()
            )));
        }
    }
    let mut triples = Vec::new();
    recurse(path, cover, 0, last, &mut triples)?;
    Ok(Cluster {
        horizon: path.horizon,
        triples,
    })
}

fn recurse(
    path: &SampledPath,
    cover: &BallCover,
    a: usize,
    b: usize,
    out: &mut Vec<ClusterTriple>,
) -> Result<(), ClusterError> {
    let step = path.step();
    let (t1, t2) = (a as f64 * step, b as f64 * step);
    let len = t2 - t1;
    if path.sup_norm(a, b) > cover.n() * len || b - a == 1 {
        let p: Vec<f64> = path.at_grid(a).iter().map(|c| c / len).collect();
        let q: Vec<f64> = path.at_grid(b).iter().map(|c| c / len).collect();
        let pair = cover
            .find_covering(&p, &q)
            .ok_or(ClusterError::NoCoveringPair { t1, t2 })?;
        out.push(ClusterTriple { t: t2, pair });
        return Ok(());
    }
    let mid = (a + b) / 2;
    recurse(path, cover, a, mid, out)?;
    recurse(path, cover, mid, b, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InvariantCheck {
    pub passed: bool,
    /// Index into the triple list of the first violation.
    pub first_failure: Option<usize>,
}

impl InvariantCheck {
    fn from_first(first: Option<usize>) -> Self {
        Self {
            passed: first.is_none(),
            first_failure: first,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClusterReport {
    /// `t_i − t_{i−1} >= 1/2`.
    pub min_length: InvariantCheck,
    /// `t_i 2^κ / T ∈ N`, increasing, and `t_n = T`.
    pub dyadic_grid: InvariantCheck,
    /// Consecutive scaled balls intersect.
    pub connectivity: InvariantCheck,
}

impl ClusterReport {
    pub fn all_passed(&self) -> bool {
        self.min_length.passed && self.dyadic_grid.passed && self.connectivity.passed
    }
}

pub fn verify_cluster(cluster: &Cluster, cover: &BallCover) -> ClusterReport {
    let t = cluster.horizon as f64;
    let scale = (1u64 << kappa(cluster.horizon)) as f64 / t;
    let bp = cluster.breakpoints();
    let min_length = (1..bp.len()).find(|&i| !(bp[i] - bp[i - 1] >= 0.5)).map(|i| i - 1);
    let mut grid = (1..bp.len())
        .find(|&i| {
            let g = bp[i] * scale;
            !(bp[i] > bp[i - 1]) || g.fract() != 0.0
        })
        .map(|i| i - 1);
    if grid.is_none() && bp.last() != Some(&t) {
        grid = Some(cluster.triples.len().saturating_sub(1));
    }
    let connectivity = (1..cluster.triples.len()).find(|&i| {
        let a = bp[i] - bp[i - 1];
        let b = bp[i + 1] - bp[i];
        let (_, y, dy) = cover.pair(cluster.triples[i - 1].pair);
        let (x, _, dx) = cover.pair(cluster.triples[i].pair);
        let gap: f64 = y
            .iter()
            .zip(x)
            .map(|(yi, xi)| (a * yi - b * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        !(gap < a * dy + b * dx)
    });
    ClusterReport {
        min_length: InvariantCheck::from_first(min_length),
        dyadic_grid: InvariantCheck::from_first(grid),
        connectivity: InvariantCheck::from_first(connectivity),
    }
}

/// For each triple, `φ(t_{i−1}) ∈ ℓ B(x_i, δ)` and `φ(t_i) ∈ ℓ B(y_i, δ)`
/// with `ℓ = t_i − t_{i−1}`.
pub fn verify_endpoints(cluster: &Cluster, cover: &BallCover, path: &SampledPath) -> InvariantCheck {
    let bp = cluster.breakpoints();
    let step = path.step();
    let first = cluster.triples.iter().enumerate().position(|(i, tr)| {
        let (t1, t2) = (bp[i], bp[i + 1]);
        let l = t2 - t1;
        let (x, y, delta) = cover.pair(tr.pair);
        let p = path.at_grid((t1 / step).round() as usize);
        let q = path.at_grid((t2 / step).round() as usize);
        let inside = |c: &[f64], z: &[f64]| {
            c.iter().zip(z).map(|(ci, zi)| (zi / l - ci).powi(2)).sum::<f64>().sqrt() < delta
        };
        !(inside(x, p) && inside(y, q))
    });
    InvariantCheck::from_first(first)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterCount {
    pub horizon: u32,
    pub cover_size: usize,
    /// Number of valid clusters, when enumeration was requested.
    #[serde(serialize_with = "decimal_opt")]
    pub exact: Option<BigUint>,
    /// `(2|V|)^{2T}`.
    #[serde(serialize_with = "decimal")]
    pub bound: BigUint,
}

impl ClusterCount {
    pub fn within_bound(&self) -> bool {
        self.exact.as_ref().is_none_or(|e| e <= &self.bound)
    }
}

// Written as decimal strings: JSON numbers cannot hold them exactly.
fn decimal<S: Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

fn decimal_opt<S: Serializer>(v: &Option<BigUint>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(v) => decimal(v, s),
        None => s.serialize_none(),
    }
}

/// `(2|V|)^{2T}` in exact arithmetic.
pub fn cluster_bound(horizon: u32, cover_size: usize) -> BigUint {
    BigUint::from(2 * cover_size as u64).pow(2 * horizon)
}

/// Counts all clusters on `[0, T]`: partitions on the `T/2^κ` grid with
/// segments `>= 1/2`, times connected pair labellings. The dynamic program
/// runs over (segment, pair) states.
pub fn count_clusters(horizon: u32, cover: &BallCover, exact: bool) -> Result<ClusterCount, ClusterError> {
    if horizon == 0 {
        return Err(ClusterError::BadHorizon(horizon));
    }
    let v = cover.len();
    let bound = cluster_bound(horizon, v);
    if !exact {
        return Ok(ClusterCount {
            horizon,
            cover_size: v,
            exact: None,
            bound,
        });
    }
    let g = 1usize << kappa(horizon);
    let step = horizon as f64 / g as f64;
    let min_cells = (0.5 / step).ceil() as usize;
    // Segments [a, b] as grid index pairs.
    let segs: Vec<(usize, usize)> = (0..g)
        .flat_map(|a| (a + min_cells.max(1)..=g).map(move |b| (a, b)))
        .collect();
    let links: u128 = segs
        .iter()
        .map(|&(_, b)| segs.iter().filter(|s| s.0 == b).count() as u128)
        .sum();
    let work = links * (v as u128) * (v as u128);
    if work > MAX_ENUMERATION_WORK {
        return Err(ClusterError::EnumerationTooLarge { work });
    }
    let connected = |a: f64, p: usize, b: f64, q: usize| {
        let (_, y, dy) = cover.pair(p);
        let (x, _, dx) = cover.pair(q);
        let gap: f64 = y
            .iter()
            .zip(x)
            .map(|(yi, xi)| (a * yi - b * xi).powi(2))
            .sum::<f64>()
            .sqrt();
        gap < a * dy + b * dx
    };
    // ways[s][p]: labelled prefixes ending with segment s labelled p.
    let mut ways: Vec<Vec<BigUint>> = vec![vec![BigUint::ZERO; v]; segs.len()];
    let mut order: Vec<usize> = (0..segs.len()).collect();
    order.sort_by_key(|&s| segs[s].0);
    for &s in &order {
        let (a, b) = segs[s];
        if a == 0 {
            ways[s].iter_mut().for_each(|w| *w = BigUint::from(1u8));
            continue;
        }
        let len = (b - a) as f64 * step;
        for (r, &(ra, rb)) in segs.iter().enumerate() {
            if rb != a {
                continue;
            }
            let prev_len = (rb - ra) as f64 * step;
            for q in 0..v {
                let mut acc = BigUint::ZERO;
                for p in 0..v {
                    if ways[r][p] != BigUint::ZERO && connected(prev_len, p, len, q) {
                        acc += &ways[r][p];
                    }
                }
                ways[s][q] += acc;
            }
        }
    }
    let total = segs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.1 == g)
        .flat_map(|(i, _)| ways[i].iter())
        .fold(BigUint::ZERO, |acc, w| acc + w);
    Ok(ClusterCount {
        horizon,
        cover_size: v,
        exact: Some(total),
        bound,
    })
}
