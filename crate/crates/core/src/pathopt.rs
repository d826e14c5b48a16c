//! Piecewise-linear paths in the orthant and their action
//! `I_{[0,T]}(φ) = ∫ L(φ, φ̇) dt`.
//!
//! On a straight segment the velocity is constant, and so is the face of the
//! open interior (a coordinate is positive inside iff it is positive at one
//! of the endpoints), so the action is an exact finite sum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::ser::SerializeSeq;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::ratefn::{FaceSet, RateEnv, RateError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("path needs at least two vertices")]
    TooShort,
    #[error("{times} times for {vertices} vertices")]
    LengthMismatch { times: usize, vertices: usize },
    #[error("vertex {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("times must be finite and strictly increasing (at index {index})")]
    NotIncreasing { index: usize },
    #[error("vertex {index} leaves the closed orthant")]
    OutsideOrthant { index: usize },
    #[error("loop is not closed")]
    NotClosed,
    #[error("segment {segment} is labelled {label:?} but its interior lies in face {actual:?}")]
    FaceMismatch {
        segment: usize,
        label: FaceSet,
        actual: FaceSet,
    },
    #[error("split time {t} outside ({start}, {end})")]
    SplitOutOfRange { t: f64, start: f64, end: f64 },
    #[error("minimize_loop needs m >= 2 segments, got {m}")]
    TooFewSegments { m: usize },
    #[error("no seed produced a finite action")]
    NoFeasibleSeed,
    #[error(transparent)]
    Rate(#[from] RateError),
}

/// A continuous, piecewise-linear path with face labels per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PlPath {
    times: Vec<f64>,
    vertices: Vec<Vec<f64>>,
    faces: Vec<FaceSet>,
}

/// Face of the open segment between `a` and `b`.
fn segment_face(a: &[f64], b: &[f64]) -> FaceSet {
    FaceSet::of_point(a).union(FaceSet::of_point(b))
}

impl PlPath {
    /// Validates the data and labels each segment with its face.
    pub fn new(times: Vec<f64>, vertices: Vec<Vec<f64>>) -> Result<Self, PathError> {
        if times.len() != vertices.len() {
            return Err(PathError::LengthMismatch {
                times: times.len(),
                vertices: vertices.len(),
            });
        }
        if times.len() < 2 {
            return Err(PathError::TooShort);
        }
        let d = vertices[0].len();
        for (index, x) in vertices.iter().enumerate() {
            if x.len() != d {
                return Err(PathError::DimensionMismatch {
                    index,
                    expected: d,
                    found: x.len(),
                });
            }
            if x.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
                return Err(PathError::OutsideOrthant { index });
            }
        }
        for (index, w) in times.windows(2).enumerate() {
            if !(w[0] < w[1]) || !w[0].is_finite() || !w[1].is_finite() {
                return Err(PathError::NotIncreasing { index: index + 1 });
            }
        }
        let faces = vertices
            .windows(2)
            .map(|w| segment_face(&w[0], &w[1]))
            .collect();
        Ok(Self {
            times,
            vertices,
            faces,
        })
    }

    /// As [`PlPath::new`] but with caller-supplied face labels, which
    /// [`action`] checks.
    pub fn with_faces(
        times: Vec<f64>,
        vertices: Vec<Vec<f64>>,
        faces: Vec<FaceSet>,
    ) -> Result<Self, PathError> {
        let mut p = Self::new(times, vertices)?;
        if faces.len() != p.faces.len() {
            return Err(PathError::LengthMismatch {
                times: p.times.len(),
                vertices: faces.len() + 1,
            });
        }
        p.faces = faces;
        Ok(p)
    }

    /// Constant path at `x` on `[0, t]`.
    pub fn constant(x: Vec<f64>, t: f64) -> Result<Self, PathError> {
        Self::new(vec![0.0, t], vec![x.clone(), x])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[FaceSet] {
        &self.faces
    }

    pub fn dim(&self) -> usize {
        self.vertices[0].len()
    }

    pub fn segments(&self) -> usize {
        self.faces.len()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn is_closed(&self) -> bool {
        self.vertices[0] == *self.vertices.last().unwrap()
    }

    /// Errors unless the path is a loop.
    pub fn into_loop(self) -> Result<Self, PathError> {
        if self.is_closed() {
            Ok(self)
        } else {
            Err(PathError::NotClosed)
        }
    }

    pub fn velocity(&self, segment: usize) -> Vec<f64> {
        let dt = self.times[segment + 1] - self.times[segment];
        self.vertices[segment + 1]
            .iter()
            .zip(&self.vertices[segment])
            .map(|(b, a)| (b - a) / dt)
            .collect()
    }

    /// Position at time `t` (clamped to the time range).
    pub fn at(&self, t: f64) -> Vec<f64> {
        let t = t.clamp(self.start(), self.end());
        let j = match self.times.partition_point(|&s| s <= t) {
            0 => 0,
            k => (k - 1).min(self.segments() - 1),
        };
        let (s0, s1) = (self.times[j], self.times[j + 1]);
        let w = (t - s0) / (s1 - s0);
        self.vertices[j]
            .iter()
            .zip(&self.vertices[j + 1])
            .map(|(a, b)| (a + w * (b - a)).max(0.0))
            .collect()
    }

    /// `G_T φ(t) = φ(T t) / T` for a path starting at time 0: times and
    /// vertices are both divided by `T`, velocities are unchanged.
    pub fn rescale(&self, t: f64) -> Self {
        Self {
            times: self.times.iter().map(|s| s / t).collect(),
            vertices: self
                .vertices
                .iter()
                .map(|x| x.iter().map(|c| c / t).collect())
                .collect(),
            faces: self.faces.clone(),
        }
    }

    /// Splits at an interior time, inserting a vertex when `t` is not a
    /// breakpoint.
    pub fn split_at(&self, t: f64) -> Result<(Self, Self), PathError> {
        if !(t > self.start() && t < self.end()) {
            return Err(PathError::SplitOutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let k = self.times.partition_point(|&s| s < t);
        let (mut lt, mut lv, mut lf) = (
            self.times[..k].to_vec(),
            self.vertices[..k].to_vec(),
            self.faces[..k - 1].to_vec(),
        );
        let (mut rt, mut rv, mut rf) = (vec![], vec![], vec![]);
        if self.times[k] == t {
            lt.push(t);
            lv.push(self.vertices[k].clone());
            lf.push(self.faces[k - 1]);
            rt.extend_from_slice(&self.times[k..]);
            rv.extend_from_slice(&self.vertices[k..]);
            rf.extend_from_slice(&self.faces[k..]);
        } else {
            let (s0, s1) = (self.times[k - 1], self.times[k]);
            let w = (t - s0) / (s1 - s0);
            let mid: Vec<f64> = self.vertices[k - 1]
                .iter()
                .zip(&self.vertices[k])
                .map(|(a, b)| (a + w * (b - a)).max(0.0))
                .collect();
            lt.push(t);
            lv.push(mid.clone());
            lf.push(self.faces[k - 1]);
            rt.push(t);
            rv.push(mid);
            rf.push(self.faces[k - 1]);
            rt.extend_from_slice(&self.times[k..]);
            rv.extend_from_slice(&self.vertices[k..]);
            rf.extend_from_slice(&self.faces[k..]);
        }
        Ok((
            Self {
                times: lt,
                vertices: lv,
                faces: lf,
            },
            Self {
                times: rt,
                vertices: rv,
                faces: rf,
            },
        ))
    }

    /// Lebesgue measure of `{t : φ(t) ≠ 0}`.
    pub fn time_away_from_origin(&self) -> f64 {
        (0..self.segments())
            .filter(|&j| {
                let zero = |x: &Vec<f64>| x.iter().all(|&c| c == 0.0);
                !(zero(&self.vertices[j]) && zero(&self.vertices[j + 1]))
            })
            .map(|j| self.times[j + 1] - self.times[j])
            .sum()
    }
}

impl Serialize for PlPath {
    /// `[[t0, [x...]], [t1, [x...]], ...]`
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(self.times.len()))?;
        for (t, x) in self.times.iter().zip(&self.vertices) {
            seq.serialize_element(&(t, x))?;
        }
        seq.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionValue {
    /// `+∞` when some segment velocity is outside the effective domain.
    pub value: f64,
    pub segments: Vec<f64>,
}

fn segment_action(env: &RateEnv, face: FaceSet, dt: f64, v: &[f64]) -> Result<f64, RateError> {
    let lr = if v.iter().all(|&c| c == 0.0) {
        env.local_rate_at_zero(face)
    } else {
        env.local_rate(face, v)
    };
    match lr {
        Ok(l) => Ok(dt * l.value),
        Err(RateError::Unbounded) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// `Σ_j (s_{j+1} − s_j) L_{Λ_j}((x_{j+1} − x_j)/(s_{j+1} − s_j))`.
pub fn action(env: &RateEnv, path: &PlPath) -> Result<ActionValue, PathError> {
    if path.dim() != env.dim() {
        return Err(RateError::DimensionMismatch {
            expected: env.dim(),
            found: path.dim(),
        }
        .into());
    }
    let mut segments = Vec::with_capacity(path.segments());
    for j in 0..path.segments() {
        let actual = segment_face(&path.vertices[j], &path.vertices[j + 1]);
        if actual != path.faces[j] {
            return Err(PathError::FaceMismatch {
                segment: j,
                label: path.faces[j],
                actual,
            });
        }
        let dt = path.times[j + 1] - path.times[j];
        segments.push(segment_action(env, actual, dt, &path.velocity(j))?);
    }
    Ok(ActionValue {
        value: segments.iter().sum(),
        segments,
    })
}

/// `L_{face(x)}(0)`: the action rate of the constant path at `x`.
pub fn constant_path_value(env: &RateEnv, x: &[f64]) -> Result<f64, PathError> {
    Ok(env.local_rate_at_zero(FaceSet::of_point(x))?.value)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub avoid_origin: bool,
    /// Number of segments on `[0, 1]`.
    pub m: usize,
    /// Seed for the random starting loops.
    pub seed: u64,
    pub random_seeds: usize,
    /// Lower bound on `‖x‖₁` for every vertex when avoiding the origin;
    /// `None` means `1e-3 (1 + mean μ)`.
    pub delta_min: Option<f64>,
    pub max_sweeps: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            avoid_origin: false,
            m: 8,
            seed: 0,
            random_seeds: 8,
            delta_min: None,
            max_sweeps: 60,
        }
    }
}

pub fn default_delta_min(env: &RateEnv) -> f64 {
    let mu = env.network().mu();
    1e-3 * (1.0 + mu.iter().sum::<f64>() / mu.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopMinimum {
    pub path: PlPath,
    pub action: ActionValue,
    /// Index into the seed list: origin (when allowed), axes, centroid, random.
    pub seed_index: usize,
}

/// Multi-start local minimisation of the action over closed loops on `[0, 1]`
/// with `m` uniform segments. Each start is improved by projected coordinate
/// descent with central-difference slopes; vertices are kept in the orthant,
/// and away from the origin when requested.
pub fn minimize_loop(env: &RateEnv, opts: &MinimizeOptions) -> Result<LoopMinimum, PathError> {
    let m = opts.m;
    if m < 2 {
        return Err(PathError::TooFewSegments { m });
    }
    let d = env.dim();
    let delta = if opts.avoid_origin {
        opts.delta_min.unwrap_or_else(|| default_delta_min(env))
    } else {
        0.0
    };

    let mut seeds: Vec<Vec<Vec<f64>>> = Vec::new();
    if !opts.avoid_origin {
        seeds.push(vec![vec![0.0; d]; m]);
    }
    for i in 0..d {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        seeds.push(vec![e; m]);
    }
    seeds.push(vec![vec![1.0; d]; m]);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_seeds {
        let verts = (0..m)
            .map(|_| {
                (0..d)
                    .map(|_| {
                        if rng.random_bool(0.3) {
                            0.0
                        } else {
                            rng.random_range(0.0..2.0)
                        }
                    })
                    .collect()
            })
            .collect();
        seeds.push(verts);
    }

    let runs: Vec<Result<Descent, PathError>> = seeds
        .into_par_iter()
        .map(|mut x| {
            for v in x.iter_mut() {
                project(v, delta);
            }
            descend(env, x, delta, opts.max_sweeps)
        })
        .collect();

    let mut best: Option<(usize, Vec<Vec<f64>>, f64)> = None;
    for (idx, run) in runs.into_iter().enumerate() {
        let (x, value) = run?;
        if value.is_finite() && best.as_ref().is_none_or(|b| value < b.2) {
            best = Some((idx, x, value));
        }
    }
    let (seed_index, x, _) = best.ok_or(PathError::NoFeasibleSeed)?;
    let path = loop_from_vertices(x)?;
    let action = action(env, &path)?;
    Ok(LoopMinimum {
        path,
        action,
        seed_index,
    })
}

fn loop_from_vertices(mut x: Vec<Vec<f64>>) -> Result<PlPath, PathError> {
    let m = x.len();
    x.push(x[0].clone());
    let times = (0..=m).map(|j| j as f64 / m as f64).collect();
    PlPath::new(times, x)
}

/// Clamp to the orthant, then push out radially to `‖x‖₁ >= delta`.
fn project(x: &mut [f64], delta: f64) {
    for c in x.iter_mut() {
        *c = c.max(0.0);
    }
    if delta > 0.0 {
        let s: f64 = x.iter().sum();
        if s == 0.0 {
            x[0] = delta;
        } else if s < delta {
            x.iter_mut().for_each(|c| *c *= delta / s);
        }
    }
}

/// Loop vertices `x_0..x_{m-1}` (with `x_m = x_0`) on uniform times.
struct LoopCost<'a> {
    env: &'a RateEnv,
    dt: f64,
}

impl LoopCost<'_> {
    fn segment(&self, a: &[f64], b: &[f64]) -> Result<f64, RateError> {
        let v: Vec<f64> = b.iter().zip(a).map(|(q, p)| (q - p) / self.dt).collect();
        segment_action(self.env, segment_face(a, b), self.dt, &v)
    }

    /// Cost of the two segments touching vertex `j`.
    fn local(&self, x: &[Vec<f64>], j: usize, xj: &[f64]) -> Result<f64, RateError> {
        let m = x.len();
        let prev = &x[(j + m - 1) % m];
        let next = &x[(j + 1) % m];
        Ok(self.segment(prev, xj)? + self.segment(xj, next)?)
    }

    fn total(&self, x: &[Vec<f64>]) -> Result<f64, RateError> {
        let m = x.len();
        (0..m).map(|j| self.segment(&x[j], &x[(j + 1) % m])).sum()
    }
}

/// Loop vertices and their action.
type Descent = (Vec<Vec<f64>>, f64);

fn descend(
    env: &RateEnv,
    mut x: Vec<Vec<f64>>,
    delta: f64,
    max_sweeps: usize,
) -> Result<Descent, PathError> {
    let m = x.len();
    let d = env.dim();
    let cost = LoopCost {
        env,
        dt: 1.0 / m as f64,
    };
    let mut total = cost.total(&x)?;
    if !total.is_finite() {
        return Ok((x, total));
    }
    let h = 1e-6;
    let mut step = vec![vec![0.25; d]; m];
    for _ in 0..max_sweeps {
        let before = total;
        for j in 0..m {
            for i in 0..d {
                let base = cost.local(&x, j, &x[j])?;
                let mut probe = x[j].clone();
                let eval = |p: &mut Vec<f64>, c: f64| -> Result<(f64, Vec<f64>), RateError> {
                    p[i] = c;
                    let mut q = p.clone();
                    project(&mut q, delta);
                    Ok((cost.local(&x, j, &q)?, q))
                };
                let c0 = x[j][i];
                let (up, _) = eval(&mut probe, c0 + h)?;
                let (down, qd) = eval(&mut probe, (c0 - h).max(0.0))?;
                let width = h + (c0 - qd[i]).min(h);
                let slope = (up - down) / width;
                if !slope.is_finite() || slope == 0.0 {
                    continue;
                }
                // Try a step against the slope, and also landing on the face.
                let mut best = (base, None);
                let mut t = step[j][i];
                for _ in 0..30 {
                    let (val, q) = eval(&mut probe, c0 - t * slope.signum())?;
                    if val < best.0 - 1e-15 * (1.0 + base.abs()) {
                        best = (val, Some(q));
                        break;
                    }
                    t *= 0.5;
                }
                if c0 > 0.0 {
                    let (val, q) = eval(&mut probe, 0.0)?;
                    if val < best.0 {
                        best = (val, Some(q));
                    }
                }
                if let (_, Some(q)) = best {
                    step[j][i] = (2.0 * t).min(1.0);
                    x[j] = q;
                } else {
                    step[j][i] = (0.5 * step[j][i]).max(1e-9);
                }
            }
        }
        total = cost.total(&x)?;
        if before - total <= 1e-12 * (1.0 + total.abs()) {
            break;
        }
    }
    Ok((x, total))
}

/// The constant `C = sup l2(v)` over `|v| = c`, estimated by a 16-direction
/// fan and refined around the best fan direction in `d = 2`.
pub fn speed_bound(env: &RateEnv, c: f64) -> Result<f64, PathError> {
    let d = env.dim();
    let dirs: Vec<Vec<f64>> = match d {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..16)
            .map(|k| {
                let a = std::f64::consts::TAU * k as f64 / 16.0;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(16);
            (0..16)
                .map(|_| {
                    let v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        }
    };
    let at = |u: &[f64]| -> Result<f64, RateError> {
        env.l2(&u.iter().map(|x| c * x).collect::<Vec<_>>())
    };
    let mut best = f64::NEG_INFINITY;
    let mut best_k = 0;
    for (k, u) in dirs.iter().enumerate() {
        let v = at(u)?;
        if v > best {
            best = v;
            best_k = k;
        }
    }
    if d == 2 {
        // Golden-section search on the angle bracket around the best ray.
        let step = std::f64::consts::TAU / 16.0;
        let centre = step * best_k as f64;
        let f = |a: f64| at(&[a.cos(), a.sin()]);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let (mut lo, mut hi) = (centre - step, centre + step);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (f(x1)?, f(x2)?);
        for _ in 0..60 {
            if f1 > f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1)?;
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2)?;
            }
        }
        best = best.max(f1).max(f2);
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Network, NetworkSpec};

    fn example2() -> RateEnv {
        RateEnv::new(
            NetworkSpec::new(
                vec![1.0, 1.0],
                vec![4.0, 5.0],
                vec![vec![0.0, 0.2], vec![0.2, 0.0]],
            )
            .validate()
            .unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert_eq!(PlPath::new(vec![0.0], vec![vec![0.0]]), Err(PathError::TooShort));
        assert_eq!(
            PlPath::new(vec![0.0, 0.0], vec![vec![0.0], vec![1.0]]),
            Err(PathError::NotIncreasing { index: 1 })
        );
        assert_eq!(
            PlPath::new(vec![0.0, 1.0], vec![vec![0.0], vec![-1.0]]),
            Err(PathError::OutsideOrthant { index: 1 })
        );
        let open = PlPath::new(vec![0.0, 1.0], vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(open.into_loop(), Err(PathError::NotClosed));
    }

    #[test]
    fn segment_faces() {
        let p = PlPath::new(
            vec![0.0, 1.0, 2.0, 3.0],
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 2.0], vec![0.0, 0.0]],
        )
        .unwrap();
        assert_eq!(
            p.faces(),
            &[
                FaceSet::from_stations(&[0]),
                FaceSet::full(2),
                FaceSet::from_stations(&[1])
            ]
        );
        let env = example2();
        let bad = PlPath::with_faces(
            vec![0.0, 1.0],
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![FaceSet::EMPTY],
        )
        .unwrap();
        assert!(matches!(action(&env, &bad), Err(PathError::FaceMismatch { segment: 0, .. })));
    }

    #[test]
    fn constant_loops() {
        let env = example2();
        let interior = action(&env, &PlPath::constant(vec![1.0, 2.0], 1.0).unwrap()).unwrap();
        assert!((interior.value - env.l2(&[0.0, 0.0]).unwrap()).abs() < 1e-15);
        let axis = constant_path_value(&env, &[3.0, 0.0]).unwrap();
        assert!((axis - 0.746749483200404).abs() < 1e-9);
        assert_eq!(constant_path_value(&env, &[0.0, 0.0]).unwrap(), 0.0);

        let tr = RateEnv::new(Network::mm1(4.0, 1.0).unwrap()).unwrap();
        let origin = action(&tr, &PlPath::constant(vec![0.0], 1.0).unwrap()).unwrap();
        assert!((origin.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn split_and_rescale() {
        let env = example2();
        let p = PlPath::new(
            vec![0.0, 0.5, 1.25, 2.0],
            vec![vec![0.0, 0.0], vec![1.0, 0.5], vec![0.2, 1.0], vec![0.0, 0.0]],
        )
        .unwrap();
        let a = action(&env, &p).unwrap().value;
        for t in [0.3, 0.5, 1.7] {
            let (l, r) = p.split_at(t).unwrap();
            assert_eq!(l.end(), t);
            assert_eq!(r.start(), t);
            let b = action(&env, &l).unwrap().value + action(&env, &r).unwrap().value;
            assert!((a - b).abs() < 1e-12 * a, "{a} {b}");
        }
        assert!(p.split_at(2.0).is_err());
        let g = p.rescale(2.0);
        assert_eq!(g.end(), 1.0);
        let b = action(&env, &g).unwrap().value;
        assert!((a - 2.0 * b).abs() < 1e-12 * a);
        assert_eq!(p.time_away_from_origin(), 2.0);
        assert_eq!(p.at(0.25), vec![0.5, 0.25]);
    }

    #[test]
    fn json_layout() {
        let p = PlPath::new(vec![0.0, 1.0], vec![vec![0.0, 1.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(serde_json::to_string(&p).unwrap(), "[[0.0,[0.0,1.0]],[1.0,[0.0,1.0]]]");
    }

    #[test]
    fn minimum_over_loops() {
        let env = example2();
        let free = minimize_loop(&env, &MinimizeOptions::default()).unwrap();
        assert_eq!(free.action.value, 0.0);
        assert_eq!(free.seed_index, 0);

        let avoid = minimize_loop(
            &env,
            &MinimizeOptions {
                avoid_origin: true,
                ..Default::default()
            },
        )
        .unwrap();
        let closed = env.closed_form_istar0().unwrap().value;
        assert!(avoid.action.value >= closed - 1e-6);
        assert!((avoid.action.value - closed).abs() < 1e-3, "{}", avoid.action.value);
        for x in &avoid.path.vertices()[1..avoid.path.segments()] {
            assert!(x.iter().sum::<f64>() > 0.0);
        }

        let mm1 = RateEnv::new(Network::mm1(1.0, 4.0).unwrap()).unwrap();
        let one = minimize_loop(
            &mm1,
            &MinimizeOptions {
                avoid_origin: true,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((one.action.value - 1.0).abs() < 1e-6);
        assert_eq!(
            minimize_loop(&mm1, &MinimizeOptions { m: 1, ..Default::default() }).unwrap_err(),
            PathError::TooFewSegments { m: 1 }
        );
    }

    #[test]
    fn speed_bound_dominates_fan() {
        let env = example2();
        let c = speed_bound(&env, 1.0).unwrap();
        for k in 0..64 {
            let a = std::f64::consts::TAU * k as f64 / 64.0;
            assert!(env.l2(&[a.cos(), a.sin()]).unwrap() <= c + 1e-9);
        }
    }
}
