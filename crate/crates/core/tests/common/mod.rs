//! Fixtures and property suites shared by the integration tests and the
//! acceptance binary.
#![allow(dead_code)]

use jnet_core::cluster::{clusterize, count_clusters, verify_cluster, verify_endpoints};
use jnet_core::pathopt::{action, speed_bound};
use jnet_core::{BallCover, FaceSet, Network, NetworkSpec, PlPath, RateEnv, SampledPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXAMPLE2_ISTAR0: f64 = 0.746749483200404;

pub fn example2() -> Network {
    NetworkSpec::new(
        vec![1.0, 1.0],
        vec![4.0, 5.0],
        vec![vec![0.0, 0.2], vec![0.2, 0.0]],
    )
    .validate()
    .unwrap()
}

/// Two stations with `ν_1 = 10/3 > μ_1 = 2`.
pub fn non_ergodic() -> Network {
    NetworkSpec::new(
        vec![3.0, 1.0],
        vec![2.0, 5.0],
        vec![vec![0.0, 0.2], vec![0.2, 0.0]],
    )
    .validate()
    .unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random valid network: routing rows sum to at most 0.9, so the routing
/// radius is below one and every station has external arrivals.
pub fn random_network(rng: &mut ChaCha8Rng, d: usize) -> Network {
    let lambda: Vec<f64> = (0..d).map(|_| rng.random_range(0.2..2.0)).collect();
    let mu: Vec<f64> = (0..d).map(|_| rng.random_range(0.5..6.0)).collect();
    let routing = (0..d)
        .map(|i| {
            let mut row: Vec<f64> = (0..d)
                .map(|j| {
                    if i != j && rng.random_bool(0.6) {
                        rng.random_range(0.0..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                let target = rng.random_range(0.0..0.9);
                row.iter_mut().for_each(|p| *p *= target / s);
            }
            row
        })
        .collect();
    NetworkSpec::new(lambda, mu, routing).validate().unwrap()
}

/// Named networks for the rate-function and action suites.
pub fn suite_networks(seed: u64, max_d: usize) -> Vec<(String, Network)> {
    let mut out = vec![
        ("mm1(1,4)".to_string(), Network::mm1(1.0, 4.0).unwrap()),
        ("mm1(4,1)".to_string(), Network::mm1(4.0, 1.0).unwrap()),
        ("example2".to_string(), example2()),
        ("non_ergodic".to_string(), non_ergodic()),
    ];
    let mut r = rng(seed);
    for k in 0..4 {
        let d = 1 + (k % max_d);
        out.push((format!("random#{k}(d={d})"), random_network(&mut r, d)));
    }
    out
}

/// Counts checks and keeps the first few failures.
#[derive(Debug, Default)]
pub struct Tally {
    pub checks: usize,
    pub failed: usize,
    pub messages: Vec<String>,
}

impl Tally {
    pub fn check(&mut self, ok: bool, msg: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok {
            self.failed += 1;
            if self.messages.len() < 10 {
                self.messages.push(msg());
            }
        }
    }

    pub fn passed(&self) -> bool {
        self.failed == 0 && self.checks > 0
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} checks, {} failures", self.checks, self.failed);
        for m in &self.messages {
            s.push_str("\n    ");
            s.push_str(m);
        }
        s
    }

    pub fn merge(&mut self, other: Tally) {
        self.checks += other.checks;
        self.failed += other.failed;
        let room = 10usize.saturating_sub(self.messages.len());
        self.messages.extend(other.messages.into_iter().take(room));
    }
}

fn all_faces(d: usize) -> Vec<FaceSet> {
    (0..1u32 << d)
        .map(|m| FaceSet::from_stations(&(0..d).filter(|i| m >> i & 1 == 1).collect::<Vec<_>>()))
        .collect()
}

fn rel_tol(x: f64, tol: f64) -> f64 {
    tol * (1.0 + x.abs())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distance by which `α` violates the `B_Λ` constraints, zero inside.
fn b_violation(env: &RateEnv, face: FaceSet, alpha: &[f64]) -> f64 {
    let net = env.network();
    let d = env.dim();
    (0..d)
        .filter(|&i| !face.contains(i))
        .map(|i| {
            let inner: f64 = (0..d).map(|j| net.routing()[i][j] * alpha[j].exp()).sum::<f64>() + net.exit()[i];
            (alpha[i] - inner.ln()).max(0.0)
        })
        .fold(0.0, f64::max)
}

/// Zero at the origin, the `l1 <= L_Λ <= l2` sandwich, face monotonicity,
/// midpoint convexity, the constrained representation, superlinear growth
/// and (for `d <= 2`) biconjugacy of `R` and `l2` on a grid.
pub fn rate_function_suite(seed: u64) -> Tally {
    let mut t = Tally::default();
    let mut r = rng(seed ^ 0x5eed);
    for (name, net) in suite_networks(seed, 3) {
        let env = RateEnv::new(net).unwrap();
        let d = env.dim();
        let faces = all_faces(d);
        let zero = vec![0.0; d];
        t.check(env.r(&zero).unwrap().abs() <= 1e-12, || format!("{name}: R(0) != 0"));
        for &f in &faces {
            let v = env.r_face(f, &zero).unwrap();
            t.check(v.abs() <= 1e-12, || format!("{name}: R_{f:?}(0) = {v}"));
        }

        let samples: Vec<Vec<f64>> = (0..100)
            .map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect())
            .collect();
        for v in &samples {
            let lr: Vec<_> = faces.iter().map(|&f| env.local_rate(f, v).unwrap()).collect();
            let l1 = env.l1(v).unwrap();
            let l2 = env.l2(v).unwrap();
            for (fi, &f) in faces.iter().enumerate() {
                let l = lr[fi].value;
                t.check(l.is_finite() && l >= 0.0, || format!("{name}: L_{f:?}({v:?}) = {l}"));
                t.check(l1 <= l + rel_tol(l, 1e-9) && l <= l2 + rel_tol(l2, 1e-9), || {
                    format!("{name}: ordering at {v:?}, face {f:?}: {l1} <= {l} <= {l2}")
                });
                for (gi, &g) in faces.iter().enumerate() {
                    if f.is_subset_of(g) {
                        let lg = lr[gi].value;
                        t.check(l <= lg + rel_tol(lg, 1e-9), || {
                            format!("{name}: face monotonicity {f:?} ⊆ {g:?} at {v:?}: {l} > {lg}")
                        });
                    }
                }
            }
        }

        // Constrained form for velocities tangent to the face: the maximiser
        // lies in B_Λ and ⟨α,v⟩ − R(α) reproduces the value there.
        for &f in &faces {
            for _ in 0..25 {
                let v: Vec<f64> = (0..d)
                    .map(|i| if f.contains(i) { r.random_range(-3.0..3.0) } else { 0.0 })
                    .collect();
                let lr = env.local_rate(f, &v).unwrap();
                let a = &lr.alpha;
                let gap = b_violation(&env, f, a);
                t.check(gap <= 1e-7, || {
                    format!("{name}: maximiser {a:?} of L_{f:?}({v:?}) outside B by {gap}")
                });
                let constrained = dot(a, &v) - env.r(a).unwrap();
                t.check((constrained - lr.value).abs() <= rel_tol(lr.value, 1e-7), || {
                    format!("{name}: constrained form {constrained} vs {} at {v:?}, face {f:?}", lr.value)
                });
            }
        }

        // Midpoint convexity on random pairs.
        for _ in 0..100 {
            let u: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let w: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
            let m: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 0.5 * (a + b)).collect();
            for &f in &faces {
                let (lu, lw, lm) = (
                    env.local_rate(f, &u).unwrap().value,
                    env.local_rate(f, &w).unwrap().value,
                    env.local_rate(f, &m).unwrap().value,
                );
                t.check(lm <= 0.5 * (lu + lw) + 1e-6, || {
                    format!("{name}: midpoint convexity fails on {f:?}: {lm} > ({lu} + {lw})/2")
                });
            }
        }

        // Superlinearity on rays.
        let dirs: Vec<Vec<f64>> = if d == 1 {
            vec![vec![1.0], vec![-1.0]]
        } else {
            (0..16)
                .map(|_| {
                    let u: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
                    let n = dot(&u, &u).sqrt();
                    u.into_iter().map(|x| x / n).collect()
                })
                .collect()
        };
        let ray_min = |n: f64| {
            dirs.iter()
                .map(|u| env.l1(&u.iter().map(|x| n * x).collect::<Vec<_>>()).unwrap() / n)
                .fold(f64::INFINITY, f64::min)
        };
        let (m10, m100) = (ray_min(10.0), ray_min(100.0));
        t.check(m10 > 0.0 && m100 >= m10, || {
            format!("{name}: l1(v)/|v| on rays: {m10} at 10, {m100} at 100")
        });

        if d <= 2 {
            biconjugacy(&name, &env, &mut r, &mut t);
        }
    }
    t
}

/// `R(α) = sup_v ⟨α,v⟩ − l2(v)`: the grid sup never exceeds `R(α)`, comes
/// within the grid resolution of it, and the sup is attained at `∇R(α)`.
fn biconjugacy(name: &str, env: &RateEnv, r: &mut ChaCha8Rng, t: &mut Tally) {
    let d = env.dim();
    let h = 0.1;
    let span: f64 = 12.0;
    let ticks: Vec<f64> = (0..=(2.0 * span / h).round() as usize).map(|k| -span + k as f64 * h).collect();
    let grid: Vec<Vec<f64>> = if d == 1 {
        ticks.iter().map(|&a| vec![a]).collect()
    } else {
        ticks.iter().flat_map(|&a| ticks.iter().map(move |&b| vec![a, b])).collect()
    };
    let l2: Vec<f64> = grid.iter().map(|v| env.l2(v).unwrap()).collect();
    for _ in 0..10 {
        let alpha: Vec<f64> = (0..d).map(|_| r.random_range(-0.5..0.5)).collect();
        let ra = env.r(&alpha).unwrap();
        let sup = grid
            .iter()
            .zip(&l2)
            .map(|(v, l)| dot(&alpha, v) - l)
            .fold(f64::NEG_INFINITY, f64::max);
        // Some grid point lies within h√d/2 of the maximiser ∇R(α). The
        // Hessian of R dominates diag(λ_i e^{α_i}), so the curvature of l2
        // there is at most e^{1/2}/λ_min and the gap below h² d e^{1/2}/(8 λ_min).
        let lambda_min = env.network().lambda().iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let resolution = h * h * d as f64 * 0.5f64.exp() / (8.0 * lambda_min);
        t.check(sup <= ra + 1e-9 && sup >= ra - resolution, || {
            format!("{name}: grid sup {sup} vs R({alpha:?}) = {ra} (resolution {resolution})")
        });
        let grad: Vec<f64> = (0..d)
            .map(|i| {
                let e = 1e-6;
                let mut p = alpha.clone();
                let mut m = alpha.clone();
                p[i] += e;
                m[i] -= e;
                (env.r(&p).unwrap() - env.r(&m).unwrap()) / (2.0 * e)
            })
            .collect();
        let at = dot(&alpha, &grad) - env.l2(&grad).unwrap();
        t.check((at - ra).abs() <= 1e-7, || {
            format!("{name}: ⟨α,∇R⟩ − l2(∇R) = {at} vs R = {ra} at {alpha:?}")
        });
    }
}

/// Random piecewise-linear loop on `[0, T]`; coordinates are zero with
/// probability 0.3 so faces vary.
pub fn random_loop(r: &mut ChaCha8Rng, d: usize, anchored: bool) -> PlPath {
    let m = r.random_range(2..=6);
    let horizon = r.random_range(0.5..4.0);
    let mut times: Vec<f64> = (0..m - 1).map(|_| r.random_range(0.0..horizon)).collect();
    times.sort_by(f64::total_cmp);
    times.insert(0, 0.0);
    times.push(horizon);
    times.dedup();
    let point = |r: &mut ChaCha8Rng| -> Vec<f64> {
        (0..d)
            .map(|_| if r.random_bool(0.3) { 0.0 } else { r.random_range(0.0..3.0) })
            .collect()
    };
    let first = if anchored { vec![0.0; d] } else { point(r) };
    let mut vertices = vec![first.clone()];
    for _ in 1..times.len() - 1 {
        vertices.push(point(r));
    }
    vertices.push(first);
    PlPath::new(times, vertices).unwrap()
}

/// Scaling and concatenation identities on random loops, the lower bounds
/// `T L_∅(0)` and `I*_0 |{φ ≠ 0}|` on origin-anchored loops, and the
/// speed bound for straight segments.
pub fn action_suite(seed: u64, loops: usize) -> Tally {
    let mut t = Tally::default();
    let mut r = rng(seed);
    let nets = [
        ("mm1(1,4)", Network::mm1(1.0, 4.0).unwrap()),
        ("mm1(4,1)", Network::mm1(4.0, 1.0).unwrap()),
        ("example2", example2()),
        ("non_ergodic", non_ergodic()),
    ];
    let envs: Vec<(&str, RateEnv)> = nets.into_iter().map(|(n, net)| (n, RateEnv::new(net).unwrap())).collect();
    for k in 0..loops {
        let (name, env) = &envs[k % envs.len()];
        let d = env.dim();

        let path = random_loop(&mut r, d, false);
        let horizon = path.end();
        let full = action(env, &path).unwrap().value;
        let scaled = horizon * action(env, &path.rescale(horizon)).unwrap().value;
        t.check((full - scaled).abs() <= rel_tol(full, 1e-12), || {
            format!("{name}: scaling {full} vs {scaled} (T = {horizon})")
        });
        for cut in [r.random_range(0.0..horizon), path.times()[1]] {
            if !(cut > 0.0 && cut < horizon) {
                continue;
            }
            let (a, b) = path.split_at(cut).unwrap();
            let sum = action(env, &a).unwrap().value + action(env, &b).unwrap().value;
            t.check((full - sum).abs() <= rel_tol(full, 1e-12), || {
                format!("{name}: additivity at {cut}: {full} vs {sum}")
            });
        }

        let anchored = random_loop(&mut r, d, true);
        let a = action(env, &anchored).unwrap().value;
        let l0 = env.closed_form_istar().unwrap();
        let i0 = env.closed_form_istar0().unwrap().value;
        let lower1 = anchored.end() * l0;
        let lower2 = i0 * anchored.time_away_from_origin();
        t.check(a >= lower1 - rel_tol(lower1, 1e-9), || {
            format!("{name}: action {a} below T·L_∅(0) = {lower1}")
        });
        t.check(a >= lower2 - rel_tol(lower2, 1e-9), || {
            format!("{name}: action {a} below I*_0·|{{φ≠0}}| = {lower2}")
        });
    }

    // Straight segments with |v| <= 1 cost at most C per unit time.
    for (name, env) in &envs {
        let d = env.dim();
        let c_bound = speed_bound(env, 1.0).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..d).map(|_| r.random_range(0.0..2.0) + 1.0).collect();
            let mut v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
            let n = dot(&v, &v).sqrt().max(1.0);
            v.iter_mut().for_each(|c| *c /= n);
            let dt = r.random_range(0.1..1.0);
            let y: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + dt * b).collect();
            let seg = PlPath::new(vec![0.0, dt], vec![x, y]).unwrap();
            let rate = action(env, &seg).unwrap().value / dt;
            t.check(rate <= c_bound + rel_tol(c_bound, 1e-9), || {
                format!("{name}: segment rate {rate} exceeds C = {c_bound}")
            });
        }
    }
    t
}

/// Random path with `N <= |φ(t)| <= 2TN`: radius `N (1 + a |sin(ωt + p)|)`
/// and a wandering direction.
pub fn random_far_path(r: &mut ChaCha8Rng, d: usize, n: f64, horizon: u32) -> SampledPath {
    let a = r.random_range(0.0..=(2.0 * horizon as f64 - 1.0));
    let w = r.random_range(0.1..4.0);
    let p = r.random_range(0.0..std::f64::consts::TAU);
    let sign = if r.random_bool(0.5) { 1.0 } else { -1.0 };
    let th0 = r.random_range(0.0..std::f64::consts::TAU);
    let th1 = r.random_range(-2.0..2.0);
    let th2 = r.random_range(0.0..3.0);
    SampledPath::from_fn(horizon, move |s| {
        let rad = n * (1.0 + a * (w * s + p).sin().abs());
        if d == 1 {
            vec![sign * rad]
        } else {
            let th = th0 + th1 * s + (th2 * s).sin();
            vec![rad * th.cos(), rad * th.sin()]
        }
    })
    .unwrap()
}

/// `paths` random far paths through `clusterize`, checking termination,
/// every invariant, endpoint containment and determinism; then the
/// probe-grid coverage check for 20 random `(N, ε)` and the exhaustive
/// count against `(2|V|)^{2T}` for `T ∈ {1, 2}`.
pub fn cluster_suite(seed: u64, paths: usize) -> Tally {
    let mut t = Tally::default();
    let mut r = rng(seed);
    let covers = [
        BallCover::grid(1, 1.0, 0.5).unwrap(),
        BallCover::grid(1, 2.0, 1.0).unwrap(),
        BallCover::grid(2, 1.0, 0.5).unwrap(),
        BallCover::grid(2, 2.0, 1.5).unwrap(),
    ];
    for k in 0..paths {
        let cover = &covers[k % covers.len()];
        let horizon = r.random_range(1..=9);
        let path = random_far_path(&mut r, cover.dim(), cover.n(), horizon);
        match clusterize(&path, cover) {
            Ok(c) => {
                let report = verify_cluster(&c, cover);
                t.check(report.all_passed(), || format!("path {k}: {report:?}"));
                let ends = verify_endpoints(&c, cover, &path);
                t.check(ends.passed, || format!("path {k}: endpoint containment {ends:?}"));
                let again = clusterize(&path, cover).unwrap();
                t.check(again == c, || format!("path {k}: clusterize not deterministic"));
            }
            Err(e) => t.check(false, || format!("path {k}: clusterize failed: {e}")),
        }
    }

    for _ in 0..20 {
        let d = r.random_range(1..=2);
        let n = r.random_range(1.0..2.5);
        let eps = r.random_range(0.3..1.0) * n;
        let cover = BallCover::grid(d, n, eps).unwrap();
        let hole = cover.check_coverage().unwrap();
        t.check(hole.is_none(), || format!("grid cover d={d} N={n} ε={eps} misses {hole:?}"));
    }

    let two_pair = BallCover::from_pairs(
        1.0,
        1.0,
        vec![(vec![1.0], vec![1.0], 1.0), (vec![-1.0], vec![-1.0], 1.0)],
    )
    .unwrap();
    for cover in [&two_pair, &covers[0], &covers[2]] {
        for horizon in [1, 2] {
            let count = count_clusters(horizon, cover, true).unwrap();
            t.check(count.within_bound(), || format!("T={horizon}: {count:?} exceeds bound"));
        }
    }
    t
}
