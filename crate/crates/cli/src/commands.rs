//! The subcommands. Each returns an [`Output`]; printing and file writing
//! happen in the binary.

use std::fmt::Write as _;

use jnet_core::cluster::{clusterize, count_clusters, kappa, verify_cluster, verify_endpoints};
use jnet_core::montecarlo::{survival_decay, SurvivalOptions};
use jnet_core::pathopt::minimize_loop;
use jnet_core::spectral::estimate_log_rstar_e;
use jnet_core::{
    BallCover, ClusterError, EigenOptions, InitialLaw, LoopMinimum, MinimizeOptions, Network, RateEnv,
    SampledPath,
};
use serde_json::{json, Value};

use crate::config::{RunConfig, StartLaw};
use crate::error::CliError;

pub const SCHEMA: u32 = 1;

/// Per-run overrides from the command line.
#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub tol: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Output {
    pub json: Value,
    pub text: String,
    pub csv: Option<(&'static str, String)>,
    /// Extra artifacts for `--out`: file name and contents.
    pub files: Vec<(&'static str, String)>,
    /// Set when the command ran but a check did not hold.
    pub failure: Option<String>,
}

fn envelope(command: &str, net: &Network, body: Value) -> Value {
    let mut v = json!({
        "schema": SCHEMA,
        "command": command,
        "network": net.spec(),
    });
    if let (Value::Object(dst), Value::Object(src)) = (&mut v, body) {
        dst.extend(src);
    }
    v
}

/// `−x` without producing `-0.0`.
fn neg(x: f64) -> f64 {
    0.0 - x
}

fn eigen_options(cfg: &RunConfig, ov: Overrides) -> EigenOptions {
    EigenOptions {
        tol: ov.tol.unwrap_or(cfg.spectral.tol),
        max_iter: cfg.spectral.max_iter,
    }
}

fn minimize_options(cfg: &RunConfig, ov: Overrides, avoid_origin: bool) -> MinimizeOptions {
    let p = &cfg.pathopt;
    MinimizeOptions {
        avoid_origin,
        m: p.m,
        seed: ov.seed.unwrap_or(p.seed),
        random_seeds: p.random_seeds,
        delta_min: p.delta_min,
        max_sweeps: p.max_sweeps,
    }
}

/// `I*_0`: the closed form for `d <= 2`, otherwise the best loop found by
/// the optimiser, which bounds it from above.
fn istar0(env: &RateEnv, cfg: &RunConfig, ov: Overrides) -> Result<(f64, String, bool), CliError> {
    if env.dim() <= 2 {
        let i = env.closed_form_istar0()?;
        Ok((i.value, format!("{:?}", i.method), true))
    } else {
        let m = minimize_loop(env, &minimize_options(cfg, ov, true))?;
        Ok((m.action.value, "PathoptUpperBound".into(), false))
    }
}

pub fn analyze(cfg: &RunConfig, ov: Overrides) -> Result<Output, CliError> {
    let net = cfg.network()?;
    let env = RateEnv::new(net.clone())?;
    let traffic = env.traffic().clone();
    let istar = env.closed_form_istar()?;
    let (i0, method, exact) = istar0(&env, cfg, ov)?;
    let json = envelope(
        "analyze",
        &net,
        json!({
            "traffic": traffic,
            "interior_drift": env.interior_drift(),
            "istar": istar,
            "istar0": { "value": i0, "method": method, "exact": exact },
            "log_rstar": neg(istar),
            "log_rstar_e": neg(i0),
        }),
    );
    let mut text = String::new();
    writeln!(text, "stations         {}", net.dim()).unwrap();
    writeln!(text, "nu               {:?}", traffic.nu).unwrap();
    writeln!(text, "classification   {}", traffic.classification).unwrap();
    writeln!(text, "I*               {istar:.10}").unwrap();
    writeln!(text, "I*_0             {i0:.10} ({method})").unwrap();
    writeln!(text, "log r*           {:.10}", neg(istar)).unwrap();
    let rel = if exact { "" } else { " (lower bound)" };
    writeln!(text, "log r*_e         {:.10}{rel}", neg(i0)).unwrap();
    Ok(Output {
        json,
        text,
        csv: None,
        files: vec![],
        failure: None,
    })
}

pub fn spectral(cfg: &RunConfig, ov: Overrides) -> Result<Output, CliError> {
    let net = cfg.network()?;
    let s = &cfg.spectral;
    let table = estimate_log_rstar_e(&net, &s.k, &s.n, eigen_options(cfg, ov))?;
    let violations = table.killing_monotonicity_violations(1e-9);
    let json = envelope(
        "spectral",
        &net,
        json!({
            "table": table,
            "killing_monotonicity_violations": violations.len(),
        }),
    );
    let csv = table.to_csv();
    let mut text = csv.clone();
    writeln!(text, "estimate         {:.10}", table.estimate).unwrap();
    if let Some(h) = table.half_box_theta {
        writeln!(text, "half box         {h:.10}").unwrap();
    }
    writeln!(text, "converged in N   {}", table.converged_in_n).unwrap();
    writeln!(text, "all converged    {}", table.all_converged).unwrap();
    let failure = (!violations.is_empty())
        .then(|| format!("{} killing-set monotonicity violations", violations.len()));
    Ok(Output {
        json,
        text,
        csv: Some(("spectral.csv", csv)),
        files: vec![],
        failure,
    })
}

fn loop_json(m: &LoopMinimum) -> Value {
    json!({
        "value": m.action.value,
        "segment_actions": m.action.segments,
        "seed_index": m.seed_index,
        "loop": m.path,
    })
}

pub fn pathopt(cfg: &RunConfig, ov: Overrides) -> Result<Output, CliError> {
    let net = cfg.network()?;
    let env = RateEnv::new(net.clone())?;
    let avoid = cfg.pathopt.avoid_origin;
    let m = minimize_loop(&env, &minimize_options(cfg, ov, avoid))?;
    let reference = match (avoid, env.dim() <= 2) {
        (true, true) => Some(env.closed_form_istar0()?.value),
        (false, _) => Some(env.closed_form_istar()?),
        (true, false) => None,
    };
    let json = envelope(
        "pathopt",
        &net,
        json!({
            "avoid_origin": avoid,
            "m": cfg.pathopt.m,
            "minimum": loop_json(&m),
            "closed_form": reference,
        }),
    );
    let mut text = String::new();
    writeln!(text, "minimum action   {:.10}", m.action.value).unwrap();
    if let Some(r) = reference {
        writeln!(text, "closed form      {r:.10}").unwrap();
        writeln!(text, "difference       {:.3e}", m.action.value - r).unwrap();
    }
    writeln!(text, "loop             {}", serde_json::to_string(&m.path).unwrap()).unwrap();
    Ok(Output {
        json,
        text,
        csv: None,
        files: vec![("loop.json", serde_json::to_string_pretty(&m.path).unwrap() + "\n")],
        failure: None,
    })
}

/// Spiral with `‖φ(t)‖ = N (1 + t/2)`, turning a quarter circle per unit time.
fn demo_path(d: usize, n: f64, horizon: u32) -> Result<SampledPath, ClusterError> {
    SampledPath::from_fn(horizon, |t| {
        let r = n * (1.0 + 0.5 * t);
        let mut x = vec![0.0; d];
        if d == 1 {
            x[0] = r;
        } else {
            let a = std::f64::consts::FRAC_PI_2 * t;
            x[0] = r * a.cos();
            x[1] = r * a.sin();
        }
        x
    })
}

pub fn cluster_demo(cfg: &RunConfig, _ov: Overrides) -> Result<Output, CliError> {
    let net = cfg.network()?;
    let c = &cfg.cluster;
    let d = net.dim();
    let cover = BallCover::grid(d, c.n, c.eps)?;
    let path = demo_path(d, c.n, c.horizon)?;
    let cluster = clusterize(&path, &cover)?;
    let report = verify_cluster(&cluster, &cover);
    let endpoints = verify_endpoints(&cluster, &cover, &path);
    let count = match count_clusters(c.horizon, &cover, true) {
        Err(ClusterError::EnumerationTooLarge { .. }) => count_clusters(c.horizon, &cover, false)?,
        other => other?,
    };
    let triples = cluster.to_json(&cover);
    let json = envelope(
        "cluster-demo",
        &net,
        json!({
            "n": c.n,
            "eps": c.eps,
            "horizon": c.horizon,
            "kappa": kappa(c.horizon),
            "cover_pairs": cover.len(),
            "cluster": triples,
            "invariants": report,
            "endpoint_containment": endpoints,
            "count": count,
            "count_within_bound": count.within_bound(),
        }),
    );
    let mut text = String::new();
    writeln!(text, "cover pairs      {}", cover.len()).unwrap();
    writeln!(text, "segments         {}", cluster.triples.len()).unwrap();
    writeln!(text, "breakpoints      {:?}", cluster.breakpoints()).unwrap();
    writeln!(text, "min length       {}", report.min_length.passed).unwrap();
    writeln!(text, "dyadic grid      {}", report.dyadic_grid.passed).unwrap();
    writeln!(text, "connectivity     {}", report.connectivity.passed).unwrap();
    writeln!(text, "endpoints        {}", endpoints.passed).unwrap();
    match &count.exact {
        Some(e) => writeln!(text, "clusters         {e} (bound {})", count.bound).unwrap(),
        None => writeln!(text, "cluster bound    {}", count.bound).unwrap(),
    }
    let ok = report.all_passed() && endpoints.passed && count.within_bound();
    Ok(Output {
        json,
        text,
        csv: None,
        files: vec![("cluster.json", serde_json::to_string_pretty(&triples).unwrap() + "\n")],
        failure: (!ok).then(|| "cluster invariants failed".to_string()),
    })
}

fn initial_law(cfg: &RunConfig, net: &Network) -> Result<InitialLaw, CliError> {
    let m = &cfg.montecarlo;
    Ok(match m.start {
        StartLaw::QuasiStationary => InitialLaw::quasi_stationary(net, m.kill_radius, m.qsd_box)?,
        StartLaw::Point => InitialLaw::Point(m.x0.clone().expect("checked in config")),
    })
}

fn survival_options(cfg: &RunConfig, ov: Overrides) -> SurvivalOptions {
    let m = &cfg.montecarlo;
    let steps = (m.t_max / m.t_step).floor() as usize;
    SurvivalOptions {
        kill_radius: m.kill_radius,
        t_grid: (1..=steps).map(|i| i as f64 * m.t_step).collect(),
        n_traj: m.n_traj,
        seed: ov.seed.unwrap_or(m.seed),
    }
}

pub fn simulate(cfg: &RunConfig, ov: Overrides) -> Result<Output, CliError> {
    let net = cfg.network()?;
    let env = RateEnv::new(net.clone())?;
    let law = initial_law(cfg, &net)?;
    let opts = survival_options(cfg, ov);
    let est = survival_decay(&net, &law, &opts)?;
    let reference = if net.dim() <= 2 {
        Some(neg(env.closed_form_istar0()?.value))
    } else {
        None
    };
    let json = envelope(
        "simulate",
        &net,
        json!({
            "start": cfg.montecarlo.start,
            "seed": opts.seed,
            "kill_radius": opts.kill_radius,
            "n_traj": opts.n_traj,
            "slope": est.slope,
            "std_error": est.std_error,
            "window": [est.t_grid[est.window.0], est.t_grid[est.window.1]],
            "closed_form_log_rstar_e": reference,
            "z_score": reference.map(|r| est.z_score(r)),
        }),
    );
    let mut text = String::new();
    writeln!(text, "slope            {:.6} ± {:.6}", est.slope, est.std_error).unwrap();
    writeln!(
        text,
        "fit window       [{:.4}, {:.4}]",
        est.t_grid[est.window.0], est.t_grid[est.window.1]
    )
    .unwrap();
    if let Some(r) = reference {
        writeln!(text, "closed form      {r:.6} (z = {:.2})", est.z_score(r)).unwrap();
    }
    Ok(Output {
        json,
        text,
        csv: Some(("survival.csv", est.to_csv())),
        files: vec![],
        failure: None,
    })
}

struct Check {
    oracle: &'static str,
    value: f64,
    tolerance: f64,
    pass: bool,
}

fn row_json(quantity: &str, reference: (&str, f64), estimates: &[(&'static str, Option<f64>)], checks: &[Check]) -> Value {
    let present: Vec<(&str, f64)> = estimates.iter().filter_map(|&(n, v)| v.map(|v| (n, v))).collect();
    let mut pairwise = Vec::new();
    for (i, &(a, va)) in present.iter().enumerate() {
        for &(b, vb) in &present[i + 1..] {
            let scale = va.abs().max(vb.abs());
            let rel = if scale == 0.0 { 0.0 } else { (va - vb).abs() / scale };
            pairwise.push(json!({ "a": a, "b": b, "rel_diff": rel }));
        }
    }
    json!({
        "quantity": quantity,
        "reference": { "oracle": reference.0, "value": reference.1 },
        "estimates": estimates.iter().map(|(n, v)| (n.to_string(), json!(v))).collect::<serde_json::Map<_, _>>(),
        "checks": checks.iter().map(|c| json!({
            "oracle": c.oracle,
            "value": c.value,
            "tolerance": c.tolerance,
            "pass": c.pass,
        })).collect::<Vec<_>>(),
        "pairwise": pairwise,
    })
}

/// Closed forms, path optimisation, the spectral oracle and simulation side
/// by side, for `log r*` and `log r*_e`.
pub fn crosscheck(cfg: &RunConfig, ov: Overrides) -> Result<Output, CliError> {
    let net = cfg.network()?;
    let env = RateEnv::new(net.clone())?;
    let x = &cfg.crosscheck;
    let d = net.dim();

    let closed_r = neg(env.closed_form_istar()?);
    let closed_e = if d <= 2 {
        Some(neg(env.closed_form_istar0()?.value))
    } else {
        None
    };
    let path_r = neg(minimize_loop(&env, &minimize_options(cfg, ov, false))?.action.value);
    let path_e = neg(minimize_loop(&env, &minimize_options(cfg, ov, true))?.action.value);
    let table = estimate_log_rstar_e(&net, &[-1, x.k], &[x.n], eigen_options(cfg, ov))?;
    let theta = |k: i64| table.rows.iter().find(|r| r.kill_radius == k && r.n_box == x.n).unwrap().theta;
    let (spec_r, spec_e) = (theta(-1), theta(x.k));
    let law = initial_law(cfg, &net)?;
    let mc = survival_decay(&net, &law, &survival_options(cfg, ov))?;

    let spectral_tol = |r: f64| (x.spectral_rel * r.abs()).max(x.spectral_abs);
    let mut rows = Vec::new();
    let mut text = String::new();
    let mut all_pass = true;
    writeln!(
        text,
        "{:<12} {:>13} {:>13} {:>13} {:>13}  pass",
        "quantity", "closed_form", "pathopt", "spectral", "montecarlo"
    )
    .unwrap();
    for (quantity, closed, path, spec, mc_est) in [
        ("log_rstar", Some(closed_r), path_r, spec_r, None),
        ("log_rstar_e", closed_e, path_e, spec_e, Some((mc.slope, mc.std_error))),
    ] {
        let reference = match closed {
            Some(c) => ("closed_form", c),
            None => ("spectral", spec),
        };
        let r = reference.1;
        let mut checks = Vec::new();
        if closed.is_some() {
            let tol = spectral_tol(r);
            checks.push(Check {
                oracle: "spectral",
                value: spec,
                tolerance: tol,
                pass: (spec - r).abs() <= tol,
            });
            checks.push(Check {
                oracle: "pathopt",
                value: path,
                tolerance: x.pathopt_abs,
                pass: (path - r).abs() <= x.pathopt_abs,
            });
        } else {
            // The optimiser only bounds I*_0 from above.
            let tol = spectral_tol(r);
            checks.push(Check {
                oracle: "pathopt",
                value: path,
                tolerance: tol,
                pass: path <= r + tol,
            });
        }
        if let Some((slope, se)) = mc_est {
            let tol = x.mc_sigmas * se;
            checks.push(Check {
                oracle: "montecarlo",
                value: slope,
                tolerance: tol,
                pass: (slope - r).abs() <= tol,
            });
        }
        let pass = checks.iter().all(|c| c.pass);
        all_pass &= pass;
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6}"));
        writeln!(
            text,
            "{quantity:<12} {:>13} {:>13} {:>13} {:>13}  {}",
            cell(closed),
            cell(Some(path)),
            cell(Some(spec)),
            cell(mc_est.map(|m| m.0)),
            if pass { "PASS" } else { "FAIL" }
        )
        .unwrap();
        let estimates = [
            ("closed_form", closed),
            ("pathopt", Some(path)),
            ("spectral", Some(spec)),
            ("montecarlo", mc_est.map(|m| m.0)),
        ];
        rows.push(row_json(quantity, reference, &estimates, &checks));
    }
    let json = envelope(
        "crosscheck",
        &net,
        json!({
            "tolerances": x,
            "montecarlo_std_error": mc.std_error,
            "spectral_box": x.n,
            "spectral_k": x.k,
            "rows": rows,
            "pass": all_pass,
        }),
    );
    Ok(Output {
        json,
        text,
        csv: None,
        files: vec![],
        failure: (!all_pass).then(|| "estimates disagree beyond tolerance".to_string()),
    })
}
