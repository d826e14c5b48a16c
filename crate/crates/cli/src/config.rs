//! TOML run configuration: the network plus optional per-command tables.
//!
//! ```toml
//! d = 2
//! lambda = [1.0, 1.0]
//! mu = [4.0, 5.0]
//! routing = [[0.0, 0.2], [0.2, 0.0]]
//!
//! [spectral]
//! k = [-1, 2]
//! n = [60, 120]
//!
//! [montecarlo]
//! n_traj = 100000
//! t_max = 20.0
//! ```

use std::path::Path;

use jnet_core::spectral::MAX_STATES;
use jnet_core::{Network, NetworkSpec};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub d: usize,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub routing: Vec<Vec<f64>>,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub pathopt: PathoptConfig,
    #[serde(default)]
    pub cluster: ClusterConfig,
    #[serde(default)]
    pub montecarlo: MonteCarloConfig,
    #[serde(default)]
    pub crosscheck: CrosscheckConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    /// Killing radii, strictly increasing, `>= -1`.
    pub k: Vec<i64>,
    /// Box sizes, strictly increasing.
    pub n: Vec<usize>,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            k: vec![-1, 0, 2],
            n: vec![30, 60],
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathoptConfig {
    pub avoid_origin: bool,
    pub m: usize,
    pub random_seeds: usize,
    pub delta_min: Option<f64>,
    pub max_sweeps: usize,
    pub seed: u64,
}

impl Default for PathoptConfig {
    fn default() -> Self {
        Self {
            avoid_origin: true,
            m: 8,
            random_seeds: 8,
            delta_min: None,
            max_sweeps: 60,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    pub n: f64,
    pub eps: f64,
    pub horizon: u32,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            n: 1.0,
            eps: 1.0,
            horizon: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartLaw {
    QuasiStationary,
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub n_traj: usize,
    pub t_max: f64,
    pub t_step: f64,
    pub kill_radius: i64,
    pub start: StartLaw,
    /// Box of the truncated generator whose quasi-stationary law starts the paths.
    pub qsd_box: usize,
    /// Starting state for `start = "point"`.
    pub x0: Option<Vec<i64>>,
    pub seed: u64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            n_traj: 100_000,
            t_max: 20.0,
            t_step: 0.05,
            kill_radius: 0,
            start: StartLaw::QuasiStationary,
            qsd_box: 60,
            x0: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrosscheckConfig {
    /// Relative tolerance of the spectral estimate.
    pub spectral_rel: f64,
    /// Absolute floor for the spectral comparison, used when the reference is near zero.
    pub spectral_abs: f64,
    pub mc_sigmas: f64,
    pub pathopt_abs: f64,
    /// Box for the spectral estimates.
    pub n: usize,
    /// Killing radius for the essential estimates.
    pub k: i64,
}

impl Default for CrosscheckConfig {
    fn default() -> Self {
        Self {
            spectral_rel: 0.05,
            spectral_abs: 0.02,
            mc_sigmas: 3.0,
            pathopt_abs: 1e-3,
            n: 120,
            k: 2,
        }
    }
}

fn bad(key: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("key `{key}`: {msg}"))
}

fn increasing<T: PartialOrd>(xs: &[T]) -> bool {
    !xs.is_empty() && xs.windows(2).all(|w| w[0] < w[1])
}

fn box_states(d: usize, n: usize) -> f64 {
    (n as f64 + 1.0).powi(d as i32)
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Parses and checks every numeric parameter.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), CliError> {
        let d = self.d;
        let s = &self.spectral;
        if !increasing(&s.k) || s.k[0] < -1 {
            return Err(bad("spectral.k", "must be strictly increasing and >= -1"));
        }
        if !increasing(&s.n) {
            return Err(bad("spectral.n", "must be strictly increasing"));
        }
        let (k_max, n_max) = (*s.k.last().unwrap(), *s.n.last().unwrap());
        if n_max as i64 <= k_max {
            return Err(bad("spectral.n", format!("largest box {n_max} must exceed largest k {k_max}")));
        }
        if d > 0 && box_states(d, n_max) > MAX_STATES as f64 {
            return Err(bad("spectral.n", format!("Box({n_max}) in d = {d} exceeds {MAX_STATES} states")));
        }
        if !(s.tol > 0.0 && s.tol < 1.0) {
            return Err(bad("spectral.tol", "must lie in (0, 1)"));
        }
        if s.max_iter == 0 {
            return Err(bad("spectral.max_iter", "must be positive"));
        }

        let p = &self.pathopt;
        if p.m < 2 {
            return Err(bad("pathopt.m", "at least 2 segments"));
        }
        if let Some(dm) = p.delta_min {
            if !(dm > 0.0 && dm.is_finite()) {
                return Err(bad("pathopt.delta_min", "must be positive"));
            }
        }
        if p.max_sweeps == 0 {
            return Err(bad("pathopt.max_sweeps", "must be positive"));
        }

        let c = &self.cluster;
        if !(c.n >= 1.0 && c.n.is_finite()) {
            return Err(bad("cluster.n", "must be >= 1"));
        }
        if !(c.eps > 0.0 && c.eps <= 2.0 * c.n) {
            return Err(bad("cluster.eps", "must lie in (0, 2N]"));
        }
        if c.horizon == 0 {
            return Err(bad("cluster.horizon", "must be >= 1"));
        }

        let m = &self.montecarlo;
        if m.n_traj < jnet_core::montecarlo::MIN_TRAJECTORIES {
            return Err(bad(
                "montecarlo.n_traj",
                format!("at least {}", jnet_core::montecarlo::MIN_TRAJECTORIES),
            ));
        }
        if !(m.t_step > 0.0 && m.t_max > m.t_step && m.t_max.is_finite()) {
            return Err(bad("montecarlo.t_max", "need 0 < t_step < t_max"));
        }
        if m.kill_radius < 0 {
            return Err(bad("montecarlo.kill_radius", "must be >= 0"));
        }
        match m.start {
            StartLaw::QuasiStationary => {
                if m.qsd_box as i64 <= m.kill_radius {
                    return Err(bad("montecarlo.qsd_box", "must exceed kill_radius"));
                }
                if d > 0 && box_states(d, m.qsd_box) > MAX_STATES as f64 {
                    return Err(bad("montecarlo.qsd_box", "too many states"));
                }
            }
            StartLaw::Point => {
                let x0 = m.x0.as_ref().ok_or_else(|| bad("montecarlo.x0", "required when start = \"point\""))?;
                if x0.len() != d {
                    return Err(bad("montecarlo.x0", format!("expected {d} entries, found {}", x0.len())));
                }
                if x0.iter().any(|&x| x < 0) {
                    return Err(bad("montecarlo.x0", "coordinates must be >= 0"));
                }
                if x0.iter().sum::<i64>() <= m.kill_radius {
                    return Err(bad("montecarlo.x0", "starts inside the killing set"));
                }
            }
        }

        let x = &self.crosscheck;
        for (key, v) in [
            ("crosscheck.spectral_rel", x.spectral_rel),
            ("crosscheck.spectral_abs", x.spectral_abs),
            ("crosscheck.mc_sigmas", x.mc_sigmas),
            ("crosscheck.pathopt_abs", x.pathopt_abs),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(key, "must be a finite nonnegative number"));
            }
        }
        if x.k < 0 || x.n as i64 <= x.k {
            return Err(bad("crosscheck.k", "need 0 <= k < n"));
        }
        if d > 0 && box_states(d, x.n) > MAX_STATES as f64 {
            return Err(bad("crosscheck.n", "too many states"));
        }
        Ok(())
    }

    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec {
            d: self.d,
            lambda: self.lambda.clone(),
            mu: self.mu.clone(),
            routing: self.routing.clone(),
        }
    }

    pub fn network(&self) -> Result<Network, CliError> {
        Ok(self.network_spec().validate()?)
    }
}
