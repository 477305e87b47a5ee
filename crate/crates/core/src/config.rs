//! Run configuration.
//!
//! The format is flat `key = value` text, one entry per line, with dotted
//! sections and `#` comments:
//!
//! ```text
//! task = figure1
//! model.mu = 0.25
//! model.sigma = 0.3
//! model.r = 0.02
//! sweep.values = 0.05, 0.15, 0.25
//! numerics.dt = 1e-3
//! ```
//!
//! Any key may be overridden from the environment as `CREDITLINE_` followed
//! by the key in upper case with dots replaced by underscores, for example
//! `CREDITLINE_MODEL_MU=0.3`.
//!
//! | key | meaning | default |
//! |-----|---------|---------|
//! | `task` | one of the [`Task`] names | required |
//! | `model.mu`, `model.sigma`, `model.r` | drift, volatility, rate | task default |
//! | `model.lambda` | slope of a linear spread | task default |
//! | `model.alpha_table` | convex spread knots `l:rate, ...` | unset |
//! | `model.beta_max`, `model.beta_prime0` | exponential productivity | unset |
//! | `model.beta_table` | concave productivity knots `k:beta, ...` | unset |
//! | `model.gamma` | proportional investment cost | 0 |
//! | `sweep.values` | comma list for figure sweeps | per figure |
//! | `numerics.root_tol` | bisection tolerance | 1e-13 |
//! | `numerics.ode_tol` | integrator rtol and atol | 1e-10 |
//! | `numerics.series_order` | Frobenius truncation | 40 |
//! | `numerics.grid_n` | nodes per axis of the 2D grid | 256 |
//! | `numerics.x_extent`, `numerics.k_extent` | 2D domain | from the model |
//! | `numerics.hjb_tol`, `numerics.hjb_max_iter` | policy iteration | 1e-9, 200 |
//! | `numerics.dt`, `numerics.n_paths`, `numerics.horizon` | Monte Carlo | 1e-3, 1e5, 20/r |
//! | `numerics.seed`, `numerics.antithetic` | Monte Carlo | 20240917, true |
//! | `numerics.mc_paths_2d`, `numerics.dt_2d` | 2D Monte Carlo check | 200, 2e-2 |
//! | `output.points` | rows of dense value tables | 401 |
//! | `output.dir` | artifact directory | `out` |

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::model::{ModelParams, ProductivitySpec, SpreadSpec};

pub const ENV_PREFIX: &str = "CREDITLINE_";

const KEYS: &[&str] = &[
    "task",
    "model.mu",
    "model.sigma",
    "model.r",
    "model.lambda",
    "model.alpha_table",
    "model.beta_max",
    "model.beta_prime0",
    "model.beta_table",
    "model.gamma",
    "sweep.values",
    "numerics.root_tol",
    "numerics.ode_tol",
    "numerics.series_order",
    "numerics.grid_n",
    "numerics.x_extent",
    "numerics.k_extent",
    "numerics.hjb_tol",
    "numerics.hjb_max_iter",
    "numerics.dt",
    "numerics.n_paths",
    "numerics.horizon",
    "numerics.seed",
    "numerics.antithetic",
    "numerics.mc_paths_2d",
    "numerics.dt_2d",
    "output.points",
    "output.dir",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub message: String,
}

impl ConfigError {
    fn at(key: &str, message: impl Into<String>) -> Self {
        ConfigError { key: Some(key.to_string()), message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.key {
            Some(k) => write!(f, "config key `{k}`: {}", self.message),
            None => write!(f, "config: {}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    Solve1d,
    SolveGamma0,
    SolveHjb2d,
    Validate,
    Figure1,
    Figure2,
    Figure3,
    Figure4,
    Figure5,
    Figure6,
}

impl Task {
    pub const ALL: [Task; 10] = [
        Task::Solve1d,
        Task::SolveGamma0,
        Task::SolveHjb2d,
        Task::Validate,
        Task::Figure1,
        Task::Figure2,
        Task::Figure3,
        Task::Figure4,
        Task::Figure5,
        Task::Figure6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Task::Solve1d => "solve1d",
            Task::SolveGamma0 => "solve_gamma0",
            Task::SolveHjb2d => "solve_hjb2d",
            Task::Validate => "validate",
            Task::Figure1 => "figure1",
            Task::Figure2 => "figure2",
            Task::Figure3 => "figure3",
            Task::Figure4 => "figure4",
            Task::Figure5 => "figure5",
            Task::Figure6 => "figure6",
        }
    }
}

impl FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Task::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| {
            let names: Vec<_> = Task::ALL.iter().map(|t| t.name()).collect();
            format!("unknown task `{s}`, expected one of {}", names.join(", "))
        })
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw entries after parsing and environment overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = match line.find('#') {
                Some(i) => &line[..i],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(ConfigError { key: None, message: format!("line {}: expected `key = value`", n + 1) });
            };
            let key = k.trim();
            if !KEYS.contains(&key) {
                return Err(ConfigError::at(key, "unknown key"));
            }
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(ConfigError::at(key, "given twice"));
            }
        }
        Ok(RawConfig { entries })
    }

    /// Applies `CREDITLINE_*` overrides from `vars`.
    pub fn override_from<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        for (name, value) in vars {
            let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = KEYS
                .iter()
                .find(|k| k.to_uppercase().replace('.', "_") == rest)
                .ok_or_else(|| ConfigError::at(&name, "environment override names no config key"))?;
            self.entries.insert(key.to_string(), value);
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|_| ConfigError::at(key, format!("cannot parse `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| ConfigError::at(key, format!("bad number `{}`", s.trim())))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }

    fn knots(&self, key: &str) -> Result<Option<Vec<(f64, f64)>>, ConfigError> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|pair| {
                    let (a, b) = pair
                        .split_once(':')
                        .ok_or_else(|| ConfigError::at(key, format!("knot `{}` is not `x:y`", pair.trim())))?;
                    let p = |s: &str| {
                        s.trim().parse::<f64>().map_err(|_| ConfigError::at(key, format!("bad number `{}`", s.trim())))
                    };
                    Ok((p(a)?, p(b)?))
                })
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Numerics {
    pub root_tol: f64,
    pub ode_tol: f64,
    pub series_order: usize,
    pub grid_n: usize,
    pub x_extent: Option<f64>,
    pub k_extent: Option<f64>,
    pub hjb_tol: f64,
    pub hjb_max_iter: usize,
    pub dt: f64,
    pub n_paths: usize,
    pub horizon: Option<f64>,
    pub seed: u64,
    pub antithetic: bool,
    pub mc_paths_2d: usize,
    pub dt_2d: f64,
}

impl Default for Numerics {
    fn default() -> Self {
        Numerics {
            root_tol: 1e-13,
            ode_tol: 1e-10,
            series_order: 40,
            grid_n: 256,
            x_extent: None,
            k_extent: None,
            hjb_tol: 1e-9,
            hjb_max_iter: 200,
            dt: 1e-3,
            n_paths: 100_000,
            horizon: None,
            seed: 20240917,
            antithetic: true,
            mc_paths_2d: 200,
            dt_2d: 2e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: Task,
    pub params: ModelParams,
    pub sweep: Vec<f64>,
    pub numerics: Numerics,
    pub points: usize,
    pub output_dir: PathBuf,
}

/// Default model and sweep of each task; the solve and validate tasks start
/// from the `figure1` firm.
fn task_defaults(task: Task) -> (ModelParams, Vec<f64>) {
    let fig4 = ModelParams::with_investment(0.25, 0.6, 0.02, 0.8, 5.0, 2.0, 0.0);
    match task {
        Task::Figure1 | Task::Solve1d | Task::Validate => {
            (ModelParams::fixed_size(0.25, 0.3, 0.02, 0.1), vec![0.05, 0.15, 0.25])
        }
        Task::Figure2 => (ModelParams::fixed_size(0.25, 0.3, 0.02, 0.5), vec![0.3, 0.5, 0.8]),
        Task::Figure3 | Task::SolveHjb2d => {
            (ModelParams::with_investment(0.25, 0.3, 0.02, 0.08, 20.0, 2.0, 5e-4), Vec::new())
        }
        Task::Figure4 | Task::SolveGamma0 => (fig4, vec![1.0, 2.0, 3.0]),
        Task::Figure5 => (fig4, vec![0.5, 0.6, 0.8]),
        Task::Figure6 => (fig4, vec![0.25, 0.5, 0.75]),
    }
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let task: Task = match raw.entries.get("task") {
            None => return Err(ConfigError::at("task", "missing")),
            Some(t) => t.parse().map_err(|m: String| ConfigError::at("task", m))?,
        };
        let (mut params, default_sweep) = task_defaults(task);
        if let Some(v) = raw.get("model.mu")? {
            params.mu = v;
        }
        if let Some(v) = raw.get("model.sigma")? {
            params.sigma = v;
        }
        if let Some(v) = raw.get("model.r")? {
            params.r = v;
        }
        if let Some(v) = raw.get("model.gamma")? {
            params.gamma = v;
        }
        match (raw.get::<f64>("model.lambda")?, raw.knots("model.alpha_table")?) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::at("model.alpha_table", "conflicts with model.lambda"));
            }
            (Some(l), None) => params.alpha = SpreadSpec::linear(l),
            (None, Some(knots)) => params.alpha = SpreadSpec::TableConvex { knots },
            (None, None) => {}
        }
        let bmax = raw.get::<f64>("model.beta_max")?;
        let b0 = raw.get::<f64>("model.beta_prime0")?;
        let table = raw.knots("model.beta_table")?;
        if table.is_some() && (bmax.is_some() || b0.is_some()) {
            return Err(ConfigError::at("model.beta_table", "conflicts with the exponential productivity keys"));
        }
        if let Some(knots) = table {
            params.beta = Some(ProductivitySpec::TableConcave { knots });
        } else if bmax.is_some() || b0.is_some() {
            let (cur_max, cur_b0) = match &params.beta {
                Some(ProductivitySpec::Exponential { beta_max, beta_prime0 }) => (Some(*beta_max), Some(*beta_prime0)),
                _ => (None, None),
            };
            let beta_max = bmax.or(cur_max).ok_or_else(|| ConfigError::at("model.beta_max", "missing"))?;
            let beta_prime0 = b0.or(cur_b0).ok_or_else(|| ConfigError::at("model.beta_prime0", "missing"))?;
            params.beta = Some(ProductivitySpec::exponential(beta_max, beta_prime0));
        }

        let mut n = Numerics::default();
        macro_rules! take {
            ($field:ident, $key:literal) => {
                if let Some(v) = raw.get($key)? {
                    n.$field = v;
                }
            };
        }
        take!(root_tol, "numerics.root_tol");
        take!(ode_tol, "numerics.ode_tol");
        take!(series_order, "numerics.series_order");
        take!(grid_n, "numerics.grid_n");
        take!(hjb_tol, "numerics.hjb_tol");
        take!(hjb_max_iter, "numerics.hjb_max_iter");
        take!(dt, "numerics.dt");
        take!(n_paths, "numerics.n_paths");
        take!(seed, "numerics.seed");
        take!(antithetic, "numerics.antithetic");
        take!(mc_paths_2d, "numerics.mc_paths_2d");
        take!(dt_2d, "numerics.dt_2d");
        n.x_extent = raw.get("numerics.x_extent")?;
        n.k_extent = raw.get("numerics.k_extent")?;
        n.horizon = raw.get("numerics.horizon")?;

        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::at(key, format!("must be positive, got {v}")))
            }
        };
        positive("numerics.root_tol", n.root_tol)?;
        positive("numerics.ode_tol", n.ode_tol)?;
        positive("numerics.hjb_tol", n.hjb_tol)?;
        positive("numerics.dt", n.dt)?;
        positive("numerics.dt_2d", n.dt_2d)?;
        if n.grid_n < 8 {
            return Err(ConfigError::at("numerics.grid_n", "needs at least 8 nodes per axis"));
        }
        if n.n_paths == 0 {
            return Err(ConfigError::at("numerics.n_paths", "must be at least 1"));
        }

        let report = crate::model::validate(&params);
        if !report.is_valid() {
            let v = &report.violations[0];
            return Err(ConfigError::at(&format!("model.{}", v.field), v.message.clone()));
        }
        let needs_beta = matches!(
            task,
            Task::Figure3 | Task::Figure4 | Task::Figure5 | Task::Figure6 | Task::SolveGamma0 | Task::SolveHjb2d
        );
        if needs_beta && params.beta.is_none() {
            return Err(ConfigError::at("model.beta_max", format!("task {task} needs a productivity spec")));
        }
        if matches!(task, Task::Solve1d | Task::Figure1 | Task::Figure2) && params.beta.is_some() {
            return Err(ConfigError::at("model.beta_max", format!("task {task} is the fixed-size model")));
        }

        let sweep = raw.list("sweep.values")?.unwrap_or(default_sweep);
        if matches!(task, Task::Figure1 | Task::Figure2 | Task::Figure4 | Task::Figure5 | Task::Figure6)
            && sweep.is_empty()
        {
            return Err(ConfigError::at("sweep.values", "empty sweep"));
        }
        let points = raw.get("output.points")?.unwrap_or(401usize);
        if points < 2 {
            return Err(ConfigError::at("output.points", "needs at least 2 rows"));
        }
        let output_dir = raw.get::<String>("output.dir")?.unwrap_or_else(|| "out".into()).into();
        Ok(RunConfig { task, params, sweep, numerics: n, points, output_dir })
    }

    /// Reads a file and applies environment overrides.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError { key: None, message: format!("cannot read {}: {e}", path.display()) })?;
        let mut raw = RawConfig::parse(&text)?;
        raw.override_from(std::env::vars())?;
        Self::from_raw(&raw)
    }

    pub fn horizon(&self) -> f64 {
        self.numerics.horizon.unwrap_or(20.0 / self.params.r)
    }
}
