//! Task pipelines behind the command-line tool. Each writes its tables,
//! plots and a manifest into the output directory.

use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{RunConfig, Task};
use crate::error::Error;
use crate::free_boundary::{solve_no_investment_with, FreeBoundaryOptions, ValueFunction1D};
use crate::hjb::{default_extent, extract_policy, solve_hjb, Grid2D, HJBSolution, HjbOptions, Label, Policy2D};
use crate::mc::SimSpec;
use crate::model::{ModelParams, ProductivitySpec, SpreadSpec};
use crate::ode::OdeOptions;
use crate::report::{Cell, Manifest, Table, CHECKS};
use crate::svg::{cell_map, line_plot, Series};
use crate::validate::{validate_model, CheckReport, ValidateOptions};
use crate::zero_cost::{solve_zero_cost_relaxed, ZeroCostOptions, ZeroCostSolution};

#[derive(Debug)]
pub enum TaskError {
    Solver(Error),
    Io(io::Error),
    /// Artifacts were written but at least one check failed.
    Validation(CheckReport),
}

impl fmt::Display for TaskError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskError::Solver(e) => write!(f, "solver failure: {e}"),
            TaskError::Io(e) => write!(f, "i/o error: {e}"),
            TaskError::Validation(r) => {
                let names: Vec<&str> = r.failures().map(|c| c.name.as_str()).collect();
                write!(f, "validation failed: {}", names.join(", "))
            }
        }
    }
}

impl std::error::Error for TaskError {}

impl From<Error> for TaskError {
    fn from(e: Error) -> Self {
        TaskError::Solver(e)
    }
}

impl From<io::Error> for TaskError {
    fn from(e: io::Error) -> Self {
        TaskError::Io(e)
    }
}

type TaskResult<T> = std::result::Result<T, TaskError>;

/// Runs the configured task into `cfg.output_dir` and returns the manifest.
pub fn run(cfg: &RunConfig) -> TaskResult<Manifest> {
    fs::create_dir_all(&cfg.output_dir)?;
    let mut out = Output { dir: cfg.output_dir.clone(), manifest: Manifest::new(cfg.task.name()) };
    let status = match cfg.task {
        Task::Solve1d => solve1d(cfg, &mut out),
        Task::SolveGamma0 => solve_gamma0(cfg, &mut out),
        Task::SolveHjb2d | Task::Figure3 => solve_hjb2d(cfg, &mut out),
        Task::Validate => validate(cfg, &mut out),
        Task::Figure1 | Task::Figure2 => figure_fixed_size(cfg, &mut out),
        Task::Figure4 | Task::Figure5 | Task::Figure6 => figure_zero_cost(cfg, &mut out),
    };
    out.manifest.write(&out.dir)?;
    status.map(|_| out.manifest)
}

struct Output {
    dir: PathBuf,
    manifest: Manifest,
}

impl Output {
    fn table(&mut self, name: &str, t: &Table) -> io::Result<()> {
        t.write(&self.dir.join(name))?;
        self.manifest.file(name);
        Ok(())
    }

    fn text(&mut self, name: &str, body: &str) -> io::Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.manifest.file(name);
        Ok(())
    }
}

fn free_boundary_options(cfg: &RunConfig) -> FreeBoundaryOptions {
    let mut o = FreeBoundaryOptions::default();
    o.root.x_tol = cfg.numerics.root_tol;
    o.cauchy.ode = ode_options(cfg, o.cauchy.ode);
    o
}

fn ode_options(cfg: &RunConfig, base: OdeOptions) -> OdeOptions {
    OdeOptions { rtol: cfg.numerics.ode_tol, atol: cfg.numerics.ode_tol, ..base }
}

fn zero_cost_options(cfg: &RunConfig) -> ZeroCostOptions {
    let mut o = ZeroCostOptions::default();
    o.root.x_tol = cfg.numerics.root_tol;
    o.ode = ode_options(cfg, o.ode);
    o.order = cfg.numerics.series_order;
    o
}

fn hjb_options(cfg: &RunConfig) -> HjbOptions {
    HjbOptions { tol: cfg.numerics.hjb_tol, max_iter: cfg.numerics.hjb_max_iter, ..HjbOptions::default() }
}

fn sim_spec(cfg: &RunConfig) -> SimSpec {
    SimSpec {
        dt: cfg.numerics.dt,
        n_paths: cfg.numerics.n_paths,
        horizon: cfg.horizon(),
        seed: cfg.numerics.seed,
        antithetic: cfg.numerics.antithetic,
        ..SimSpec::default()
    }
}

fn extent(cfg: &RunConfig) -> TaskResult<(f64, f64)> {
    let (x, k) = match (cfg.numerics.x_extent, cfg.numerics.k_extent) {
        (Some(x), Some(k)) => (x, k),
        (x, k) => {
            let d = default_extent(&cfg.params)?;
            (x.unwrap_or(d.0), k.unwrap_or(d.1))
        }
    };
    Ok((x, k))
}

/// `n` evenly spaced points on `[0, top]`.
fn linspace(top: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| top * i as f64 / (n - 1) as f64).collect()
}

/// Right end of a plotted curve whose dividend threshold is `b`.
fn curve_end(b: f64) -> f64 {
    if b > 0.0 {
        1.2 * b
    } else {
        1.0
    }
}

fn solve1d(cfg: &RunConfig, out: &mut Output) -> TaskResult<()> {
    let v = solve_no_investment_with(&cfg.params, &free_boundary_options(cfg))?;
    let m = &mut out.manifest;
    m.fact("regime", v.regime.tag());
    m.num("a", v.a);
    m.num("b", v.b);
    m.num("v(b)", v.value_at_b());
    let mut th = Table::new(["regime", "a", "b", "v_b"]);
    th.push(vec![v.regime.tag().into(), v.a.into(), v.b.into(), v.value_at_b().into()]);
    out.table("thresholds.csv", &th)?;
    let mut t = Table::new(["x", "v", "v_x", "v_xx"]);
    for x in linspace(curve_end(v.b), cfg.points) {
        let (w, w1, w2) = v.eval(x)?;
        t.push(vec![x.into(), w.into(), w1.into(), w2.into()]);
    }
    out.table("value.csv", &t)?;
    Ok(())
}

fn zero_cost_facts(m: &mut Manifest, suffix: &str, s: &ZeroCostSolution) {
    m.fact(format!("case{suffix}"), s.case.tag());
    m.num(format!("delta{suffix}"), s.delta_exp);
    m.num(format!("a{suffix}"), s.a);
    m.num(format!("b{suffix}"), s.b);
    m.num(format!("v(b){suffix}"), s.value_at_b());
    if !s.debt_cost_assumption_holds {
        m.fact(
            format!("note{suffix}"),
            "debt cheaper than marginal product at k = 0; construction used outside its stated range",
        );
    }
}

fn solve_gamma0(cfg: &RunConfig, out: &mut Output) -> TaskResult<()> {
    let s = solve_zero_cost_relaxed(&cfg.params, &zero_cost_options(cfg))?;
    zero_cost_facts(&mut out.manifest, "", &s);
    if let Some(series) = &s.series {
        out.manifest.num("series_trust_radius", series.trust_radius);
    }
    let mut th = Table::new(["case", "delta", "a", "b", "amplitude", "v_b"]);
    th.push(vec![
        s.case.tag().into(),
        s.delta_exp.into(),
        s.a.into(),
        s.b.into(),
        s.a_star.into(),
        s.value_at_b().into(),
    ]);
    out.table("thresholds.csv", &th)?;
    let mut t = Table::new(["x", "v", "v_x", "v_xx", "k"]);
    for x in linspace(curve_end(s.b), cfg.points) {
        let (w, w1, w2) = s.value(x)?;
        t.push(vec![x.into(), w.into(), w1.into(), w2.into(), s.k_rule(x)?.into()]);
    }
    out.table("value.csv", &t)?;
    Ok(())
}

const POLICY_COLORS: [(&str, &str); 5] = [
    ("continue", "#f2f2f2"),
    ("dividend", "#6baed6"),
    ("invest", "#74c476"),
    ("disinvest", "#fd8d3c"),
    ("liquidated", "#525252"),
];

fn color_slot(l: Label) -> usize {
    match l {
        Label::Continue => 0,
        Label::PayDividend => 1,
        Label::Invest => 2,
        Label::Disinvest => 3,
        Label::Liquidated => 4,
    }
}

pub fn policy_svg(policy: &Policy2D, title: &str) -> String {
    let g = &policy.grid;
    cell_map(title, "cash x", "capital k", g.nx, g.nk, (g.x_max(), g.k_max()), &POLICY_COLORS, |i, j| {
        Some(color_slot(policy.label(i, j)))
    })
}

fn node_table(sol: &HJBSolution, policy: &Policy2D) -> Table {
    let g = &sol.grid;
    let mut t = Table::new(["x", "k", "v", "label"]);
    for j in 0..g.nk {
        for i in 0..g.nx {
            t.push(vec![g.x(i).into(), g.k(j).into(), sol.at(i, j).into(), policy.label(i, j).tag().into()]);
        }
    }
    t
}

fn solve_hjb2d(cfg: &RunConfig, out: &mut Output) -> TaskResult<()> {
    let (xe, ke) = extent(cfg)?;
    let grid = Grid2D::square(cfg.params.gamma, xe.max(ke), cfg.numerics.grid_n)?;
    let sol = solve_hjb(&cfg.params, &grid, &hjb_options(cfg))?;
    let policy = extract_policy(&sol);
    let g = &sol.grid;
    let m = &mut out.manifest;
    m.fact("grid", format!("{}x{}", g.nx, g.nk));
    m.num("extent", g.x_max());
    m.fact("iterations", sol.iterations);
    m.fact("krylov_iterations", sol.sweeps);
    m.num("last_update", sol.history.last().copied().unwrap_or(0.0));
    let mut worst = [f64::INFINITY; 4];
    for t in sol.node_terms() {
        for (w, v) in worst.iter_mut().zip(t) {
            if let Some(v) = v {
                *w = w.min(v);
            }
        }
    }
    m.num("min V_x - 1", worst[1]);
    m.num("min gamma V_x - V_k", worst[2]);
    m.num("min gamma V_x + V_k", worst[3]);
    for l in Label::ACTIVE {
        m.fact(format!("nodes.{}", l.tag()), policy.count(l));
    }
    let top = (0..g.nk).rev().find(|&j| (0..g.nx).any(|i| policy.label(i, j) == Label::Invest)).map(|j| g.k(j));
    if let Some(k) = top {
        m.num("max invest k", k);
    }
    let name = if cfg.task == Task::Figure3 { "figure3" } else { "hjb2d" };
    out.table(&format!("{name}_nodes.csv"), &node_table(&sol, &policy))?;
    out.text(&format!("{name}_policy.svg"), &policy_svg(&policy, "Policy map"))?;
    Ok(())
}

fn validate(cfg: &RunConfig, out: &mut Output) -> TaskResult<()> {
    let opts = ValidateOptions {
        sim: sim_spec(cfg),
        probes_1d: None,
        grid_n: cfg.numerics.grid_n,
        extent: match (cfg.numerics.x_extent, cfg.numerics.k_extent) {
            (None, None) => None,
            _ => Some(extent(cfg)?),
        },
        hjb: hjb_options(cfg),
        mc_paths_2d: cfg.numerics.mc_paths_2d,
        dt_2d: cfg.numerics.dt_2d,
    };
    let rep = validate_model(&cfg.params, &opts)?;
    out.text(CHECKS, &rep.to_string())?;
    let mut t = Table::new(["policy", "x", "k", "solver", "mean", "std_error", "n_paths"]);
    for e in &rep.estimates {
        t.push(vec![
            e.policy.as_str().into(),
            e.x.into(),
            e.k.into(),
            e.solver.into(),
            e.estimate.mean.into(),
            e.estimate.std_error.into(),
            e.estimate.n_paths.into(),
        ]);
    }
    out.table("estimates.csv", &t)?;
    let worst_z = rep
        .estimates
        .iter()
        .filter(|e| e.policy == "barrier")
        .map(|e| e.estimate.z_score(e.solver))
        .fold(None, |m: Option<f64>, z| Some(m.map_or(z, |m| m.max(z))));
    let m = &mut out.manifest;
    m.fact("checks", rep.checks.len());
    m.fact("failed", rep.failures().count());
    if let Some(z) = worst_z {
        m.num("max |mc - solver| / se", z);
    }
    if rep.all_passed() {
        Ok(())
    } else {
        Err(TaskError::Validation(rep))
    }
}

/// Writes a shared-x table with one column per curve, each left blank beyond
/// its own right end, and the matching line plot.
#[allow(clippy::too_many_arguments)]
fn write_sweep(
    out: &mut Output,
    stem: &str,
    label: &str,
    ylabel: &str,
    sweep: &[f64],
    ends: &[f64],
    points: usize,
    eval: impl Fn(usize, f64) -> crate::Result<f64>,
) -> TaskResult<()> {
    let top = ends.iter().cloned().fold(0.0, f64::max);
    let xs = linspace(top, points);
    let mut t =
        Table::new(std::iter::once("x".to_string()).chain(sweep.iter().map(|p| format!("{ylabel}[{label}={p}]"))));
    let mut series: Vec<Series> =
        sweep.iter().map(|p| Series { name: format!("{label} = {p}"), points: Vec::new() }).collect();
    for &x in &xs {
        let mut row = vec![Cell::from(x)];
        for (n, &end) in ends.iter().enumerate() {
            if x <= end * (1.0 + 1e-12) {
                let y = eval(n, x)?;
                series[n].points.push((x, y));
                row.push(y.into());
            } else {
                row.push(Cell::Empty);
            }
        }
        t.push(row);
    }
    out.table(&format!("{stem}.csv"), &t)?;
    out.text(&format!("{stem}.svg"), &line_plot(stem, "cash x", ylabel, &series))?;
    Ok(())
}

fn figure_fixed_size(cfg: &RunConfig, out: &mut Output) -> TaskResult<()> {
    let opts = free_boundary_options(cfg);
    let sols: Vec<ValueFunction1D> = cfg
        .sweep
        .par_iter()
        .map(|&l| {
            let p = ModelParams { alpha: SpreadSpec::linear(l), ..cfg.params.clone() };
            solve_no_investment_with(&p, &opts)
        })
        .collect::<crate::Result<_>>()?;
    let mut th = Table::new(["lambda", "regime", "a", "b", "v_b"]);
    for (l, v) in cfg.sweep.iter().zip(&sols) {
        th.push(vec![(*l).into(), v.regime.tag().into(), v.a.into(), v.b.into(), v.value_at_b().into()]);
        let m = &mut out.manifest;
        m.fact(format!("regime[lambda={l}]"), v.regime.tag());
        m.num(format!("a[lambda={l}]"), v.a);
        m.num(format!("b[lambda={l}]"), v.b);
    }
    let stem = cfg.task.name();
    out.table(&format!("{stem}_thresholds.csv"), &th)?;
    let ends: Vec<f64> = sols.iter().map(|v| curve_end(v.b)).collect();
    write_sweep(out, stem, "lambda", "v", &cfg.sweep, &ends, cfg.points, |n, x| sols[n].value(x))
}

fn figure_zero_cost(cfg: &RunConfig, out: &mut Output) -> TaskResult<()> {
    let label = match cfg.task {
        Task::Figure5 => "sigma",
        _ => "beta_prime0",
    };
    let variant = |v: f64| -> crate::Result<ModelParams> {
        let mut p = cfg.params.clone();
        if cfg.task == Task::Figure5 {
            p.sigma = v;
        } else {
            let beta_max = p.productivity()?.sup();
            p.beta = Some(ProductivitySpec::exponential(beta_max, v));
        }
        Ok(p)
    };
    let opts = zero_cost_options(cfg);
    let sols: Vec<ZeroCostSolution> =
        cfg.sweep.par_iter().map(|&v| solve_zero_cost_relaxed(&variant(v)?, &opts)).collect::<crate::Result<_>>()?;
    let mut th = Table::new([label, "case", "delta", "a", "b", "amplitude", "v_b"]);
    for (p, s) in cfg.sweep.iter().zip(&sols) {
        th.push(vec![
            (*p).into(),
            s.case.tag().into(),
            s.delta_exp.into(),
            s.a.into(),
            s.b.into(),
            s.a_star.into(),
            s.value_at_b().into(),
        ]);
        zero_cost_facts(&mut out.manifest, &format!("[{label}={p}]"), s);
    }
    let stem = cfg.task.name();
    out.table(&format!("{stem}_thresholds.csv"), &th)?;
    let ends: Vec<f64> = sols.iter().map(|s| curve_end(s.b)).collect();
    write_sweep(out, stem, label, "v", &cfg.sweep, &ends, cfg.points, |n, x| Ok(sols[n].value(x)?.0))?;
    write_sweep(out, &format!("{stem}_capital"), label, "k", &cfg.sweep, &ends, cfg.points, |n, x| sols[n].k_rule(x))
}

/// [`run`] with the output directory replaced by `dir`.
pub fn run_in(cfg: &RunConfig, dir: &Path) -> TaskResult<Manifest> {
    let cfg = RunConfig { output_dir: dir.to_path_buf(), ..cfg.clone() };
    run(&cfg)
}
