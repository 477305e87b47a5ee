//! Finite differences for the investment model with adjustment cost `gamma > 0`:
//!
//!   min(-L_k V, V_x - 1, gamma V_x - V_k, gamma V_x + V_k) = 0  on x >= gamma k,
//!   V(gamma k, k) = 0,
//!
//! solved by policy iteration over the four operators. Every operator is
//! discretized with one-sided differences chosen so that each row of the
//! linear system is a monotone M-matrix row.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::roots::{bisect, BisectOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Continue,
    PayDividend,
    Invest,
    Disinvest,
    Liquidated,
}

impl Label {
    pub const ACTIVE: [Label; 4] = [Label::Continue, Label::PayDividend, Label::Disinvest, Label::Invest];

    pub fn tag(self) -> &'static str {
        match self {
            Label::Continue => "continue",
            Label::PayDividend => "dividend",
            Label::Invest => "invest",
            Label::Disinvest => "disinvest",
            Label::Liquidated => "liquidated",
        }
    }

    pub fn from_tag(s: &str) -> Option<Label> {
        [Label::Continue, Label::PayDividend, Label::Invest, Label::Disinvest, Label::Liquidated]
            .into_iter()
            .find(|l| l.tag() == s)
    }

    fn slot(self) -> usize {
        match self {
            Label::Continue => 0,
            Label::PayDividend => 1,
            Label::Invest => 2,
            Label::Disinvest => 3,
            Label::Liquidated => 4,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Uniform grid with a common spacing `h` in `x` and `k`, so that the line
/// `x = k` where the spread switches on passes through nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D {
    pub h: f64,
    pub nx: usize,
    pub nk: usize,
    pub gamma: f64,
    /// Per row, the last node with `x <= gamma k`; nodes up to it are outside
    /// the interior and hold the boundary value.
    pub boundary_index: Vec<usize>,
    /// Per row, `gamma k - x[boundary_index]`, the distance from that node to
    /// the true boundary.
    pub boundary_offset: Vec<f64>,
}

impl Grid2D {
    pub fn new(gamma: f64, h: f64, nx: usize, nk: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) || nx < 4 || nk < 2 {
            return Err(Error::Domain(format!(
                "grid needs h > 0, nx >= 4, nk >= 2 (got h = {h}, nx = {nx}, nk = {nk})"
            )));
        }
        if !(gamma >= 0.0) {
            return Err(Error::Domain("gamma must be nonnegative".into()));
        }
        let x_max = h * (nx - 1) as f64;
        let k_max = h * (nk - 1) as f64;
        if gamma * k_max >= x_max - 2.0 * h {
            return Err(Error::Domain(format!(
                "x_max = {x_max} leaves no interior above gamma k_max = {}",
                gamma * k_max
            )));
        }
        let mut boundary_index = Vec::with_capacity(nk);
        let mut boundary_offset = Vec::with_capacity(nk);
        for j in 0..nk {
            let xb = gamma * j as f64 * h;
            let i = (xb / h).floor() as usize;
            // Guard against rounding pushing x_i above the boundary.
            let i = if i as f64 * h > xb { i - 1 } else { i };
            boundary_index.push(i);
            boundary_offset.push(xb - i as f64 * h);
        }
        Ok(Grid2D { h, nx, nk, gamma, boundary_index, boundary_offset })
    }

    /// `n x n` grid covering `[0, extent]` in both directions.
    pub fn square(gamma: f64, extent: f64, n: usize) -> Result<Self> {
        Self::new(gamma, extent / (n - 1) as f64, n, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.h
    }

    pub fn k(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.nx - 1)
    }

    pub fn k_max(&self) -> f64 {
        self.k(self.nk - 1)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    /// Node lies strictly inside `S` (not on or below the boundary).
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i > self.boundary_index[j]
    }

    /// Spacing between node `i` and its left neighbour, which for the first
    /// interior node is the boundary point itself.
    pub fn left_spacing(&self, i: usize, j: usize) -> f64 {
        if i == self.boundary_index[j] + 1 {
            self.h - self.boundary_offset[j]
        } else {
            self.h
        }
    }

    /// Whether `(x, k)` belongs to `S`.
    pub fn contains(&self, x: f64, k: f64) -> bool {
        x >= self.gamma * k
    }
}

/// Truncation of the domain: twice the dividend barrier of a firm with
/// constant productivity `beta_max`, and twice the capital level where
/// `mu beta'(k) = r / 2`, which sits above the top of the investment region.
/// Returns `(x_extent, k_extent)`.
pub fn default_extent(params: &ModelParams) -> Result<(f64, f64)> {
    let beta = params.productivity()?;
    let m = params.mu * beta.sup();
    let s2 = (params.sigma * beta.sup()).powi(2);
    let disc = (m * m + 2.0 * params.r * s2).sqrt();
    let rp = (-m + disc) / s2;
    let rm = (-m - disc) / s2;
    let barrier = (rm * rm / (rp * rp)).ln() / (rp - rm);
    let target = params.r / (2.0 * params.mu);
    let k_hat = if beta.slope(0.0) <= target {
        1.0
    } else {
        let mut hi = 1.0;
        while beta.slope(hi) > target && hi < 1e6 {
            hi *= 2.0;
        }
        bisect(|k| Ok(beta.slope(k) - target), 0.0, hi, BisectOptions::default())?.x
    };
    Ok((2.0 * barrier.max(1.0), 2.0 * k_hat))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HjbMode {
    /// All four operators.
    Full,
    /// Productivity fixed at one and capital frozen: rows decouple into the
    /// fixed-size problem at credit limit `k`.
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct HjbOptions {
    /// Stop when the sup-norm policy-iteration update falls below `tol * scale`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative residual tolerance of each policy evaluation.
    pub eval_tol: f64,
    /// Cap on Krylov iterations per policy evaluation.
    pub max_sweeps: usize,
    pub mode: HjbMode,
    /// Per-row value on the boundary `x = gamma k`; zero when absent.
    pub boundary_payoff: Option<Vec<f64>>,
}

impl Default for HjbOptions {
    fn default() -> Self {
        HjbOptions {
            tol: 1e-9,
            max_iter: 200,
            eval_tol: 1e-10,
            max_sweeps: 400,
            mode: HjbMode::Full,
            boundary_payoff: None,
        }
    }
}

/// Per-node labels, with nearest-node lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy2D {
    pub grid: Grid2D,
    pub labels: Vec<Label>,
}

impl Policy2D {
    pub fn label(&self, i: usize, j: usize) -> Label {
        self.labels[self.grid.idx(i, j)]
    }

    /// Label of the node nearest `(x, k)`, clamped to the grid.
    pub fn label_at(&self, x: f64, k: f64) -> Label {
        let g = &self.grid;
        let i = ((x / g.h).round().max(0.0) as usize).min(g.nx - 1);
        let j = ((k / g.h).round().max(0.0) as usize).min(g.nk - 1);
        if !g.contains(x, k) {
            return Label::Liquidated;
        }
        let l = self.label(i, j);
        // Rounding may land on a boundary node while the state is inside S.
        if l == Label::Liquidated {
            self.label((g.boundary_index[j] + 1).min(g.nx - 1), j)
        } else {
            l
        }
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}

#[derive(Debug, Clone)]
pub struct HJBSolution {
    pub grid: Grid2D,
    pub v: Vec<f64>,
    /// Operator selected by the last policy iteration.
    pub policy: Vec<Label>,
    /// Minimum of the operator residuals at each node.
    pub residual: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm update of each policy iteration.
    pub history: Vec<f64>,
    /// Krylov iterations summed over all policy evaluations.
    pub sweeps: usize,
    pub mode: HjbMode,
    params: ModelParams,
    payoff: Vec<f64>,
}

/// Continuation stencil `diag V_i - cl V_{i-1} - cr V_{i+1}` with its
/// coefficients for every node.
struct Coefficients {
    cl: Vec<f64>,
    cr: Vec<f64>,
    diag: Vec<f64>,
}

fn productivity(params: &ModelParams, mode: HjbMode, k: f64) -> Result<f64> {
    match mode {
        HjbMode::Degenerate => Ok(1.0),
        HjbMode::Full => Ok(params.productivity()?.value(k)),
    }
}

fn continuation_stencil(
    params: &ModelParams,
    mode: HjbMode,
    x: f64,
    k: f64,
    hl: f64,
    hr: f64,
) -> Result<(f64, f64, f64)> {
    let beta = productivity(params, mode, k)?;
    let drift = beta * params.mu - params.alpha.value((k - x).max(0.0));
    let s = 0.5 * params.sigma * params.sigma * beta * beta;
    let cr = 2.0 * s / (hr * (hl + hr)) + drift.max(0.0) / hr;
    let cl = 2.0 * s / (hl * (hl + hr)) + (-drift).max(0.0) / hl;
    Ok((cl, cr, cl + cr + params.r))
}

impl Coefficients {
    fn build(params: &ModelParams, grid: &Grid2D, mode: HjbMode) -> Result<Self> {
        let n = grid.nx * grid.nk;
        let mut c = Coefficients { cl: vec![0.0; n], cr: vec![0.0; n], diag: vec![0.0; n] };
        for j in 0..grid.nk {
            for i in grid.boundary_index[j] + 1..grid.nx - 1 {
                let (cl, cr, d) =
                    continuation_stencil(params, mode, grid.x(i), grid.k(j), grid.left_spacing(i, j), grid.h)?;
                if !(cl >= 0.0 && cr >= 0.0 && d > 0.0 && d.is_finite()) {
                    return Err(Error::NonMonotone { i, j, detail: format!("cl = {cl}, cr = {cr}, diag = {d}") });
                }
                let id = grid.idx(i, j);
                c.cl[id] = cl;
                c.cr[id] = cr;
                c.diag[id] = d;
            }
        }
        Ok(c)
    }
}

/// `diag V - left V_{i-1} - right V_{i+1} - down V_{j-1} - up V_{j+1} = rhs`.
#[derive(Debug, Clone, Copy, Default)]
struct NodeEq {
    diag: f64,
    left: f64,
    right: f64,
    down: f64,
    up: f64,
    rhs: f64,
}

struct Solver<'a> {
    grid: &'a Grid2D,
    coef: Coefficients,
    mode: HjbMode,
    payoff: Vec<f64>,
}

/// Thomas algorithm; `a` sub-, `b` main and `c` super-diagonal.
fn thomas(a: &[f64], b: &[f64], c: &[f64], d: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    let n = b.len();
    let mut beta = b[0];
    out[0] = d[0] / beta;
    for i in 1..n {
        scratch[i] = c[i - 1] / beta;
        beta = b[i] - a[i] * scratch[i];
        out[i] = (d[i] - a[i] * out[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        out[i] -= scratch[i + 1] * out[i + 1];
    }
}

impl Solver<'_> {
    fn left_value(&self, v: &[f64], i: usize, j: usize) -> f64 {
        if i == self.grid.boundary_index[j] + 1 {
            self.payoff[j]
        } else {
            v[self.grid.idx(i - 1, j)]
        }
    }

    /// Operator residuals at an interior node; `None` where not admissible.
    fn terms(&self, v: &[f64], i: usize, j: usize) -> [Option<f64>; 4] {
        let g = self.grid;
        let id = g.idx(i, j);
        let hl = g.left_spacing(i, j);
        let vx = (v[id] - self.left_value(v, i, j)) / hl;
        let mut out = [None; 4];
        out[1] = Some(vx - 1.0);
        if i == g.nx - 1 {
            return out;
        }
        out[0] = Some(
            self.coef.diag[id] * v[id] - self.coef.cl[id] * self.left_value(v, i, j) - self.coef.cr[id] * v[id + 1],
        );
        if self.mode == HjbMode::Full {
            if j + 1 < g.nk {
                out[2] = Some(g.gamma * vx - (v[g.idx(i, j + 1)] - v[id]) / g.h);
            }
            if j > 0 {
                out[3] = Some(g.gamma * vx + (v[id] - v[g.idx(i, j - 1)]) / g.h);
            }
        }
        out
    }

    fn initial(&self) -> (Vec<f64>, Vec<Label>) {
        let g = self.grid;
        let mut v = vec![0.0; g.nx * g.nk];
        let mut labels = vec![Label::Liquidated; g.nx * g.nk];
        for j in 0..g.nk {
            let xb = g.gamma * g.k(j);
            for i in 0..g.nx {
                let id = g.idx(i, j);
                if g.is_interior(i, j) {
                    v[id] = self.payoff[j] + g.x(i) - xb;
                    labels[id] = Label::PayDividend;
                } else {
                    v[id] = self.payoff[j];
                }
            }
        }
        (v, labels)
    }

    /// Equation of node `(i, j)` under `label`.
    fn node_equation(&self, i: usize, j: usize, label: Label) -> NodeEq {
        let g = self.grid;
        let id = g.idx(i, j);
        let hl = g.left_spacing(i, j);
        let gam = g.gamma;
        let mut eq = NodeEq::default();
        match label {
            Label::Continue => {
                eq.diag = self.coef.diag[id];
                eq.left = self.coef.cl[id];
                eq.right = self.coef.cr[id];
            }
            Label::PayDividend => {
                eq.diag = 1.0;
                eq.left = 1.0;
                eq.rhs = hl;
            }
            Label::Invest => {
                eq.diag = gam / hl + 1.0 / g.h;
                eq.left = gam / hl;
                eq.up = 1.0 / g.h;
            }
            Label::Disinvest => {
                eq.diag = gam / hl + 1.0 / g.h;
                eq.left = gam / hl;
                eq.down = 1.0 / g.h;
            }
            Label::Liquidated => {
                eq.diag = 1.0;
                eq.rhs = self.payoff[j];
            }
        }
        // The boundary point is known.
        if i == g.boundary_index[j] + 1 {
            eq.rhs += eq.left * self.payoff[j];
            eq.left = 0.0;
        }
        eq
    }

    fn equations(&self, labels: &[Label]) -> Vec<NodeEq> {
        let g = self.grid;
        (0..g.nx * g.nk)
            .map(|id| {
                let (i, j) = (id % g.nx, id / g.nx);
                if g.is_interior(i, j) {
                    self.node_equation(i, j, labels[id])
                } else {
                    NodeEq { diag: 1.0, rhs: self.payoff[j], ..NodeEq::default() }
                }
            })
            .collect()
    }

    /// Solves the linear system of a fixed policy with restarted GMRES,
    /// warm-started from `v` and preconditioned by one block relaxation
    /// sweep. Returns the number of Krylov iterations.
    fn evaluate(&self, v: &mut [f64], labels: &[Label], opts: &HjbOptions) -> Result<usize> {
        let eqs = self.equations(labels);
        let sys = System { grid: self.grid, eqs: &eqs };
        let b: Vec<f64> = eqs.iter().map(|e| e.rhs).collect();
        let b_norm = norm(&b).max(1.0);
        let tol = opts.eval_tol * b_norm;
        let start = v.to_vec();
        match gmres(&sys, &b, v, tol, 40, opts.max_sweeps) {
            Ok(it) => Ok(it),
            Err(Error::NotConverged { iterations, .. }) => {
                // Krylov stalled on this policy; fall back to a direct solve
                // with two steps of refinement.
                let lu = BandLu::factor(&sys);
                v.copy_from_slice(&b);
                lu.solve(v);
                let mut r = vec![0.0; v.len()];
                for _ in 0..2 {
                    sys.apply(v, &mut r);
                    for (ri, bi) in r.iter_mut().zip(&b) {
                        *ri = bi - *ri;
                    }
                    lu.solve(&mut r);
                    for (vi, ri) in v.iter_mut().zip(&r) {
                        *vi += ri;
                    }
                }
                if v.iter().any(|x| !x.is_finite()) {
                    v.copy_from_slice(&start);
                    return Err(Error::NotConverged { iterations, last_update: f64::NAN, history: Vec::new() });
                }
                Ok(iterations)
            }
            Err(e) => Err(e),
        }
    }

    /// Policy improvement. Keeps the current operator when it is within
    /// `keep_tol` of the minimum, which prevents cycling between ties.
    fn improve(&self, v: &[f64], labels: &mut [Label], keep_tol: f64) -> usize {
        let g = self.grid;
        let mut changed = 0;
        for j in 0..g.nk {
            for i in g.boundary_index[j] + 1..g.nx {
                let id = g.idx(i, j);
                let t = self.terms(v, i, j);
                let mut best = Label::PayDividend;
                let mut best_val = f64::INFINITY;
                for l in Label::ACTIVE {
                    if let Some(val) = t[l.slot()] {
                        if val < best_val {
                            best_val = val;
                            best = l;
                        }
                    }
                }
                let current = labels[id];
                let keep =
                    current != Label::Liquidated && t[current.slot()].is_some_and(|cv| cv <= best_val + keep_tol);
                if !keep {
                    labels[id] = best;
                    changed += 1;
                }
            }
        }
        changed
    }
}

/// Policy matrix in node-equation form.
struct System<'a> {
    grid: &'a Grid2D,
    eqs: &'a [NodeEq],
}

impl System<'_> {
    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let g = self.grid;
        for (id, e) in self.eqs.iter().enumerate() {
            let mut acc = e.diag * v[id];
            if e.left != 0.0 {
                acc -= e.left * v[id - 1];
            }
            if e.right != 0.0 {
                acc -= e.right * v[id + 1];
            }
            if e.down != 0.0 {
                acc -= e.down * v[id - g.nx];
            }
            if e.up != 0.0 {
                acc -= e.up * v[id + g.nx];
            }
            out[id] = acc;
        }
    }

    /// One block Gauss–Seidel sweep for `A z = r` from `z = 0`: exact solves
    /// along each row (upward then downward), then along each column from
    /// left to right. Rows resolve the diffusion, columns the capital moves.
    fn sweep(&self, r: &[f64], z: &mut [f64], work: &mut Work) {
        let g = self.grid;
        let (nx, nk) = (g.nx, g.nk);
        z.fill(0.0);
        let Work { a, b, c, d, out, scratch } = work;
        for j in (0..nk).chain((0..nk).rev()) {
            for i in 0..nx {
                let id = g.idx(i, j);
                let e = &self.eqs[id];
                a[i] = -e.left;
                b[i] = e.diag;
                c[i] = -e.right;
                d[i] = r[id];
                if e.up != 0.0 {
                    d[i] += e.up * z[id + nx];
                }
                if e.down != 0.0 {
                    d[i] += e.down * z[id - nx];
                }
            }
            thomas(&a[..nx], &b[..nx], &c[..nx], &d[..nx], &mut out[..nx], &mut scratch[..nx]);
            z[g.idx(0, j)..g.idx(0, j) + nx].copy_from_slice(&out[..nx]);
        }
        for i in 0..nx {
            for j in 0..nk {
                let id = g.idx(i, j);
                let e = &self.eqs[id];
                a[j] = -e.down;
                b[j] = e.diag;
                c[j] = -e.up;
                d[j] = r[id];
                if e.left != 0.0 {
                    d[j] += e.left * z[id - 1];
                }
                if e.right != 0.0 {
                    d[j] += e.right * z[id + 1];
                }
            }
            thomas(&a[..nk], &b[..nk], &c[..nk], &d[..nk], &mut out[..nk], &mut scratch[..nk]);
            for j in 0..nk {
                z[g.idx(i, j)] = out[j];
            }
        }
    }
}

/// Band LU of the node system, eliminated without pivoting. The rows are
/// diagonally dominant, which Schur complements inherit, so this is stable.
struct BandLu {
    n: usize,
    half: usize,
    rows: Vec<f64>,
}

impl BandLu {
    fn factor(sys: &System) -> Self {
        let g = sys.grid;
        let n = sys.eqs.len();
        let half = g.nx;
        let w = 2 * half + 1;
        let mut rows = vec![0.0; n * w];
        for (id, e) in sys.eqs.iter().enumerate() {
            let row = &mut rows[id * w..(id + 1) * w];
            row[half] = e.diag;
            if e.left != 0.0 {
                row[half - 1] = -e.left;
            }
            if e.right != 0.0 {
                row[half + 1] = -e.right;
            }
            if e.down != 0.0 {
                row[0] = -e.down;
            }
            if e.up != 0.0 {
                row[2 * half] = -e.up;
            }
        }
        for k in 0..n {
            let (head, tail) = rows.split_at_mut((k + 1) * w);
            let pivot_row = &head[k * w + half..(k + 1) * w];
            let piv = pivot_row[0];
            let reach = half.min(n - 1 - k);
            for (d, row) in tail.chunks_exact_mut(w).take(reach).enumerate() {
                // row i = k + 1 + d; column k sits at offset half - (d + 1)
                let off = half - (d + 1);
                let a = row[off];
                if a == 0.0 {
                    continue;
                }
                let l = a / piv;
                row[off] = l;
                let span = reach;
                for (x, u) in row[off + 1..off + 1 + span].iter_mut().zip(&pivot_row[1..1 + span]) {
                    *x -= l * u;
                }
            }
        }
        BandLu { n, half, rows }
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, half) = (self.n, self.half);
        let w = 2 * half + 1;
        for i in 0..n {
            let row = &self.rows[i * w..(i + 1) * w];
            let lo = i.saturating_sub(half);
            let mut s = b[i];
            for k in lo..i {
                s -= row[half + k - i] * b[k];
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let row = &self.rows[i * w..(i + 1) * w];
            let hi = (i + half).min(n - 1);
            let mut s = b[i];
            for k in i + 1..=hi {
                s -= row[half + k - i] * b[k];
            }
            b[i] = s / row[half];
        }
    }
}

struct Work {
    a: Vec<f64>,
    b: Vec<f64>,
    c: Vec<f64>,
    d: Vec<f64>,
    out: Vec<f64>,
    scratch: Vec<f64>,
}

impl Work {
    fn new(m: usize) -> Self {
        Work {
            a: vec![0.0; m],
            b: vec![0.0; m],
            c: vec![0.0; m],
            d: vec![0.0; m],
            out: vec![0.0; m],
            scratch: vec![0.0; m],
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Right-preconditioned restarted GMRES(m) on `A x = b`, in place.
fn gmres(sys: &System, b: &[f64], x: &mut [f64], tol: f64, m: usize, max_iter: usize) -> Result<usize> {
    let n = b.len();
    let mut work = Work::new(sys.grid.nx.max(sys.grid.nk));
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    let mut zs: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut total = 0;
    let diag_max = sys.eqs.iter().map(|e| e.diag.abs()).fold(0.0, f64::max);
    loop {
        sys.apply(x, &mut tmp);
        for i in 0..n {
            r[i] = b[i] - tmp[i];
        }
        let beta = norm(&r);
        // Rounding floor of the residual itself: |A| |x| eps, with a margin.
        let floor = 1e-14 * diag_max * norm(x);
        if beta <= tol.max(floor) {
            return Ok(total);
        }
        if total >= max_iter {
            return Err(Error::NotConverged { iterations: total, last_update: beta, history: Vec::new() });
        }
        basis.clear();
        zs.clear();
        basis.push(r.iter().map(|v| v / beta).collect());
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut gvec = vec![0.0; m + 1];
        gvec[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut z = vec![0.0; n];
            sys.sweep(&basis[k], &mut z, &mut work);
            let mut w = vec![0.0; n];
            sys.apply(&z, &mut w);
            zs.push(z);
            for (jj, q) in basis.iter().enumerate() {
                let hij = dot(&w, q);
                hess[jj][k] = hij;
                for (wi, qi) in w.iter_mut().zip(q) {
                    *wi -= hij * qi;
                }
            }
            let hn = norm(&w);
            hess[k + 1][k] = hn;
            for jj in 0..k {
                let t = cs[jj] * hess[jj][k] + sn[jj] * hess[jj + 1][k];
                hess[jj + 1][k] = -sn[jj] * hess[jj][k] + cs[jj] * hess[jj + 1][k];
                hess[jj][k] = t;
            }
            let den = (hess[k][k].powi(2) + hess[k + 1][k].powi(2)).sqrt();
            cs[k] = hess[k][k] / den;
            sn[k] = hess[k + 1][k] / den;
            hess[k][k] = den;
            hess[k + 1][k] = 0.0;
            gvec[k + 1] = -sn[k] * gvec[k];
            gvec[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            if gvec[k + 1].abs() <= tol || hn == 0.0 || total >= max_iter {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = gvec[i];
            for jj in i + 1..k_used {
                s -= hess[i][jj] * y[jj];
            }
            y[i] = s / hess[i][i];
        }
        for (yk, z) in y.iter().zip(&zs) {
            for (xi, zi) in x.iter_mut().zip(z) {
                *xi += yk * zi;
            }
        }
    }
}

pub fn solve_hjb(params: &ModelParams, grid: &Grid2D, opts: &HjbOptions) -> Result<HJBSolution> {
    params.ensure_valid()?;
    if opts.mode == HjbMode::Full && !(params.gamma > 0.0) {
        return Err(Error::InvalidParams("the finite-difference solver needs gamma > 0".into()));
    }
    if (params.gamma - grid.gamma).abs() > 0.0 {
        return Err(Error::InvalidParams(format!(
            "grid built for gamma = {} but params have gamma = {}",
            grid.gamma, params.gamma
        )));
    }
    if opts.mode == HjbMode::Full {
        params.productivity()?;
    }
    let payoff = match &opts.boundary_payoff {
        Some(p) if p.len() != grid.nk => {
            return Err(Error::Domain(format!("boundary payoff has {} entries, grid has {} rows", p.len(), grid.nk)))
        }
        Some(p) => p.clone(),
        None => vec![0.0; grid.nk],
    };
    let solver = Solver { grid, coef: Coefficients::build(params, grid, opts.mode)?, mode: opts.mode, payoff };
    let (mut v, mut labels) = solver.initial();
    let mut sweeps = solver.evaluate(&mut v, &labels, opts)?;
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let keep_tol = 1e-12;
    while iterations < opts.max_iter {
        iterations += 1;
        let changed = solver.improve(&v, &mut labels, keep_tol);
        if changed == 0 {
            converged = true;
            history.push(0.0);
            break;
        }
        let old = v.clone();
        sweeps += solver.evaluate(&mut v, &labels, opts)?;
        let scale = v.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        let update = v.iter().zip(&old).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        history.push(update);
        if update <= opts.tol * scale {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged {
            iterations,
            last_update: history.last().copied().unwrap_or(f64::NAN),
            history,
        });
    }
    let mut residual = vec![0.0; v.len()];
    for j in 0..grid.nk {
        for i in grid.boundary_index[j] + 1..grid.nx {
            let t = solver.terms(&v, i, j);
            residual[grid.idx(i, j)] = t.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
        }
    }
    let Solver { payoff, .. } = solver;
    Ok(HJBSolution {
        grid: grid.clone(),
        v,
        policy: labels,
        residual,
        iterations,
        converged,
        history,
        sweeps,
        mode: opts.mode,
        params: params.clone(),
        payoff,
    })
}

/// Discrete operator values at an interior node, in the order
/// `(-L_k V, V_x - 1, gamma V_x - V_k, gamma V_x + V_k)`.
pub type Terms = [Option<f64>; 4];

impl HJBSolution {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.v[self.grid.idx(i, j)]
    }

    fn solver(&self) -> Solver<'_> {
        Solver {
            grid: &self.grid,
            coef: Coefficients::build(&self.params, &self.grid, self.mode)
                .expect("coefficients were valid when solving"),
            mode: self.mode,
            payoff: self.payoff.clone(),
        }
    }

    /// Operator values at every node (`None` outside the interior or where
    /// the stencil does not exist).
    pub fn node_terms(&self) -> Vec<Terms> {
        let s = self.solver();
        let g = &self.grid;
        let mut out = vec![[None; 4]; self.v.len()];
        for j in 0..g.nk {
            for i in g.boundary_index[j] + 1..g.nx {
                out[g.idx(i, j)] = s.terms(&self.v, i, j);
            }
        }
        out
    }

    /// Bilinear interpolation; the boundary payoff below `x = gamma k`.
    pub fn value_at(&self, x: f64, k: f64) -> f64 {
        let g = &self.grid;
        let fk = (k / g.h).clamp(0.0, (g.nk - 1) as f64);
        let j0 = (fk.floor() as usize).min(g.nk - 2);
        let tk = fk - j0 as f64;
        let row = |j: usize| -> f64 {
            let xb = g.gamma * g.k(j);
            if x <= xb {
                return self.payoff[j];
            }
            let first = g.boundary_index[j] + 1;
            let fx = (x / g.h).clamp(0.0, (g.nx - 1) as f64);
            if fx <= first as f64 {
                // Between the boundary point and the first interior node.
                let t = (x - xb) / (g.x(first) - xb);
                return self.payoff[j] + t * (self.at(first, j) - self.payoff[j]);
            }
            let i0 = (fx.floor() as usize).min(g.nx - 2);
            let tx = fx - i0 as f64;
            (1.0 - tx) * self.at(i0, j) + tx * self.at(i0 + 1, j)
        };
        (1.0 - tk) * row(j0) + tk * row(j0 + 1)
    }
}

/// Labels each node by the operator attaining the minimum. Near-ties within
/// `1e-9` go to the first of Continue, PayDividend, Disinvest, Invest.
pub fn extract_policy(sol: &HJBSolution) -> Policy2D {
    let terms = sol.node_terms();
    let g = &sol.grid;
    let mut labels = vec![Label::Liquidated; sol.v.len()];
    for j in 0..g.nk {
        for i in g.boundary_index[j] + 1..g.nx {
            let id = g.idx(i, j);
            let t = terms[id];
            let min = t.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
            labels[id] = Label::ACTIVE
                .into_iter()
                .find(|l| t[l.slot()].is_some_and(|v| v <= min + 1e-9))
                .unwrap_or(Label::PayDividend);
        }
    }
    Policy2D { grid: g.clone(), labels }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    pub values: Vec<f64>,
    pub max_abs: f64,
    pub mean_abs: f64,
}

/// Minimum of the four operators applied to the bilinear interpolant at
/// each probe. Stencils use spacing `h` around the probe, shortened on the
/// left to reach the boundary; operators whose stencil leaves the grid are
/// dropped. Probes on or below the boundary have residual 0.
pub fn viscosity_residual(sol: &HJBSolution, probes: &[(f64, f64)]) -> Result<ResidualStats> {
    let g = &sol.grid;
    let h = g.h;
    let mut values = Vec::with_capacity(probes.len());
    for &(x, k) in probes {
        if !(x.is_finite() && k.is_finite()) || k < 0.0 || k > g.k_max() || x > g.x_max() {
            return Err(Error::Domain(format!("probe ({x}, {k}) outside the grid")));
        }
        let xb = g.gamma * k;
        if x <= xb {
            values.push(0.0);
            continue;
        }
        let hl = h.min(x - xb);
        let v = sol.value_at(x, k);
        let vl = sol.value_at(x - hl, k);
        let vx = (v - vl) / hl;
        let mut best = vx - 1.0;
        if x + h <= g.x_max() + 1e-12 * h {
            let (cl, cr, d) = continuation_stencil(&sol.params, sol.mode, x, k, hl, h)?;
            best = best.min(d * v - cl * vl - cr * sol.value_at(x + h, k));
        }
        if sol.mode == HjbMode::Full {
            if k + h <= g.k_max() + 1e-12 * h {
                best = best.min(g.gamma * vx - (sol.value_at(x, k + h) - v) / h);
            }
            if k - h >= -1e-12 * h {
                best = best.min(g.gamma * vx + (v - sol.value_at(x, (k - h).max(0.0))) / h);
            }
        }
        values.push(best);
    }
    let n = values.len().max(1) as f64;
    let max_abs = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean_abs = values.iter().map(|v| v.abs()).sum::<f64>() / n;
    Ok(ResidualStats { values, max_abs, mean_abs })
}
