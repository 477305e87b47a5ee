//! Cross-checks run by the `validate` task. Each check compares a solver
//! output against a condition it must satisfy, or against the Monte Carlo
//! oracle, and records the measured value next to its threshold.

use std::fmt;

use crate::error::Result;
use crate::free_boundary::solve_no_investment;
use crate::hjb::{default_extent, extract_policy, solve_hjb, Grid2D, HjbOptions, Label};
use crate::mc::{simulate_1d_probes, simulate_2d_policy, static_policy, MCEstimate, SimSpec};
use crate::model::{ModelParams, Regime1D};
use crate::zero_cost::{generator, solve_zero_cost_relaxed, ZeroCostCase, ZeroCostOptions};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `value <= threshold`.
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed: value <= threshold, value, threshold, detail: detail.into() }
    }

    /// Passes when `value >= threshold`.
    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check { name: name.into(), passed: value >= threshold, value, threshold, detail: detail.into() }
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} value={:.6e} threshold={:.6e}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.threshold
        )?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

/// One Monte Carlo estimate next to the solver value it was compared with.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRecord {
    pub policy: String,
    pub x: f64,
    /// Capital level; `None` for the fixed-size firm.
    pub k: Option<f64>,
    pub solver: f64,
    pub estimate: MCEstimate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckReport {
    pub checks: Vec<Check>,
    pub estimates: Vec<EstimateRecord>,
}

impl CheckReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    fn push(&mut self, c: Check) {
        self.checks.push(c);
    }
}

impl fmt::Display for CheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ValidateOptions {
    pub sim: SimSpec,
    /// Starting points for the 1D Monte Carlo check; `None` picks four
    /// points between `a` and `b`.
    pub probes_1d: Option<Vec<f64>>,
    pub grid_n: usize,
    pub extent: Option<(f64, f64)>,
    pub hjb: HjbOptions,
    pub mc_paths_2d: usize,
    pub dt_2d: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            sim: SimSpec::default(),
            probes_1d: None,
            grid_n: 128,
            extent: None,
            hjb: HjbOptions::default(),
            mc_paths_2d: 200,
            dt_2d: 2e-2,
        }
    }
}

/// Dispatches on the model: fixed size, frictionless investment, or the
/// two-dimensional problem.
pub fn validate_model(params: &ModelParams, opts: &ValidateOptions) -> Result<CheckReport> {
    if params.beta.is_none() {
        validate_fixed_size(params, opts)
    } else if params.gamma == 0.0 {
        validate_zero_cost(params)
    } else {
        validate_hjb(params, opts)
    }
}

pub fn validate_fixed_size(params: &ModelParams, opts: &ValidateOptions) -> Result<CheckReport> {
    let v = solve_no_investment(params)?;
    let mut rep = CheckReport::default();
    let Some(body) = &v.body else {
        rep.push(Check::at_most("liquidation.identity", 0.0, 0.0, "v(x) = x"));
        return Ok(rep);
    };
    let (a, b) = (v.a, v.b);
    let (wa, w1a, _) = body.w_at(a)?;
    rep.push(Check::at_most("anchor.value", (wa - a).abs(), 1e-8, format!("|w(a) - a| at a = {a:.6}")));
    if a > 0.0 {
        rep.push(Check::at_most("anchor.slope", (w1a - 1.0).abs(), 1e-6, "|w'(a) - 1|"));
    } else {
        rep.push(Check::at_least("anchor.slope", w1a - 1.0, -1e-9, "w'(0) - 1"));
    }
    let top = body.dense.len() - 1;
    let (w1b, w2b) = (body.dense.w1[top], body.dense.w2[top]);
    rep.push(Check::at_most("smooth_fit.slope", (w1b - 1.0).abs(), 1e-12, "|w'(b) - 1|"));
    rep.push(Check::at_most("smooth_fit.curvature", w2b.abs(), 1e-12, "|w''(b)|"));

    let n = 400;
    let mut min_slope = f64::INFINITY;
    let mut max_curv = f64::NEG_INFINITY;
    let mut sign_changes = 0;
    let mut last_sign = 0i8;
    for i in 1..n {
        let x = a + (b - a) * i as f64 / n as f64;
        let (_, w1, w2) = v.eval(x)?;
        min_slope = min_slope.min(w1 - 1.0);
        max_curv = max_curv.max(w2);
        let s = if w2 > 1e-10 {
            1
        } else if w2 < -1e-10 {
            -1
        } else {
            0
        };
        if s != 0 {
            if last_sign != 0 && s != last_sign {
                sign_changes += 1;
            }
            last_sign = s;
        }
    }
    rep.push(Check::at_least("shape.slope_above_one", min_slope, -1e-8, "min v' - 1 on (a, b)"));
    match v.regime {
        Regime1D::ConcaveNoDefault => {
            rep.push(Check::at_most("shape.concave", max_curv, 1e-8, "max v'' on (0, b)"));
        }
        _ => {
            rep.push(Check::at_most(
                "shape.single_inflection",
                sign_changes as f64,
                1.0,
                "sign changes of v'' on (a, b)",
            ));
        }
    }

    let probes =
        opts.probes_1d.clone().unwrap_or_else(|| [0.3, 0.5, 0.7, 0.9].iter().map(|f| a + f * (b - a)).collect());
    let est = simulate_1d_probes(params, a, b, &probes, &opts.sim)?;
    for (x, e) in probes.iter().zip(&est) {
        let target = v.value(*x)?;
        rep.push(Check::at_most(
            format!("mc.value[x={x:.4}]"),
            e.z_score(target),
            3.0,
            format!("solver {target:.6}, mc {:.6} +- {:.2e}", e.mean, e.std_error),
        ));
        rep.estimates.push(EstimateRecord {
            policy: "barrier".into(),
            x: *x,
            k: None,
            solver: target,
            estimate: e.clone(),
        });
        rep.push(Check::at_most(
            format!("mc.rel_se[x={x:.4}]"),
            e.std_error / target.abs().max(1e-300),
            5e-3,
            "SE / value",
        ));
    }
    Ok(rep)
}

/// Largest `|max_k L_k v| / max(1, v)` over probes in `(0, b)`, with `k` on
/// the grid `x j / (n_k / 2)`, `j < n_k`, which contains the kink `k = x`.
pub fn brute_force_optimality(
    params: &ModelParams,
    v: impl Fn(f64) -> Result<(f64, f64, f64)>,
    probes: &[f64],
    n_k: usize,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for &x in probes {
        let (w, w1, w2) = v(x)?;
        let mut best = f64::NEG_INFINITY;
        for i in 0..n_k {
            let k = x * i as f64 / (n_k / 2) as f64;
            best = best.max(generator(params, x, k, w, w1, w2)?);
        }
        worst = worst.max(best.abs() / w.max(1.0));
    }
    Ok(worst)
}

pub fn validate_zero_cost(params: &ModelParams) -> Result<CheckReport> {
    let sol = solve_zero_cost_relaxed(params, &ZeroCostOptions::default())?;
    let mut rep = CheckReport::default();
    if sol.case == ZeroCostCase::Liquidate {
        rep.push(Check::at_most("liquidation.identity", 0.0, 0.0, "v(x) = x"));
        return Ok(rep);
    }
    let beta = params.productivity()?;
    let s2 = params.sigma * params.sigma;
    if sol.case == ZeroCostCase::HighVol {
        let a = sol.a;
        rep.push(Check::at_most(
            "switch.equation",
            (s2 * (1.0 - sol.delta_exp) * beta.value(a) - params.mu * a).abs(),
            1e-9,
            format!("a = {a:.8}"),
        ));
        rep.push(Check::at_most("switch.capital", (sol.k_rule(a)? - a).abs(), 1e-8, "|k(a) - a|"));
        if let Some((a1, a2)) = sol.amplitude_bracket {
            let (lo, hi) = (a1.min(a2), a1.max(a2));
            let inside = sol.a_star >= lo && sol.a_star <= hi;
            rep.push(Check {
                name: "amplitude.bracket".into(),
                passed: inside,
                value: sol.a_star,
                threshold: hi,
                detail: format!("{lo:.6} <= A* <= {hi:.6}"),
            });
        }
    }
    let b = sol.b;
    let (_, v1b, v2b) = sol.value(b * (1.0 - 1e-12))?;
    rep.push(Check::at_most("smooth_fit.slope", (v1b - 1.0).abs(), 1e-6, "|v'(b) - 1|"));
    rep.push(Check::at_most("smooth_fit.curvature", v2b.abs(), 1e-6, "|v''(b)|"));
    let probes: Vec<f64> = (1..=20).map(|i| b * i as f64 / 21.0).collect();
    let worst = brute_force_optimality(params, |x| sol.value(x), &probes, 500)?;
    rep.push(Check::at_most("hjb.brute_force", worst, 1e-4, "max_k generator on a 500-point k grid"));
    if !sol.debt_cost_assumption_holds {
        rep.push(Check {
            name: "assumption.debt_cost".into(),
            passed: true,
            value: params.alpha.slope(0.0),
            threshold: params.mu * beta.slope_at_zero(),
            detail: "alpha'(0) <= mu beta'(0); construction outside its stated range".into(),
        });
    }
    Ok(rep)
}

pub fn validate_hjb(params: &ModelParams, opts: &ValidateOptions) -> Result<CheckReport> {
    let (xe, ke) = match opts.extent {
        Some(e) => e,
        None => default_extent(params)?,
    };
    let grid = Grid2D::square(params.gamma, xe.max(ke), opts.grid_n)?;
    let sol = solve_hjb(params, &grid, &opts.hjb)?;
    let policy = extract_policy(&sol);
    let g = &sol.grid;
    let mut rep = CheckReport::default();

    let boundary = (0..g.nk).map(|j| sol.value_at(g.gamma * g.k(j), g.k(j)).abs()).fold(0.0, f64::max);
    rep.push(Check::at_most("boundary.zero", boundary, 1e-12, "max |V| on x = gamma k"));
    let mut worst = [0.0f64; 4];
    for t in sol.node_terms() {
        for s in 1..4 {
            if let Some(v) = t[s] {
                worst[s] = worst[s].min(v);
            }
        }
    }
    rep.push(Check::at_least("constraint.dividend", worst[1], -1e-6, "min V_x - 1"));
    rep.push(Check::at_least("constraint.invest", worst[2], -1e-6, "min gamma V_x - V_k"));
    rep.push(Check::at_least("constraint.disinvest", worst[3], -1e-6, "min gamma V_x + V_k"));
    let missing: Vec<&str> = [Label::Continue, Label::PayDividend, Label::Invest, Label::Disinvest]
        .into_iter()
        .filter(|l| policy.count(*l) == 0)
        .map(|l| l.tag())
        .collect();
    rep.push(Check::at_most(
        "policy.all_labels",
        missing.len() as f64,
        0.0,
        if missing.is_empty() { String::new() } else { format!("missing {}", missing.join(", ")) },
    ));
    let mut top = 0.0f64;
    let mut on_credit = 0usize;
    for j in 0..g.nk {
        for i in 0..g.nx {
            if policy.label(i, j) == Label::Invest {
                top = top.max(g.k(j));
                if g.x(i) < g.k(j) - g.h {
                    on_credit += 1;
                }
            }
        }
    }
    rep.push(Check::at_most("policy.invest_from_cash", on_credit as f64, 0.0, "Invest nodes with x < k - h"));
    rep.push(Check::at_most("policy.interior_top", top, 0.5 * g.k_max(), "highest Invest k vs k_max / 2"));

    if opts.mc_paths_2d > 0 {
        let spec = SimSpec {
            dt: opts.dt_2d,
            n_paths: opts.mc_paths_2d,
            horizon: opts.sim.horizon,
            seed: opts.sim.seed,
            antithetic: opts.sim.antithetic,
            ..SimSpec::default()
        };
        // Richardson-style allowance for the discretisation error: the
        // scheme converges from below at roughly first order.
        let coarse_grid = Grid2D::square(params.gamma, g.h * (g.nx - 1) as f64, g.nx / 2 + 1)?;
        let coarse = solve_hjb(params, &coarse_grid, &opts.hjb)?;
        let fixed = static_policy(&policy);
        for &(fx, fk) in &[(0.05, 0.05), (0.1, 0.1), (0.2, 0.1), (0.2, 0.3), (0.4, 0.2)] {
            let (x, k) = (fx * g.x_max(), fk * g.k_max());
            let v = sol.value_at(x, k);
            let allowance = 2.0 * (v - coarse.value_at(x, k)).abs();
            let e = simulate_2d_policy(params, &policy, (x, k), &spec)?;
            rep.push(Check::at_most(
                format!("mc.policy_below_value[x={x:.2},k={k:.2}]"),
                e.mean - v,
                3.0 * e.std_error + allowance,
                format!("mc {:.4} +- {:.2e}, solver {v:.4}, allowance {allowance:.3}", e.mean, e.std_error),
            ));
            let s = simulate_2d_policy(params, &fixed, (x, k), &spec)?;
            rep.push(Check::at_most(
                format!("mc.static_below_policy[x={x:.2},k={k:.2}]"),
                s.mean - e.mean,
                3.0 * (s.std_error.powi(2) + e.std_error.powi(2)).sqrt(),
                format!("static {:.4}, policy {:.4}", s.mean, e.mean),
            ));
            rep.estimates.push(EstimateRecord { policy: "computed".into(), x, k: Some(k), solver: v, estimate: e });
            rep.estimates.push(EstimateRecord { policy: "static".into(), x, k: Some(k), solver: v, estimate: s });
        }
    }
    Ok(rep)
}
