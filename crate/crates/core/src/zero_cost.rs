//! Investment model with frictionless capital adjustment (`gamma = 0`).
//!
//! Capital then becomes a control chosen pointwise, and the value solves
//!
//!   max_k [ (beta(k) mu - alpha((k-x)^+)) v' + sigma^2 beta(k)^2 / 2 v'' ] = r v
//!
//! on `(0, b)` with `v(0) = 0`, `v'(b) = 1`, `v''(b) = 0`. When debt is
//! expensive the firm never borrows to invest, and the unconstrained optimum
//! `beta(k) = -mu v' / (sigma^2 v'')` is either interior (power solution
//! `A x^delta`) or capped at `k = x`.

use crate::error::{Error, Result};
use crate::model::{ModelParams, ProductivitySpec};
use crate::ode::{hermite, integrate, integrate_until, DenseSolution, OdeOptions, State};
use crate::roots::{bisect, BisectOptions};
use crate::series;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ZeroCostCase {
    Liquidate,
    HighVol,
    LowVol,
}

impl ZeroCostCase {
    pub fn tag(self) -> &'static str {
        match self {
            ZeroCostCase::Liquidate => "liquidate",
            ZeroCostCase::HighVol => "high_vol",
            ZeroCostCase::LowVol => "low_vol",
        }
    }
}

impl std::fmt::Display for ZeroCostCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Exponent of the power solution near zero, `2 r sigma^2 / (mu^2 + 2 r sigma^2)`.
pub fn delta_exponent(mu: f64, sigma: f64, r: f64) -> f64 {
    let s2 = sigma * sigma;
    2.0 * r * s2 / (mu * mu + 2.0 * r * s2)
}

/// `(beta(k) mu - alpha((k-x)^+)) v' + sigma^2 beta(k)^2 / 2 v'' - r v`.
pub fn generator(params: &ModelParams, x: f64, k: f64, v: f64, v1: f64, v2: f64) -> Result<f64> {
    let beta = params.productivity()?.value(k);
    let drift = beta * params.mu - params.alpha.value((k - x).max(0.0));
    Ok(drift * v1 + 0.5 * params.sigma * params.sigma * beta * beta * v2 - params.r * v)
}

fn check_zero_cost(params: &ModelParams) -> Result<&ProductivitySpec> {
    params.ensure_valid()?;
    if params.gamma != 0.0 {
        return Err(Error::InvalidParams(format!(
            "gamma = {} but the frictionless model needs gamma = 0",
            params.gamma
        )));
    }
    params.productivity()
}

fn case_unchecked(params: &ModelParams, beta: &ProductivitySpec) -> ZeroCostCase {
    let b0 = beta.slope_at_zero();
    let delta = delta_exponent(params.mu, params.sigma, params.r);
    if params.mu * b0 <= params.r {
        ZeroCostCase::Liquidate
    } else if params.sigma * params.sigma * b0 >= params.mu / (1.0 - delta) {
        ZeroCostCase::HighVol
    } else {
        ZeroCostCase::LowVol
    }
}

/// Whether `alpha'(0) > mu beta'(0)`, i.e. borrowing to invest never pays.
pub fn debt_cost_assumption_holds(params: &ModelParams) -> Result<bool> {
    let beta = params.productivity()?;
    Ok(params.alpha.slope(0.0) > params.mu * beta.slope_at_zero())
}

pub fn classify_zero_cost(params: &ModelParams) -> Result<ZeroCostCase> {
    let beta = check_zero_cost(params)?;
    let case = case_unchecked(params, beta);
    if case != ZeroCostCase::Liquidate && !debt_cost_assumption_holds(params)? {
        return Err(Error::Uncovered(format!(
            "alpha'(0) = {} <= mu beta'(0) = {}: cheap debt has no known construction",
            params.alpha.slope(0.0),
            params.mu * beta.slope_at_zero()
        )));
    }
    Ok(case)
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroCostOptions {
    pub ode: OdeOptions,
    pub root: BisectOptions,
    /// Integration cap for the inflection search, as a multiple of `mu beta_max / r`.
    pub cap_factor: f64,
    /// Frobenius truncation order.
    pub order: usize,
    /// Tail tolerance defining the series trust radius.
    pub tail_tol: f64,
}

impl Default for ZeroCostOptions {
    fn default() -> Self {
        ZeroCostOptions {
            ode: OdeOptions { max_step: 0.01, ..OdeOptions::default() },
            root: BisectOptions::default(),
            cap_factor: 10.0,
            order: 40,
            tail_tol: 1e-12,
        }
    }
}

/// Frobenius data of the low-volatility solution `w_1 = sum A_k x^(k+y1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrobeniusSeries {
    pub y1: f64,
    pub coeffs: Vec<f64>,
    /// Convergence radius of `x / beta(x)`.
    pub radius: f64,
    /// Series is trusted on `[0, trust_radius]`.
    pub trust_radius: f64,
}

impl FrobeniusSeries {
    /// `(w, w', w'')` of the unit-amplitude series at `x > 0`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (k, a) in self.coeffs.iter().enumerate().rev() {
            let e = k as f64 + self.y1;
            s0 = s0 * x + a;
            s1 = s1 * x + a * e;
            s2 = s2 * x + a * e * (e - 1.0);
        }
        let p = x.powf(self.y1);
        (s0 * p, s1 * p / x, s2 * p / (x * x))
    }

    /// `|A_k| rho^k` for every `k`.
    pub fn term_sizes(&self, rho: f64) -> Vec<f64> {
        self.coeffs.iter().enumerate().map(|(k, a)| a.abs() * rho.powi(k as i32)).collect()
    }
}

/// Solution of the frictionless investment model.
#[derive(Debug, Clone)]
pub struct ZeroCostSolution {
    pub case: ZeroCostCase,
    pub delta_exp: f64,
    /// Switch from interior capital to `k = x`; 0 in the low-volatility case.
    pub a: f64,
    pub a_star: f64,
    pub b: f64,
    /// Amplitude bracket `(A_1, A_2)` of the high-volatility construction.
    pub amplitude_bracket: Option<(f64, f64)>,
    pub series: Option<FrobeniusSeries>,
    /// Left end of the numerically integrated part of the body.
    pub x_join: f64,
    /// Unit-amplitude ODE solution on `[x_join, b]`.
    pub body: Option<DenseSolution>,
    pub debt_cost_assumption_holds: bool,
    params: ModelParams,
}

fn continuation_rhs(params: &ModelParams) -> Result<impl Fn(f64, &State) -> State + '_> {
    let beta = params.productivity()?;
    let s2 = params.sigma * params.sigma;
    Ok(move |x: f64, y: &State| {
        let bx = beta.value(x);
        [y[1], 2.0 * (params.r * y[0] - params.mu * bx * y[1]) / (s2 * bx * bx)]
    })
}

impl ZeroCostSolution {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn continuation_w2(&self, x: f64, w: f64, w1: f64) -> f64 {
        let beta = self.params.productivity().expect("checked at construction");
        let bx = beta.value(x);
        let s2 = self.params.sigma * self.params.sigma;
        2.0 * (self.params.r * w - self.params.mu * bx * w1) / (s2 * bx * bx)
    }

    /// Unit-amplitude `(w, w', w'')` on `(0, b]`.
    fn unit(&self, x: f64) -> (f64, f64, f64) {
        if x < self.x_join {
            if let Some(s) = &self.series {
                return s.eval(x);
            }
            let d = self.delta_exp;
            let p = x.powf(d);
            return (p, d * p / x, d * (d - 1.0) * p / (x * x));
        }
        let body = self.body.as_ref().expect("body present when x_join < b");
        if let Some(i) = body.node_index(x) {
            return (body.w[i], body.w1[i], body.w2[i]);
        }
        let (w, w1) = body.eval(x);
        (w, w1, self.continuation_w2(x, w, w1))
    }

    /// `(v, v', v'')` at `x`.
    pub fn value(&self, x: f64) -> Result<(f64, f64, f64)> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("x = {x} must be nonnegative")));
        }
        if self.case == ZeroCostCase::Liquidate {
            return Ok((x, 1.0, 0.0));
        }
        if x >= self.b {
            return Ok((x - self.b + self.value_at_b(), 1.0, 0.0));
        }
        if x == 0.0 {
            return Ok((0.0, f64::INFINITY, f64::NEG_INFINITY));
        }
        let (w, w1, w2) = self.unit(x);
        Ok((self.a_star * w, self.a_star * w1, self.a_star * w2))
    }

    /// `v(b) = mu beta(b) / r`.
    pub fn value_at_b(&self) -> f64 {
        match &self.body {
            Some(body) => self.a_star * body.w[body.len() - 1],
            None => self.b,
        }
    }

    /// Optimal capital at cash level `x`.
    pub fn k_rule(&self, x: f64) -> Result<f64> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("x = {x} must be nonnegative")));
        }
        match self.case {
            ZeroCostCase::Liquidate => Ok(0.0),
            ZeroCostCase::LowVol => Ok(x),
            ZeroCostCase::HighVol => {
                if x >= self.a {
                    Ok(x)
                } else {
                    let s2 = self.params.sigma * self.params.sigma;
                    let target = self.params.mu * x / (s2 * (1.0 - self.delta_exp));
                    self.params.productivity()?.inverse(target)
                }
            }
        }
    }
}

/// Solves `sigma^2 (1 - delta) beta(a) = mu a` for `a > 0`.
pub fn switch_point(params: &ModelParams, opts: &ZeroCostOptions) -> Result<f64> {
    let beta = params.productivity()?;
    let delta = delta_exponent(params.mu, params.sigma, params.r);
    let c = params.sigma * params.sigma * (1.0 - delta);
    if c * beta.slope_at_zero() <= params.mu {
        return Err(Error::WrongBranch("interior capital region is empty: sigma^2 (1-delta) beta'(0) <= mu".into()));
    }
    let g = |a: f64| Ok(c * beta.value(a) - params.mu * a);
    let hi = c * beta.sup() / params.mu;
    let mut lo = hi * 1e-3;
    while g(lo)? <= 0.0 {
        lo *= 1e-3;
        if lo < 1e-300 {
            return Err(Error::Bracket("no positive root for the switch point".into()));
        }
    }
    let root = bisect(g, lo, hi, opts.root)?;
    Ok(root.x)
}

/// Integrates the `k = x` continuation from `(x0, y0)` and returns the
/// trajectory up to the first zero of `w''`, which becomes the last node.
fn continue_to_inflection(
    params: &ModelParams,
    x0: f64,
    y0: State,
    opts: &ZeroCostOptions,
) -> Result<(DenseSolution, f64)> {
    let f = continuation_rhs(params)?;
    let beta = params.productivity()?;
    let cap = opts.cap_factor * params.mu * beta.sup() / params.r;
    let (traj, hit) = integrate_until(&f, x0, y0, cap.max(2.0 * x0), &[], &opts.ode, |_, _, dy| dy[1] >= 0.0)?;
    if !hit {
        return Err(Error::NoInflection { cap });
    }
    let n = traj.x.len();
    let (xl, xr) = (traj.x[n - 2], traj.x[n - 1]);
    let (yl, yr) = (traj.y[n - 2], traj.y[n - 1]);
    let (dl, dr) = (traj.dy[n - 2], traj.dy[n - 1]);
    let w2_at = |t: f64| {
        let w = hermite(xl, xr, yl[0], yr[0], dl[0], dr[0], t);
        let w1 = hermite(xl, xr, yl[1], yr[1], dl[1], dr[1], t);
        f(t, &[w, w1])[1]
    };
    let b = if dr[1] == 0.0 { xr } else { bisect(|t| Ok(w2_at(t)), xl, xr, opts.root)?.x };
    // Re-integrate onto b so that it is a node.
    let traj = integrate(&f, x0, y0, b, &[], &opts.ode)?;
    Ok((DenseSolution::from_trajectory(&traj), b))
}

pub fn solve_high_vol(params: &ModelParams) -> Result<ZeroCostSolution> {
    solve_high_vol_with(params, &ZeroCostOptions::default())
}

/// High-volatility construction. Requires `mu beta'(0) > r` and the
/// volatility inequality; the debt-cost assumption is only recorded.
pub fn solve_high_vol_with(params: &ModelParams, opts: &ZeroCostOptions) -> Result<ZeroCostSolution> {
    let beta = check_zero_cost(params)?;
    let case = case_unchecked(params, beta);
    if case != ZeroCostCase::HighVol {
        return Err(Error::WrongBranch(format!("high-volatility solver called in case {case}")));
    }
    let delta = delta_exponent(params.mu, params.sigma, params.r);
    let a = switch_point(params, opts)?;
    let y0 = [a.powf(delta), delta * a.powf(delta - 1.0)];
    let (body, b) = continue_to_inflection(params, a, y0, opts)?;
    // The problem is linear in the amplitude.
    let a_star = 1.0 / body.w1[body.len() - 1];
    let a1 = params.mu * beta.sup() / (params.r * a.powf(delta));
    let a2 = a.powf(1.0 - delta) / delta;
    Ok(ZeroCostSolution {
        case,
        delta_exp: delta,
        a,
        a_star,
        b,
        amplitude_bracket: Some((a1, a2)),
        series: None,
        x_join: a,
        body: Some(body),
        debt_cost_assumption_holds: debt_cost_assumption_holds(params)?,
        params: params.clone(),
    })
}

/// Indicial root `y1` of the low-volatility series.
pub fn indicial_root(params: &ModelParams) -> Result<f64> {
    let b0 = params.productivity()?.slope_at_zero();
    let s2 = params.sigma * params.sigma;
    let m = s2 * b0 / 2.0 - params.mu;
    Ok((m + (m * m + 2.0 * params.r * s2).sqrt()) / (s2 * b0))
}

/// Frobenius coefficients `A_0..=A_order` of `w_1`, with `A_0 = 1`.
pub fn frobenius_series(params: &ModelParams, order: usize, tail_tol: f64) -> Result<FrobeniusSeries> {
    let beta = params.productivity()?;
    let n = order + 1;
    let s2 = params.sigma * params.sigma;
    let (ratio, radius) = beta.ratio_series(order);
    let inv = series::reciprocal(&ratio, n)?; // x / beta(x)
    let p = series::scale(&inv, 2.0 * params.mu / s2);
    let q = series::scale(&series::mul(&inv, &inv, n), -2.0 * params.r / s2);
    let y1 = indicial_root(params)?;
    let indicial = |y: f64| y * (y - 1.0) + p[0] * y + q[0];
    let mut coeffs = vec![0.0; n];
    coeffs[0] = 1.0;
    for k in 1..n {
        let fk = indicial(k as f64 + y1);
        if fk.abs() < 1e-14 {
            return Err(Error::Resonance { k });
        }
        let mut s = 0.0;
        for j in 0..k {
            s += ((j as f64 + y1) * p[k - j] + q[k - j]) * coeffs[j];
        }
        coeffs[k] = -s / fk;
    }
    let last = coeffs[order].abs();
    let rho_decay = if last == 0.0 || order == 0 { f64::INFINITY } else { (tail_tol / last).powf(1.0 / order as f64) };
    let trust_radius = (0.75 * radius).min(rho_decay);
    let out = FrobeniusSeries { y1, coeffs, radius, trust_radius };
    if trust_radius.is_finite() {
        let sizes = out.term_sizes(trust_radius);
        let tail = sizes[n.saturating_sub(5)..].iter().cloned().fold(0.0, f64::max);
        if !(tail <= 1e3 * tail_tol) {
            return Err(Error::Series(format!("terms not decaying at trust radius {trust_radius}: tail {tail:e}")));
        }
    }
    Ok(out)
}

pub fn frobenius_solve(params: &ModelParams, order: usize) -> Result<ZeroCostSolution> {
    frobenius_solve_with(params, &ZeroCostOptions { order, ..ZeroCostOptions::default() })
}

/// Low-volatility construction: the series near zero, continued by the
/// ODE once the series leaves its trust radius.
pub fn frobenius_solve_with(params: &ModelParams, opts: &ZeroCostOptions) -> Result<ZeroCostSolution> {
    let beta = check_zero_cost(params)?;
    let case = case_unchecked(params, beta);
    if case != ZeroCostCase::LowVol {
        return Err(Error::WrongBranch(format!("series solver called in case {case}")));
    }
    let delta = delta_exponent(params.mu, params.sigma, params.r);
    let series = frobenius_series(params, opts.order, opts.tail_tol)?;
    let cap = opts.cap_factor * params.mu * beta.sup() / params.r;
    let x_join = series.trust_radius.min(cap);
    // Continue from the middle of the trusted range.
    let x0 = 0.5 * x_join;
    let (w, w1, w2) = series.eval(x0);
    let (body, b) = if w2 >= 0.0 {
        // Inflection inside the trusted range: locate it on the series.
        let lo = series.trust_radius * 1e-6;
        let hi = x0;
        let root = bisect(|t| Ok(series.eval(t).2), lo, hi, opts.root)?;
        let (wb, wb1, _) = series.eval(root.x);
        let dense = DenseSolution { x: vec![root.x], w: vec![wb], w1: vec![wb1], w2: vec![0.0] };
        (dense, root.x)
    } else {
        continue_to_inflection(params, x0, [w, w1], opts)?
    };
    let x_join = body.x_min();
    let a_star = 1.0 / body.w1[body.len() - 1];
    Ok(ZeroCostSolution {
        case,
        delta_exp: delta,
        a: 0.0,
        a_star,
        b,
        amplitude_bracket: None,
        series: Some(series),
        x_join,
        body: Some(body),
        debt_cost_assumption_holds: debt_cost_assumption_holds(params)?,
        params: params.clone(),
    })
}

/// Dispatches on the case split.
pub fn solve_zero_cost(params: &ModelParams) -> Result<ZeroCostSolution> {
    solve_zero_cost_with(params, &ZeroCostOptions::default())
}

pub fn solve_zero_cost_with(params: &ModelParams, opts: &ZeroCostOptions) -> Result<ZeroCostSolution> {
    classify_zero_cost(params)?;
    solve_zero_cost_relaxed(params, opts)
}

/// Like [`solve_zero_cost_with`] but also runs the construction when debt is
/// cheaper than the marginal product at zero; check
/// `debt_cost_assumption_holds` on the result.
pub fn solve_zero_cost_relaxed(params: &ModelParams, opts: &ZeroCostOptions) -> Result<ZeroCostSolution> {
    let case = case_unchecked(params, check_zero_cost(params)?);
    match case {
        ZeroCostCase::Liquidate => Ok(ZeroCostSolution {
            case,
            delta_exp: delta_exponent(params.mu, params.sigma, params.r),
            a: 0.0,
            a_star: 1.0,
            b: 0.0,
            amplitude_bracket: None,
            series: None,
            x_join: 0.0,
            body: None,
            debt_cost_assumption_holds: debt_cost_assumption_holds(params)?,
            params: params.clone(),
        }),
        ZeroCostCase::HighVol => solve_high_vol_with(params, opts),
        ZeroCostCase::LowVol => frobenius_solve_with(params, opts),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig4(beta_prime0: f64) -> ModelParams {
        ModelParams::with_investment(0.25, 0.6, 0.02, 0.8, 5.0, beta_prime0, 0.0)
    }

    #[test]
    fn delta_for_reference_parameters() {
        let d = delta_exponent(0.25, 0.6, 0.02);
        assert!((d - 0.0144 / 0.0769).abs() < 1e-15);
    }

    #[test]
    fn case_split() {
        assert_eq!(classify_zero_cost(&fig4(2.0)).unwrap(), ZeroCostCase::HighVol);
        assert_eq!(classify_zero_cost(&fig4(0.5)).unwrap(), ZeroCostCase::LowVol);
        assert_eq!(classify_zero_cost(&fig4(0.04)).unwrap(), ZeroCostCase::Liquidate);
        assert!(matches!(classify_zero_cost(&fig4(4.0)), Err(Error::Uncovered(_))));
        let mut p = fig4(2.0);
        p.gamma = 1e-3;
        assert!(classify_zero_cost(&p).is_err());
    }

    #[test]
    fn high_vol_threshold_and_fit() {
        let p = fig4(2.0);
        let s = solve_high_vol(&p).unwrap();
        let beta = p.productivity().unwrap();
        let lhs = 0.36 * (1.0 - s.delta_exp) * beta.value(s.a);
        assert!((lhs - 0.25 * s.a).abs() < 1e-9);
        assert!((s.k_rule(s.a).unwrap() - s.a).abs() < 1e-8);
        let (_, v1, v2) = s.value(s.b * (1.0 - 1e-12)).unwrap();
        assert!((v1 - 1.0).abs() < 1e-8 && v2.abs() < 1e-6, "{v1} {v2}");
        assert!(0.25 * beta.slope(s.b) <= 0.02 + 1e-12);
        let (a1, a2) = s.amplitude_bracket.unwrap();
        assert!(a2 <= s.a_star && s.a_star <= a1, "{a2} {} {a1}", s.a_star);
    }

    #[test]
    fn high_vol_is_continuous_at_switch() {
        let s = solve_high_vol(&fig4(2.0)).unwrap();
        let l = s.value(s.a * (1.0 - 1e-9)).unwrap();
        let r = s.value(s.a).unwrap();
        assert!((l.0 - r.0).abs() < 1e-8 && (l.1 - r.1).abs() < 1e-6);
    }

    #[test]
    fn low_vol_series_has_exponent_below_one() {
        let s = frobenius_solve(&fig4(0.5), 40).unwrap();
        let series = s.series.as_ref().unwrap();
        assert!(series.y1 < 1.0 && series.y1 > 0.0);
        assert_eq!(s.k_rule(0.3).unwrap(), 0.3);
        let (_, v1, _) = s.value(s.b).unwrap();
        assert_eq!(v1, 1.0);
    }

    #[test]
    fn linear_productivity_gives_pure_power() {
        let mut p = fig4(0.5);
        p.beta = Some(ProductivitySpec::TableConcave { knots: vec![(0.0, 0.0), (100.0, 50.0), (200.0, 60.0)] });
        let s = frobenius_series(&p, 10, 1e-12).unwrap();
        assert_eq!(s.coeffs[0], 1.0);
        assert!(s.coeffs[1..].iter().all(|&c| c == 0.0));
    }
}
