//! Free boundaries of the fixed-size model and the assembled value function.

use std::cell::RefCell;
use std::collections::HashMap;

use crate::cauchy::{shoot_offset, solve_cauchy_with, CauchyOptions, CauchySolution};
use crate::error::{Error, Result};
use crate::model::{classify_regime_1d, ModelParams, Regime1D};
use crate::roots::{bisect, BisectOptions};

#[derive(Debug, Clone, Copy)]
pub struct FreeBoundaryOptions {
    pub root: BisectOptions,
    pub cauchy: CauchyOptions,
    /// `w'_{b_0}(0) >= 1 - tie_tol` selects the no-default branch.
    pub tie_tol: f64,
    /// Distance from 1 of the upper bracket end for the default threshold.
    pub upper_eps: f64,
}

impl Default for FreeBoundaryOptions {
    fn default() -> Self {
        FreeBoundaryOptions {
            root: BisectOptions::default(),
            cauchy: CauchyOptions::default(),
            tie_tol: 1e-9,
            upper_eps: 1e-6,
        }
    }
}

fn w_b_at(params: &ModelParams, b: f64, y: f64, opts: &FreeBoundaryOptions) -> Result<CauchySolution> {
    solve_cauchy_with(params, b, y, &opts.cauchy)
}

/// Dividend boundary `b*` with `w_{b*}(0) = 0`, for the concave regime.
pub fn find_b_star(params: &ModelParams) -> Result<f64> {
    find_b_star_with(params, &FreeBoundaryOptions::default())
}

pub fn find_b_star_with(params: &ModelParams, opts: &FreeBoundaryOptions) -> Result<f64> {
    let regime = classify_regime_1d(params)?;
    if regime != Regime1D::ConcaveNoDefault {
        return Err(Error::WrongBranch(format!("b* is defined for the concave regime, got {regime}")));
    }
    let hi = params.mu / params.r;
    let root = bisect(|b| shoot_offset(params, b, 0.0, 0.0, &opts.cauchy), 1.0, hi, opts.root)?;
    Ok(root.x)
}

/// The unique `b_y` in `(1, 1 + mu/r)` with `w_{b_y}(y) = y`.
pub fn find_b_y(params: &ModelParams, y: f64) -> Result<f64> {
    find_b_y_with(params, y, &FreeBoundaryOptions::default())
}

pub fn find_b_y_with(params: &ModelParams, y: f64, opts: &FreeBoundaryOptions) -> Result<f64> {
    if !(0.0..1.0).contains(&y) {
        return Err(Error::Domain(format!("y = {y} must lie in [0, 1)")));
    }
    let hi = 1.0 + params.mu / params.r;
    let g = |b: f64| shoot_offset(params, b, y, y, &opts.cauchy);
    let g_hi = g(hi)?;
    if g_hi >= 0.0 {
        return Err(Error::Bracket(format!("w_b(y) - y = {g_hi:e} is not negative at b = 1 + mu/r")));
    }
    Ok(bisect(g, 1.0, hi, opts.root)?.x)
}

/// Outer problem for the default threshold: `phi(x) = w'_{b_x}(x) - 1`,
/// memoizing the inner solves by abscissa.
struct DefaultSearch<'a> {
    params: &'a ModelParams,
    opts: &'a FreeBoundaryOptions,
    cache: RefCell<HashMap<u64, f64>>,
}

impl DefaultSearch<'_> {
    fn b_of(&self, x: f64) -> Result<f64> {
        if let Some(&b) = self.cache.borrow().get(&x.to_bits()) {
            return Ok(b);
        }
        let b = find_b_y_with(self.params, x, self.opts)?;
        self.cache.borrow_mut().insert(x.to_bits(), b);
        Ok(b)
    }

    fn phi(&self, x: f64) -> Result<f64> {
        let b = self.b_of(x)?;
        Ok(w_b_at(self.params, b, x, self.opts)?.w1_start() - 1.0)
    }
}

/// `phi(x) = w'_{b_x}(x) - 1`.
pub fn default_criterion(params: &ModelParams, x: f64, opts: &FreeBoundaryOptions) -> Result<f64> {
    DefaultSearch { params, opts, cache: RefCell::new(HashMap::new()) }.phi(x)
}

/// Strategic default pair `(a, b_a)`.
pub fn find_strategic_default(params: &ModelParams) -> Result<(f64, f64)> {
    find_strategic_default_with(params, &FreeBoundaryOptions::default())
}

pub fn find_strategic_default_with(params: &ModelParams, opts: &FreeBoundaryOptions) -> Result<(f64, f64)> {
    let regime = classify_regime_1d(params)?;
    if regime != Regime1D::ConvexConcaveCandidate {
        return Err(Error::WrongBranch(format!("strategic default needs the convex-concave regime, got {regime}")));
    }
    let search = DefaultSearch { params, opts, cache: RefCell::new(HashMap::new()) };
    let phi0 = search.phi(0.0)?;
    if phi0 >= -opts.tie_tol {
        return Err(Error::WrongBranch(format!("w'_(b_0)(0) - 1 = {phi0:e} >= 0: no strategic default")));
    }
    let mut hi = 1.0 - opts.upper_eps;
    let mut phi_hi = search.phi(hi)?;
    while phi_hi <= 0.0 && 1.0 - hi > 1e-12 {
        hi = 1.0 - (1.0 - hi) * 1e-2;
        phi_hi = search.phi(hi)?;
    }
    if phi_hi <= 0.0 {
        return Err(Error::Bracket(format!("phi stays negative up to x = {hi}: {phi_hi:e}")));
    }
    let root = bisect(|x| search.phi(x), 0.0, hi, opts.root)?;
    let b = search.b_of(root.x)?;
    Ok((root.x, b))
}

/// Value function of the fixed-size model.
#[derive(Debug, Clone)]
pub struct ValueFunction1D {
    pub regime: Regime1D,
    /// Liquidation threshold; 0 when the firm never defaults strategically.
    /// Meaningless for [`Regime1D::LiquidateImmediately`].
    pub a: f64,
    /// Dividend threshold; 0 for immediate liquidation.
    pub b: f64,
    pub body: Option<CauchySolution>,
}

impl ValueFunction1D {
    pub fn liquidates_immediately(&self) -> bool {
        self.regime == Regime1D::LiquidateImmediately
    }

    /// `true` when shareholders default voluntarily below some `a > 0`.
    pub fn has_strategic_default(&self) -> bool {
        !self.liquidates_immediately() && self.a > 0.0
    }

    /// `(v, v', v'')` at `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64)> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("x = {x} must be nonnegative")));
        }
        match &self.body {
            None => Ok((x, 1.0, 0.0)),
            Some(body) => {
                if x < self.a {
                    Ok((x, 1.0, 0.0))
                } else {
                    body.w_at(x)
                }
            }
        }
    }

    pub fn value(&self, x: f64) -> Result<f64> {
        self.eval(x).map(|v| v.0)
    }

    /// `v(b)`, the value at the dividend threshold.
    pub fn value_at_b(&self) -> f64 {
        self.body.as_ref().map_or(self.b, |s| s.w_b())
    }
}

pub fn solve_no_investment(params: &ModelParams) -> Result<ValueFunction1D> {
    solve_no_investment_with(params, &FreeBoundaryOptions::default())
}

pub fn solve_no_investment_with(params: &ModelParams, opts: &FreeBoundaryOptions) -> Result<ValueFunction1D> {
    params.ensure_valid()?;
    let regime = classify_regime_1d(params)?;
    match regime {
        Regime1D::LiquidateImmediately => Ok(ValueFunction1D { regime, a: 0.0, b: 0.0, body: None }),
        Regime1D::ConcaveNoDefault => {
            let b = find_b_star_with(params, opts)?;
            Ok(ValueFunction1D { regime, a: 0.0, b, body: Some(w_b_at(params, b, 0.0, opts)?) })
        }
        Regime1D::ConvexConcaveCandidate => {
            let b0 = find_b_y_with(params, 0.0, opts)?;
            let body0 = w_b_at(params, b0, 0.0, opts)?;
            if body0.w1_start() >= 1.0 - opts.tie_tol {
                return Ok(ValueFunction1D { regime, a: 0.0, b: b0, body: Some(body0) });
            }
            let (a, b) = find_strategic_default_with(params, opts)?;
            Ok(ValueFunction1D { regime, a, b, body: Some(w_b_at(params, b, a, opts)?) })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn b_star_in_bracket_and_root() {
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.10);
        let b = find_b_star(&p).unwrap();
        assert!(b > 1.0 && b < 12.5);
        let w0 = solve_cauchy_with(&p, b, 0.0, &CauchyOptions::default()).unwrap().w_start();
        assert!(w0.abs() < 1e-9, "{w0}");
    }

    #[test]
    fn b_star_rejected_in_other_regimes() {
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.8);
        assert!(matches!(find_b_star(&p), Err(Error::WrongBranch(_))));
    }

    #[test]
    fn liquidation_is_identity() {
        let p = ModelParams::fixed_size(0.01, 0.3, 0.02, 0.1);
        let v = solve_no_investment(&p).unwrap();
        for x in [0.0, 0.3, 2.0, 50.0] {
            assert_eq!(v.value(x).unwrap(), x);
        }
    }

    #[test]
    fn expensive_credit_defaults_strategically() {
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.8);
        let v = solve_no_investment(&p).unwrap();
        assert_eq!(v.regime, Regime1D::ConvexConcaveCandidate);
        assert!(v.a >= 0.0 && v.a < 1.0);
        assert!(v.b < 12.5);
        let (va, _, _) = v.eval(v.a).unwrap();
        assert!((va - v.a).abs() < 1e-9);
        let (_, v1, v2) = v.eval(v.b).unwrap();
        assert_eq!((v1, v2), (1.0, 0.0));
    }

    #[test]
    fn b_y_matches_defining_equation() {
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.8);
        let y = 0.3;
        let b = find_b_y(&p, y).unwrap();
        let w = solve_cauchy_with(&p, b, y, &CauchyOptions::default()).unwrap().w_start();
        assert!((w - y).abs() < 1e-10);
        assert!(b > 1.0 && b < 13.5);
    }
}
