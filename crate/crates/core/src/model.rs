//! Economic primitives shared by every solver.
//!
//! A firm is described by its cash-flow drift `mu` and volatility `sigma`,
//! the risk-free rate `r`, the interest cost `alpha(l)` of an amount `l`
//! drawn on the credit line, and optionally a bounded concave productivity
//! `beta(k)` of capital together with a proportional adjustment cost
//! `gamma`. Without `beta` the firm has a single unit of productive assets.

use std::fmt;

use crate::error::{Error, Result};

/// Interest cost of the drawn credit line, in cash-flow per unit time.
#[derive(Debug, Clone, PartialEq)]
pub enum SpreadSpec {
    /// `alpha(l) = lambda * l`.
    Linear { lambda: f64 },
    /// Piecewise linear interpolation of `(debt, rate)` knots, starting at
    /// `(0, 0)`; extended beyond the last knot with the last slope.
    TableConvex { knots: Vec<(f64, f64)> },
}

impl SpreadSpec {
    pub fn linear(lambda: f64) -> Self {
        SpreadSpec::Linear { lambda }
    }

    /// Evaluates `alpha(l)`; negative arguments are clamped to zero.
    pub fn value(&self, l: f64) -> f64 {
        let l = l.max(0.0);
        match self {
            SpreadSpec::Linear { lambda } => lambda * l,
            SpreadSpec::TableConvex { knots } => piecewise_linear(knots, l, true),
        }
    }

    /// Right derivative of `alpha` at `l`.
    pub fn slope(&self, l: f64) -> f64 {
        let l = l.max(0.0);
        match self {
            SpreadSpec::Linear { lambda } => *lambda,
            SpreadSpec::TableConvex { knots } => piecewise_slope(knots, l, true),
        }
    }

    /// Interior knot abscissas where the derivative jumps.
    pub fn kinks(&self) -> Vec<f64> {
        match self {
            SpreadSpec::Linear { .. } => Vec::new(),
            SpreadSpec::TableConvex { knots } => knots.iter().map(|&(d, _)| d).filter(|&d| d > 0.0).collect(),
        }
    }

    fn check(&self, r: f64, report: &mut ValidationReport) {
        match self {
            SpreadSpec::Linear { lambda } => {
                if !lambda.is_finite() {
                    report.push("alpha", "lambda must be finite");
                } else if *lambda < r {
                    report.push("alpha", format!("α'(x) ≥ r fails: lambda = {lambda} < r = {r}"));
                }
            }
            SpreadSpec::TableConvex { knots } => {
                if knots.len() < 2 {
                    report.push("alpha", "table needs at least two knots");
                    return;
                }
                if knots.iter().any(|&(d, v)| !d.is_finite() || !v.is_finite()) {
                    report.push("alpha", "table knots must be finite");
                    return;
                }
                if knots[0] != (0.0, 0.0) {
                    report.push("alpha", "α(0) = 0 fails: first knot must be (0, 0)");
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    report.push("alpha", "knot abscissas must be strictly increasing");
                    return;
                }
                let slopes = segment_slopes(knots);
                if slopes.windows(2).any(|s| s[1] < s[0] - 1e-14 * s[0].abs().max(1.0)) {
                    report.push("alpha", "convexity fails: segment slopes decrease");
                }
                if let Some(s) = slopes.iter().find(|&&s| s < r) {
                    report.push("alpha", format!("α'(x) ≥ r fails: segment slope {s} < r = {r}"));
                }
            }
        }
    }
}

/// Productivity of capital `beta(k)`: increasing, concave, bounded, zero at zero.
#[derive(Debug, Clone, PartialEq)]
pub enum ProductivitySpec {
    /// `beta(k) = beta_max * (1 - exp(-beta_prime0 * k / beta_max))`.
    Exponential { beta_max: f64, beta_prime0: f64 },
    /// Piecewise linear through `(capital, output)` knots starting at `(0, 0)`,
    /// flat beyond the last knot.
    TableConcave { knots: Vec<(f64, f64)> },
}

impl ProductivitySpec {
    pub fn exponential(beta_max: f64, beta_prime0: f64) -> Self {
        ProductivitySpec::Exponential { beta_max, beta_prime0 }
    }

    pub fn value(&self, k: f64) -> f64 {
        let k = k.max(0.0);
        match self {
            ProductivitySpec::Exponential { beta_max, beta_prime0 } => {
                -beta_max * (-beta_prime0 * k / beta_max).exp_m1()
            }
            ProductivitySpec::TableConcave { knots } => piecewise_linear(knots, k, false),
        }
    }

    /// Right derivative of `beta` at `k`.
    pub fn slope(&self, k: f64) -> f64 {
        let k = k.max(0.0);
        match self {
            ProductivitySpec::Exponential { beta_max, beta_prime0 } => {
                beta_prime0 * (-beta_prime0 * k / beta_max).exp()
            }
            ProductivitySpec::TableConcave { knots } => piecewise_slope(knots, k, false),
        }
    }

    pub fn slope_at_zero(&self) -> f64 {
        self.slope(0.0)
    }

    /// Least upper bound of `beta`.
    pub fn sup(&self) -> f64 {
        match self {
            ProductivitySpec::Exponential { beta_max, .. } => *beta_max,
            ProductivitySpec::TableConcave { knots } => knots.last().map_or(0.0, |k| k.1),
        }
    }

    /// Inverse of `beta` on `[0, sup)` by monotone bisection.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        if y >= self.sup() {
            return Err(Error::Domain(format!("beta^-1({y}) undefined: beta is bounded by {}", self.sup())));
        }
        let mut hi = 1.0;
        while self.value(hi) < y {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::Domain(format!("beta^-1({y}) out of range")));
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.value(mid) < y {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Taylor coefficients of `beta(x)/x` at zero, up to `order` inclusive,
    /// together with the convergence radius of `x/beta(x)`.
    pub fn ratio_series(&self, order: usize) -> (Vec<f64>, f64) {
        match self {
            ProductivitySpec::Exponential { beta_max, beta_prime0 } => {
                // beta(x)/x = c * sum_n (-u)^n/(n+1)!, u = c x / beta_max.
                let scale = beta_prime0 / beta_max;
                let mut coeffs = Vec::with_capacity(order + 1);
                let mut term = *beta_prime0;
                for n in 0..=order {
                    coeffs.push(term);
                    term *= -scale / (n as f64 + 2.0);
                }
                // u / (1 - e^-u) has its nearest poles at u = ±2πi.
                let radius = 2.0 * std::f64::consts::PI * beta_max / beta_prime0;
                (coeffs, radius)
            }
            ProductivitySpec::TableConcave { knots } => {
                let mut coeffs = vec![0.0; order + 1];
                coeffs[0] = knots[1].1 / knots[1].0;
                (coeffs, knots[1].0)
            }
        }
    }

    fn check(&self, report: &mut ValidationReport) {
        match self {
            ProductivitySpec::Exponential { beta_max, beta_prime0 } => {
                if !(beta_max.is_finite() && *beta_max > 0.0) {
                    report.push("beta", "beta_max must be positive and finite");
                }
                if !(beta_prime0.is_finite() && *beta_prime0 > 0.0) {
                    report.push("beta", "beta'(0) must be positive and finite");
                }
            }
            ProductivitySpec::TableConcave { knots } => {
                if knots.len() < 2 {
                    report.push("beta", "table needs at least two knots");
                    return;
                }
                if knots.iter().any(|&(d, v)| !d.is_finite() || !v.is_finite()) {
                    report.push("beta", "table knots must be finite");
                    return;
                }
                if knots[0] != (0.0, 0.0) {
                    report.push("beta", "β(0) = 0 fails: first knot must be (0, 0)");
                }
                if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
                    report.push("beta", "knot abscissas must be strictly increasing");
                    return;
                }
                let slopes = segment_slopes(knots);
                if slopes.iter().any(|&s| s <= 0.0) {
                    report.push("beta", "monotonicity fails: segment slopes must be positive");
                }
                if slopes.windows(2).any(|s| s[1] > s[0] + 1e-14 * s[0].abs().max(1.0)) {
                    report.push("beta", "concavity fails: segment slopes increase");
                }
            }
        }
    }
}

/// Model parameters. All rates are annual.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub alpha: SpreadSpec,
    /// `None` is the fixed-size firm with one unit of productive assets.
    pub beta: Option<ProductivitySpec>,
    pub gamma: f64,
}

impl ModelParams {
    /// Fixed-size firm with a linear spread.
    pub fn fixed_size(mu: f64, sigma: f64, r: f64, lambda: f64) -> Self {
        ModelParams { mu, sigma, r, alpha: SpreadSpec::linear(lambda), beta: None, gamma: 0.0 }
    }

    /// Investment model with a linear spread and exponential productivity.
    pub fn with_investment(
        mu: f64,
        sigma: f64,
        r: f64,
        lambda: f64,
        beta_max: f64,
        beta_prime0: f64,
        gamma: f64,
    ) -> Self {
        ModelParams {
            mu,
            sigma,
            r,
            alpha: SpreadSpec::linear(lambda),
            beta: Some(ProductivitySpec::exponential(beta_max, beta_prime0)),
            gamma,
        }
    }

    /// Drift of the fixed-size book value of equity, `mu - alpha((1-x)^+)`.
    pub fn fixed_size_drift(&self, x: f64) -> f64 {
        self.mu - self.alpha.value((1.0 - x).max(0.0))
    }

    pub fn productivity(&self) -> Result<&ProductivitySpec> {
        self.beta.as_ref().ok_or_else(|| Error::InvalidParams("productivity spec required".into()))
    }

    /// Returns an error listing every violation unless the parameters are admissible.
    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidParams(report.to_string()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &'static str, message: impl Into<String>) {
        self.violations.push(Violation { field, message: message.into() });
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(|v| format!("{}: {}", v.field, v.message)).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

/// Lists every violated invariant of `params`.
pub fn validate(params: &ModelParams) -> ValidationReport {
    let mut report = ValidationReport::default();
    if !params.mu.is_finite() {
        report.push("mu", "mu must be finite");
    }
    if !(params.sigma.is_finite() && params.sigma > 0.0) {
        report.push("sigma", "sigma must be positive");
    }
    if !(params.r.is_finite() && params.r > 0.0) {
        report.push("r", "r must be positive");
    }
    if !(params.gamma.is_finite() && params.gamma >= 0.0) {
        report.push("gamma", "gamma must be nonnegative");
    }
    params.alpha.check(params.r, &mut report);
    if let Some(beta) = &params.beta {
        beta.check(&mut report);
    }
    report
}

/// Case split of the fixed-size firm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime1D {
    /// `mu <= r`: liquidate at once, `v(x) = x`.
    LiquidateImmediately,
    /// `mu >= alpha(1)`: concave value, no default before equity is exhausted.
    ConcaveNoDefault,
    /// `r < mu < alpha(1)`: convex-concave value, possible strategic default.
    ConvexConcaveCandidate,
}

impl Regime1D {
    pub fn tag(self) -> &'static str {
        match self {
            Regime1D::LiquidateImmediately => "liquidate",
            Regime1D::ConcaveNoDefault => "concave",
            Regime1D::ConvexConcaveCandidate => "convex_concave",
        }
    }
}

impl fmt::Display for Regime1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

pub fn classify_regime_1d(params: &ModelParams) -> Result<Regime1D> {
    if params.beta.is_some() {
        return Err(Error::InvalidParams("regime classification applies to the fixed-size model only".into()));
    }
    let alpha_one = params.alpha.value(1.0);
    Ok(if params.mu <= params.r {
        Regime1D::LiquidateImmediately
    } else if params.mu >= alpha_one {
        Regime1D::ConcaveNoDefault
    } else {
        Regime1D::ConvexConcaveCandidate
    })
}

fn segment_slopes(knots: &[(f64, f64)]) -> Vec<f64> {
    knots.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect()
}

fn segment_index(knots: &[(f64, f64)], t: f64) -> usize {
    // Index of the segment [knots[i], knots[i+1]) containing t (right-continuous).
    let n = knots.len();
    match knots.partition_point(|&(d, _)| d <= t) {
        0 => 0,
        p => (p - 1).min(n - 2),
    }
}

fn piecewise_linear(knots: &[(f64, f64)], t: f64, extrapolate: bool) -> f64 {
    let last = knots[knots.len() - 1];
    if t >= last.0 && !extrapolate {
        return last.1;
    }
    let i = segment_index(knots, t);
    let (x0, y0) = knots[i];
    let (x1, y1) = knots[i + 1];
    y0 + (y1 - y0) * (t - x0) / (x1 - x0)
}

fn piecewise_slope(knots: &[(f64, f64)], t: f64, extrapolate: bool) -> f64 {
    let last = knots[knots.len() - 1];
    if t >= last.0 && !extrapolate {
        return 0.0;
    }
    let i = segment_index(knots, t);
    let (x0, y0) = knots[i];
    let (x1, y1) = knots[i + 1];
    (y1 - y0) / (x1 - x0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn linear_spread_admissible_when_lambda_above_r() {
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.08);
        assert!(validate(&p).is_valid());
    }

    #[test]
    fn linear_spread_below_r_is_flagged() {
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.01);
        let report = validate(&p);
        assert!(report.mentions("α'(x) ≥ r fails"), "{report}");
    }

    #[test]
    fn table_with_decreasing_slopes_is_flagged() {
        let mut p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.1);
        p.alpha = SpreadSpec::TableConvex { knots: vec![(0.0, 0.0), (0.5, 0.2), (1.0, 0.3)] };
        assert!(validate(&p).mentions("convexity"));
    }

    #[test]
    fn report_lists_every_violation() {
        let mut p = ModelParams::fixed_size(f64::NAN, -1.0, 0.0, 0.1);
        p.gamma = -0.5;
        let report = validate(&p);
        let fields: Vec<_> = report.violations.iter().map(|v| v.field).collect();
        for f in ["mu", "sigma", "r", "gamma"] {
            assert!(fields.contains(&f), "missing {f} in {report}");
        }
    }

    #[test]
    fn table_productivity_must_be_concave() {
        let mut p = ModelParams::with_investment(0.25, 0.3, 0.02, 0.1, 5.0, 2.0, 0.0);
        p.beta = Some(ProductivitySpec::TableConcave { knots: vec![(0.0, 0.0), (1.0, 1.0), (2.0, 3.0)] });
        assert!(validate(&p).mentions("concavity"));
    }

    #[test]
    fn regime_examples() {
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.10);
        assert_eq!(classify_regime_1d(&p).unwrap(), Regime1D::ConcaveNoDefault);
        let p = ModelParams::fixed_size(0.01, 0.3, 0.02, 0.10);
        assert_eq!(classify_regime_1d(&p).unwrap(), Regime1D::LiquidateImmediately);
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.40);
        assert_eq!(classify_regime_1d(&p).unwrap(), Regime1D::ConvexConcaveCandidate);
    }

    #[test]
    fn regime_boundaries_follow_weak_inequalities() {
        let p = ModelParams::fixed_size(0.02, 0.3, 0.02, 0.10);
        assert_eq!(classify_regime_1d(&p).unwrap(), Regime1D::LiquidateImmediately);
        let p = ModelParams::fixed_size(0.25, 0.3, 0.02, 0.25);
        assert_eq!(classify_regime_1d(&p).unwrap(), Regime1D::ConcaveNoDefault);
    }

    #[test]
    fn regime_rejects_investment_model() {
        let p = ModelParams::with_investment(0.25, 0.3, 0.02, 0.1, 5.0, 2.0, 0.0);
        assert!(classify_regime_1d(&p).is_err());
    }

    #[test]
    fn exponential_slope_at_zero_matches_finite_difference() {
        let beta = ProductivitySpec::exponential(5.0, 2.0);
        let h = 1e-7;
        let fd = (beta.value(h) - beta.value(0.0)) / h;
        assert!((fd - 2.0).abs() / 2.0 < 1e-6);
        assert_eq!(beta.value(0.0), 0.0);
        assert!(beta.value(1e6) <= 5.0);
    }

    #[test]
    fn inverse_matches_closed_form() {
        let beta = ProductivitySpec::exponential(5.0, 2.0);
        for y in [0.1f64, 1.0, 2.5, 4.9] {
            let closed = -(5.0 / 2.0) * (1.0 - y / 5.0).ln();
            let k = beta.inverse(y).unwrap();
            assert!((k - closed).abs() < 1e-10 * closed.max(1.0), "{k} vs {closed}");
        }
        assert!(beta.inverse(5.0).is_err());
    }

    #[test]
    fn ratio_series_reproduces_beta_over_x() {
        let beta = ProductivitySpec::exponential(5.0, 2.0);
        let (c, radius) = beta.ratio_series(30);
        assert!((radius - 2.0 * std::f64::consts::PI * 2.5).abs() < 1e-12);
        let x: f64 = 0.7;
        let series: f64 = c.iter().enumerate().map(|(n, a)| a * x.powi(n as i32)).sum();
        assert!((series - beta.value(x) / x).abs() < 1e-14);
    }

    #[test]
    fn table_spread_evaluates_and_extrapolates() {
        let a = SpreadSpec::TableConvex { knots: vec![(0.0, 0.0), (0.5, 0.05), (1.0, 0.2)] };
        assert_eq!(a.value(0.0), 0.0);
        assert!((a.value(0.25) - 0.025).abs() < 1e-15);
        assert!((a.value(0.75) - 0.125).abs() < 1e-15);
        assert!((a.value(1.5) - 0.35).abs() < 1e-15);
        assert!((a.slope(0.5) - 0.3).abs() < 1e-15);
        assert_eq!(a.kinks(), vec![0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn admissible_spread_grows_at_least_at_rate_r(
            r in 0.001f64..0.1,
            extra in proptest::collection::vec(0.0f64..0.5, 1..5),
            l1 in 0.0f64..3.0,
            dl in 0.0f64..3.0,
        ) {
            // Build a convex table with slopes >= r.
            let mut knots = vec![(0.0, 0.0)];
            let mut slope = r;
            let mut x = 0.0;
            let mut y = 0.0;
            for e in extra {
                slope += e;
                x += 0.5;
                y += slope * 0.5;
                knots.push((x, y));
            }
            let a = SpreadSpec::TableConvex { knots };
            let mut report = ValidationReport::default();
            a.check(r, &mut report);
            prop_assert!(report.is_valid(), "{}", report);
            let l2 = l1 + dl;
            prop_assert!(a.value(l2) - a.value(l1) >= r * (l2 - l1) - 1e-12);
        }

        #[test]
        fn regime_invariant_to_sigma(
            mu in 0.0f64..1.0, lambda in 0.02f64..1.0, s1 in 0.05f64..2.0, s2 in 0.05f64..2.0
        ) {
            let p1 = ModelParams::fixed_size(mu, s1, 0.02, lambda);
            let p2 = ModelParams::fixed_size(mu, s2, 0.02, lambda);
            prop_assert_eq!(classify_regime_1d(&p1).unwrap(), classify_regime_1d(&p2).unwrap());
        }
    }
}
