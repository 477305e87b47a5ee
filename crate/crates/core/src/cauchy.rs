//! The fixed-size verification ODE
//!
//!   (mu - alpha((1-x)^+)) w' + sigma^2/2 w'' - r w = 0
//!
//! posed as a terminal-value problem at a candidate dividend boundary `b`
//! with `w'(b) = 1`, `w''(b) = 0`, and integrated backward.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::ode::{integrate, DenseSolution, OdeOptions, State};

#[derive(Debug, Clone, Copy, Default)]
pub struct CauchyOptions {
    pub ode: OdeOptions,
}

/// `w_b` on `[x_end, b]`, extended linearly beyond `b`.
#[derive(Debug, Clone)]
pub struct CauchySolution {
    pub b: f64,
    pub dense: DenseSolution,
    params: ModelParams,
}

/// `w''` implied by the ODE at `(x, w, w')`.
pub fn second_derivative(params: &ModelParams, x: f64, w: f64, w1: f64) -> f64 {
    2.0 * (params.r * w - params.fixed_size_drift(x) * w1) / (params.sigma * params.sigma)
}

/// Residual of the operator at `(x, w, w', w'')`.
pub fn residual(params: &ModelParams, x: f64, w: f64, w1: f64, w2: f64) -> f64 {
    params.fixed_size_drift(x) * w1 + 0.5 * params.sigma * params.sigma * w2 - params.r * w
}

/// Terminal value `w_b(b)`.
pub fn anchor_value(params: &ModelParams, b: f64) -> f64 {
    params.fixed_size_drift(b) / params.r
}

/// Abscissas in `(0, 1]` where the drift coefficient has a kink.
fn kinks(params: &ModelParams) -> Vec<f64> {
    let mut out = vec![1.0];
    out.extend(params.alpha.kinks().into_iter().map(|d| 1.0 - d).filter(|&x| x > 0.0));
    out
}

fn check(params: &ModelParams, b: f64) -> Result<()> {
    if params.beta.is_some() {
        return Err(Error::InvalidParams("the Cauchy problem is posed for the fixed-size model".into()));
    }
    params.ensure_valid()?;
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Domain(format!("anchor b = {b} must be positive")));
    }
    Ok(())
}

pub fn solve_cauchy(params: &ModelParams, b: f64) -> Result<CauchySolution> {
    solve_cauchy_with(params, b, 0.0, &CauchyOptions::default())
}

/// Integrates from `b` down to `x_end` (normally 0).
pub fn solve_cauchy_with(params: &ModelParams, b: f64, x_end: f64, opts: &CauchyOptions) -> Result<CauchySolution> {
    check(params, b)?;
    if !(0.0..=b).contains(&x_end) {
        return Err(Error::Domain(format!("x_end = {x_end} outside [0, {b}]")));
    }
    let s2 = params.sigma * params.sigma;
    let f = |x: f64, y: &State| -> State { [y[1], 2.0 * (params.r * y[0] - params.fixed_size_drift(x) * y[1]) / s2] };
    let y0 = [anchor_value(params, b), 1.0];
    let traj = integrate(&f, b, y0, x_end, &kinks(params), &opts.ode)?;
    let mut dense = DenseSolution::from_trajectory(&traj);
    // The anchor data hold exactly.
    let n = dense.len() - 1;
    dense.w2[n] = 0.0;
    Ok(CauchySolution { b, dense, params: params.clone() })
}

/// `w_b(y)` as `(w, w')` scaled by `exp(-log_scale)`. The equation is
/// linear, so the state is renormalized after each chunk over which the
/// stiff mode can grow by at most `e^150`; this keeps the sign of `w_b(y)`
/// available when the unscaled value would overflow.
pub fn shoot_scaled(params: &ModelParams, b: f64, y: f64, opts: &CauchyOptions) -> Result<(State, f64)> {
    check(params, b)?;
    if !(0.0..=b).contains(&y) {
        return Err(Error::Domain(format!("y = {y} outside [0, {b}]")));
    }
    let s2 = params.sigma * params.sigma;
    let f = |x: f64, y: &State| -> State { [y[1], 2.0 * (params.r * y[0] - params.fixed_size_drift(x) * y[1]) / s2] };
    let m = params.fixed_size_drift(0.0).abs().max(params.fixed_size_drift(b).abs());
    let rho = (m + (m * m + 2.0 * params.r * s2).sqrt()) / s2;
    let chunk = 150.0 / rho;
    let kinks = kinks(params);
    let mut state = [anchor_value(params, b), 1.0];
    let mut log_scale = 0.0;
    let mut x = b;
    while x > y {
        let end = (x - chunk).max(y);
        let traj = integrate(&f, x, state, end, &kinks, &opts.ode)?;
        state = traj.last().1;
        let norm = state[0].abs().max(state[1].abs());
        if norm > 1.0 {
            state = [state[0] / norm, state[1] / norm];
            log_scale += norm.ln();
        }
        x = end;
    }
    Ok((state, log_scale))
}

/// `w_b(y) - c` with sign preserved; saturates at `±f64::MAX` when the
/// unscaled value overflows.
pub fn shoot_offset(params: &ModelParams, b: f64, y: f64, c: f64, opts: &CauchyOptions) -> Result<f64> {
    let (state, log_scale) = shoot_scaled(params, b, y, opts)?;
    if log_scale < 600.0 {
        return Ok(state[0] * log_scale.exp() - c);
    }
    Ok(if state[0] > 0.0 {
        f64::MAX
    } else if state[0] < 0.0 {
        f64::MIN
    } else {
        -c
    })
}

impl CauchySolution {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Left end of the integrated range.
    pub fn x_start(&self) -> f64 {
        self.dense.x_min()
    }

    /// `w_b` at the left end of the integrated range.
    pub fn w_start(&self) -> f64 {
        self.dense.w[0]
    }

    pub fn w1_start(&self) -> f64 {
        self.dense.w1[0]
    }

    pub fn w_b(&self) -> f64 {
        self.dense.w[self.dense.len() - 1]
    }

    /// `(w, w', w'')` at `y`: stored values at nodes, Hermite in between,
    /// linear extension above `b`.
    pub fn w_at(&self, y: f64) -> Result<(f64, f64, f64)> {
        if !(y >= 0.0) {
            return Err(Error::Domain(format!("w_at: y = {y} must be nonnegative")));
        }
        if y >= self.b {
            return Ok((y - self.b + self.w_b(), 1.0, 0.0));
        }
        if y < self.x_start() {
            return Err(Error::Domain(format!("w_at: y = {y} below integrated range starting at {}", self.x_start())));
        }
        if let Some(i) = self.dense.node_index(y) {
            return Ok((self.dense.w[i], self.dense.w1[i], self.dense.w2[i]));
        }
        let (w, w1) = self.dense.eval(y);
        Ok((w, w1, second_derivative(&self.params, y, w, w1)))
    }
}

/// `w_b(y)` for each `b` in `b_list`.
pub fn monotonicity_in_b(params: &ModelParams, y: f64, b_list: &[f64]) -> Result<Vec<f64>> {
    if !(0.0..1.0).contains(&y) {
        return Err(Error::Domain(format!("y = {y} must lie in [0, 1)")));
    }
    b_list
        .iter()
        .map(|&b| {
            if b < y {
                return Err(Error::Domain(format!("b = {b} below y = {y}")));
            }
            if b == y {
                return Ok(anchor_value(params, b));
            }
            Ok(solve_cauchy_with(params, b, y, &CauchyOptions::default())?.w_start())
        })
        .collect()
}
