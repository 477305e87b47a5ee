//! Dormand–Prince 5(4) integrator for second-order scalar ODEs written as
//! first-order systems `y = (w, w')`, with cubic Hermite dense output.

use crate::error::{Error, Result};

pub type State = [f64; 2];

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on `|h|`; keeps the Hermite interpolant accurate.
    pub max_step: f64,
    /// Integrate with this constant step instead of adapting.
    pub fixed_step: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-10, atol: 1e-10, max_step: 0.02, fixed_step: None, max_steps: 2_000_000 }
    }
}

/// Accepted nodes in integration order.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub x: Vec<f64>,
    pub y: Vec<State>,
    pub dy: Vec<State>,
}

impl Trajectory {
    pub fn last(&self) -> (f64, State, State) {
        let n = self.x.len() - 1;
        (self.x[n], self.y[n], self.dy[n])
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[inline]
fn comb(y: &State, h: f64, terms: &[(f64, &State)]) -> State {
    let mut out = *y;
    for (c, k) in terms {
        out[0] += h * c * k[0];
        out[1] += h * c * k[1];
    }
    out
}

/// One Dormand–Prince step. Returns `(y_new, f(x+h, y_new), error estimate)`.
fn dopri_step<F>(f: &F, x: f64, y: &State, k1: &State, h: f64) -> (State, State, State)
where
    F: Fn(f64, &State) -> State,
{
    let k2 = f(x + C2 * h, &comb(y, h, &[(A21, k1)]));
    let k3 = f(x + C3 * h, &comb(y, h, &[(A31, k1), (A32, &k2)]));
    let k4 = f(x + C4 * h, &comb(y, h, &[(A41, k1), (A42, &k2), (A43, &k3)]));
    let k5 = f(x + C5 * h, &comb(y, h, &[(A51, k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
    let k6 = f(x + h, &comb(y, h, &[(A61, k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]));
    let y_new = comb(y, h, &[(B1, k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
    let k7 = f(x + h, &y_new);
    let mut err = [0.0; 2];
    for i in 0..2 {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y_new, k7, err)
}

fn err_norm(err: &State, y: &State, y_new: &State, opts: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..2 {
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / 2.0).sqrt()
}

/// Integrates from `x0` to `x_end` (either direction), restarting at every
/// breakpoint strictly between them so that each lands on a node.
pub fn integrate<F>(f: &F, x0: f64, y0: State, x_end: f64, breakpoints: &[f64], opts: &OdeOptions) -> Result<Trajectory>
where
    F: Fn(f64, &State) -> State,
{
    integrate_until(f, x0, y0, x_end, breakpoints, opts, |_, _, _| false).map(|(t, _)| t)
}

/// Like [`integrate`] but stops after the first accepted step for which
/// `stop(x, y, dy)` holds. The flag reports whether that happened.
pub fn integrate_until<F, S>(
    f: &F,
    x0: f64,
    y0: State,
    x_end: f64,
    breakpoints: &[f64],
    opts: &OdeOptions,
    mut stop: S,
) -> Result<(Trajectory, bool)>
where
    F: Fn(f64, &State) -> State,
    S: FnMut(f64, &State, &State) -> bool,
{
    if !(x0.is_finite() && x_end.is_finite()) {
        return Err(Error::Domain("integration bounds must be finite".into()));
    }
    let dir = if x_end >= x0 { 1.0 } else { -1.0 };
    let mut stops: Vec<f64> =
        breakpoints.iter().copied().filter(|&t| (t - x0) * dir > 0.0 && (x_end - t) * dir > 0.0).collect();
    stops.sort_by(|a, b| (dir * a).total_cmp(&(dir * b)));
    stops.dedup();
    stops.push(x_end);

    let mut traj = Trajectory::default();
    let mut x = x0;
    let mut y = y0;
    let mut k1 = f(x, &y);
    traj.x.push(x);
    traj.y.push(y);
    traj.dy.push(k1);
    if x0 == x_end {
        return Ok((traj, false));
    }

    let mut steps = 0usize;
    let mut h_abs = opts.max_step.min((x_end - x0).abs() * 0.05).max(1e-6);
    for &target in &stops {
        let seg = (target - x).abs();
        if seg == 0.0 {
            continue;
        }
        if let Some(hf) = opts.fixed_step {
            let n = (seg / hf).ceil().max(1.0) as usize;
            let x_seg = x;
            for i in 0..n {
                let x_next = if i + 1 == n { target } else { x_seg + dir * seg * (i + 1) as f64 / n as f64 };
                let h = x_next - x;
                let (y_new, k_new, _) = dopri_step(f, x, &y, &k1, h);
                x = x_next;
                y = y_new;
                k1 = k_new;
                traj.x.push(x);
                traj.y.push(y);
                traj.dy.push(k1);
                if stop(x, &y, &k1) {
                    return Ok((traj, true));
                }
            }
        } else {
            loop {
                let remaining = (target - x).abs();
                if remaining == 0.0 {
                    break;
                }
                let mut h_try = h_abs.min(opts.max_step);
                let last = h_try >= remaining * (1.0 - 1e-12);
                if last {
                    h_try = remaining;
                }
                let h = dir * h_try;
                let (y_new, k_new, err) = dopri_step(f, x, &y, &k1, h);
                let e = err_norm(&err, &y, &y_new, opts);
                steps += 1;
                if steps > opts.max_steps {
                    return Err(Error::StepUnderflow { x, target: x_end });
                }
                if !e.is_finite() || !(y_new[0].is_finite() && y_new[1].is_finite()) {
                    h_abs = 0.2 * h_try;
                } else if e <= 1.0 {
                    x = if last { target } else { x + h };
                    y = y_new;
                    k1 = k_new;
                    traj.x.push(x);
                    traj.y.push(y);
                    traj.dy.push(k1);
                    let fac = if e == 0.0 { 5.0 } else { (0.9 * e.powf(-0.2)).clamp(0.2, 5.0) };
                    // A truncated final step says little about the natural step size.
                    if !last {
                        h_abs = h_try * fac;
                    }
                    if stop(x, &y, &k1) {
                        return Ok((traj, true));
                    }
                    continue;
                } else {
                    h_abs = h_try * (0.9 * e.powf(-0.2)).clamp(0.2, 1.0);
                }
                if h_abs < 1e-14 * x.abs().max(1.0) {
                    return Err(Error::StepUnderflow { x, target: x_end });
                }
            }
        }
    }
    Ok((traj, false))
}

/// Cubic Hermite interpolation of `(f, f')` data on `[x0, x1]` at `t`.
#[inline]
pub fn hermite(x0: f64, x1: f64, f0: f64, f1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let h = x1 - x0;
    let s = (t - x0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    h00 * f0 + h10 * h * d0 + h01 * f1 + h11 * h * d1
}

/// Nodal values `(w, w', w'')` on an increasing grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DenseSolution {
    pub x: Vec<f64>,
    pub w: Vec<f64>,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
}

impl DenseSolution {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        let mut out = DenseSolution {
            x: traj.x.clone(),
            w: traj.y.iter().map(|s| s[0]).collect(),
            w1: traj.y.iter().map(|s| s[1]).collect(),
            w2: traj.dy.iter().map(|s| s[1]).collect(),
        };
        if out.x.len() > 1 && out.x[0] > out.x[out.x.len() - 1] {
            out.x.reverse();
            out.w.reverse();
            out.w1.reverse();
            out.w2.reverse();
        }
        out
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn x_min(&self) -> f64 {
        self.x[0]
    }

    pub fn x_max(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Index `i` with `x[i] <= t <= x[i+1]`; `t` is clamped into range.
    fn interval(&self, t: f64) -> usize {
        let n = self.x.len();
        self.x.partition_point(|&xi| xi <= t).clamp(1, n - 1) - 1
    }

    /// Hermite-interpolated `(w, w')` at `t`. Exact at nodes.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        if self.x.len() == 1 {
            return (self.w[0], self.w1[0]);
        }
        let i = self.interval(t);
        let (x0, x1) = (self.x[i], self.x[i + 1]);
        if t == x0 {
            return (self.w[i], self.w1[i]);
        }
        if t == x1 {
            return (self.w[i + 1], self.w1[i + 1]);
        }
        let w = hermite(x0, x1, self.w[i], self.w[i + 1], self.w1[i], self.w1[i + 1], t);
        let w1 = hermite(x0, x1, self.w1[i], self.w1[i + 1], self.w2[i], self.w2[i + 1], t);
        (w, w1)
    }

    /// Index of a node exactly at `t`, if any.
    pub fn node_index(&self, t: f64) -> Option<usize> {
        let i = self.x.partition_point(|&xi| xi < t);
        (i < self.x.len() && self.x[i] == t).then_some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_: f64, y: &State) -> State {
        [y[1], -y[0]]
    }

    #[test]
    fn harmonic_oscillator_forward_and_backward() {
        let opts = OdeOptions::default();
        let t = integrate(&harmonic, 0.0, [0.0, 1.0], 3.0, &[], &opts).unwrap();
        let (x, y, _) = t.last();
        assert_eq!(x, 3.0);
        assert!((y[0] - 3f64.sin()).abs() < 1e-9);
        let t = integrate(&harmonic, 3.0, y, 0.0, &[], &opts).unwrap();
        let (_, y, _) = t.last();
        assert!(y[0].abs() < 1e-9 && (y[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn breakpoints_become_nodes() {
        let opts = OdeOptions::default();
        let t = integrate(&harmonic, 2.0, [1.0, 0.0], 0.0, &[1.0, 0.5, 5.0], &opts).unwrap();
        assert!(t.x.contains(&1.0) && t.x.contains(&0.5));
        assert!(!t.x.contains(&5.0));
        let dense = DenseSolution::from_trajectory(&t);
        assert!(dense.x.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(dense.node_index(1.0).map(|i| dense.x[i]), Some(1.0));
    }

    #[test]
    fn fixed_step_is_fifth_order() {
        let mut errs = Vec::new();
        for h in [0.2, 0.1, 0.05] {
            let opts = OdeOptions { fixed_step: Some(h), ..Default::default() };
            let t = integrate(&harmonic, 0.0, [0.0, 1.0], 2.0, &[], &opts).unwrap();
            errs.push((t.last().1[0] - 2f64.sin()).abs());
        }
        let p1 = (errs[0] / errs[1]).log2();
        let p2 = (errs[1] / errs[2]).log2();
        assert!(p1 > 4.5 && p2 > 4.5, "orders {p1} {p2}");
    }

    #[test]
    fn stop_condition_halts_early() {
        let opts = OdeOptions::default();
        let (t, hit) = integrate_until(&harmonic, 0.0, [0.0, 1.0], 10.0, &[], &opts, |_, y, _| y[1] < 0.0).unwrap();
        assert!(hit);
        let x = t.last().0;
        assert!(x > std::f64::consts::FRAC_PI_2 && x < std::f64::consts::FRAC_PI_2 + 0.03);
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| t * t * t - 2.0 * t + 1.0;
        let d = |t: f64| 3.0 * t * t - 2.0;
        let v = hermite(0.5, 2.0, f(0.5), f(2.0), d(0.5), d(2.0), 1.3);
        assert!((v - f(1.3)).abs() < 1e-13);
    }

    #[test]
    fn blowup_reports_underflow() {
        let opts = OdeOptions::default();
        let f = |_: f64, y: &State| [y[0] * y[0], 0.0];
        let err = integrate(&f, 0.0, [1.0, 0.0], 2.0, &[], &opts).unwrap_err();
        assert!(matches!(err, Error::StepUnderflow { .. }), "{err}");
    }
}
