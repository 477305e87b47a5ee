//! Monte Carlo oracle for the barrier and capital policies.
//!
//! Every path owns a ChaCha8 stream derived from `(seed, phase, path)`, and
//! per-path results are reduced in path order, so estimates do not depend on
//! the thread count.
//!
//! Barriers are handled with Brownian-bridge corrections: absorbing levels
//! use the crossing probability of the bridge between grid times, and the
//! reflecting dividend barrier uses the exact one-step maximum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hjb::{Label, Policy2D};
use crate::model::{ModelParams, SpreadSpec};

/// Distance to a barrier, in units of `vol * sqrt(dt)`, beyond which the
/// bridge correction is skipped.
const BRIDGE_BAND: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McMethod {
    /// One long path per sample, truncated at the horizon.
    Direct,
    /// First-passage phases glued by the strong Markov property.
    Regenerative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub dt: f64,
    pub n_paths: usize,
    pub horizon: f64,
    pub seed: u64,
    pub antithetic: bool,
    pub method: McMethod,
    /// Skip the `horizon * r >= 20` check.
    pub allow_short_horizon: bool,
}

impl Default for SimSpec {
    fn default() -> Self {
        SimSpec {
            dt: 1e-3,
            n_paths: 100_000,
            horizon: 1000.0,
            seed: 20240917,
            antithetic: true,
            method: McMethod::Regenerative,
            allow_short_horizon: false,
        }
    }
}

impl SimSpec {
    pub fn check(&self, r: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParams(format!("dt = {} must be positive", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::InvalidParams("n_paths must be at least 1".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::InvalidParams(format!("horizon = {} must be positive", self.horizon)));
        }
        if !self.allow_short_horizon && self.horizon * r < 20.0 {
            return Err(Error::InvalidParams(format!(
                "horizon * r = {} < 20; discounted tail is not negligible",
                self.horizon * r
            )));
        }
        Ok(())
    }

    fn max_steps(&self) -> usize {
        (self.horizon / self.dt).ceil() as usize
    }

    /// Number of independent samples; an antithetic pair counts once.
    fn n_samples(&self) -> usize {
        if self.antithetic {
            self.n_paths.div_ceil(2)
        } else {
            self.n_paths
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    /// Upper bound on the value lost by stopping paths at the horizon.
    pub truncation_bias_bound: f64,
    pub warnings: Vec<String>,
}

impl MCEstimate {
    pub fn exact(value: f64) -> Self {
        MCEstimate { mean: value, std_error: 0.0, n_paths: 0, truncation_bias_bound: 0.0, warnings: Vec::new() }
    }

    /// `|mean - target|` in standard errors (infinite when the SE is zero and
    /// the values differ).
    pub fn z_score(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.std_error
        }
    }
}

/// Normal and uniform draws, mirrored for the antithetic partner.
struct Noise {
    rng: ChaCha8Rng,
    flip: bool,
}

impl Noise {
    #[inline]
    fn normal(&mut self) -> f64 {
        let z: f64 = self.rng.sample(StandardNormal);
        if self.flip {
            -z
        } else {
            z
        }
    }

    /// Uniform on `(0, 1]`.
    #[inline]
    fn uniform(&mut self) -> f64 {
        let u: f64 = self.rng.random();
        if self.flip {
            u.max(f64::MIN_POSITIVE)
        } else {
            1.0 - u
        }
    }
}

fn stream_rng(seed: u64, phase: u64, sample: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((phase << 40) ^ sample as u64);
    rng
}

/// Runs `path` once per sample (twice with mirrored noise when antithetic,
/// averaging the pair) and returns the samples in order.
fn run_samples<const N: usize, F>(spec: &SimSpec, phase: u64, path: F) -> Result<Vec<[f64; N]>>
where
    F: Fn(&mut Noise) -> Result<[f64; N]> + Sync,
{
    (0..spec.n_samples())
        .into_par_iter()
        .map(|s| {
            let rng = stream_rng(spec.seed, phase, s);
            if spec.antithetic {
                let a = path(&mut Noise { rng: rng.clone(), flip: false })?;
                let b = path(&mut Noise { rng, flip: true })?;
                let mut out = [0.0; N];
                for i in 0..N {
                    out[i] = 0.5 * (a[i] + b[i]);
                }
                Ok(out)
            } else {
                path(&mut Noise { rng, flip: false })
            }
        })
        .collect()
}

/// Sample mean and covariance of the mean.
struct Moments<const N: usize> {
    mean: [f64; N],
    cov: [[f64; N]; N],
}

fn moments<const N: usize>(samples: &[[f64; N]]) -> Moments<N> {
    let n = samples.len() as f64;
    let mut mean = [0.0; N];
    for s in samples {
        for i in 0..N {
            mean[i] += s[i];
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut cov = [[0.0; N]; N];
    for s in samples {
        for i in 0..N {
            for j in 0..N {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]);
            }
        }
    }
    let denom = if n > 1.0 { (n - 1.0) * n } else { f64::INFINITY };
    for row in &mut cov {
        for c in row.iter_mut() {
            *c /= denom;
        }
    }
    Moments { mean, cov }
}

/// Scalar diffusion `dX = drift(X) dt + vol(X) dW`.
pub trait Dynamics1D: Sync {
    fn drift(&self, x: f64) -> f64;
    fn vol(&self, x: f64) -> f64;
    /// Bound on the drift, used for horizon-truncation bounds.
    fn drift_bound(&self) -> f64;
}

/// Fixed-size firm: `mu - alpha((1 - x)^+)` and `sigma`.
pub struct FixedSize<'a>(pub &'a ModelParams);

impl Dynamics1D for FixedSize<'_> {
    fn drift(&self, x: f64) -> f64 {
        self.0.fixed_size_drift(x)
    }
    fn vol(&self, _x: f64) -> f64 {
        self.0.sigma
    }
    fn drift_bound(&self) -> f64 {
        self.0.mu
    }
}

#[inline]
fn bridge_crosses(dist0: f64, dist1: f64, var: f64, noise: &mut Noise) -> bool {
    // Both distances positive; probability that the bridge touches the level.
    let p = (-2.0 * dist0 * dist1 / var).exp();
    noise.uniform() < p
}

/// Outcome of one first-passage path.
enum Exit {
    Upper(f64),
    Lower(f64),
    Truncated,
}

/// Runs from `x0` until the path leaves `(lo, hi)`; returns the exit side
/// and time.
fn exit_interval<D: Dynamics1D>(
    d: &D,
    x0: f64,
    lo: f64,
    hi: f64,
    dt: f64,
    max_steps: usize,
    noise: &mut Noise,
) -> Exit {
    let sdt = dt.sqrt();
    let mut x = x0;
    let mut t = 0.0;
    for _ in 0..max_steps {
        let s = d.vol(x);
        let xn = x + d.drift(x) * dt + s * sdt * noise.normal();
        let band = BRIDGE_BAND * s * sdt;
        let var = s * s * dt;
        if xn >= hi {
            return Exit::Upper(t + dt);
        }
        if xn <= lo {
            return Exit::Lower(t + dt);
        }
        if hi - x.max(xn) < band && bridge_crosses(hi - x, hi - xn, var, noise) {
            return Exit::Upper(t + 0.5 * dt);
        }
        if x.min(xn) - lo < band && bridge_crosses(x - lo, xn - lo, var, noise) {
            return Exit::Lower(t + 0.5 * dt);
        }
        x = xn;
        t += dt;
    }
    Exit::Truncated
}

/// Reflected at `b` from `x0 <= b` until the path reaches `y < x0`;
/// returns discounted dividends and the hitting time.
#[allow(clippy::too_many_arguments)]
fn reflect_until<D: Dynamics1D>(
    d: &D,
    r: f64,
    x0: f64,
    y: f64,
    b: f64,
    dt: f64,
    max_steps: usize,
    noise: &mut Noise,
) -> (f64, Option<f64>) {
    let sdt = dt.sqrt();
    let mut x = x0;
    let mut t = 0.0;
    let mut div = 0.0;
    for _ in 0..max_steps {
        let s = d.vol(x);
        let free = x + d.drift(x) * dt + s * sdt * noise.normal();
        let var = s * s * dt;
        let band = BRIDGE_BAND * s * sdt;
        if free <= y || (x.min(free) - y < band && bridge_crosses(x - y, free - y, var, noise)) {
            return (div, Some(t + 0.5 * dt));
        }
        let mut xn = free;
        if free > b || b - x.max(free) < band {
            let dx = free - x;
            let peak = 0.5 * (x + free + (dx * dx - 2.0 * var * noise.uniform().ln()).sqrt());
            if peak > b {
                let over = peak - b;
                div += (-r * (t + 0.5 * dt)).exp() * over;
                xn = free - over;
            }
        }
        x = xn;
        t += dt;
    }
    (div, None)
}

/// Start path with barriers `a` (absorbing, lump `a`) and `b` (reflecting),
/// truncated at the horizon. Returns `[discounted payout, truncation term]`.
#[allow(clippy::too_many_arguments)]
fn direct_path<D: Dynamics1D>(
    d: &D,
    r: f64,
    a: f64,
    b: f64,
    x0: f64,
    dt: f64,
    max_steps: usize,
    noise: &mut Noise,
) -> [f64; 2] {
    let sdt = dt.sqrt();
    let mut x = x0;
    let mut t = 0.0;
    let mut pay = 0.0;
    for _ in 0..max_steps {
        let s = d.vol(x);
        let free = x + d.drift(x) * dt + s * sdt * noise.normal();
        let var = s * s * dt;
        let band = BRIDGE_BAND * s * sdt;
        if free <= a {
            return [pay + a * (-r * (t + dt)).exp(), 0.0];
        }
        if x.min(free) - a < band && bridge_crosses(x - a, free - a, var, noise) {
            return [pay + a * (-r * (t + 0.5 * dt)).exp(), 0.0];
        }
        let mut xn = free;
        if free > b || b - x.max(free) < band {
            let dx = free - x;
            let peak = 0.5 * (x + free + (dx * dx - 2.0 * var * noise.uniform().ln()).sqrt());
            if peak > b {
                let over = peak - b;
                pay += (-r * (t + 0.5 * dt)).exp() * over;
                xn = free - over;
            }
        }
        x = xn;
        t += dt;
    }
    [pay, (-r * t).exp() * (x + d.drift_bound() / r)]
}

fn check_barriers(a: f64, b: f64) -> Result<()> {
    if !(a >= 0.0 && b > a && b.is_finite()) {
        return Err(Error::InvalidParams(format!("need 0 <= a < b, got a = {a}, b = {b}")));
    }
    Ok(())
}

fn coarse_dt_warning<D: Dynamics1D>(d: &D, a: f64, b: f64, dt: f64) -> Vec<String> {
    let band = 0.05 * (b - a);
    let move_ = d.drift_bound().abs() * dt + d.vol(b) * dt.sqrt();
    if move_ > band {
        vec![format!("dt = {dt} moves the state by {move_:.3e} per step, more than 5% of b - a")]
    } else {
        Vec::new()
    }
}

/// Discounted dividends of the barrier policy `(a, b)` for the fixed-size
/// firm started at `x0`.
pub fn simulate_1d_policy(params: &ModelParams, a: f64, b: f64, x0: f64, spec: &SimSpec) -> Result<MCEstimate> {
    let mut v = simulate_1d_probes(params, a, b, &[x0], spec)?;
    Ok(v.remove(0))
}

/// Same as [`simulate_1d_policy`] for several starting points at once. The
/// regenerative method shares first-passage phases between probes, so the
/// estimates are correlated.
pub fn simulate_1d_probes(
    params: &ModelParams,
    a: f64,
    b: f64,
    probes: &[f64],
    spec: &SimSpec,
) -> Result<Vec<MCEstimate>> {
    params.ensure_valid()?;
    simulate_barrier_policy(&FixedSize(params), params.r, a, b, probes, spec)
}

/// Barrier policy for arbitrary scalar dynamics: lump `x` at or below `a`,
/// reflection at `b` with the overflow paid out, absorption at `a` paying `a`.
pub fn simulate_barrier_policy<D: Dynamics1D>(
    d: &D,
    r: f64,
    a: f64,
    b: f64,
    probes: &[f64],
    spec: &SimSpec,
) -> Result<Vec<MCEstimate>> {
    spec.check(r)?;
    check_barriers(a, b)?;
    if let Some(&x) = probes.iter().find(|x| !(**x >= 0.0 && x.is_finite())) {
        return Err(Error::InvalidParams(format!("start state {x} must be a finite x >= 0")));
    }
    let warnings = coarse_dt_warning(d, a, b, spec.dt);
    let inner: Vec<f64> = probes.iter().map(|&x| x.clamp(a, b)).collect();
    let mut out = match spec.method {
        McMethod::Direct => direct_estimates(d, r, a, b, &inner, spec)?,
        McMethod::Regenerative => regenerative_estimates(d, r, a, b, &inner, spec)?,
    };
    for (est, &x0) in out.iter_mut().zip(probes) {
        if x0 <= a {
            *est = MCEstimate::exact(x0);
        } else if x0 > b {
            est.mean += x0 - b;
        }
        if est.n_paths > 0 {
            est.warnings = warnings.clone();
        }
    }
    Ok(out)
}

fn direct_estimates<D: Dynamics1D>(
    d: &D,
    r: f64,
    a: f64,
    b: f64,
    probes: &[f64],
    spec: &SimSpec,
) -> Result<Vec<MCEstimate>> {
    let steps = spec.max_steps();
    probes
        .iter()
        .enumerate()
        .map(|(p, &x0)| {
            if x0 <= a {
                return Ok(MCEstimate::exact(a));
            }
            let samples = run_samples::<2, _>(spec, 1 + p as u64, |noise| {
                Ok(direct_path(d, r, a, b, x0, spec.dt, steps, noise))
            })?;
            let m = moments(&samples);
            Ok(MCEstimate {
                mean: m.mean[0],
                std_error: m.cov[0][0].sqrt(),
                n_paths: spec.n_paths,
                truncation_bias_bound: m.mean[1],
                warnings: Vec::new(),
            })
        })
        .collect()
}

/// A phase estimate: sample means, their covariance, and the truncated
/// fraction.
struct Phase {
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    truncated: f64,
}

fn exit_phase<D: Dynamics1D>(d: &D, r: f64, x0: f64, lo: f64, hi: f64, spec: &SimSpec, id: u64) -> Result<Phase> {
    let steps = spec.max_steps();
    let samples = run_samples::<3, _>(spec, id, |noise| {
        Ok(match exit_interval(d, x0, lo, hi, spec.dt, steps, noise) {
            Exit::Upper(t) => [(-r * t).exp(), 0.0, 0.0],
            Exit::Lower(t) => [0.0, (-r * t).exp(), 0.0],
            Exit::Truncated => [0.0, 0.0, 1.0],
        })
    })?;
    let m = moments(&samples);
    Ok(Phase {
        mean: [m.mean[0], m.mean[1]],
        cov: [[m.cov[0][0], m.cov[0][1]], [m.cov[1][0], m.cov[1][1]]],
        truncated: m.mean[2],
    })
}

fn reflect_phase<D: Dynamics1D>(d: &D, r: f64, b: f64, y: f64, spec: &SimSpec, id: u64) -> Result<Phase> {
    let steps = spec.max_steps();
    let samples = run_samples::<3, _>(spec, id, |noise| {
        let (div, hit) = reflect_until(d, r, b, y, b, spec.dt, steps, noise);
        Ok(match hit {
            Some(t) => [div, (-r * t).exp(), 0.0],
            None => [div, 0.0, 1.0],
        })
    })?;
    let m = moments(&samples);
    Ok(Phase {
        mean: [m.mean[0], m.mean[1]],
        cov: [[m.cov[0][0], m.cov[0][1]], [m.cov[1][0], m.cov[1][1]]],
        truncated: m.mean[2],
    })
}

/// Values at the ladder levels from phase means `theta`. The last two
/// entries of `theta` are the reflected phase `(D, R)`; before them come
/// `(up, down)` pairs, one per level. Level `ry` is the return level.
fn ladder_values(theta: &[f64], a: f64, ry: usize) -> Vec<f64> {
    let m = (theta.len() - 2) / 2;
    let (dd, rr) = (theta[2 * m], theta[2 * m + 1]);
    // V(L_i) = U_i V(b) + W_i
    let mut u = vec![1.0; m + 1];
    let mut w = vec![0.0; m + 1];
    for i in (0..m).rev() {
        let (up, down) = (theta[2 * i], theta[2 * i + 1]);
        u[i] = up * u[i + 1];
        w[i] = up * w[i + 1] + down * a;
    }
    let vb = (dd + rr * w[ry]) / (1.0 - rr * u[ry]);
    (0..=m).map(|i| u[i] * vb + w[i]).collect()
}

fn regenerative_estimates<D: Dynamics1D>(
    d: &D,
    r: f64,
    a: f64,
    b: f64,
    probes: &[f64],
    spec: &SimSpec,
) -> Result<Vec<MCEstimate>> {
    let sdt = spec.dt.sqrt();
    let s_b = d.vol(b);
    // Return level: close enough that the reflected phase ends quickly, far
    // enough that the bridge correction is a small part of it.
    let drift_b = d.drift(b).abs().max(s_b * s_b);
    let c = (s_b * s_b / drift_b).max(10.0 * s_b * sdt).min(0.5 * (b - a));
    let y = b - c;
    let mut levels: Vec<f64> = probes.iter().copied().filter(|&x| x > a && x < b).collect();
    levels.push(y);
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let ry = levels.iter().position(|&l| l == y).expect("return level present");
    let m = levels.len();
    let mut next = levels.clone();
    next.remove(0);
    next.push(b);

    let phases: Vec<Phase> = (0..m)
        .map(|i| exit_phase(d, r, levels[i], a, next[i], spec, 100 + i as u64))
        .chain(std::iter::once(reflect_phase(d, r, b, y, spec, 99)))
        .collect::<Result<_>>()?;
    let theta: Vec<f64> = phases.iter().flat_map(|p| p.mean).collect();
    let base = ladder_values(&theta, a, ry);
    if !(base[m] > 0.0 && base[m].is_finite()) {
        return Err(Error::Domain(format!("regenerative estimate of V(b) is {}", base[m])));
    }

    // Delta method: J^T C J summed over independent phases.
    let n_levels = m + 1;
    let mut var = vec![0.0; n_levels];
    for (p, ph) in phases.iter().enumerate() {
        let mut grads = [vec![0.0; n_levels], vec![0.0; n_levels]];
        for (c, grad) in grads.iter_mut().enumerate() {
            let k = 2 * p + c;
            let h = 1e-6 * theta[k].abs().max(1e-3);
            let mut tp = theta.clone();
            tp[k] += h;
            let vp = ladder_values(&tp, a, ry);
            tp[k] -= 2.0 * h;
            let vm = ladder_values(&tp, a, ry);
            for l in 0..n_levels {
                grad[l] = (vp[l] - vm[l]) / (2.0 * h);
            }
        }
        for l in 0..n_levels {
            for c1 in 0..2 {
                for c2 in 0..2 {
                    var[l] += grads[c1][l] * ph.cov[c1][c2] * grads[c2][l];
                }
            }
        }
    }
    let truncated: f64 = phases.iter().map(|p| p.truncated).sum();
    let amplification = 1.0 / (1.0 - theta[2 * m + 1] * ladder_u(&theta, ry));
    let bias = truncated * (-r * spec.horizon).exp() * (b + d.drift_bound() / r) * amplification;
    let total_paths = spec.n_paths * (m + 1);

    Ok(probes
        .iter()
        .map(|&x0| {
            if x0 <= a {
                return MCEstimate::exact(a);
            }
            let l = if x0 >= b { m } else { levels.iter().position(|&v| v == x0).expect("probe is a level") };
            MCEstimate {
                mean: base[l],
                std_error: var[l].max(0.0).sqrt(),
                n_paths: total_paths,
                truncation_bias_bound: bias,
                warnings: Vec::new(),
            }
        })
        .collect())
}

fn ladder_u(theta: &[f64], ry: usize) -> f64 {
    let m = (theta.len() - 2) / 2;
    (ry..m).map(|i| theta[2 * i]).product()
}

/// Drift of a diffusion whose drift stays within known bounds.
#[derive(Debug, Clone, PartialEq)]
pub enum DriftSpec {
    Constant(f64),
    /// `beta(k) mu - alpha(clamp((k - x)^+, 0, k))` at a frozen capital `k`,
    /// with volatility `beta(k) sigma`.
    Productive {
        mu: f64,
        beta_k: f64,
        alpha: SpreadSpec,
        k: f64,
    },
    /// `center + amplitude * sin(frequency * x)`.
    Sinusoidal {
        center: f64,
        amplitude: f64,
        frequency: f64,
    },
}

/// Diffusion with bounded drift, for hitting-time transforms.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundedDiffusion {
    pub drift: DriftSpec,
    pub sigma: f64,
    pub r: f64,
}

impl BoundedDiffusion {
    pub fn constant(drift: f64, sigma: f64, r: f64) -> Self {
        BoundedDiffusion { drift: DriftSpec::Constant(drift), sigma, r }
    }

    /// The investment model with capital frozen at `k`.
    pub fn productive(params: &ModelParams, k: f64) -> Result<Self> {
        let beta_k = params.productivity()?.value(k);
        Ok(BoundedDiffusion {
            drift: DriftSpec::Productive { mu: params.mu, beta_k, alpha: params.alpha.clone(), k },
            sigma: beta_k * params.sigma,
            r: params.r,
        })
    }

    pub fn sinusoidal(center: f64, amplitude: f64, frequency: f64, sigma: f64, r: f64) -> Self {
        BoundedDiffusion { drift: DriftSpec::Sinusoidal { center, amplitude, frequency }, sigma, r }
    }

    /// Drift bounds `(A, B)` with `A <= drift(x) <= B`.
    pub fn bounds(&self) -> (f64, f64) {
        match &self.drift {
            DriftSpec::Constant(m) => (*m, *m),
            DriftSpec::Productive { mu, beta_k, alpha, k } => (beta_k * mu - alpha.value(*k), beta_k * mu),
            DriftSpec::Sinusoidal { center, amplitude, .. } => (center - amplitude.abs(), center + amplitude.abs()),
        }
    }

    /// `exp(-(b - x)(sqrt(m^2 + 2 r s^2) - m) / s^2)`, the transform of the
    /// hitting time of `b` for constant drift `m`.
    pub fn constant_transform(&self, m: f64, x0: f64, b: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        (-(b - x0) * ((m * m + 2.0 * self.r * s2).sqrt() - m) / s2).exp()
    }

    /// `(lower, upper)` bounds on `E[exp(-r theta_b)]`.
    pub fn transform_bounds(&self, x0: f64, b: f64) -> (f64, f64) {
        let (lo, hi) = self.bounds();
        (self.constant_transform(lo, x0, b), self.constant_transform(hi, x0, b))
    }
}

impl Dynamics1D for BoundedDiffusion {
    fn drift(&self, x: f64) -> f64 {
        match &self.drift {
            DriftSpec::Constant(m) => *m,
            DriftSpec::Productive { mu, beta_k, alpha, k } => beta_k * mu - alpha.value((k - x).clamp(0.0, *k)),
            DriftSpec::Sinusoidal { center, amplitude, frequency } => center + amplitude * (frequency * x).sin(),
        }
    }
    fn vol(&self, _x: f64) -> f64 {
        self.sigma
    }
    fn drift_bound(&self) -> f64 {
        let (lo, hi) = self.bounds();
        lo.abs().max(hi.abs())
    }
}

/// Estimates `E[exp(-r theta)]` for `theta` the first time the diffusion
/// started at `x0` reaches `target_b`. Paths still running at the horizon
/// count zero, which biases the estimate down by at most the reported bound.
pub fn laplace_hitting(process: &BoundedDiffusion, x0: f64, target_b: f64, spec: &SimSpec) -> Result<MCEstimate> {
    spec.check(process.r)?;
    if !(x0 <= target_b) {
        return Err(Error::InvalidParams(format!("x0 = {x0} must not exceed the target {target_b}")));
    }
    if !(process.sigma > 0.0) {
        return Err(Error::InvalidParams("sigma must be positive".into()));
    }
    if x0 == target_b {
        return Ok(MCEstimate::exact(1.0));
    }
    let r = process.r;
    let steps = spec.max_steps();
    let samples = run_samples::<2, _>(spec, 7, |noise| {
        Ok(match exit_interval(process, x0, f64::NEG_INFINITY, target_b, spec.dt, steps, noise) {
            Exit::Upper(t) => [(-r * t).exp(), 0.0],
            Exit::Lower(_) => [0.0, 0.0],
            Exit::Truncated => [0.0, 1.0],
        })
    })?;
    let m = moments(&samples);
    Ok(MCEstimate {
        mean: m.mean[0],
        std_error: m.cov[0][0].sqrt(),
        n_paths: spec.n_paths,
        truncation_bias_bound: m.mean[1] * (-r * spec.horizon).exp(),
        warnings: Vec::new(),
    })
}

/// Simulates the two-dimensional firm under a labelled map.
///
/// Controls act before each diffusion step and are repeated until the state
/// sits on a Continue node: dividends project `x` down to the dividend
/// interface of the current capital row, investment and disinvestment move
/// `k` by one cell at cash cost `gamma` per unit. The path stops when
/// `x <= gamma k`.
pub fn simulate_2d_policy(
    params: &ModelParams,
    policy: &Policy2D,
    state0: (f64, f64),
    spec: &SimSpec,
) -> Result<MCEstimate> {
    params.ensure_valid()?;
    spec.check(params.r)?;
    let beta = params.productivity()?.clone();
    let (x0, k0) = state0;
    let g = &policy.grid;
    if !(x0.is_finite() && k0 >= 0.0 && k0 <= g.k_max() + 0.5 * g.h) {
        return Err(Error::InvalidParams(format!("state ({x0}, {k0}) is outside the grid")));
    }
    if x0 <= params.gamma * k0 {
        return Ok(MCEstimate::exact(0.0));
    }
    let r = params.r;
    let steps = spec.max_steps();
    let sdt = spec.dt.sqrt();
    let bound = params.mu * beta.sup() / r;
    let interfaces = dividend_interfaces(policy);
    let row = |k: f64| ((k / g.h).round().max(0.0) as usize).min(g.nk - 1);
    let samples = run_samples::<2, _>(spec, 11, |noise| {
        let (mut x, mut k) = (x0, k0);
        let mut t = 0.0;
        let mut pay = 0.0;
        let mut bk = beta.value(k);
        for _ in 0..steps {
            let k_before = k;
            let mut last = Label::Continue;
            let mut flips = 0;
            let mut moves = 0;
            loop {
                let label = policy.label_at(x.min(g.x_max()), k);
                match label {
                    Label::Continue | Label::Liquidated => break,
                    Label::PayDividend => {
                        let xd = interfaces[row(k)].max(params.gamma * k);
                        if x > xd {
                            pay += (-r * t).exp() * (x - xd);
                            x = xd;
                        }
                        break_if_stuck(label, &mut last, &mut flips, x, k)?;
                        if policy.label_at(x, k) == Label::PayDividend {
                            break;
                        }
                    }
                    Label::Invest => {
                        if k + g.h > g.k_max() + 0.5 * g.h {
                            break;
                        }
                        k += g.h;
                        x -= params.gamma * g.h;
                        break_if_stuck(label, &mut last, &mut flips, x, k)?;
                    }
                    Label::Disinvest => {
                        let dk = g.h.min(k);
                        if dk <= 0.0 {
                            break;
                        }
                        k -= dk;
                        x -= params.gamma * dk;
                        break_if_stuck(label, &mut last, &mut flips, x, k)?;
                    }
                }
                moves += 1;
                if x <= params.gamma * k {
                    return Ok([pay, 0.0]);
                }
                if moves > 4 * (g.nx + g.nk) {
                    return Err(Error::Chattering { x, k });
                }
            }
            if k != k_before {
                bk = beta.value(k);
            }
            let s = params.sigma * bk;
            let drift = params.mu * bk - params.alpha.value((k - x).max(0.0));
            let xn = x + drift * spec.dt + s * sdt * noise.normal();
            let lo = params.gamma * k;
            if xn <= lo {
                return Ok([pay, 0.0]);
            }
            let band = BRIDGE_BAND * s * sdt;
            if s > 0.0 && x.min(xn) - lo < band && bridge_crosses(x - lo, xn - lo, s * s * spec.dt, noise) {
                return Ok([pay, 0.0]);
            }
            x = xn;
            t += spec.dt;
        }
        Ok([pay, (-r * t).exp() * (x + k + bound)])
    })?;
    let m = moments(&samples);
    Ok(MCEstimate {
        mean: m.mean[0],
        std_error: m.cov[0][0].sqrt(),
        n_paths: spec.n_paths,
        truncation_bias_bound: m.mean[1],
        warnings: Vec::new(),
    })
}

/// Counts direction changes of capital moves within one time step.
fn break_if_stuck(label: Label, last: &mut Label, flips: &mut usize, x: f64, k: f64) -> Result<()> {
    let opposite = matches!((*last, label), (Label::Invest, Label::Disinvest) | (Label::Disinvest, Label::Invest));
    if opposite {
        *flips += 1;
        if *flips > 10 {
            return Err(Error::Chattering { x, k });
        }
    }
    *last = label;
    Ok(())
}

/// Per row, the midpoint between the last non-dividend node and the first
/// dividend node above it.
fn dividend_interfaces(policy: &Policy2D) -> Vec<f64> {
    let g = &policy.grid;
    (0..g.nk).map(|j| g.x(first_dividend_node(policy, j)) - 0.5 * g.h).collect()
}

fn first_dividend_node(policy: &Policy2D, j: usize) -> usize {
    let g = &policy.grid;
    let mut i = g.nx - 1;
    while i > g.boundary_index[j] + 1 && policy.label(i - 1, j) == Label::PayDividend {
        i -= 1;
    }
    i
}

/// The map with every capital move replaced by Continue: capital stays put
/// and dividends follow the solved barrier of each row.
pub fn static_policy(policy: &Policy2D) -> Policy2D {
    let g = &policy.grid;
    let mut labels = policy.labels.clone();
    for j in 0..g.nk {
        let i = first_dividend_node(policy, j);
        for ii in g.boundary_index[j] + 1..g.nx {
            labels[g.idx(ii, j)] = if ii >= i { Label::PayDividend } else { Label::Continue };
        }
    }
    Policy2D { grid: g.clone(), labels }
}
