//! Reference computations written directly from the model equations. They
//! use none of the library's solvers so they can serve as oracles.

#![allow(dead_code)]

/// Linear-spread fixed-size firm.
#[derive(Debug, Clone, Copy)]
pub struct Firm {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub lambda: f64,
}

pub const FIG1: Firm = Firm { mu: 0.25, sigma: 0.3, r: 0.02, lambda: 0.1 };

impl Firm {
    pub fn with_lambda(self, lambda: f64) -> Firm {
        Firm { lambda, ..self }
    }

    pub fn drift(&self, x: f64) -> f64 {
        self.mu - self.lambda * (1.0 - x).max(0.0)
    }

    /// `"liquidate"`, `"concave"` or `"convex_concave"` from the case
    /// conditions on `mu`, `r` and `alpha(1) = lambda`.
    pub fn regime(&self) -> &'static str {
        if self.mu <= self.r {
            "liquidate"
        } else if self.mu >= self.lambda {
            "concave"
        } else {
            "convex_concave"
        }
    }

    fn rhs(&self, x: f64, w: f64, w1: f64) -> f64 {
        2.0 * (self.r * w - self.drift(x) * w1) / (self.sigma * self.sigma)
    }

    /// `(w_b, w_b')` at `y <= b` by classical RK4 with steps of about `h`,
    /// restarting at the kink `x = 1`.
    pub fn w_b(&self, b: f64, y: f64, h: f64) -> (f64, f64) {
        let mut state = (self.drift(b) / self.r, 1.0);
        let mut x = b;
        let mut legs = vec![];
        if y < 1.0 && b > 1.0 {
            legs.push(1.0);
        }
        legs.push(y);
        for end in legs {
            let n = ((x - end) / h).ceil().max(1.0) as usize;
            let step = (end - x) / n as f64;
            for _ in 0..n {
                let f = |x: f64, s: (f64, f64)| (s.1, self.rhs(x, s.0, s.1));
                let k1 = f(x, state);
                let k2 = f(x + step / 2.0, (state.0 + step / 2.0 * k1.0, state.1 + step / 2.0 * k1.1));
                let k3 = f(x + step / 2.0, (state.0 + step / 2.0 * k2.0, state.1 + step / 2.0 * k2.1));
                let k4 = f(x + step, (state.0 + step * k3.0, state.1 + step * k3.1));
                state.0 += step / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
                state.1 += step / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
                x += step;
            }
            x = end;
        }
        state
    }

    /// Root of `b -> w_b(0)` on `(1, mu / r)`: a scan of `n` anchors to find
    /// the sign change, then bisection.
    pub fn b_star(&self, n: usize) -> f64 {
        let (lo, hi) = (1.0, self.mu / self.r);
        let g = |b: f64| self.w_b(b, 0.0, 1e-3).0;
        let mut prev = (lo, g(lo));
        let mut bracket = None;
        for i in 1..=n {
            let b = lo + (hi - lo) * i as f64 / n as f64;
            let v = g(b);
            if prev.1 > 0.0 && v <= 0.0 {
                bracket = Some((prev.0, b));
                break;
            }
            prev = (b, v);
        }
        let (mut a, mut c) = bracket.expect("w_b(0) changes sign on (1, mu / r)");
        for _ in 0..80 {
            let m = 0.5 * (a + c);
            if g(m) > 0.0 {
                a = m;
            } else {
                c = m;
            }
        }
        0.5 * (a + c)
    }
}

/// `exp(-(b - x)(sqrt(m^2 + 2 r s^2) - m) / s^2)`: Laplace transform of the
/// first passage of a Brownian motion with drift `m` from `x` up to `b`.
pub fn passage_transform(m: f64, s: f64, r: f64, x: f64, b: f64) -> f64 {
    let s2 = s * s;
    (-(b - x) * ((m * m + 2.0 * r * s2).sqrt() - m) / s2).exp()
}

/// Frictionless investment firm with linear spread and exponential productivity.
#[derive(Debug, Clone, Copy)]
pub struct Investor {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
    pub lambda: f64,
    pub beta_max: f64,
    pub beta_prime0: f64,
}

pub const FIG4: Investor = Investor { mu: 0.25, sigma: 0.6, r: 0.02, lambda: 0.8, beta_max: 5.0, beta_prime0: 2.0 };

impl Investor {
    pub fn beta(&self, k: f64) -> f64 {
        self.beta_max * (1.0 - (-self.beta_prime0 * k / self.beta_max).exp())
    }

    pub fn delta(&self) -> f64 {
        let s2 = self.sigma * self.sigma;
        2.0 * self.r * s2 / (self.mu * self.mu + 2.0 * self.r * s2)
    }

    pub fn high_vol(&self) -> bool {
        self.sigma * self.sigma * self.beta_prime0 >= self.mu / (1.0 - self.delta())
    }

    /// Residual of the switch-point equation `sigma^2 (1 - delta) beta(a) = mu a`.
    pub fn switch_residual(&self, a: f64) -> f64 {
        self.sigma * self.sigma * (1.0 - self.delta()) * self.beta(a) - self.mu * a
    }

    /// Positive root of the switch-point equation, by bisection.
    pub fn switch_point(&self) -> f64 {
        let (mut lo, mut hi) = (1e-9, self.beta_max * self.sigma * self.sigma / self.mu + 1.0);
        assert!(self.switch_residual(lo) > 0.0 && self.switch_residual(hi) < 0.0);
        for _ in 0..200 {
            let m = 0.5 * (lo + hi);
            if self.switch_residual(m) > 0.0 {
                lo = m;
            } else {
                hi = m;
            }
        }
        0.5 * (lo + hi)
    }

    /// Generator with capital `k` applied to `(v, v', v'')` at cash `x`.
    pub fn generator(&self, x: f64, k: f64, v: f64, v1: f64, v2: f64) -> f64 {
        let b = self.beta(k);
        (b * self.mu - self.lambda * (k - x).max(0.0)) * v1 + 0.5 * (self.sigma * b).powi(2) * v2 - self.r * v
    }

    /// Residual of the equation on `k = x`, relative to the size of its terms.
    pub fn all_in_residual(&self, x: f64, w: f64, w1: f64, w2: f64) -> f64 {
        let b = self.beta(x);
        let terms = [0.5 * (self.sigma * b).powi(2) * w2, self.mu * b * w1, -self.r * w];
        let scale: f64 = terms.iter().map(|t| t.abs()).sum();
        terms.iter().sum::<f64>().abs() / scale
    }
}

/// Evaluates `sum c_k x^(k + y)` and its first two derivatives.
pub fn power_series(coeffs: &[f64], y: f64, x: f64) -> (f64, f64, f64) {
    let mut out = (0.0, 0.0, 0.0);
    for (k, c) in coeffs.iter().enumerate() {
        let e = k as f64 + y;
        out.0 += c * x.powf(e);
        out.1 += c * e * x.powf(e - 1.0);
        out.2 += c * e * (e - 1.0) * x.powf(e - 2.0);
    }
    out
}
