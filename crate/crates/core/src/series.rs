//! Truncated power series arithmetic. A series is its coefficient vector,
//! lowest order first.

use crate::error::{Error, Result};

/// Cauchy product truncated to `n` terms.
pub fn mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for (i, ai) in a.iter().enumerate().take(n) {
        for (j, bj) in b.iter().enumerate().take(n - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `1 / a` truncated to `n` terms; needs `a[0] != 0`.
pub fn reciprocal(a: &[f64], n: usize) -> Result<Vec<f64>> {
    let a0 = *a.first().unwrap_or(&0.0);
    if a0 == 0.0 {
        return Err(Error::Series("reciprocal of a series with zero constant term".into()));
    }
    let mut out = vec![0.0; n];
    if n == 0 {
        return Ok(out);
    }
    out[0] = 1.0 / a0;
    for k in 1..n {
        let mut s = 0.0;
        for j in 1..=k.min(a.len() - 1) {
            s += a[j] * out[k - j];
        }
        out[k] = -s / a0;
    }
    Ok(out)
}

pub fn scale(a: &[f64], c: f64) -> Vec<f64> {
    a.iter().map(|v| v * c).collect()
}

/// Horner evaluation of `sum a_k x^k`.
pub fn eval(a: &[f64], x: f64) -> f64 {
    a.iter().rev().fold(0.0, |acc, c| acc * x + c)
}
