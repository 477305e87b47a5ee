//! Bracketed scalar root finding.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct BisectOptions {
    pub x_tol: f64,
    pub max_iter: usize,
}

impl Default for BisectOptions {
    fn default() -> Self {
        BisectOptions { x_tol: 1e-13, max_iter: 100 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Bisection on `[lo, hi]`. `f(lo)` and `f(hi)` must have opposite signs
/// (or one of them vanish). Returns the evaluated point with the smallest
/// `|f|` among the final bracket ends.
pub fn bisect<F>(mut f: F, lo: f64, hi: f64, opts: BisectOptions) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut flo = f(lo)?;
    if flo == 0.0 {
        return Ok(Root { x: lo, fx: 0.0, iterations: 0 });
    }
    let mut fhi = f(hi)?;
    if fhi == 0.0 {
        return Ok(Root { x: hi, fx: 0.0, iterations: 0 });
    }
    if !(flo.is_finite() && fhi.is_finite()) || flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!("no sign change on [{lo}, {hi}]: f(lo) = {flo:e}, f(hi) = {fhi:e}")));
    }
    let mut iterations = 0;
    while iterations < opts.max_iter && hi - lo > opts.x_tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid)?;
        iterations += 1;
        if fm == 0.0 {
            return Ok(Root { x: mid, fx: 0.0, iterations });
        }
        if !fm.is_finite() {
            return Err(Error::Bracket(format!("f({mid}) is not finite")));
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
            fhi = fm;
        }
    }
    Ok(if flo.abs() <= fhi.abs() { Root { x: lo, fx: flo, iterations } } else { Root { x: hi, fx: fhi, iterations } })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_sqrt_two() {
        let root = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, BisectOptions::default()).unwrap();
        assert!((root.x - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn rejects_missing_sign_change() {
        let err = bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, BisectOptions::default());
        assert!(matches!(err, Err(Error::Bracket(_))));
    }

    #[test]
    fn exact_endpoint_root() {
        let root = bisect(|x| Ok(x - 1.0), 1.0, 3.0, BisectOptions::default()).unwrap();
        assert_eq!(root.x, 1.0);
        assert_eq!(root.iterations, 0);
    }

    #[test]
    fn propagates_errors() {
        let err = bisect(
            |x| if x > 0.7 { Err(Error::Domain("boom".into())) } else { Ok(x - 0.5) },
            0.0,
            1.0,
            BisectOptions::default(),
        );
        assert!(matches!(err, Err(Error::Domain(_))));
    }
}
