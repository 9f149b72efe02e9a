//! Bracketed scalar root finding.

use crate::error::{Error, Result};

/// Bracket and stopping rule for [`find_root`].
#[derive(Debug, Clone, Copy)]
pub struct RootSpec {
    pub lo: f64,
    pub hi: f64,
    /// Absolute tolerance on the bracket width.
    pub tol: f64,
    pub max_iter: usize,
}

impl RootSpec {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, tol: 1e-12, max_iter: 200 }
    }

    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub iterations: usize,
}

/// Finds a sign change of `f` inside `[spec.lo, spec.hi]`.
///
/// Secant and inverse-quadratic steps are accepted only while they shrink the
/// bracket fast enough; otherwise the method falls back to bisection, so the
/// bracket always contains a sign change and the iteration count is bounded
/// by the bisection count plus a constant.
pub fn find_root<F>(mut f: F, spec: &RootSpec) -> Result<Root>
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (spec.lo, spec.hi);
    let mut fa = f(a);
    let mut fb = f(b);
    if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 {
        return Err(Error::Bracket { a, fa, b, fb });
    }
    if fa == 0.0 {
        return Ok(Root { x: a, fx: fa, iterations: 0 });
    }
    if fb == 0.0 {
        return Ok(Root { x: b, fx: fb, iterations: 0 });
    }

    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for iter in 1..=spec.max_iter {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * spec.tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(Root { x: b, fx: fb, iterations: iter });
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                // secant
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                // inverse quadratic interpolation
                let qa = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qa * (qa - r) - (b - a) * (r - 1.0));
                q = (qa - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(Error::InvalidParameter(format!("non-finite function value at x = {b}")));
        }
    }
    Err(Error::RootNoConvergence(spec.max_iter))
}

/// Scans `n` equal cells of `[lo, hi]` and returns every cell whose endpoints
/// bracket a sign change of `f`.
pub fn scan_brackets<F>(mut f: F, lo: f64, hi: f64, n: usize) -> Vec<(f64, f64)>
where
    F: FnMut(f64) -> f64,
{
    let n = n.max(1);
    let step = (hi - lo) / n as f64;
    let mut out = Vec::new();
    let mut x0 = lo;
    let mut f0 = f(x0);
    for i in 1..=n {
        let x1 = if i == n { hi } else { lo + step * i as f64 };
        let f1 = f(x1);
        if f0.is_finite() && f1.is_finite() && f0 * f1 <= 0.0 && !(f0 == 0.0 && f1 == 0.0) {
            out.push((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}
