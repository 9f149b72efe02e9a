//! Two-point boundary value problems `y'' = f(x, y, y')` with derivative
//! (Neumann) conditions at both ends, solved by finite-difference
//! collocation on a uniform grid and Newton iteration.

use crate::error::{Error, Result};

/// Right-hand side of `y'' = f(x, y, y')` with its partial derivatives.
pub trait SecondOrderOde {
    /// Returns `(f, ∂f/∂y, ∂f/∂y')` at `(x, y, yp)`.
    fn eval(&self, x: f64, y: f64, yp: f64) -> (f64, f64, f64);
}

impl<F> SecondOrderOde for F
where
    F: Fn(f64, f64, f64) -> (f64, f64, f64),
{
    fn eval(&self, x: f64, y: f64, yp: f64) -> (f64, f64, f64) {
        self(x, y, yp)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BvpSpec {
    pub lo: f64,
    pub hi: f64,
    /// Required `y'(lo)`.
    pub left_slope: f64,
    /// Required `y'(hi)`.
    pub right_slope: f64,
    pub grid_points: usize,
    pub max_newton: usize,
    pub tol: f64,
}

impl BvpSpec {
    pub fn new(lo: f64, hi: f64, left_slope: f64, right_slope: f64) -> Self {
        Self { lo, hi, left_slope, right_slope, grid_points: 2001, max_newton: 25, tol: 1e-8 }
    }

    pub fn grid_points(mut self, n: usize) -> Self {
        self.grid_points = n;
        self
    }

    pub fn max_newton(mut self, n: usize) -> Self {
        self.max_newton = n;
        self
    }
}

/// Discrete solution of a boundary value problem.
#[derive(Debug, Clone)]
pub struct BvpSolution {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Second-order finite-difference first derivative (one-sided at the ends).
    pub slopes: Vec<f64>,
    /// Max-norm of the discrete residual at the final iterate.
    pub residual: f64,
    pub newton_steps: usize,
}

/// Solves `y'' = f(x, y, y')` on `[spec.lo, spec.hi]` with `y'(lo)` and `y'(hi)`
/// prescribed, starting from `initial` (or zero when `None`).
///
/// Interior nodes use central differences; each boundary row uses the
/// one-sided second-order stencil `(∓3y₀ ± 4y₁ ∓ y₂)/2h`. The extra entry this
/// puts outside the tridiagonal band is eliminated against the neighbouring
/// interior row before a Thomas sweep.
pub fn solve_bvp<O: SecondOrderOde>(ode: &O, spec: &BvpSpec, initial: Option<&[f64]>) -> Result<BvpSolution> {
    let n = spec.grid_points;
    if n < 4 {
        return Err(Error::InvalidParameter("boundary value grid needs at least 4 points".into()));
    }
    if !(spec.hi > spec.lo) {
        return Err(Error::InvalidParameter("boundary value interval is empty".into()));
    }
    let h = (spec.hi - spec.lo) / (n - 1) as f64;
    let grid: Vec<f64> = (0..n).map(|i| if i == n - 1 { spec.hi } else { spec.lo + h * i as f64 }).collect();
    let mut y = match initial {
        Some(v) if v.len() == n => v.to_vec(),
        Some(_) => return Err(Error::InvalidParameter("initial guess length mismatch".into())),
        None => vec![0.0; n],
    };

    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for step in 0..=spec.max_newton {
        // assemble residual F(y) and Jacobian
        let inv_h2 = 1.0 / (h * h);
        let inv_2h = 0.5 / h;
        let r0 = (-3.0 * y[0] + 4.0 * y[1] - y[2]) * inv_2h - spec.left_slope;
        let (a0, b0, c0) = (-3.0 * inv_2h, 4.0 * inv_2h, -inv_2h);
        let rn = (y[n - 3] - 4.0 * y[n - 2] + 3.0 * y[n - 1]) * inv_2h - spec.right_slope;
        let (an, bn, cn) = (inv_2h, -4.0 * inv_2h, 3.0 * inv_2h);
        rhs[0] = -r0;
        rhs[n - 1] = -rn;
        let mut max_res = r0.abs().max(rn.abs());
        for i in 1..n - 1 {
            let yp = (y[i + 1] - y[i - 1]) * inv_2h;
            let (f, fy, fyp) = ode.eval(grid[i], y[i], yp);
            let r = (y[i - 1] - 2.0 * y[i] + y[i + 1]) * inv_h2 - f;
            max_res = max_res.max(r.abs());
            rhs[i] = -r;
            sub[i] = inv_h2 + fyp * inv_2h;
            diag[i] = -2.0 * inv_h2 - fy;
            sup[i] = inv_h2 - fyp * inv_2h;
        }
        residual = max_res;
        if !residual.is_finite() {
            return Err(Error::BvpNoConvergence { iterations: step, residual });
        }
        if residual <= spec.tol {
            return Ok(finish(grid, y, h, residual, step));
        }
        if step == spec.max_newton {
            break;
        }

        // eliminate y2 from row 0 using row 1, and y_{n-3} from row n-1 using row n-2
        let m0 = c0 / sup[1];
        diag[0] = a0 - m0 * sub[1];
        sup[0] = b0 - m0 * diag[1];
        rhs[0] -= m0 * rhs[1];
        let mn = an / sub[n - 2];
        sub[n - 1] = bn - mn * diag[n - 2];
        diag[n - 1] = cn - mn * sup[n - 2];
        rhs[n - 1] -= mn * rhs[n - 2];

        let delta = thomas(&sub, &diag, &sup, &rhs)?;
        let scale = y.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        let mut max_step = 0.0_f64;
        for (yi, di) in y.iter_mut().zip(&delta) {
            *yi += di;
            max_step = max_step.max(di.abs());
        }
        // roundoff floor: the update no longer changes the iterate
        if max_step <= 1e-15 * scale && step > 0 {
            let res = discrete_residual(ode, spec, &grid, &y, h);
            if res <= spec.tol.max(1e3 * f64::EPSILON * inv_h2 * scale) {
                return Ok(finish(grid, y, h, res, step + 1));
            }
        }
    }
    Err(Error::BvpNoConvergence { iterations: spec.max_newton, residual })
}

fn discrete_residual<O: SecondOrderOde>(ode: &O, spec: &BvpSpec, grid: &[f64], y: &[f64], h: f64) -> f64 {
    let n = y.len();
    let inv_2h = 0.5 / h;
    let mut m = ((-3.0 * y[0] + 4.0 * y[1] - y[2]) * inv_2h - spec.left_slope).abs();
    m = m.max(((y[n - 3] - 4.0 * y[n - 2] + 3.0 * y[n - 1]) * inv_2h - spec.right_slope).abs());
    for i in 1..n - 1 {
        let yp = (y[i + 1] - y[i - 1]) * inv_2h;
        let (f, _, _) = ode.eval(grid[i], y[i], yp);
        m = m.max(((y[i - 1] - 2.0 * y[i] + y[i + 1]) / (h * h) - f).abs());
    }
    m
}

fn finish(grid: Vec<f64>, values: Vec<f64>, h: f64, residual: f64, newton_steps: usize) -> BvpSolution {
    let slopes = derivative(&values, h);
    BvpSolution { grid, values, slopes, residual, newton_steps }
}

/// Second-order first derivative of uniformly sampled values.
pub fn derivative(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut d = vec![0.0; n];
    if n < 3 {
        return d;
    }
    d[0] = (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h);
    d[n - 1] = (values[n - 3] - 4.0 * values[n - 2] + 3.0 * values[n - 1]) / (2.0 * h);
    for i in 1..n - 1 {
        d[i] = (values[i + 1] - values[i - 1]) / (2.0 * h);
    }
    d
}

/// Solves a tridiagonal system; `sub[0]` and `sup[n-1]` are ignored.
pub fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv == 0.0 {
        return Err(Error::InvalidParameter("singular tridiagonal system".into()));
    }
    c[0] = sup[0] / piv;
    d[0] = rhs[0] / piv;
    for i in 1..n {
        piv = diag[i] - sub[i] * c[i - 1];
        if piv == 0.0 || !piv.is_finite() {
            return Err(Error::InvalidParameter("singular tridiagonal system".into()));
        }
        c[i] = if i + 1 < n { sup[i] / piv } else { 0.0 };
        d[i] = (rhs[i] - sub[i] * d[i - 1]) / piv;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

/// Composite Simpson rule on uniformly sampled values (falls back to the
/// trapezoid rule on the last interval when the interval count is odd).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut s = 0.0;
    let mut i = 0;
    while i < even {
        s += values[i] + 4.0 * values[i + 1] + values[i + 2];
        i += 2;
    }
    s *= h / 3.0;
    if even < intervals {
        s += 0.5 * h * (values[n - 2] + values[n - 1]);
    }
    s
}
