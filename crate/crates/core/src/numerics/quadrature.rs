//! Composite Gauss–Legendre quadrature with panel doubling.

use std::f64::consts::PI;
use std::sync::OnceLock;

/// Points per panel of the composite rule.
pub const PANEL_ORDER: usize = 16;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "rule needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn panel_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(PANEL_ORDER))
}

/// Nodes and weights of the composite rule with `panels` equal panels on `[lo, hi]`.
pub fn composite_rule(lo: f64, hi: f64, panels: usize) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = panel_rule();
    let panels = panels.max(1);
    let width = (hi - lo) / panels as f64;
    let mut nodes = Vec::with_capacity(panels * PANEL_ORDER);
    let mut weights = Vec::with_capacity(panels * PANEL_ORDER);
    for p in 0..panels {
        let a = lo + width * p as f64;
        let mid = a + 0.5 * width;
        for (x, w) in xs.iter().zip(ws) {
            nodes.push(mid + 0.5 * width * x);
            weights.push(0.5 * width * w);
        }
    }
    (nodes, weights)
}

/// Interval, starting node count and doubling policy for [`integrate`].
#[derive(Debug, Clone, Copy)]
pub struct QuadratureSpec {
    pub lo: f64,
    pub hi: f64,
    /// Initial node count; rounded up to a multiple of [`PANEL_ORDER`].
    pub nodes: usize,
    pub max_doublings: usize,
    pub rel_tol: f64,
}

impl QuadratureSpec {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi, nodes: 256, max_doublings: 8, rel_tol: 1e-8 }
    }

    pub fn nodes(mut self, nodes: usize) -> Self {
        self.nodes = nodes;
        self
    }

    pub fn rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn initial_panels(&self) -> usize {
        self.nodes.div_ceil(PANEL_ORDER).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Magnitude of the change produced by the last doubling.
    pub error_estimate: f64,
    pub nodes_used: usize,
}

/// Integrates `f` over `[spec.lo, spec.hi]`, doubling the panel count until
/// the value moves by less than `rel_tol` (relative, with an absolute floor
/// at machine precision of the running value).
pub fn integrate<F>(f: F, spec: &QuadratureSpec) -> Quadrature
where
    F: Fn(f64) -> f64,
{
    if spec.hi == spec.lo {
        return Quadrature { value: 0.0, error_estimate: 0.0, nodes_used: 0 };
    }
    let eval = |panels: usize| {
        let (nodes, weights) = composite_rule(spec.lo, spec.hi, panels);
        nodes.iter().zip(&weights).map(|(&x, &w)| w * f(x)).sum::<f64>()
    };
    let mut panels = spec.initial_panels();
    let mut value = eval(panels);
    let mut err = f64::INFINITY;
    for _ in 0..spec.max_doublings {
        panels *= 2;
        let next = eval(panels);
        err = (next - value).abs();
        value = next;
        if err <= spec.rel_tol * value.abs() || err <= f64::EPSILON * value.abs() || err == 0.0 {
            break;
        }
    }
    Quadrature { value, error_estimate: err, nodes_used: panels * PANEL_ORDER }
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::erf::erf;

    #[test]
    fn weights_sum_to_two_and_integrate_polynomials_exactly() {
        for n in [1, 2, 5, 16, 64] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n = {n}: {s}");
            // exact for degree 2n - 1
            let deg = 2 * n - 1;
            let approx: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((approx - exact).abs() < 1e-12, "n = {n}");
        }
    }

    #[test]
    fn constant_integrand() {
        let q = integrate(|_| 1.0, &QuadratureSpec::new(0.0, 1.0));
        assert!((q.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_width_interval() {
        let q = integrate(|x: f64| x.exp(), &QuadratureSpec::new(0.3, 0.3));
        assert_eq!(q.value, 0.0);
    }

    #[test]
    fn diffusion_gaussian_matches_normal_cdf() {
        // 1-D marginal of the no-flow impulse response at D = 1e-8, t = 0.1
        let var = 2.0 * 1e-8 * 0.1;
        let f = |x: f64| (-x * x / (2.0 * var)).exp() / (2.0 * PI * var).sqrt();
        let (a, b) = (-3e-4, 5e-4);
        let q = integrate(f, &QuadratureSpec::new(a, b).rel_tol(1e-12));
        let exact = 0.5 * (erf(b / (2.0 * var).sqrt()) - erf(a / (2.0 * var).sqrt()));
        assert!((q.value - exact).abs() < 1e-10, "{} vs {}", q.value, exact);
    }
}
