//! Maximization over the probability simplex.

use crate::error::{Error, Result};

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter("simplex point needs at least one weight".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidParameter("simplex weights must be nonnegative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("simplex weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn vertex(k: usize, i: usize) -> Self {
        let mut w = vec![0.0; k];
        w[i] = 1.0;
        Self(w)
    }

    pub fn barycenter(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    fn renormalized(mut w: Vec<f64>) -> Self {
        for x in &mut w {
            if *x < 0.0 {
                *x = 0.0;
            }
        }
        let s: f64 = w.iter().sum();
        for x in &mut w {
            *x /= s;
        }
        Self(w)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexOptimum {
    pub point: SimplexPoint,
    pub value: f64,
}

/// Maximizes `g` over the `k`-dimensional simplex.
///
/// Every lattice point with coordinates in multiples of `1/resolution` is
/// evaluated; the best is then polished by pairwise mass transfers with a
/// shrinking step until the step falls below `1e-10`. Ties on the lattice
/// keep the first point in lexicographic order.
pub fn optimize_simplex_grid<G>(g: G, k: usize, resolution: usize) -> SimplexOptimum
where
    G: Fn(&[f64]) -> f64,
{
    assert!(k >= 1, "simplex dimension must be positive");
    let n = resolution.max(1);
    let mut best_w = vec![0.0; k];
    best_w[0] = 1.0;
    let mut best = g(&best_w);
    let mut counts = vec![0usize; k];
    enumerate_compositions(n, k, 0, &mut counts, &mut |c| {
        let w: Vec<f64> = c.iter().map(|&ci| ci as f64 / n as f64).collect();
        let v = g(&w);
        if v > best {
            best = v;
            best_w = w;
        }
    });

    let mut step = 1.0 / n as f64;
    while step > 1e-10 && k > 1 {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || best_w[j] <= 0.0 {
                    continue;
                }
                let delta = step.min(best_w[j]);
                let mut w = best_w.clone();
                w[i] += delta;
                w[j] -= delta;
                let v = g(&w);
                if v > best {
                    best = v;
                    best_w = w;
                    improved = true;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    SimplexOptimum { point: SimplexPoint::renormalized(best_w), value: best }
}

fn enumerate_compositions<F: FnMut(&[usize])>(
    remaining: usize,
    k: usize,
    idx: usize,
    counts: &mut Vec<usize>,
    visit: &mut F,
) {
    if idx == k - 1 {
        counts[idx] = remaining;
        visit(counts);
        return;
    }
    for c in (0..=remaining).rev() {
        counts[idx] = c;
        enumerate_compositions(remaining - c, k, idx + 1, counts, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_objective_lands_on_a_vertex() {
        let opt = optimize_simplex_grid(|w| 0.2 * w[0] + 0.9 * w[1] + 0.5 * w[2], 3, 10);
        assert_eq!(opt.point.weights(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn symmetric_concave_objective_lands_on_barycenter() {
        let opt = optimize_simplex_grid(|w| -w.iter().map(|x| x * x).sum::<f64>(), 3, 7);
        for w in opt.point.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-8, "{w}");
        }
    }

    #[test]
    fn rejects_off_simplex_points() {
        assert!(SimplexPoint::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexPoint::new(vec![-0.1, 1.1]).is_err());
        assert!(SimplexPoint::new(vec![0.25, 0.75]).is_ok());
    }

    #[test]
    fn max_min_objective_balances_two_coordinates() {
        // max over w of min(w0, 2 w1) -> w0 = 2/3
        let opt = optimize_simplex_grid(|w| w[0].min(2.0 * w[1]), 2, 9);
        assert!((opt.point.weights()[0] - 2.0 / 3.0).abs() < 1e-8);
    }
}
