//! Numeric kernels shared by the channel, detector and estimator modules.
//!
//! Every kernel is deterministic: identical inputs give bit-identical outputs.

pub mod bvp;
pub mod optimize;
pub mod quadrature;
pub mod root;
pub mod simplex;
pub mod special;

pub use bvp::{solve_bvp, BvpSolution, BvpSpec, SecondOrderOde};
pub use optimize::{golden_section_min, linspace};
pub use quadrature::{composite_rule, gauss_legendre, integrate, Quadrature, QuadratureSpec};
pub use root::{find_root, scan_brackets, Root, RootSpec};
pub use simplex::{optimize_simplex_grid, SimplexOptimum, SimplexPoint};
pub use special::{bivariate_upper_orthant, q_function};

/// Exponentiates `values` after subtracting their maximum and normalizes the
/// result to sum to one. `-∞` entries map to zero weight.
pub fn logsumexp_normalize(values: &[f64]) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return vec![1.0 / values.len() as f64; values.len()];
    }
    let exps: Vec<f64> = values.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `ln Σ exp(values)`.
pub fn logsumexp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_inputs_normalize_to_uniform() {
        let w = logsumexp_normalize(&[3.0; 4]);
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn normalization_is_shift_invariant() {
        let a = logsumexp_normalize(&[0.25, -2.0, 1.5]);
        let b = logsumexp_normalize(&[1024.25, 1022.0, 1025.5]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn extreme_spread_does_not_overflow() {
        let w = logsumexp_normalize(&[-1e4, 0.0]);
        assert!(w[0] < 1e-300);
        assert_eq!(w[1], 1.0);
    }
}
