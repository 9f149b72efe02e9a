//! Normal tail and Poisson helpers.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use super::quadrature::{integrate, QuadratureSpec};

/// Standard normal upper tail `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(X > a, Y > b)` for standard normals with correlation `rho`.
///
/// Uses the angular form of Plackett's identity,
/// `Φ(−a)Φ(−b) + (1/2π) ∫_0^{asin ρ} exp(−(a² + b² − 2ab sin θ)/(2 cos² θ)) dθ`,
/// whose integrand stays bounded as `|ρ| → 1`. The perfectly correlated
/// cases are evaluated directly.
pub fn bivariate_upper_orthant(a: f64, b: f64, rho: f64) -> f64 {
    let rho = rho.clamp(-1.0, 1.0);
    if rho >= 1.0 - 1e-14 {
        return q_function(a.max(b));
    }
    if rho <= -1.0 + 1e-14 {
        // X > a and X < -b
        return (q_function(a) - q_function(-b)).max(0.0);
    }
    let base = q_function(a) * q_function(b);
    if rho == 0.0 {
        return base;
    }
    let integrand = |theta: f64| {
        let c = theta.cos();
        (-(a * a + b * b - 2.0 * a * b * theta.sin()) / (2.0 * c * c)).exp()
    };
    let (lo, hi) = (0.0_f64, rho.asin());
    let q = integrate(integrand, &QuadratureSpec::new(lo.min(hi), lo.max(hi)).nodes(64).rel_tol(1e-12));
    let signed = if hi >= 0.0 { q.value } else { -q.value };
    (base + signed / (2.0 * PI)).clamp(0.0, 1.0)
}

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// `ln(y!)`.
pub fn ln_factorial(y: u64) -> f64 {
    const TABLE_LEN: usize = 256;
    static TABLE: std::sync::OnceLock<[f64; TABLE_LEN]> = std::sync::OnceLock::new();
    let table = TABLE.get_or_init(|| {
        let mut t = [0.0; TABLE_LEN];
        for i in 1..TABLE_LEN {
            t[i] = t[i - 1] + (i as f64).ln();
        }
        t
    });
    if (y as usize) < TABLE_LEN {
        table[y as usize]
    } else {
        ln_gamma(y as f64 + 1.0)
    }
}

/// `y ln λ` with the convention `0 · ln 0 = 0`; `-∞` when `λ = 0 < y`.
pub fn xlogy(y: f64, lambda: f64) -> f64 {
    if y == 0.0 {
        0.0
    } else if lambda == 0.0 {
        f64::NEG_INFINITY
    } else {
        y * lambda.ln()
    }
}

/// Poisson log-probability mass `ln P(Y = y)` for mean `lambda ≥ 0`.
pub fn poisson_ln_pmf(y: u64, lambda: f64) -> f64 {
    xlogy(y as f64, lambda) - lambda - ln_factorial(y)
}

pub fn poisson_pmf(y: u64, lambda: f64) -> f64 {
    poisson_ln_pmf(y, lambda).exp()
}

/// `P(Y ≤ y)`.
pub fn poisson_cdf(y: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    gamma_ur(y as f64 + 1.0, lambda)
}

/// `P(Y > y)`, computed without cancellation.
pub fn poisson_sf(y: u64, lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 0.0;
    }
    gamma_lr(y as f64 + 1.0, lambda)
}

/// Smallest `y` with `P(Y ≤ y) ≥ u`, i.e. the inverse-CDF transform of a
/// uniform variate. Counts are monotone in `lambda` for a fixed `u`, which is
/// what common-random-number comparisons rely on.
pub fn poisson_quantile(lambda: f64, u: f64) -> u64 {
    if lambda <= 0.0 || u <= 0.0 {
        return 0;
    }
    if lambda < 30.0 {
        // chop-down search from zero
        let mut p = (-lambda).exp();
        let mut cdf = p;
        let mut y = 0u64;
        while cdf < u {
            y += 1;
            p *= lambda / y as f64;
            cdf += p;
            if p == 0.0 && cdf < u {
                break;
            }
        }
        return y;
    }
    // start from the mode and walk
    let mut y = lambda.floor() as u64;
    let mut cdf = poisson_cdf(y, lambda);
    if cdf >= u {
        loop {
            if y == 0 {
                return 0;
            }
            let below = cdf - poisson_pmf(y, lambda);
            if below < u {
                return y;
            }
            cdf = below;
            y -= 1;
        }
    } else {
        loop {
            y += 1;
            let p = poisson_pmf(y, lambda);
            cdf += p;
            if cdf >= u || p == 0.0 {
                return y;
            }
        }
    }
}

/// Upper end of a truncated Poisson support `[0, λ + k√λ + 20]` with `k`
/// increased until the neglected tail mass is below `tail`.
pub fn poisson_support_limit(lambda: f64, tail: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let mut k = 0.0;
    loop {
        let upper = (lambda + k * lambda.sqrt() + 20.0).ceil() as u64;
        if poisson_sf(upper, lambda) < tail {
            return upper;
        }
        k += 1.0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_function_reference_values() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        let q1 = q_function(1.0);
        assert!((q1 - 0.158_655_253_931_457_05).abs() < 1e-14, "{q1:e}");
        assert!((q_function(-2.0) - 0.977_249_868_051_820_8).abs() < 1e-14);
        assert!((q_function(5.0) - 2.866_515_718_791_939e-7).abs() < 1e-18);
    }

    #[test]
    fn orthant_at_origin_matches_arcsine_law() {
        for rho in [-0.9, -0.3, 0.0, 0.5, 0.99] {
            let p = bivariate_upper_orthant(0.0, 0.0, rho);
            let expected = 0.25 + rho.asin() / (2.0 * PI);
            assert!((p - expected).abs() < 1e-12, "{rho}: {p} vs {expected}");
        }
    }

    #[test]
    fn orthant_limits() {
        assert!((bivariate_upper_orthant(0.3, -1.2, 0.0) - q_function(0.3) * q_function(-1.2)).abs() < 1e-15);
        let near = bivariate_upper_orthant(0.4, 0.1, 1.0 - 1e-9);
        assert!((near - q_function(0.4)).abs() < 1e-4, "{near}");
        let anti = bivariate_upper_orthant(-0.5, -0.7, -1.0 + 1e-9);
        assert!((anti - (q_function(-0.5) - q_function(0.7))).abs() < 1e-4, "{anti}");
        assert_eq!(bivariate_upper_orthant(1.0, 1.0, -1.0), 0.0);
    }

    #[test]
    fn orthant_matches_conditioning_quadrature() {
        // P(X > a, Y > b) = ∫_a^∞ φ(x) Q((b − ρx)/√(1−ρ²)) dx
        let (a, b, rho): (f64, f64, f64) = (0.7, -0.4, 0.6);
        let s = (1.0 - rho * rho).sqrt();
        let q = integrate(
            |x| normal_pdf(x) * q_function((b - rho * x) / s),
            &QuadratureSpec::new(a, a + 40.0).rel_tol(1e-13),
        );
        assert!((bivariate_upper_orthant(a, b, rho) - q.value).abs() < 1e-12);
    }

    #[test]
    fn poisson_zero_mean_is_degenerate() {
        assert_eq!(poisson_pmf(0, 0.0), 1.0);
        assert_eq!(poisson_pmf(3, 0.0), 0.0);
        assert_eq!(poisson_quantile(0.0, 0.7), 0);
    }

    #[test]
    fn pmf_sums_to_one() {
        for lambda in [0.3, 8.24, 40.8, 250.0] {
            let s: f64 = (0..2000).map(|y| poisson_pmf(y, lambda)).sum();
            assert!((s - 1.0).abs() < 1e-12, "{lambda}: {s}");
        }
    }

    #[test]
    fn cdf_and_sf_are_complementary() {
        for (y, lambda) in [(3, 2.0), (10, 8.24), (55, 40.8)] {
            let direct: f64 = (0..=y).map(|k| poisson_pmf(k, lambda)).sum();
            assert!((poisson_cdf(y, lambda) - direct).abs() < 1e-13);
            assert!((poisson_cdf(y, lambda) + poisson_sf(y, lambda) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for lambda in [0.5, 8.24, 40.8, 400.0] {
            for u in [1e-6, 0.1, 0.5, 0.9, 0.999_999] {
                let y = poisson_quantile(lambda, u);
                assert!(poisson_cdf(y, lambda) >= u - 1e-14);
                if y > 0 {
                    assert!(poisson_cdf(y - 1, lambda) < u + 1e-14);
                }
            }
        }
    }

    #[test]
    fn support_limit_respects_tail() {
        for lambda in [0.01, 2.0, 40.8, 1e4] {
            let u = poisson_support_limit(lambda, 1e-12);
            assert!(poisson_sf(u, lambda) < 1e-12);
        }
    }
}
