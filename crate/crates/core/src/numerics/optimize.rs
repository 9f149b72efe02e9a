//! Derivative-free one-dimensional minimization.

/// Golden-section search for a minimizer of `f` on `[lo, hi]`.
///
/// Returns the best point seen (including the endpoints' interior probes),
/// so a non-unimodal `f` still yields a point no worse than any evaluation.
pub fn golden_section_min<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let (mut best_x, mut best_f) = if fc <= fd { (c, fc) } else { (d, fd) };
    while (b - a).abs() > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc < best_f {
                best_x = c;
                best_f = fc;
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd < best_f {
                best_x = d;
                best_f = fd;
            }
        }
    }
    (best_x, best_f)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_minimum() {
        let (x, fx) = golden_section_min(|x| (x - 0.37) * (x - 0.37) + 2.0, 0.0, 1.0, 1e-10);
        assert!((x - 0.37).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-15);
    }

    #[test]
    fn boundary_minimum() {
        let (x, _) = golden_section_min(|x| x, 1.0, 2.0, 1e-9);
        assert!((x - 1.0).abs() < 1e-8);
    }

    #[test]
    fn linspace_endpoints_are_exact() {
        let v = linspace(0.001, 1.0, 7);
        assert_eq!(v[0], 0.001);
        assert_eq!(v[6], 1.0);
    }
}
