//! The numerical kernels on their own: bracketed roots, Gauss-Legendre
//! quadrature, golden-section search and a two-point boundary value problem.

use flowmeter::numerics::{find_root, gauss_legendre, golden_section_min, integrate, scan_brackets, solve_bvp, BvpSpec, QuadratureSpec, RootSpec};

fn main() -> flowmeter::Result<()> {
    let root = find_root(|x: f64| x.cos() - x, &RootSpec::new(0.0, 1.0))?;
    println!("cos x = x at {:.15} after {} iterations", root.x, root.iterations);
    println!("sign changes of sin on [1, 10]: {}", scan_brackets(f64::sin, 1.0, 10.0, 64).len());

    let (nodes, weights) = gauss_legendre(5);
    let x4: f64 = nodes.iter().zip(&weights).map(|(x, w)| w * x.powi(4)).sum();
    println!("5-point rule on x^4 over [-1, 1]: {x4:.15} (exact 0.4)");
    let q = integrate(|x: f64| (-x * x).exp(), &QuadratureSpec::new(0.0, 2.0));
    println!("∫₀² exp(-x²) dx = {:.14} (change {:.1e}, {} nodes)", q.value, q.error_estimate, q.nodes_used);

    let (x, fx) = golden_section_min(|x: f64| (x - 0.3).powi(2) + 1.0, 0.0, 1.0, 1e-10);
    println!("golden section: min {fx:.6} at {x:.8}");

    // y'' = y with y'(0) = 0 and y'(1) = sinh 1 has the solution cosh x
    let ode = |_x: f64, y: f64, _yp: f64| (y, 1.0, 0.0);
    let sol = solve_bvp(&ode, &BvpSpec::new(0.0, 1.0, 0.0, 1f64.sinh()), None)?;
    let worst = sol.grid.iter().zip(&sol.values).map(|(x, y)| (y - x.cosh()).abs()).fold(0.0, f64::max);
    println!("bvp: {} Newton steps, max error against cosh {worst:.2e}", sol.newton_steps);
    Ok(())
}
