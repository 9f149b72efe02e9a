//! Property suite behind the `validate` command.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{
    mean_count, mean_count_time_derivative, particle_oracle_mean_count, FlowProfile, SamplingSchedule, SystemParams, Vec3,
};
use crate::detect_schedule::gaussian_stationarity_residual;
use crate::detector::{HypothesisSet, MeanMatrix, TailPolicy};
use crate::error::{Error, Result};
use crate::est_bounds::{ecr_bound, fisher_information_along, mse_quadrature, Estimator};
use crate::estimator::{ln_mean_count_along, map_speed_closed_form, map_speed_numeric, PosteriorKernel};
use crate::numerics::special::poisson_pmf;

use super::config::ExperimentConfig;
use super::runs::stamp;
use super::table::{Cell, ResultTable};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Worst observed discrepancy in the check's own units.
    pub value: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_table(&self, cfg: &ExperimentConfig) -> ResultTable {
        let mut t = ResultTable::new("validate", &["check", "passed", "value", "tolerance"]);
        for c in &self.checks {
            t.push(vec![Cell::Text(c.name.clone()), usize::from(c.passed).into(), c.value.into(), c.tolerance.into()]);
        }
        let mut tables = [t];
        stamp(cfg, "validate", &mut tables);
        let [t] = tables;
        t
    }
}

fn check(name: &str, value: f64, tolerance: f64) -> Check {
    Check { name: name.into(), passed: value <= tolerance, value, tolerance }
}

/// Largest `|analytic − oracle| / SE` over the grid, for a given analytic model.
fn oracle_z(params: &SystemParams, cfg: &ExperimentConfig, model: impl Fn(f64, f64) -> f64) -> Result<f64> {
    let grid = [(0.0, 0.06), (0.0, 0.12), (4e-4, 0.1), (8e-4, 0.08), (1e-3, 0.15)];
    let mut worst: f64 = 0.0;
    for (k, &(v, t)) in grid.iter().enumerate() {
        let flow = FlowProfile::along(params.direction(), v);
        let oracle = particle_oracle_mean_count(params, &flow, t, cfg.particles, t / 10.0, cfg.seed.wrapping_add(k as u64))?;
        worst = worst.max((model(v, t) - oracle.mean).abs() / oracle.std_error);
    }
    Ok(worst)
}

/// Runs every property check. Failures are reported, not raised; errors
/// from the numerics propagate.
pub fn run_validate(cfg: &ExperimentConfig) -> Result<ValidationReport> {
    let params = cfg.params()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();

    // channel against Brownian particles, and the same check rejecting a mutated channel
    let analytic = |v: f64, t: f64| mean_count(&params, &FlowProfile::along(params.direction(), v), t).expect("t > t_r");
    checks.push(check("particle_oracle_z", oracle_z(&params, cfg, analytic)?, 4.0));
    let mutated = |v: f64, t: f64| {
        let tau = t - params.release_time();
        analytic(v, t) * (4.0 * PI * params.diffusion() * tau).powf(1.5 - 1.515)
    };
    let z = oracle_z(&params, cfg, mutated)?;
    checks.push(Check { name: "mutation_detected_z".into(), passed: z > 4.0, value: z, tolerance: 4.0 });

    // exact error probability against simulated detection
    let mut worst: f64 = 0.0;
    for (k, (speeds, times)) in
        [(vec![0.0, 4e-4], vec![0.109]), (vec![0.0, 4e-4, 1e-3], vec![0.095]), (vec![0.0, 3e-4], vec![0.09, 0.13])].into_iter().enumerate()
    {
        let means = HypothesisSet::along_direction(params.clone(), &speeds)?.means_at(&times)?;
        let exact = means.error_probability_exact(&TailPolicy::default())?;
        let mc = means.error_probability_montecarlo(cfg.trials as u64, cfg.seed.wrapping_add(k as u64))?;
        worst = worst.max((mc.estimate - exact).abs() / mc.std_error.max(1e-300));
    }
    checks.push(check("exact_pe_vs_montecarlo_z", worst, 4.0));

    // single-sample MAP closed form against numeric maximization
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let t = rng.random_range(0.03..0.25);
        let v_max = rng.random_range(2e-4..2e-3);
        let lam = ln_mean_count_along(&params, rng.random_range(0.0..v_max), t).exp();
        let y = crate::numerics::special::poisson_quantile(lam, rng.random());
        let closed = map_speed_closed_form(&params, 0.0, v_max, t, y as f64)?;
        let kernel = PosteriorKernel::new(&params, &SamplingSchedule::new(vec![t], params.release_time())?, &[y as f64])?;
        let numeric = map_speed_numeric(&kernel, 0.0, v_max)?;
        for c in &closed.candidates {
            let gap = numeric.iter().map(|(v, _)| (v - c).abs() / c.abs().max(1e-12)).fold(f64::INFINITY, f64::min);
            worst = worst.max(gap);
        }
        if numeric.len() != closed.candidates.len() {
            worst = f64::INFINITY;
        }
    }
    checks.push(check("map_closed_form_rel", worst, 1e-8));

    // single-sample micro-oracle λ = (2, 1)
    let micro = MeanMatrix::new(vec![vec![2.0], vec![1.0]])?;
    let threshold = micro.binary_rule()?.threshold.expect("one sample");
    checks.push(check("micro_threshold", (threshold - 1.0 / 2f64.ln()).abs(), 1e-12));
    let brute = 0.5 * (0..200u64).map(|y| poisson_pmf(y, 2.0).min(poisson_pmf(y, 1.0))).sum::<f64>();
    checks.push(check("micro_exact_pe", (micro.error_probability_exact(&TailPolicy::default())? - brute).abs(), 1e-10));
    checks.push(check("micro_chernoff_s", (micro.optimal_chernoff_s(0, 1)? - 0.5288).abs(), 1e-4));
    checks.push(check("micro_bound_above_exact", brute - micro.error_bound_ci()?, 0.0));

    // derivatives against central differences
    let mut worst: f64 = 0.0;
    let piecewise = FlowProfile::piecewise(vec![0.05], vec![Vec3::new(3e-4, 0.0, 0.0), Vec3::new(6e-4, 1e-4, 0.0)])?;
    for flow in [FlowProfile::zero(), FlowProfile::along(params.direction(), 4e-4), piecewise] {
        for t in [0.03, 0.08, 0.12, 0.2] {
            let h = 1e-6 * t;
            let fd = (mean_count(&params, &flow, t + h)? - mean_count(&params, &flow, t - h)?) / (2.0 * h);
            let exact = mean_count_time_derivative(&params, &flow, t)?;
            worst = worst.max((fd - exact).abs() / exact.abs().max(1e-300));
        }
    }
    checks.push(check("mean_count_time_derivative_rel", worst, 1e-6));

    let hyps = HypothesisSet::along_direction(params.clone(), &[0.0, 4e-4])?;
    let mut worst: f64 = 0.0;
    for times in [vec![0.1], vec![0.09, 0.12], vec![0.07, 0.1, 0.16]] {
        let schedule = SamplingSchedule::new(times.clone(), params.release_time())?;
        let grad = gaussian_stationarity_residual(&hyps, &schedule)?;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        for l in 0..times.len() {
            let h = 1e-4 * times[l];
            let at = |dt: f64| -> Result<f64> {
                let mut t = times.clone();
                t[l] += dt;
                hyps.means_at(&t)?.error_probability_gaussian()
            };
            let fd = (8.0 * (at(h)? - at(-h)?) - (at(2.0 * h)? - at(-2.0 * h)?)) / (12.0 * h);
            worst = worst.max((fd - grad[l]).abs() / scale);
        }
    }
    checks.push(check("gaussian_stationarity_rel", worst, 1e-6));

    let mut worst: f64 = 0.0;
    let schedule = SamplingSchedule::new(vec![0.06, 0.09, 0.14], params.release_time())?;
    for _ in 0..5 {
        let v0 = rng.random_range(0.0..1e-3);
        let lam0: Vec<f64> = schedule.times().iter().map(|&t| ln_mean_count_along(&params, v0, t).exp()).collect();
        let h_of = |v: f64| -> f64 {
            schedule
                .times()
                .iter()
                .zip(&lam0)
                .map(|(&t, l0)| l0 * ln_mean_count_along(&params, v, t) - ln_mean_count_along(&params, v, t).exp())
                .sum()
        };
        let h = 1e-7;
        let fd = -(h_of(v0 + h) - 2.0 * h_of(v0) + h_of(v0 - h)) / (h * h);
        let j = fisher_information_along(&params, &schedule, v0);
        worst = worst.max((fd / j - 1.0).abs());
    }
    checks.push(check("fisher_information_rel", worst, 1e-4));

    // bound orderings on random instances
    let mut violations = 0.0;
    for _ in 0..100 {
        let m = rng.random_range(2..=3);
        let l = rng.random_range(2..=3);
        let mut speeds: Vec<f64> = (0..m).map(|_| rng.random_range(0.0..1.5e-3)).collect();
        speeds.sort_by(f64::total_cmp);
        let times: Vec<f64> = (0..l).map(|_| rng.random_range(0.04..0.25)).collect();
        let Ok(hyps) = HypothesisSet::along_direction(params.clone(), &speeds) else { continue };
        let means = hyps.means_at(&times)?;
        let exact = means.error_probability_exact(&TailPolicy::default())?;
        let ci = means.error_bound_ci()?;
        let holder = match means.error_bound_holder_ci() {
            Ok(h) => h,
            Err(Error::EqualRowSums(..)) => continue,
            Err(e) => return Err(e),
        };
        if !(exact <= ci * (1.0 + 1e-12) && ci <= holder * (1.0 + 1e-12)) {
            violations += 1.0;
        }
    }
    checks.push(check("bound_ordering_violations", violations, 0.0));

    let prior = cfg.prior()?;
    let mut worst = f64::NEG_INFINITY;
    let (t_lo, t_hi) = (cfg.est_t_lo, cfg.est_t_hi);
    for k in 0..10 {
        let t = t_lo + (t_hi - t_lo) * k as f64 / 9.0;
        match ecr_bound(&params, &prior, t) {
            Ok(b) => worst = worst.max(b.value / mse_quadrature(&params, &prior, t, Estimator::Mmse)? - 1.0),
            Err(Error::SingularityInRange { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    checks.push(check("ecr_below_mmse", worst, 0.0));

    let q = |e| mse_quadrature(&params, &prior, 0.5 * (t_lo + t_hi), e);
    let (map, mmse, lmmse) = (q(Estimator::Map)?, q(Estimator::Mmse)?, q(Estimator::Lmmse)?);
    checks.push(check("mmse_is_smallest", mmse / map.min(lmmse) - 1.0, 0.0));

    Ok(ValidationReport { checks })
}
