//! Best single sampling time for the MAP, MMSE and LMMSE velocity estimators
//! under a uniform prior on [0, 1 mm/s], with the ECR bound alongside.

use flowmeter::channel::SystemParams;
use flowmeter::est_bounds::{ecr_bound, mse_quadrature, optimize_estimation_schedule, EstimationSearchSpec, Estimator};
use flowmeter::estimator::VelocityPrior;

fn main() -> flowmeter::Result<()> {
    let params = SystemParams::reference();
    let prior = VelocityPrior::uniform_along(0.0, 1e-3)?;
    let spec = EstimationSearchSpec::new(0.05, 0.11).trials(200_000).seed(7);
    for est in Estimator::ALL {
        let opt = optimize_estimation_schedule(&params, &prior, 1, est, &spec)?;
        let t = opt.schedule.times()[0];
        let exact = mse_quadrature(&params, &prior, t, est)? / 2.5e-7;
        println!(
            "{:>5}: t1 = {t:.5} s  normalized MSE = {:.5} ± {:.5} (quadrature {exact:.5})",
            est.name(),
            opt.mse.normalized,
            opt.mse.normalized_std_error
        );
    }
    let ecr = ecr_bound(&params, &prior, 0.073)?;
    println!("  ecr at t1 = 0.073 s: normalized {:.5}", ecr.normalized);
    Ok(())
}
