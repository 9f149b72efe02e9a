//! Simulated MSE of the three estimators against the Fisher information, the
//! Bayesian and expected Cramér-Rao bounds.

use flowmeter::channel::{SamplingSchedule, SystemParams};
use flowmeter::est_bounds::{bcr_bound, ecr_bound, fisher_information_along, mse_montecarlo, Estimator};
use flowmeter::estimator::VelocityPrior;
use flowmeter::Error;

fn main() -> flowmeter::Result<()> {
    let params = SystemParams::reference();
    let prior = VelocityPrior::uniform_along(0.0, 1e-3)?;
    for t in [0.05, 0.073, 0.09, 0.12] {
        let schedule = SamplingSchedule::new(vec![t], params.release_time())?;
        print!("t = {t:.3}:");
        for est in Estimator::ALL {
            let m = mse_montecarlo(&params, &prior, &schedule, est, 50_000, 3)?;
            print!("  {} {:.3e} ± {:.1e}", est.name(), m.mse, m.std_error);
        }
        let bcr = bcr_bound(&params, &prior, &schedule)?;
        print!("  bcr {:.3e} (regular prior: {})", bcr.value, bcr.regular);
        match ecr_bound(&params, &prior, t) {
            Ok(ecr) => println!("  ecr {:.3e}", ecr.value),
            Err(Error::SingularityInRange { .. }) => println!("  ecr undefined: r0/t lies inside the prior range"),
            Err(e) => return Err(e),
        }
    }
    let schedule = SamplingSchedule::new(vec![0.073], params.release_time())?;
    for v in [0.0, 5e-4, 1e-3] {
        println!("Fisher information at v = {v:.0e}: {:.4e}", fisher_information_along(&params, &schedule, v));
    }
    Ok(())
}
