//! Large-L estimation design: at most two distinct sampling times with the
//! fraction of samples placed at each.

use flowmeter::channel::SystemParams;
use flowmeter::est_bounds::{asymptotic_two_time_schedule, Estimator, TwoTimeSpec};
use flowmeter::estimator::VelocityPrior;

fn main() -> flowmeter::Result<()> {
    let params = SystemParams::reference();
    let prior = VelocityPrior::uniform_along(0.0, 1e-3)?;
    let mut spec = TwoTimeSpec::new(0.05, 0.15);
    spec.resolution = 1e-2;
    spec.l_proxy = 16;
    spec.n_trials = 4000;
    spec.estimator = Estimator::Mmse;
    let design = asymptotic_two_time_schedule(&params, &prior, &spec)?;
    println!(
        "times {:.3?} weights {:.3?} ({} distinct), normalized MSE {:.4e}",
        design.times, design.weights, design.distinct, design.mse.normalized
    );
    let schedule = design.to_schedule(10, params.release_time())?;
    println!("ten samples: {:?}", schedule.times());
    Ok(())
}
