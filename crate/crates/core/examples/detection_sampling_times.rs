//! Optimal and sub-optimal sampling times of the flow detector.
//!
//! Binary case v ∈ {0, 0.4 mm/s} and a three-hypothesis case, one sample,
//! followed by the large-L Chernoff design for v ∈ {0, 0.1, 0.2} mm/s.

use flowmeter::channel::SystemParams;
use flowmeter::detect_schedule::{caratheodory_schedule, optimize_schedule, Objective, ScheduleSearchSpec};
use flowmeter::detector::HypothesisSet;

fn main() -> flowmeter::Result<()> {
    let params = SystemParams::reference();
    for speeds in [vec![0.0, 4e-4], vec![0.0, 4e-4, 1e-3]] {
        let hyps = HypothesisSet::along_direction(params.clone(), &speeds)?;
        println!("speeds {speeds:?}");
        for objective in Objective::ALL {
            let spec = ScheduleSearchSpec::new(objective, params.release_time());
            let opt = optimize_schedule(&hyps, &spec, 1)?;
            println!("  {:<9} t = {:.5} s   value = {:.6e}", objective.name(), opt.schedule.times()[0], opt.value);
        }
    }

    let hyps = HypothesisSet::along_direction(params.clone(), &[0.0, 1e-4, 2e-4])?;
    let spec = ScheduleSearchSpec::new(Objective::ChernoffCi, params.release_time());
    let design = caratheodory_schedule(&hyps, &spec, 20)?;
    for (i1, i2, t) in &design.pair_times {
        println!("pair ({i1},{i2}) Chernoff time {t:.4} s");
    }
    println!("weights {:?} exponent {:.6e}", design.seeded.weights.weights(), design.seeded.exponent);
    println!(
        "refined times {:?} weights {:?} exponent {:.6e}",
        design.refined.times,
        design.refined.weights.weights(),
        design.refined.exponent
    );
    Ok(())
}
