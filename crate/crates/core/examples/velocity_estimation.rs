//! MAP, MMSE and LMMSE estimates of the flow speed from simulated counts.

use flowmeter::channel::{sample_observations, FlowProfile, SamplingSchedule, SystemParams};
use flowmeter::estimator::{lmmse_estimate, map_estimate, mmse_estimate, VelocityPrior};

fn main() -> flowmeter::Result<()> {
    let params = SystemParams::reference();
    let prior = VelocityPrior::uniform_along(0.0, 1e-3)?;
    let d = *params.direction();
    for times in [vec![0.073], vec![0.06, 0.073, 0.09]] {
        let schedule = SamplingSchedule::new(times, params.release_time())?;
        println!("schedule {:?}", schedule.times());
        for truth in [1e-4, 5e-4, 9e-4] {
            let flow = FlowProfile::along(params.direction(), truth);
            let y: Vec<f64> = sample_observations(&params, &flow, &schedule, 9)?.counts().iter().map(|&c| c as f64).collect();
            let map = map_estimate(&params, &prior, &schedule, &y, 0)?;
            let mmse = mmse_estimate(&params, &prior, &schedule, &y)?;
            let lmmse = lmmse_estimate(&params, &prior, &schedule, &y)?;
            println!(
                "  v = {:.2} mm/s  y = {y:?}  map {:.3}  mmse {:.3}  lmmse {:.3}",
                truth * 1e3,
                map.estimate.dot(&d) * 1e3,
                mmse.dot(&d) * 1e3,
                lmmse.dot(&d) * 1e3
            );
        }
    }

    // an unknown direction: independent uniform components
    let prior3 = VelocityPrior::per_axis([(0.0, 1e-3), (-2e-4, 2e-4), (-2e-4, 2e-4)])?;
    let schedule = SamplingSchedule::new(vec![0.06, 0.08, 0.1], params.release_time())?;
    let y = [8.0, 6.0, 4.0];
    let v = mmse_estimate(&params, &prior3, &schedule, &y)?;
    println!("per-axis prior, y = {y:?}: mmse ({:.3}, {:.3}, {:.3}) mm/s", v.x * 1e3, v.y * 1e3, v.z * 1e3);
    Ok(())
}
