//! Expected receiver counts under uniform flow, checked against a Brownian
//! particle simulation, and one draw of Poisson observations.

use flowmeter::channel::{
    mean_count, mean_count_time_derivative, particle_oracle_mean_count, sample_observations, FlowProfile,
    SamplingSchedule, SystemParams,
};

fn main() -> flowmeter::Result<()> {
    let params = SystemParams::reference();
    println!("{:>8} {:>10} {:>12} {:>12}", "v mm/s", "t s", "mean count", "d/dt");
    for v in [0.0, 4e-4, 1e-3] {
        let flow = FlowProfile::along(params.direction(), v);
        for t in [0.05, 0.1, 0.2] {
            println!(
                "{:>8.2} {:>10.3} {:>12.4} {:>12.3}",
                v * 1e3,
                t,
                mean_count(&params, &flow, t)?,
                mean_count_time_derivative(&params, &flow, t)?
            );
        }
    }

    let flow = FlowProfile::along(params.direction(), 4e-4);
    let t = 0.1;
    let oracle = particle_oracle_mean_count(&params, &flow, t, 200_000, t / 10.0, 3)?;
    let analytic = mean_count(&params, &flow, t)?;
    println!(
        "particles: {:.4} ± {:.4}, analytic {analytic:.4}, z = {:.2}",
        oracle.mean,
        oracle.std_error,
        (oracle.mean - analytic) / oracle.std_error
    );

    let schedule = SamplingSchedule::new(vec![0.08, 0.1, 0.12], params.release_time())?;
    let y = sample_observations(&params, &flow, &schedule, 42)?;
    println!("counts at {:?}: {:?}", schedule.times(), y.counts());
    Ok(())
}
