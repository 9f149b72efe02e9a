//! Error probability of the MAP flow detector at a fixed schedule: exact,
//! Gaussian approximation, Chernoff and Hölder bounds, and simulation.

use flowmeter::channel::{sample_observations, FlowProfile, SamplingSchedule, SystemParams};
use flowmeter::detector::{map_decide, HypothesisSet, TailPolicy};

fn main() -> flowmeter::Result<()> {
    let params = SystemParams::reference();
    let hyps = HypothesisSet::along_direction(params.clone(), &[0.0, 4e-4])?;
    for times in [vec![0.109], vec![0.109, 0.109], vec![0.09, 0.11, 0.13]] {
        let means = hyps.means_at(&times)?;
        let mc = means.error_probability_montecarlo(200_000, 1)?;
        println!("times {times:?}");
        println!("  exact    {:.4e}", means.error_probability_exact(&TailPolicy::default())?);
        println!("  gaussian {:.4e}", means.error_probability_gaussian()?);
        println!("  chernoff {:.4e}", means.error_bound_ci()?);
        if times.len() > 1 {
            println!("  holder   {:.4e}", means.error_bound_holder_ci()?);
        }
        println!("  simulated {:.4e} ± {:.1e}", mc.estimate, mc.std_error);
    }

    let rule = hyps.means_at(&[0.109])?.binary_rule()?;
    println!("single-sample threshold: decide v = 0.4 mm/s when y > {:.3}", rule.threshold.unwrap_or(f64::NAN));

    let schedule = SamplingSchedule::new(vec![0.109], params.release_time())?;
    let truth = FlowProfile::along(params.direction(), 4e-4);
    let mut correct = 0;
    for seed in 0..1000 {
        let y = sample_observations(&params, &truth, &schedule, seed)?;
        correct += usize::from(map_decide(&hyps, &schedule, &y)? == 1);
    }
    println!("{correct}/1000 flows of 0.4 mm/s detected");
    Ok(())
}
