//! Diffusion-advection channel with a transparent spherical receiver.
//!
//! A burst of `ζ` molecules is released at the origin at `t_r` and drifts
//! with a location-invariant flow `v(t)` while diffusing with coefficient
//! `D`. The concentration is a Gaussian centred on the mean displacement
//! `m(t) = ∫_{t_r}^t v(τ) dτ`, and the receiver count at time `t` is Poisson
//! with mean `ζ V_R h(r₀, t)` (centre-of-receiver approximation).

use std::f64::consts::PI;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{integrate, QuadratureSpec};

pub type Vec3 = Vector3<f64>;

/// Physical constants of the channel and receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Diffusion coefficient `D` (m²/s).
    diffusion: f64,
    /// Number of molecules `ζ` released in the burst.
    burst_size: f64,
    /// Transmitter–receiver distance `r₀` (m).
    distance: f64,
    /// Unit vector from the transmitter to the receiver.
    direction: Vec3,
    /// Receiver radius `r_R` (m).
    receiver_radius: f64,
    /// Release time `t_r` (s).
    release_time: f64,
}

impl SystemParams {
    pub fn new(
        diffusion: f64,
        burst_size: f64,
        distance: f64,
        direction: Vec3,
        receiver_radius: f64,
        release_time: f64,
    ) -> Result<Self> {
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {x}")))
            }
        };
        positive("diffusion coefficient", diffusion)?;
        positive("burst size", burst_size)?;
        positive("distance", distance)?;
        positive("receiver radius", receiver_radius)?;
        if receiver_radius >= distance {
            return Err(Error::InvalidParameter(format!(
                "receiver radius {receiver_radius} must be smaller than the distance {distance}"
            )));
        }
        if (direction.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!("direction must be a unit vector, |d| = {}", direction.norm())));
        }
        if !release_time.is_finite() {
            return Err(Error::InvalidParameter("release time must be finite".into()));
        }
        Ok(Self { diffusion, burst_size, distance, direction, receiver_radius, release_time })
    }

    /// Reference configuration: `D = 1e-8 m²/s`, `ζ = 10⁴`, `r₀ = 100 µm`,
    /// `r_R = 15 µm`, `t_r = 0`, receiver on the x axis.
    pub fn reference() -> Self {
        Self::new(1e-8, 1e4, 1e-4, Vec3::x(), 1.5e-5, 0.0).expect("reference parameters are valid")
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn burst_size(&self) -> f64 {
        self.burst_size
    }

    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn direction(&self) -> &Vec3 {
        &self.direction
    }

    pub fn receiver_radius(&self) -> f64 {
        self.receiver_radius
    }

    pub fn release_time(&self) -> f64 {
        self.release_time
    }

    /// `V_R = (4/3) π r_R³`.
    pub fn receiver_volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.receiver_radius.powi(3)
    }

    /// Receiver centre `r₀ d`.
    pub fn receiver_position(&self) -> Vec3 {
        self.direction * self.distance
    }

    pub fn with_burst_size(mut self, burst_size: f64) -> Result<Self> {
        self.burst_size = burst_size;
        Self::new(
            self.diffusion,
            self.burst_size,
            self.distance,
            self.direction,
            self.receiver_radius,
            self.release_time,
        )
    }

    pub fn with_direction(mut self, direction: Vec3) -> Result<Self> {
        self.direction = direction;
        Self::new(
            self.diffusion,
            self.burst_size,
            self.distance,
            self.direction,
            self.receiver_radius,
            self.release_time,
        )
    }

    fn elapsed(&self, t: f64) -> Result<f64> {
        if t > self.release_time {
            Ok(t - self.release_time)
        } else {
            Err(Error::NonPositiveObservationTime { t, release: self.release_time })
        }
    }
}

/// A hypothesized, location-invariant medium velocity as a function of time.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowProfile {
    Constant(Vec3),
    /// `velocities[0]` holds before `breakpoints[0]`, `velocities[k]` on
    /// `[breakpoints[k-1], breakpoints[k])`, and the last velocity after the
    /// last breakpoint.
    PiecewiseConstant { breakpoints: Vec<f64>, velocities: Vec<Vec3> },
}

impl FlowProfile {
    pub fn zero() -> Self {
        FlowProfile::Constant(Vec3::zeros())
    }

    /// Constant flow of the given speed along `direction`.
    pub fn along(direction: &Vec3, speed: f64) -> Self {
        FlowProfile::Constant(direction * speed)
    }

    pub fn piecewise(breakpoints: Vec<f64>, velocities: Vec<Vec3>) -> Result<Self> {
        if velocities.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "{} breakpoints need {} segment velocities, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                velocities.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[1] > w[0])) || breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::InvalidParameter("breakpoints must be finite and strictly increasing".into()));
        }
        Ok(FlowProfile::PiecewiseConstant { breakpoints, velocities })
    }

    /// Velocity at time `t` (right-continuous at breakpoints).
    pub fn velocity_at(&self, t: f64) -> Vec3 {
        match self {
            FlowProfile::Constant(v) => *v,
            FlowProfile::PiecewiseConstant { breakpoints, velocities } => {
                let idx = breakpoints.partition_point(|&b| b <= t);
                velocities[idx]
            }
        }
    }

    /// Mean displacement `∫_{from}^{to} v(τ) dτ`, summed exactly over segments.
    pub fn displacement(&self, from: f64, to: f64) -> Vec3 {
        match self {
            FlowProfile::Constant(v) => v * (to - from),
            FlowProfile::PiecewiseConstant { breakpoints, velocities } => {
                if to < from {
                    return -self.displacement(to, from);
                }
                let mut acc = Vec3::zeros();
                let mut cursor = from;
                let mut idx = breakpoints.partition_point(|&b| b <= from);
                while cursor < to {
                    let seg_end = breakpoints.get(idx).copied().unwrap_or(f64::INFINITY).min(to);
                    acc += velocities[idx] * (seg_end - cursor);
                    cursor = seg_end;
                    idx += 1;
                }
                acc
            }
        }
    }
}

/// Receiver sampling instants, stored in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingSchedule {
    times: Vec<f64>,
}

impl SamplingSchedule {
    pub fn new(mut times: Vec<f64>, release_time: f64) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidParameter("schedule needs at least one sampling time".into()));
        }
        for &t in &times {
            if !t.is_finite() || t <= release_time {
                return Err(Error::NonPositiveObservationTime { t, release: release_time });
            }
        }
        times.sort_by(f64::total_cmp);
        Ok(Self { times })
    }

    /// `len` samples all taken at `t`.
    pub fn repeated(t: f64, len: usize, release_time: f64) -> Result<Self> {
        Self::new(vec![t; len], release_time)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn all_equal(&self) -> bool {
        self.times.windows(2).all(|w| w[0] == w[1])
    }
}

/// Molecule counts `y₁..y_L`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ObservationVector(pub Vec<u64>);

impl ObservationVector {
    pub fn counts(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().map(|&y| y as f64).sum::<f64>() / self.0.len() as f64
    }
}

/// Green's function of pure diffusion, `h₀(r, t)`; zero for `t ≤ t_r`.
pub fn impulse_response_no_flow(params: &SystemParams, r: &Vec3, t: f64) -> f64 {
    let tau = t - params.release_time;
    if tau <= 0.0 {
        return 0.0;
    }
    let four_d_tau = 4.0 * params.diffusion * tau;
    (-r.norm_squared() / four_d_tau).exp() / (PI * four_d_tau).powf(1.5)
}

/// Green's function under flow: `h₀(r − m(t), t)`.
pub fn impulse_response(params: &SystemParams, flow: &FlowProfile, r: &Vec3, t: f64) -> f64 {
    if t <= params.release_time {
        return 0.0;
    }
    let m = flow.displacement(params.release_time, t);
    impulse_response_no_flow(params, &(r - m), t)
}

/// Expected receiver count `Λ = ζ V_R h(r₀ d, t)`.
pub fn mean_count(params: &SystemParams, flow: &FlowProfile, t: f64) -> Result<f64> {
    params.elapsed(t)?;
    Ok(params.burst_size * params.receiver_volume() * impulse_response(params, flow, &params.receiver_position(), t))
}

/// Expected count for a constant velocity `v` (3-vector), the hot path of the
/// estimators.
pub fn mean_count_for_velocity(params: &SystemParams, v: &Vec3, t: f64) -> Result<f64> {
    let tau = params.elapsed(t)?;
    let offset = params.receiver_position() - v * tau;
    Ok(params.burst_size * params.receiver_volume() * impulse_response_no_flow(params, &offset, t))
}

/// Expected count for a constant flow of speed `speed` along the receiver direction.
pub fn mean_count_along(params: &SystemParams, speed: f64, t: f64) -> Result<f64> {
    let tau = params.elapsed(t)?;
    let gap = params.distance - speed * tau;
    let four_d_tau = 4.0 * params.diffusion * tau;
    Ok(params.burst_size * params.receiver_volume() * (-gap * gap / four_d_tau).exp() / (PI * four_d_tau).powf(1.5))
}

/// Largest expected count reachable at time `t` over all flows:
/// `ζ V_R / (4πD(t − t_r))^{3/2}`.
pub fn peak_mean_count(params: &SystemParams, t: f64) -> Result<f64> {
    let tau = params.elapsed(t)?;
    Ok(params.burst_size * params.receiver_volume() / (4.0 * PI * params.diffusion * tau).powf(1.5))
}

/// `dΛ/dt = Λ [−3/(2τ) + ⟨v(t), r₀ − m(t)⟩/(2Dτ) + ‖r₀ − m(t)‖²/(4Dτ²)]`, `τ = t − t_r`.
pub fn mean_count_time_derivative(params: &SystemParams, flow: &FlowProfile, t: f64) -> Result<f64> {
    let tau = params.elapsed(t)?;
    let lambda = mean_count(params, flow, t)?;
    let gap = params.receiver_position() - flow.displacement(params.release_time, t);
    let d = params.diffusion;
    let bracket =
        -1.5 / tau + flow.velocity_at(t).dot(&gap) / (2.0 * d * tau) + gap.norm_squared() / (4.0 * d * tau * tau);
    Ok(lambda * bracket)
}

/// Draws independent Poisson counts with means `Λ(t_l)`; sample `l` uses
/// stream `l` of a ChaCha8 generator seeded with `seed`.
pub fn sample_observations(
    params: &SystemParams,
    flow: &FlowProfile,
    schedule: &SamplingSchedule,
    seed: u64,
) -> Result<ObservationVector> {
    let means = schedule.times().iter().map(|&t| mean_count(params, flow, t)).collect::<Result<Vec<_>>>()?;
    Ok(ObservationVector(
        means
            .iter()
            .enumerate()
            .map(|(l, &lambda)| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(l as u64);
                draw_poisson(&mut rng, lambda)
            })
            .collect(),
    ))
}

/// One Poisson variate; `Poisson(0)` is the constant zero.
pub fn draw_poisson<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let d = Poisson::new(lambda).expect("positive finite Poisson mean");
    d.sample(rng) as u64
}

/// Monte Carlo estimate of `Λ` with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub inside: u64,
    pub particles: u64,
}

const PARTICLE_BATCH: u64 = 8192;

/// Tracks `n_particles` independent tracers from the origin and counts the
/// fraction inside the receiver sphere at time `t`.
///
/// Each step adds the exact flow displacement over the step plus an
/// isotropic Gaussian increment of variance `2D·dt` per axis; the last step
/// is shortened to land on `t`. Particles are processed in fixed batches,
/// batch `k` drawing from stream `k` of a ChaCha8 generator seeded with
/// `seed`, so the result does not depend on the thread count.
pub fn particle_oracle_mean_count(
    params: &SystemParams,
    flow: &FlowProfile,
    t: f64,
    n_particles: u64,
    dt: f64,
    seed: u64,
) -> Result<OracleEstimate> {
    if n_particles == 0 {
        return Err(Error::InvalidParameter("particle count must be positive".into()));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidParameter("time step must be positive".into()));
    }
    let tau = params.elapsed(t)?;
    let steps = (tau / dt).ceil().max(1.0) as usize;
    let mut step_ends: Vec<f64> = (1..=steps).map(|k| params.release_time + (k as f64 * dt).min(tau)).collect();
    step_ends[steps - 1] = t;
    let mut drifts = Vec::with_capacity(steps);
    let mut sigmas = Vec::with_capacity(steps);
    let mut prev = params.release_time;
    for &end in &step_ends {
        drifts.push(flow.displacement(prev, end));
        sigmas.push((2.0 * params.diffusion * (end - prev)).sqrt());
        prev = end;
    }
    let centre = params.receiver_position();
    let r2 = params.receiver_radius.powi(2);
    let batches = n_particles.div_ceil(PARTICLE_BATCH);

    let inside: u64 = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b);
            let count = PARTICLE_BATCH.min(n_particles - b * PARTICLE_BATCH);
            let mut hits = 0u64;
            for _ in 0..count {
                let mut pos = Vec3::zeros();
                for (drift, &sigma) in drifts.iter().zip(&sigmas) {
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    let yi: f64 = StandardNormal.sample(&mut rng);
                    let zi: f64 = StandardNormal.sample(&mut rng);
                    pos += drift + Vec3::new(xi, yi, zi) * sigma;
                }
                if (pos - centre).norm_squared() <= r2 {
                    hits += 1;
                }
            }
            hits
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();

    let n = n_particles as f64;
    let p = inside as f64 / n;
    // smoothed proportion in the variance keeps the error positive when no particle lands inside
    let p_var = (inside as f64 + 1.0) / (n + 2.0);
    Ok(OracleEstimate {
        mean: params.burst_size * p,
        std_error: params.burst_size * (p_var * (1.0 - p_var) / n).sqrt(),
        inside,
        particles: n_particles,
    })
}

/// Expected count inside the whole receiver sphere (no centre approximation):
/// `ζ P(‖X − r₀‖ ≤ r_R)` with `X ~ N(m(t), 2Dτ I)`, evaluated by radial quadrature.
/// The ratio to [`mean_count`] measures the transparent-receiver approximation error.
pub fn receiver_capture_mean(params: &SystemParams, flow: &FlowProfile, t: f64) -> Result<f64> {
    let tau = params.elapsed(t)?;
    let offset = (params.receiver_position() - flow.displacement(params.release_time, t)).norm();
    let var = 2.0 * params.diffusion * tau;
    let sigma = var.sqrt();
    let norm = 1.0 / (2.0 * PI * var).sqrt();
    // radial density of ‖X − r₀‖ for a Gaussian centred at distance `offset`
    let density = |r: f64| {
        if offset < 1e-300 {
            4.0 * PI * r * r * norm.powi(3) * (-r * r / (2.0 * var)).exp()
        } else {
            norm * (r / offset) * ((-(r - offset).powi(2) / (2.0 * var)).exp() - (-(r + offset).powi(2) / (2.0 * var)).exp())
        }
    };
    let q = integrate(density, &QuadratureSpec::new(0.0, params.receiver_radius.min(offset + 40.0 * sigma)).rel_tol(1e-12));
    Ok(params.burst_size * q.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference() -> SystemParams {
        SystemParams::reference()
    }

    #[test]
    fn rejects_invalid_parameters() {
        assert!(SystemParams::new(0.0, 1e4, 1e-4, Vec3::x(), 1e-5, 0.0).is_err());
        assert!(SystemParams::new(1e-8, 1e4, 1e-4, Vec3::new(1.0, 1.0, 0.0), 1e-5, 0.0).is_err());
        assert!(SystemParams::new(1e-8, 1e4, 1e-4, Vec3::x(), 2e-4, 0.0).is_err());
    }

    #[test]
    fn receiver_volume_is_exposed() {
        assert!((reference().receiver_volume() - 1.413_716_694_115_407e-14).abs() < 1e-26);
    }

    #[test]
    fn impulse_response_is_zero_until_release() {
        let p = reference();
        assert_eq!(impulse_response_no_flow(&p, &Vec3::zeros(), 0.0), 0.0);
        assert_eq!(impulse_response_no_flow(&p, &Vec3::zeros(), -1.0), 0.0);
    }

    #[test]
    fn impulse_response_at_origin() {
        let p = reference();
        let h = impulse_response_no_flow(&p, &Vec3::zeros(), 0.1);
        let expected = 1.0 / (4.0 * PI * 1e-9_f64).powf(1.5);
        assert!((h / expected - 1.0).abs() < 1e-14);
        assert!((h / 7.099e11 - 1.0).abs() < 1e-3);
    }

    #[test]
    fn impulse_response_at_receiver() {
        let p = reference();
        let h0 = impulse_response_no_flow(&p, &p.receiver_position(), 0.1);
        assert!((h0 / 5.83e10 - 1.0).abs() < 2e-3, "{h0:e}");
        let flow = FlowProfile::along(p.direction(), 4e-4);
        let h = impulse_response(&p, &flow, &p.receiver_position(), 0.1);
        assert!((h / 2.89e11 - 1.0).abs() < 2e-3, "{h:e}");
    }

    #[test]
    fn zero_flow_matches_no_flow_response() {
        let p = reference();
        let r = Vec3::new(3e-5, -2e-5, 1e-5);
        for t in [0.01, 0.1, 0.5] {
            assert_eq!(impulse_response(&p, &FlowProfile::zero(), &r, t), impulse_response_no_flow(&p, &r, t));
        }
    }

    #[test]
    fn mean_counts_at_reference_parameters() {
        let p = reference();
        let l0 = mean_count(&p, &FlowProfile::zero(), 0.1).unwrap();
        let l1 = mean_count(&p, &FlowProfile::along(p.direction(), 4e-4), 0.1).unwrap();
        assert!((l0 - 8.2378).abs() < 1e-3, "{l0}");
        assert!((l1 - 40.802).abs() < 1e-2, "{l1}");
    }

    #[test]
    fn flow_onto_receiver_gives_peak_count() {
        let p = reference();
        let t = 0.05;
        let flow = FlowProfile::along(p.direction(), p.distance() / t);
        let l = mean_count(&p, &flow, t).unwrap();
        assert!((l / peak_mean_count(&p, t).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn mean_count_rejects_early_times() {
        let p = reference();
        assert!(matches!(mean_count(&p, &FlowProfile::zero(), 0.0), Err(Error::NonPositiveObservationTime { .. })));
    }

    #[test]
    fn derivative_at_reference_point() {
        let p = reference();
        let g = mean_count_time_derivative(&p, &FlowProfile::zero(), 0.1).unwrap();
        let l = mean_count(&p, &FlowProfile::zero(), 0.1).unwrap();
        assert!((g - 10.0 * l).abs() < 1e-9 * g.abs());
    }

    #[test]
    fn piecewise_displacement_sums_segments() {
        let flow = FlowProfile::piecewise(vec![0.1, 0.2], vec![Vec3::x(), Vec3::y() * 2.0, Vec3::z() * 3.0]).unwrap();
        let m = flow.displacement(0.0, 0.25);
        assert!((m - Vec3::new(0.1, 0.2, 0.15)).norm() < 1e-15);
        assert!((flow.displacement(0.05, 0.15) - Vec3::new(0.05, 0.1, 0.0)).norm() < 1e-15);
        assert_eq!(flow.velocity_at(0.1), Vec3::y() * 2.0);
        assert!(FlowProfile::piecewise(vec![0.2, 0.1], vec![Vec3::x(); 3]).is_err());
        assert!(FlowProfile::piecewise(vec![0.1], vec![Vec3::x(); 3]).is_err());
    }

    #[test]
    fn schedule_sorts_and_keeps_duplicates() {
        let s = SamplingSchedule::new(vec![0.3, 0.1, 0.3], 0.0).unwrap();
        assert_eq!(s.times(), &[0.1, 0.3, 0.3]);
        assert!(SamplingSchedule::new(vec![0.0], 0.0).is_err());
        assert!(SamplingSchedule::new(vec![], 0.0).is_err());
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let p = reference();
        let flow = FlowProfile::along(p.direction(), 4e-4);
        let s = SamplingSchedule::new(vec![0.08, 0.1, 0.12], 0.0).unwrap();
        let a = sample_observations(&p, &flow, &s, 7).unwrap();
        let b = sample_observations(&p, &flow, &s, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn zero_mean_samples_are_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!((0..100).all(|_| draw_poisson(&mut rng, 0.0) == 0));
    }

    #[test]
    fn drift_without_diffusion_lands_every_particle() {
        let p = SystemParams::new(1e-30, 1e4, 1e-4, Vec3::x(), 1.5e-5, 0.0).unwrap();
        let t = 0.1;
        let flow = FlowProfile::along(p.direction(), p.distance() / t);
        let est = particle_oracle_mean_count(&p, &flow, t, 1000, 1e-2, 3).unwrap();
        assert_eq!(est.mean, p.burst_size());
        assert!(est.std_error > 0.0 && est.std_error < 1e-3 * p.burst_size());
    }

    #[test]
    fn capture_mean_is_close_to_centre_approximation() {
        let p = reference();
        for v in [0.0, 4e-4] {
            let flow = FlowProfile::along(p.direction(), v);
            let centre = mean_count(&p, &flow, 0.1).unwrap();
            let exact = receiver_capture_mean(&p, &flow, 0.1).unwrap();
            assert!((exact / centre - 1.0).abs() < 0.05, "v = {v}: {exact} vs {centre}");
        }
    }
}
