//! Bayesian estimation of a random constant flow velocity from counts.
//!
//! The flagship case is a speed `v` along the transmitter–receiver direction
//! with a uniform prior on `[v_min, v_max]`; a product of per-axis uniform
//! priors covers the general 3-D case. Log-densities are evaluated through
//! `ln λ` directly, so far-off velocities never underflow.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{SamplingSchedule, SystemParams, Vec3};
use crate::error::{Error, Result};
use crate::numerics::{composite_rule, find_root, integrate, scan_brackets, QuadratureSpec, RootSpec};

/// Prior on the constant flow velocity.
#[derive(Debug, Clone, PartialEq)]
pub enum VelocityPrior {
    /// `v = v·d` with `v ~ U[v_min, v_max]`; `v_min = v_max` is a point mass.
    UniformAlongD { v_min: f64, v_max: f64 },
    /// Independent `v_x, v_y, v_z`, each uniform on its range.
    PerAxisUniform { ranges: [(f64, f64); 3] },
}

impl VelocityPrior {
    pub fn uniform_along(v_min: f64, v_max: f64) -> Result<Self> {
        if !(v_min.is_finite() && v_max.is_finite()) || v_min > v_max {
            return Err(Error::InvalidParameter(format!("need v_min ≤ v_max, got [{v_min}, {v_max}]")));
        }
        Ok(VelocityPrior::UniformAlongD { v_min, v_max })
    }

    pub fn per_axis(ranges: [(f64, f64); 3]) -> Result<Self> {
        for (lo, hi) in ranges {
            if !(lo.is_finite() && hi.is_finite()) || !(lo < hi) {
                return Err(Error::InvalidParameter(format!("need lo < hi on every axis, got [{lo}, {hi}]")));
            }
        }
        Ok(VelocityPrior::PerAxisUniform { ranges })
    }

    /// `v_+ = v_min + v_max` for the directional prior.
    pub fn v_plus(&self) -> Option<f64> {
        match *self {
            VelocityPrior::UniformAlongD { v_min, v_max } => Some(v_min + v_max),
            _ => None,
        }
    }

    /// `v_− = v_max − v_min` for the directional prior.
    pub fn v_minus(&self) -> Option<f64> {
        match *self {
            VelocityPrior::UniformAlongD { v_min, v_max } => Some(v_max - v_min),
            _ => None,
        }
    }

    pub fn speed_range(&self) -> Option<(f64, f64)> {
        match *self {
            VelocityPrior::UniformAlongD { v_min, v_max } => Some((v_min, v_max)),
            _ => None,
        }
    }

    pub fn mean(&self, params: &SystemParams) -> Vec3 {
        match self {
            VelocityPrior::UniformAlongD { v_min, v_max } => params.direction() * (0.5 * (v_min + v_max)),
            VelocityPrior::PerAxisUniform { ranges } => {
                Vec3::new(0.5 * (ranges[0].0 + ranges[0].1), 0.5 * (ranges[1].0 + ranges[1].1), 0.5 * (ranges[2].0 + ranges[2].1))
            }
        }
    }

    /// Velocity at prior quantiles `u ∈ [0, 1)³` (only `u[0]` for the directional prior).
    pub fn at_quantiles(&self, params: &SystemParams, u: [f64; 3]) -> Vec3 {
        match self {
            VelocityPrior::UniformAlongD { v_min, v_max } => params.direction() * (v_min + (v_max - v_min) * u[0]),
            VelocityPrior::PerAxisUniform { ranges } => Vec3::from_fn(|i, _| ranges[i].0 + (ranges[i].1 - ranges[i].0) * u[i]),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, params: &SystemParams, rng: &mut R) -> Vec3 {
        self.at_quantiles(params, [rng.random(), rng.random(), rng.random()])
    }
}

/// `ln λ(v, t)` for a constant velocity, without forming `λ`.
pub fn ln_mean_count(params: &SystemParams, v: &Vec3, t: f64) -> f64 {
    let tau = t - params.release_time();
    let gap = params.receiver_position() - v * tau;
    let four_d_tau = 4.0 * params.diffusion() * tau;
    (params.burst_size() * params.receiver_volume()).ln() - 1.5 * (PI * four_d_tau).ln() - gap.norm_squared() / four_d_tau
}

/// `ln λ(v·d, t)` for a speed along the receiver direction.
pub fn ln_mean_count_along(params: &SystemParams, v: f64, t: f64) -> f64 {
    let tau = t - params.release_time();
    let gap = params.distance() - v * tau;
    let four_d_tau = 4.0 * params.diffusion() * tau;
    (params.burst_size() * params.receiver_volume()).ln() - 1.5 * (PI * four_d_tau).ln() - gap * gap / four_d_tau
}

/// One distinct sampling time with the number of samples taken at it and
/// the sum of their counts; these are sufficient statistics for every
/// estimator here.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGroup {
    pub t: f64,
    pub count: f64,
    pub sum: f64,
}

/// Unnormalized log-posterior `R_est(v) = Σ_l [y_l ln λ_l(v) − λ_l(v)] + ln p(v)`
/// (the flat uniform log-prior is dropped inside the support).
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorKernel {
    params: SystemParams,
    groups: Vec<TimeGroup>,
}

impl PosteriorKernel {
    /// `obs` may be real-valued (averaged counts are admitted).
    pub fn new(params: &SystemParams, schedule: &SamplingSchedule, obs: &[f64]) -> Result<Self> {
        if obs.len() != schedule.len() {
            return Err(Error::InvalidParameter(format!(
                "{} observations for a schedule of {} samples",
                obs.len(),
                schedule.len()
            )));
        }
        if obs.iter().any(|y| !(y.is_finite() && *y >= 0.0)) {
            return Err(Error::InvalidParameter("observations must be finite and nonnegative".into()));
        }
        let mut groups: Vec<TimeGroup> = Vec::new();
        for (&t, &y) in schedule.times().iter().zip(obs) {
            match groups.last_mut() {
                Some(g) if g.t == t => {
                    g.count += 1.0;
                    g.sum += y;
                }
                _ => groups.push(TimeGroup { t, count: 1.0, sum: y }),
            }
        }
        Ok(Self { params: params.clone(), groups })
    }

    pub fn from_groups(params: &SystemParams, groups: Vec<TimeGroup>) -> Self {
        Self { params: params.clone(), groups }
    }

    pub fn groups(&self) -> &[TimeGroup] {
        &self.groups
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn log_likelihood(&self, v: &Vec3) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                let ln_lam = ln_mean_count(&self.params, v, g.t);
                let y_term = if g.sum == 0.0 { 0.0 } else { g.sum * ln_lam };
                y_term - g.count * ln_lam.exp()
            })
            .sum()
    }

    /// `∂R/∂v = Σ_l (y_l − λ_l)(r₀ d − v τ_l)/(2D)`.
    pub fn score(&self, v: &Vec3) -> Vec3 {
        let two_d = 2.0 * self.params.diffusion();
        self.groups
            .iter()
            .map(|g| {
                let tau = g.t - self.params.release_time();
                let lam = ln_mean_count(&self.params, v, g.t).exp();
                (self.params.receiver_position() - v * tau) * ((g.sum - g.count * lam) / two_d)
            })
            .sum()
    }

    pub fn log_likelihood_along(&self, v: f64) -> f64 {
        self.groups
            .iter()
            .map(|g| {
                let ln_lam = ln_mean_count_along(&self.params, v, g.t);
                let y_term = if g.sum == 0.0 { 0.0 } else { g.sum * ln_lam };
                y_term - g.count * ln_lam.exp()
            })
            .sum()
    }

    pub fn score_along(&self, v: f64) -> f64 {
        let two_d = 2.0 * self.params.diffusion();
        self.groups
            .iter()
            .map(|g| {
                let tau = g.t - self.params.release_time();
                let lam = ln_mean_count_along(&self.params, v, g.t).exp();
                (g.sum - g.count * lam) * (self.params.distance() - v * tau) / two_d
            })
            .sum()
    }
}

/// Which case of the single-sample closed form produced a MAP estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MapBranch {
    /// `ȳ ≥ λ(v_1)` with the peak speed `v_1 = r₀/τ` in the support.
    Peak,
    /// Only `v_2 = (r₀ + √Δ)/τ` is in the support.
    Upper,
    /// Only `v_3 = (r₀ − √Δ)/τ` is in the support.
    Lower,
    /// Both `v_2` and `v_3` are in the support and tie.
    UpperOrLower,
    BoundaryMin,
    BoundaryMax,
}

/// MAP speed along the receiver direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedMap {
    pub speed: f64,
    /// Every global maximizer found; `speed` is one of them.
    pub candidates: Vec<f64>,
    pub log_posterior: f64,
    pub branch: Option<MapBranch>,
}

impl SpeedMap {
    /// Chooses among tied maximizers with a uniform `u ∈ [0, 1)`.
    pub fn pick(&self, u: f64) -> f64 {
        let k = ((u * self.candidates.len() as f64) as usize).min(self.candidates.len() - 1);
        self.candidates[k]
    }

    fn resolve(mut self, tie_seed: u64) -> Self {
        if self.candidates.len() > 1 {
            let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
            self.speed = self.pick(rng.random());
        } else {
            self.speed = self.candidates[0];
        }
        self
    }
}

/// MAP estimate of the velocity vector.
#[derive(Debug, Clone, PartialEq)]
pub struct MapEstimate {
    pub estimate: Vec3,
    pub candidates: Vec<Vec3>,
    pub log_posterior: f64,
    pub branch: Option<MapBranch>,
}

impl MapEstimate {
    fn from_speed(params: &SystemParams, m: SpeedMap) -> Self {
        let d = params.direction();
        MapEstimate {
            estimate: d * m.speed,
            candidates: m.candidates.iter().map(|&v| d * v).collect(),
            log_posterior: m.log_posterior,
            branch: m.branch,
        }
    }
}

/// Maximizers of `R` over `[lo, hi]` found by scanning the score for sign
/// changes, polishing each by root finding and comparing with the endpoints.
pub fn map_speed_numeric(kernel: &PosteriorKernel, lo: f64, hi: f64) -> Result<Vec<(f64, f64)>> {
    if lo == hi {
        return Ok(vec![(lo, kernel.log_likelihood_along(lo))]);
    }
    let mut points = vec![lo, hi];
    for (a, b) in scan_brackets(|v| kernel.score_along(v), lo, hi, 512) {
        let root = find_root(|v| kernel.score_along(v), &RootSpec::new(a, b).tol(1e-15 * (hi - lo).abs().max(1e-300)))?;
        points.push(root.x);
    }
    let scored: Vec<(f64, f64)> = points.into_iter().map(|v| (v, kernel.log_likelihood_along(v))).collect();
    Ok(maximizers(scored, |a, b| (a - b).abs() <= 1e-9 * (hi - lo).abs()))
}

fn maximizers<T: Copy>(scored: Vec<(T, f64)>, same: impl Fn(T, T) -> bool) -> Vec<(T, f64)> {
    let best = scored.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-11 * best.abs().max(1.0);
    let mut out: Vec<(T, f64)> = Vec::new();
    for (v, r) in scored {
        if r >= best - tol && !out.iter().any(|(u, _)| same(*u, v)) {
            out.push((v, r));
        }
    }
    out
}

/// Single-sample MAP speed in closed form for a uniform prior on
/// `[v_min, v_max]` and an observation `y ≥ 0` (an average is allowed).
///
/// With `v_1 = r₀/τ` the count mean peaks at `λ(v_1)`; below the peak the
/// stationary points `v_{2,3} = (r₀ ± √Δ)/τ`, `Δ = −4Dτ ln(y/λ(v_1))`, solve
/// `λ(v) = y`. When no stationary point lies in the support the better
/// endpoint is taken, `v_min` on a tie.
pub fn map_speed_closed_form(params: &SystemParams, v_min: f64, v_max: f64, t: f64, y: f64) -> Result<SpeedMap> {
    let tau = t - params.release_time();
    if tau <= 0.0 {
        return Err(Error::NonPositiveObservationTime { t, release: params.release_time() });
    }
    if !(y.is_finite() && y >= 0.0) {
        return Err(Error::InvalidParameter(format!("observation must be finite and nonnegative, got {y}")));
    }
    let r = |v: f64| {
        let ln_lam = ln_mean_count_along(params, v, t);
        (if y == 0.0 { 0.0 } else { y * ln_lam }) - ln_lam.exp()
    };
    let inside = |v: f64| v >= v_min && v <= v_max;
    let v1 = params.distance() / tau;
    let ln_peak = ln_mean_count_along(params, v1, t);
    let one = |v: f64, branch| SpeedMap { speed: v, candidates: vec![v], log_posterior: r(v), branch: Some(branch) };
    if y > 0.0 && y.ln() >= ln_peak {
        if inside(v1) {
            return Ok(one(v1, MapBranch::Peak));
        }
    } else if y > 0.0 {
        let delta = -4.0 * params.diffusion() * tau * (y.ln() - ln_peak);
        let v2 = (params.distance() + delta.sqrt()) / tau;
        let v3 = (params.distance() - delta.sqrt()) / tau;
        match (inside(v2), inside(v3)) {
            (true, true) => {
                let (r2, r3) = (r(v2), r(v3));
                return Ok(SpeedMap {
                    speed: v2,
                    candidates: vec![v2, v3],
                    log_posterior: r2.max(r3),
                    branch: Some(MapBranch::UpperOrLower),
                });
            }
            (true, false) => return Ok(one(v2, MapBranch::Upper)),
            (false, true) => return Ok(one(v3, MapBranch::Lower)),
            (false, false) => {}
        }
    }
    if r(v_min) >= r(v_max) {
        Ok(one(v_min, MapBranch::BoundaryMin))
    } else {
        Ok(one(v_max, MapBranch::BoundaryMax))
    }
}

/// MAP estimate by numeric maximization of the posterior over the prior support.
///
/// Tied global maximizers (the mirror pair `v ↔ 2r₀/τ − v` of a repeated
/// time) are resolved by a uniform draw seeded with `tie_seed`.
pub fn map_estimate(
    params: &SystemParams,
    prior: &VelocityPrior,
    schedule: &SamplingSchedule,
    obs: &[f64],
    tie_seed: u64,
) -> Result<MapEstimate> {
    let kernel = PosteriorKernel::new(params, schedule, obs)?;
    let found = map_candidates(&kernel, prior)?;
    let pick = if found.len() > 1 {
        let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
        rng.random_range(0..found.len())
    } else {
        0
    };
    Ok(MapEstimate {
        estimate: found[pick].0,
        candidates: found.iter().map(|p| p.0).collect(),
        log_posterior: found[0].1,
        branch: None,
    })
}

/// Every global maximizer of the posterior with its log-density.
pub fn map_candidates(kernel: &PosteriorKernel, prior: &VelocityPrior) -> Result<Vec<(Vec3, f64)>> {
    match *prior {
        VelocityPrior::UniformAlongD { v_min, v_max } => {
            let d = *kernel.params().direction();
            Ok(map_speed_numeric(kernel, v_min, v_max)?.into_iter().map(|(v, r)| (d * v, r)).collect())
        }
        VelocityPrior::PerAxisUniform { ranges } => Ok(map_box(kernel, ranges)),
    }
}

/// MAP estimate for a schedule whose times all coincide: the single-sample
/// closed form applied to the sample average.
pub fn map_estimate_equal_times(
    params: &SystemParams,
    prior: &VelocityPrior,
    schedule: &SamplingSchedule,
    obs: &[f64],
    tie_seed: u64,
) -> Result<MapEstimate> {
    if !schedule.all_equal() {
        return Err(Error::InvalidParameter("sampling times are not all equal".into()));
    }
    let (v_min, v_max) = prior
        .speed_range()
        .ok_or_else(|| Error::InvalidParameter("closed-form MAP needs a directional prior".into()))?;
    if obs.len() != schedule.len() {
        return Err(Error::InvalidParameter("observation count does not match the schedule".into()));
    }
    let mean = obs.iter().sum::<f64>() / obs.len() as f64;
    let m = map_speed_closed_form(params, v_min, v_max, schedule.times()[0], mean)?.resolve(tie_seed);
    Ok(MapEstimate::from_speed(params, m))
}

fn map_box(kernel: &PosteriorKernel, ranges: [(f64, f64); 3]) -> Vec<(Vec3, f64)> {
    const GRID: usize = 33;
    let axis = |k: usize| -> Vec<f64> {
        (0..GRID).map(|i| ranges[k].0 + (ranges[k].1 - ranges[k].0) * i as f64 / (GRID - 1) as f64).collect()
    };
    let (ax, ay, az) = (axis(0), axis(1), axis(2));
    let mut scored = Vec::with_capacity(GRID * GRID * GRID);
    for &x in &ax {
        for &y in &ay {
            for &z in &az {
                let v = Vec3::new(x, y, z);
                scored.push((v, kernel.log_likelihood(&v)));
            }
        }
    }
    scored.sort_by(|a, b| b.1.total_cmp(&a.1));
    let steps = Vec3::from_fn(|k, _| (ranges[k].1 - ranges[k].0) / (GRID - 1) as f64);
    // polish the best few grid points by projected coordinate ascent on shrinking steps
    let mut polished: Vec<(Vec3, f64)> = scored
        .iter()
        .take(8)
        .map(|&(start, _)| {
            let mut v = start;
            let mut best = kernel.log_likelihood(&v);
            let mut step = steps;
            while step.max() > 1e-13 * steps.max().max(1e-300) {
                let mut improved = false;
                for k in 0..3 {
                    for sign in [-1.0, 1.0] {
                        let mut trial = v;
                        trial[k] = (trial[k] + sign * step[k]).clamp(ranges[k].0, ranges[k].1);
                        let r = kernel.log_likelihood(&trial);
                        if r > best {
                            best = r;
                            v = trial;
                            improved = true;
                        }
                    }
                }
                if !improved {
                    step *= 0.5;
                }
            }
            (v, best)
        })
        .collect();
    polished.sort_by(|a, b| b.1.total_cmp(&a.1));
    let scale = steps.max();
    maximizers(polished, |a, b| (a - b).norm() <= 1e-6 * scale)
}

/// `∫ v e^{f(v)} dv / ∫ e^{f(v)} dv` over `[lo, hi]`.
///
/// `f` is probed on a fine grid; the largest probe value is subtracted before
/// exponentiating and only the runs of probes within `e^{-46}` of it (widened
/// by one probe step) are integrated, so narrow or split posteriors keep
/// their accuracy.
pub fn posterior_mean_1d(log_density: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    const PROBES: usize = 1024;
    const DEPTH: f64 = 46.0;
    if lo == hi {
        return Ok(lo);
    }
    let step = (hi - lo) / PROBES as f64;
    let probe: Vec<f64> = (0..=PROBES).map(|k| log_density(lo + step * k as f64)).collect();
    let shift = probe.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (k, r) in probe.iter().enumerate() {
        if *r < shift - DEPTH {
            continue;
        }
        let (a, b) = (k.saturating_sub(1), (k + 1).min(PROBES));
        match runs.last_mut() {
            Some(last) if a <= last.1 => last.1 = b,
            _ => runs.push((a, b)),
        }
    }
    let (mut mass, mut first) = (0.0, 0.0);
    for (a, b) in runs {
        let spec = QuadratureSpec::new(lo + step * a as f64, lo + step * b as f64).nodes(128).rel_tol(1e-11);
        mass += integrate(|v| (log_density(v) - shift).exp(), &spec).value;
        first += integrate(|v| v * (log_density(v) - shift).exp(), &spec).value;
    }
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegeneratePosterior);
    }
    Ok((first / mass).clamp(lo, hi))
}

/// Posterior mean of the velocity.
pub fn mmse_estimate(params: &SystemParams, prior: &VelocityPrior, schedule: &SamplingSchedule, obs: &[f64]) -> Result<Vec3> {
    let kernel = PosteriorKernel::new(params, schedule, obs)?;
    mmse_from_kernel(&kernel, prior)
}

pub fn mmse_from_kernel(kernel: &PosteriorKernel, prior: &VelocityPrior) -> Result<Vec3> {
    match *prior {
        VelocityPrior::UniformAlongD { v_min, v_max } => {
            let v = posterior_mean_1d(|v| kernel.log_likelihood_along(v), v_min, v_max)?;
            Ok(kernel.params().direction() * v)
        }
        VelocityPrior::PerAxisUniform { ranges } => {
            let mut previous: Option<Vec3> = None;
            for panels in [2usize, 4, 8] {
                let rule: Vec<(Vec<f64>, Vec<f64>)> = ranges.iter().map(|&(lo, hi)| composite_rule(lo, hi, panels)).collect();
                let mut logs = Vec::new();
                for (i, &x) in rule[0].0.iter().enumerate() {
                    for (j, &y) in rule[1].0.iter().enumerate() {
                        for (k, &z) in rule[2].0.iter().enumerate() {
                            let v = Vec3::new(x, y, z);
                            logs.push((v, rule[0].1[i] * rule[1].1[j] * rule[2].1[k], kernel.log_likelihood(&v)));
                        }
                    }
                }
                let shift = logs.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
                let (mut mass, mut first) = (0.0, Vec3::zeros());
                for (v, w, r) in logs {
                    let p = w * (r - shift).exp();
                    mass += p;
                    first += v * p;
                }
                if !(mass > 0.0) || !mass.is_finite() {
                    return Err(Error::DegeneratePosterior);
                }
                let est = first / mass;
                if let Some(prev) = previous {
                    if (est - prev).norm() <= 1e-8 * est.norm().max(1e-300) {
                        return Ok(est);
                    }
                }
                previous = Some(est);
            }
            Ok(previous.expect("at least one level"))
        }
    }
}

/// Affine estimator `v̂ = E[v] + Σ_l Cov(Y_l, v)/Var(Y_l) (y_l − E[Y_l])`
/// with moments taken over the prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LmmseRule {
    pub prior_mean: Vec3,
    pub mean_y: Vec<f64>,
    pub var_y: Vec<f64>,
    pub cov: Vec<Vec3>,
}

impl LmmseRule {
    pub fn new(params: &SystemParams, prior: &VelocityPrior, schedule: &SamplingSchedule) -> Result<Self> {
        let prior_mean = prior.mean(params);
        let mut mean_y = Vec::with_capacity(schedule.len());
        let mut var_y = Vec::with_capacity(schedule.len());
        let mut cov = Vec::with_capacity(schedule.len());
        for (l, &t) in schedule.times().iter().enumerate() {
            let (e1, e2, c) = match *prior {
                VelocityPrior::UniformAlongD { v_min, v_max } => {
                    let d = *params.direction();
                    if v_min == v_max {
                        let lam = ln_mean_count_along(params, v_min, t).exp();
                        (lam, lam * (1.0 + lam), Vec3::zeros())
                    } else {
                        let width = v_max - v_min;
                        let centre = 0.5 * (v_min + v_max);
                        let spec = QuadratureSpec::new(v_min, v_max).nodes(256).rel_tol(1e-12);
                        let lam = |v: f64| ln_mean_count_along(params, v, t).exp();
                        let e1 = integrate(lam, &spec).value / width;
                        let e2 = integrate(|v| lam(v) * (1.0 + lam(v)), &spec).value / width;
                        let c = integrate(|v| (v - centre) * lam(v), &spec).value / width;
                        (e1, e2, d * c)
                    }
                }
                VelocityPrior::PerAxisUniform { ranges } => {
                    let rule: Vec<(Vec<f64>, Vec<f64>)> = ranges.iter().map(|&(lo, hi)| composite_rule(lo, hi, 4)).collect();
                    let volume: f64 = ranges.iter().map(|(lo, hi)| hi - lo).product();
                    let (mut e1, mut e2, mut c) = (0.0, 0.0, Vec3::zeros());
                    for (i, &x) in rule[0].0.iter().enumerate() {
                        for (j, &y) in rule[1].0.iter().enumerate() {
                            for (k, &z) in rule[2].0.iter().enumerate() {
                                let v = Vec3::new(x, y, z);
                                let w = rule[0].1[i] * rule[1].1[j] * rule[2].1[k] / volume;
                                let lam = ln_mean_count(params, &v, t).exp();
                                e1 += w * lam;
                                e2 += w * lam * (1.0 + lam);
                                c += (v - prior_mean) * (w * lam);
                            }
                        }
                    }
                    (e1, e2, c)
                }
            };
            let var = e2 - e1 * e1;
            if !(var > 0.0) {
                return Err(Error::ZeroVariance(l));
            }
            mean_y.push(e1);
            var_y.push(var);
            cov.push(c);
        }
        Ok(Self { prior_mean, mean_y, var_y, cov })
    }

    pub fn estimate(&self, obs: &[f64]) -> Vec3 {
        self.prior_mean
            + self
                .cov
                .iter()
                .zip(&self.var_y)
                .zip(&self.mean_y)
                .zip(obs)
                .map(|(((c, var), mean), y)| c * ((y - mean) / var))
                .sum::<Vec3>()
    }

    /// Coefficient of `(y_l − E[Y_l])` along the receiver direction.
    pub fn gains_along(&self, direction: &Vec3) -> Vec<f64> {
        self.cov.iter().zip(&self.var_y).map(|(c, v)| c.dot(direction) / v).collect()
    }
}

pub fn lmmse_estimate(params: &SystemParams, prior: &VelocityPrior, schedule: &SamplingSchedule, obs: &[f64]) -> Result<Vec3> {
    if obs.len() != schedule.len() {
        return Err(Error::InvalidParameter("observation count does not match the schedule".into()));
    }
    Ok(LmmseRule::new(params, prior, schedule)?.estimate(obs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{mean_count_along, peak_mean_count};

    fn params() -> SystemParams {
        SystemParams::reference()
    }

    fn one(t: f64) -> SamplingSchedule {
        SamplingSchedule::new(vec![t], 0.0).unwrap()
    }

    #[test]
    fn ln_mean_matches_channel() {
        let p = params();
        for (v, t) in [(0.0, 0.1), (4e-4, 0.1), (2e-3, 0.03)] {
            let direct = mean_count_along(&p, v, t).unwrap();
            assert!((ln_mean_count_along(&p, v, t).exp() / direct - 1.0).abs() < 1e-13);
            let vec = p.direction() * v;
            assert!((ln_mean_count(&p, &vec, t) - ln_mean_count_along(&p, v, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn peak_branch_returns_r0_over_tau() {
        let p = params();
        let lam_peak = peak_mean_count(&p, 0.1).unwrap();
        let m = map_speed_closed_form(&p, 0.0, 2e-3, 0.1, lam_peak.ceil()).unwrap();
        assert_eq!(m.branch, Some(MapBranch::Peak));
        assert!((m.speed - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn stationary_points_reproduce_the_count() {
        let p = params();
        let y = 12.0;
        let m = map_speed_closed_form(&p, 0.0, 2e-3, 0.1, y).unwrap();
        assert_eq!(m.branch, Some(MapBranch::UpperOrLower));
        for v in &m.candidates {
            let lam = mean_count_along(&p, *v, 0.1).unwrap();
            assert!((lam / y - 1.0).abs() < 1e-10, "{lam}");
        }
        let k = PosteriorKernel::new(&p, &one(0.1), &[y]).unwrap();
        let (a, b) = (k.log_likelihood_along(m.candidates[0]), k.log_likelihood_along(m.candidates[1]));
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
        // mirror symmetry about the peak speed
        assert!((m.candidates[0] + m.candidates[1] - 2e-3).abs() < 1e-15);
    }

    #[test]
    fn zero_count_goes_to_an_endpoint() {
        let p = params();
        let m = map_speed_closed_form(&p, 0.0, 1e-3, 0.073, 0.0).unwrap();
        assert_eq!(m.branch, Some(MapBranch::BoundaryMin));
        assert_eq!(m.speed, 0.0);
    }

    #[test]
    fn numeric_map_matches_closed_form_on_a_few_cases() {
        let p = params();
        for (t, y) in [(0.073, 0.0), (0.073, 3.0), (0.073, 30.0), (0.1, 12.0), (0.2, 40.0), (0.05, 2.0)] {
            let closed = map_speed_closed_form(&p, 0.0, 1e-3, t, y).unwrap();
            let k = PosteriorKernel::new(&p, &one(t), &[y]).unwrap();
            let numeric = map_speed_numeric(&k, 0.0, 1e-3).unwrap();
            assert_eq!(numeric.len(), closed.candidates.len(), "t={t} y={y}");
            for ((v, _), c) in numeric.iter().zip(&closed.candidates) {
                let _ = c;
                assert!(closed.candidates.iter().any(|c| (c - v).abs() <= 1e-8 * c.abs().max(1e-12)), "t={t} y={y}: {v}");
            }
        }
    }

    #[test]
    fn equal_time_map_uses_the_average() {
        let p = params();
        let prior = VelocityPrior::uniform_along(0.0, 1e-3).unwrap();
        let s3 = SamplingSchedule::repeated(0.08, 3, 0.0).unwrap();
        let a = map_estimate_equal_times(&p, &prior, &s3, &[7.0, 7.0, 7.0], 1).unwrap();
        let b = map_estimate_equal_times(&p, &prior, &one(0.08), &[7.0], 1).unwrap();
        assert_eq!(a.estimate, b.estimate);
        let numeric = map_estimate(&p, &prior, &s3, &[5.0, 9.0, 6.0], 1).unwrap();
        let closed = map_estimate_equal_times(&p, &prior, &s3, &[5.0, 9.0, 6.0], 1).unwrap();
        assert!((numeric.estimate - closed.estimate).norm() <= 1e-8 * closed.estimate.norm());
    }

    #[test]
    fn tie_break_is_seeded() {
        let p = params();
        let prior = VelocityPrior::uniform_along(0.0, 2e-3).unwrap();
        let picks: Vec<f64> = (0..40).map(|s| map_estimate(&p, &prior, &one(0.1), &[12.0], s).unwrap().estimate.x).collect();
        assert!(picks.iter().any(|&v| v > 1e-3) && picks.iter().any(|&v| v < 1e-3));
        let again: Vec<f64> = (0..40).map(|s| map_estimate(&p, &prior, &one(0.1), &[12.0], s).unwrap().estimate.x).collect();
        assert_eq!(picks, again);
    }

    #[test]
    fn mmse_with_flat_likelihood_is_prior_mean() {
        let m = posterior_mean_1d(|_| -3.0, 2e-4, 8e-4).unwrap();
        assert!((m - 5e-4).abs() < 1e-15);
    }

    #[test]
    fn mmse_is_shift_invariant() {
        let f = |v: f64| -((v - 3e-4) / 1e-4).powi(2);
        let a = posterior_mean_1d(f, 0.0, 1e-3).unwrap();
        let b = posterior_mean_1d(|v| f(v) + 1e3, 0.0, 1e-3).unwrap();
        let c = posterior_mean_1d(|v| f(v) - 1e3, 0.0, 1e-3).unwrap();
        assert!((a - b).abs() < 1e-18 && (a - c).abs() < 1e-18);
    }

    #[test]
    fn mmse_tightens_with_larger_bursts() {
        let v_true = 4e-4;
        let t = 0.073;
        let mut last = f64::INFINITY;
        for scale in [1.0, 1e2, 1e4] {
            let p = params().with_burst_size(1e4 * scale).unwrap();
            let y = mean_count_along(&p, v_true, t).unwrap().round();
            let prior = VelocityPrior::uniform_along(0.0, 1e-3).unwrap();
            let est = mmse_estimate(&p, &prior, &one(t), &[y]).unwrap();
            let err = (est.x - v_true).abs();
            assert!(err < last, "scale {scale}: {err} vs {last}");
            last = err;
        }
    }

    #[test]
    fn lmmse_at_expected_counts_is_prior_mean() {
        let p = params();
        let prior = VelocityPrior::uniform_along(0.0, 1e-3).unwrap();
        let s = SamplingSchedule::new(vec![0.07, 0.09], 0.0).unwrap();
        let rule = LmmseRule::new(&p, &prior, &s).unwrap();
        let est = rule.estimate(&rule.mean_y.clone());
        assert!((est - prior.mean(&p)).norm() < 1e-18);
    }

    #[test]
    fn lmmse_is_affine() {
        let p = params();
        let prior = VelocityPrior::uniform_along(0.0, 1e-3).unwrap();
        let s = SamplingSchedule::new(vec![0.07, 0.09], 0.0).unwrap();
        let rule = LmmseRule::new(&p, &prior, &s).unwrap();
        let (a, b, alpha) = ([3.0, 20.0], [11.0, 4.0], 0.3);
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
        let lhs = rule.estimate(&mix);
        let rhs = rule.estimate(&a) * alpha + rule.estimate(&b) * (1.0 - alpha);
        assert!((lhs - rhs).norm() < 1e-18);
    }

    #[test]
    fn lmmse_equal_times_form() {
        let p = params();
        let prior = VelocityPrior::uniform_along(0.0, 1e-3).unwrap();
        let s = SamplingSchedule::repeated(0.08, 3, 0.0).unwrap();
        let rule = LmmseRule::new(&p, &prior, &s).unwrap();
        let y = [4.0, 9.0, 13.0];
        let mean = y.iter().sum::<f64>() / 3.0;
        let gain = rule.gains_along(p.direction())[0];
        let folded = prior.mean(&p).x + 3.0 * gain * (mean - rule.mean_y[0]);
        assert!((rule.estimate(&y).x - folded).abs() < 1e-15);
    }

    #[test]
    fn point_mass_prior() {
        let p = params();
        let prior = VelocityPrior::uniform_along(5e-4, 5e-4).unwrap();
        let s = one(0.08);
        assert_eq!(map_estimate(&p, &prior, &s, &[3.0], 0).unwrap().estimate.x, 5e-4);
        assert_eq!(mmse_estimate(&p, &prior, &s, &[3.0]).unwrap().x, 5e-4);
        assert!((lmmse_estimate(&p, &prior, &s, &[3.0]).unwrap().x - 5e-4).abs() < 1e-18);
    }

    #[test]
    fn box_prior_map_finds_the_mode() {
        let p = params();
        let truth = Vec3::new(4e-4, 1e-4, -5e-5);
        let s = SamplingSchedule::new(vec![0.06, 0.09, 0.13], 0.0).unwrap();
        let prior = VelocityPrior::per_axis([(0.0, 1e-3), (-3e-4, 3e-4), (-3e-4, 3e-4)]).unwrap();
        let obs: Vec<f64> = s.times().iter().map(|&t| ln_mean_count(&p, &truth, t).exp() * 50.0).collect();
        let p50 = p.clone().with_burst_size(5e5).unwrap();
        let m = map_estimate(&p50, &prior, &s, &obs, 0).unwrap();
        let k = PosteriorKernel::new(&p50, &s, &obs).unwrap();
        // the mode of noise-free counts is the truth itself (all scores vanish)
        assert!(k.score(&truth).norm() < 1e-6 * k.score(&Vec3::zeros()).norm());
        assert!(m.log_posterior >= k.log_likelihood(&truth) - 1e-9 * k.log_likelihood(&truth).abs());
    }
}
