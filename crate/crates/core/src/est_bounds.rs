//! Mean square error of the velocity estimators, Bayesian and expected
//! Cramér–Rao lower bounds, and sampling-time design for estimation.

use std::collections::HashMap;

use nalgebra::{DMatrix, Matrix3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{SamplingSchedule, SystemParams, Vec3};
use crate::error::{Error, Result};
use crate::estimator::{
    ln_mean_count, ln_mean_count_along, map_candidates, map_speed_closed_form, mmse_from_kernel, LmmseRule,
    PosteriorKernel, TimeGroup, VelocityPrior,
};
use crate::numerics::bvp::simpson;
use crate::numerics::special::{poisson_pmf, poisson_quantile, poisson_support_limit};
use crate::numerics::{composite_rule, golden_section_min, solve_bvp, BvpSpec};

const MC_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Estimator {
    Map,
    Mmse,
    Lmmse,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Map, Estimator::Mmse, Estimator::Lmmse];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Map => "map",
            Estimator::Mmse => "mmse",
            Estimator::Lmmse => "lmmse",
        }
    }
}

/// Monte Carlo estimate of `E[ε²]`, `ε = ‖v − v̂‖`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MseEstimate {
    pub mse: f64,
    pub std_error: f64,
    /// `E[ε²] / ‖E[v]‖²`.
    pub normalized: f64,
    pub normalized_std_error: f64,
    pub trials: usize,
}

/// Evaluates one estimator on count vectors, reusing work across repeats of
/// the same sufficient statistic.
struct Engine<'a> {
    params: &'a SystemParams,
    prior: &'a VelocityPrior,
    estimator: Estimator,
    /// Distinct times and their multiplicities.
    groups: Vec<(f64, usize)>,
    lmmse: Option<LmmseRule>,
    equal_times: bool,
}

impl<'a> Engine<'a> {
    fn new(params: &'a SystemParams, prior: &'a VelocityPrior, schedule: &SamplingSchedule, estimator: Estimator) -> Result<Self> {
        let mut groups: Vec<(f64, usize)> = Vec::new();
        for &t in schedule.times() {
            match groups.last_mut() {
                Some(g) if g.0 == t => g.1 += 1,
                _ => groups.push((t, 1)),
            }
        }
        let lmmse = match estimator {
            Estimator::Lmmse => Some(LmmseRule::new(params, prior, schedule)?),
            _ => None,
        };
        Ok(Self { params, prior, estimator, groups, lmmse, equal_times: schedule.all_equal() })
    }

    /// Candidate estimates for group count sums; more than one only for tied MAP maximizers.
    fn candidates(&self, sums: &[u64]) -> Result<Vec<Vec3>> {
        let d = *self.params.direction();
        match self.estimator {
            Estimator::Lmmse => {
                let rule = self.lmmse.as_ref().expect("lmmse rule");
                let mut est = rule.prior_mean;
                let mut l = 0;
                for (&(_, n), &s) in self.groups.iter().zip(sums) {
                    est += rule.cov[l] * ((s as f64 - n as f64 * rule.mean_y[l]) / rule.var_y[l]);
                    l += n;
                }
                Ok(vec![est])
            }
            Estimator::Map if self.equal_times && self.prior.speed_range().is_some() => {
                let (v_min, v_max) = self.prior.speed_range().expect("directional");
                let n = self.groups[0].1 as f64;
                let m = map_speed_closed_form(self.params, v_min, v_max, self.groups[0].0, sums[0] as f64 / n)?;
                Ok(m.candidates.iter().map(|&v| d * v).collect())
            }
            Estimator::Map => Ok(map_candidates(&self.kernel(sums), self.prior)?.into_iter().map(|p| p.0).collect()),
            Estimator::Mmse => Ok(vec![mmse_from_kernel(&self.kernel(sums), self.prior)?]),
        }
    }

    fn kernel(&self, sums: &[u64]) -> PosteriorKernel {
        let groups = self
            .groups
            .iter()
            .zip(sums)
            .map(|(&(t, n), &s)| TimeGroup { t, count: n as f64, sum: s as f64 })
            .collect();
        PosteriorKernel::from_groups(self.params, groups)
    }
}

/// Monte Carlo MSE with common random numbers.
///
/// Trial `k` lives in chunk `k / 4096`, whose stream is
/// `ChaCha8Rng::seed_from_u64(seed)` on stream `chunk`. Each trial draws three
/// prior quantiles, one uniform per sample (turned into a count by Poisson
/// inversion, so counts move monotonically with the schedule) and one
/// tie-break uniform. The same seed therefore reuses the same randomness
/// for any schedule of the same length.
pub fn mse_montecarlo(
    params: &SystemParams,
    prior: &VelocityPrior,
    schedule: &SamplingSchedule,
    estimator: Estimator,
    n_trials: usize,
    seed: u64,
) -> Result<MseEstimate> {
    if n_trials == 0 {
        return Err(Error::InvalidParameter("n_trials must be at least 1".into()));
    }
    let engine = Engine::new(params, prior, schedule, estimator)?;
    let chunks = n_trials.div_ceil(MC_CHUNK);
    let partial: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let trials = MC_CHUNK.min(n_trials - chunk * MC_CHUNK);
            let mut cache: HashMap<Vec<u64>, Vec<Vec3>> = HashMap::new();
            let mut sums = vec![0u64; engine.groups.len()];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..trials {
                let u: [f64; 3] = [rng.random(), rng.random(), rng.random()];
                let v = prior.at_quantiles(params, u);
                for (g, &(t, n)) in engine.groups.iter().enumerate() {
                    let lam = ln_mean_count(params, &v, t).exp();
                    sums[g] = (0..n).map(|_| poisson_quantile(lam, rng.random())).sum();
                }
                let tie: f64 = rng.random();
                let cands = match cache.get(&sums) {
                    Some(c) => c,
                    None => {
                        let c = engine.candidates(&sums)?;
                        cache.entry(sums.clone()).or_insert(c)
                    }
                };
                let k = ((tie * cands.len() as f64) as usize).min(cands.len() - 1);
                let e2 = (cands[k] - v).norm_squared();
                s1 += e2;
                s2 += e2 * e2;
            }
            Ok((s1, s2))
        })
        .collect();
    let (mut s1, mut s2) = (0.0, 0.0);
    for p in partial {
        let (a, b) = p?;
        s1 += a;
        s2 += b;
    }
    let n = n_trials as f64;
    let mse = s1 / n;
    let var = if n_trials > 1 { ((s2 - n * mse * mse) / (n - 1.0)).max(0.0) } else { 0.0 };
    let std_error = (var / n).sqrt();
    let scale = prior.mean(params).norm_squared();
    Ok(MseEstimate { mse, std_error, normalized: mse / scale, normalized_std_error: std_error / scale, trials: n_trials })
}

/// `E[ε²]` for one sample along the receiver direction by quadrature over
/// the prior and summation over counts. Tied MAP maximizers are averaged
/// with equal weights, matching the uniform tie-break.
pub fn mse_quadrature(params: &SystemParams, prior: &VelocityPrior, t: f64, estimator: Estimator) -> Result<f64> {
    let (v_min, v_max) = prior
        .speed_range()
        .ok_or_else(|| Error::InvalidParameter("quadrature MSE needs a directional prior".into()))?;
    if v_min == v_max {
        return mse_montecarlo(params, prior, &SamplingSchedule::new(vec![t], params.release_time())?, estimator, 1, 0)
            .map(|m| m.mse);
    }
    let schedule = SamplingSchedule::new(vec![t], params.release_time())?;
    let engine = Engine::new(params, prior, &schedule, estimator)?;
    let (nodes, weights) = composite_rule(v_min, v_max, 24);
    let lams: Vec<f64> = nodes.iter().map(|&v| ln_mean_count_along(params, v, t).exp()).collect();
    let top = lams.iter().copied().fold(0.0, f64::max);
    let y_max = poisson_support_limit(top, 1e-15);
    let d = *params.direction();
    let mut total = 0.0;
    for y in 0..=y_max {
        let cands = engine.candidates(&[y])?;
        for ((&v, &w), &lam) in nodes.iter().zip(&weights).zip(&lams) {
            let p = poisson_pmf(y, lam);
            if p == 0.0 {
                continue;
            }
            let se = cands.iter().map(|c| (c - d * v).norm_squared()).sum::<f64>() / cands.len() as f64;
            total += w * p * se;
        }
    }
    Ok(total / (v_max - v_min))
}

/// Fisher information `J_F(v) = Σ_l (1/λ_l) ∇λ_l ∇λ_lᵀ` of the counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherMatrix(pub Matrix3<f64>);

impl FisherMatrix {
    /// `dᵀ J_F d`, the information about a speed along `d`.
    pub fn along(&self, d: &Vec3) -> f64 {
        d.dot(&(self.0 * d))
    }
}

pub fn fisher_information(params: &SystemParams, schedule: &SamplingSchedule, v: &Vec3) -> FisherMatrix {
    let two_d = 2.0 * params.diffusion();
    let mut j = Matrix3::zeros();
    for &t in schedule.times() {
        let tau = t - params.release_time();
        let grad = (params.receiver_position() - v * tau) / two_d;
        j += grad * grad.transpose() * ln_mean_count(params, v, t).exp();
    }
    FisherMatrix(j)
}

/// `J_F(v) = Σ_l (r₀ − vτ_l)² λ_l(v d) / (4D²)` for a speed along `d`.
pub fn fisher_information_along(params: &SystemParams, schedule: &SamplingSchedule, v: f64) -> f64 {
    let four_d2 = 4.0 * params.diffusion() * params.diffusion();
    schedule
        .times()
        .iter()
        .map(|&t| {
            let gap = params.distance() - v * (t - params.release_time());
            gap * gap * ln_mean_count_along(params, v, t).exp() / four_d2
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BcrBound {
    /// `Tr{(J_D + J_P)⁻¹}`.
    pub value: f64,
    /// Prior-averaged data information (1×1 for a directional prior).
    pub data_information: DMatrix<f64>,
    pub prior_information: DMatrix<f64>,
    /// False when the prior has bounded support, where the bound need not hold.
    pub regular: bool,
}

/// Bayesian Cramér–Rao bound. Uniform priors have a flat log-density inside
/// their support, so `J_P = 0`; their bounded support violates the
/// regularity condition and the result is flagged, not rejected.
pub fn bcr_bound(params: &SystemParams, prior: &VelocityPrior, schedule: &SamplingSchedule) -> Result<BcrBound> {
    let (j_d, dim) = match *prior {
        VelocityPrior::UniformAlongD { v_min, v_max } => {
            let value = if v_min == v_max {
                fisher_information_along(params, schedule, v_min)
            } else {
                let (nodes, weights) = composite_rule(v_min, v_max, 32);
                nodes.iter().zip(&weights).map(|(&v, &w)| w * fisher_information_along(params, schedule, v)).sum::<f64>()
                    / (v_max - v_min)
            };
            (DMatrix::from_element(1, 1, value), 1)
        }
        VelocityPrior::PerAxisUniform { ranges } => {
            let rule: Vec<(Vec<f64>, Vec<f64>)> = ranges.iter().map(|&(lo, hi)| composite_rule(lo, hi, 4)).collect();
            let volume: f64 = ranges.iter().map(|(lo, hi)| hi - lo).product();
            let mut j = Matrix3::zeros();
            for (i, &x) in rule[0].0.iter().enumerate() {
                for (k, &y) in rule[1].0.iter().enumerate() {
                    for (m, &z) in rule[2].0.iter().enumerate() {
                        let w = rule[0].1[i] * rule[1].1[k] * rule[2].1[m] / volume;
                        j += fisher_information(params, schedule, &Vec3::new(x, y, z)).0 * w;
                    }
                }
            }
            (DMatrix::from_iterator(3, 3, j.iter().copied()), 3)
        }
    };
    let j_p = DMatrix::zeros(dim, dim);
    let inverse = (&j_d + &j_p)
        .try_inverse()
        .ok_or_else(|| Error::InvalidParameter("Bayesian information matrix is singular".into()))?;
    Ok(BcrBound { value: inverse.trace(), data_information: j_d, prior_information: j_p, regular: false })
}

/// Optimal bias `b(v)` of the expected Cramér–Rao bound on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasFunction {
    pub speeds: Vec<f64>,
    pub bias: Vec<f64>,
    /// `b'(v)`.
    pub slope: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EcrBound {
    pub value: f64,
    pub normalized: f64,
    pub bias: BiasFunction,
    pub residual: f64,
}

/// Expected Cramér–Rao bound for one sample at `t` and a uniform directional prior:
/// `(1/v_−) ∫ [(1 + b')²/J_F + b²] dv` with the bias solving
/// `b'' = J_F b + (1 + b') c(v)`, `c = (r₀ − vτ)/(2D) − 2τ/(r₀ − vτ)`,
/// `b'(v_min) = b'(v_max) = −1`.
pub fn ecr_bound(params: &SystemParams, prior: &VelocityPrior, t: f64) -> Result<EcrBound> {
    let (v_min, v_max) = prior
        .speed_range()
        .ok_or_else(|| Error::InvalidParameter("ECR bound needs a directional prior".into()))?;
    if !(v_max > v_min) {
        return Err(Error::InvalidParameter("ECR bound needs a prior of positive width".into()));
    }
    let tau = t - params.release_time();
    if tau <= 0.0 {
        return Err(Error::NonPositiveObservationTime { t, release: params.release_time() });
    }
    let singular = params.distance() / tau;
    if singular >= v_min && singular <= v_max {
        return Err(Error::SingularityInRange { v: singular });
    }
    let schedule = SamplingSchedule::new(vec![t], params.release_time())?;
    let width = v_max - v_min;
    let two_d = 2.0 * params.diffusion();
    let speed = |x: f64| v_min + width * x;
    let info = |v: f64| fisher_information_along(params, &schedule, v);
    let forcing = |v: f64| {
        let gap = params.distance() - v * tau;
        gap / two_d - 2.0 * tau / gap
    };
    // unknown β(x) = b(v)/v_− on x ∈ [0, 1], so β' = b' and β'' = v_− b''
    let ode = |x: f64, beta: f64, slope: f64| {
        let v = speed(x);
        let j = width * width * info(v);
        let c = width * forcing(v);
        (j * beta + c * (1.0 + slope), j, c)
    };
    let sol = solve_bvp(&ode, &BvpSpec::new(0.0, 1.0, -1.0, -1.0), None)?;
    let h = sol.grid[1] - sol.grid[0];
    let integrand: Vec<f64> = sol
        .grid
        .iter()
        .zip(&sol.values)
        .zip(&sol.slopes)
        .map(|((&x, &beta), &slope)| (1.0 + slope).powi(2) / info(speed(x)) + width * width * beta * beta)
        .collect();
    let value = simpson(&integrand, h);
    let mean = 0.5 * (v_min + v_max);
    Ok(EcrBound {
        value,
        normalized: value / (mean * mean),
        bias: BiasFunction {
            speeds: sol.grid.iter().map(|&x| speed(x)).collect(),
            bias: sol.values.iter().map(|b| b * width).collect(),
            slope: sol.slopes.clone(),
        },
        residual: sol.residual,
    })
}

/// Grid and Monte Carlo settings for estimation schedule searches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimationSearchSpec {
    pub t_lo: f64,
    pub t_hi: f64,
    pub resolution: f64,
    pub tolerance: f64,
    pub n_trials: usize,
    pub seed: u64,
    /// Cap on coarse tuples for `L ≥ 2`.
    pub max_grid_points: usize,
}

impl EstimationSearchSpec {
    pub fn new(t_lo: f64, t_hi: f64) -> Self {
        Self { t_lo, t_hi, resolution: 1e-3, tolerance: 2e-5, n_trials: 200_000, seed: 0, max_grid_points: 400 }
    }

    pub fn resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn trials(mut self, n_trials: usize) -> Self {
        self.n_trials = n_trials;
        self
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationOptimum {
    pub schedule: SamplingSchedule,
    pub mse: MseEstimate,
    /// The coarse grid `(t_1, normalized MSE)` for `L = 1`.
    pub curve: Vec<(f64, f64)>,
}

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round().max(1.0) as usize;
    (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect()
}

/// Minimizes the Monte Carlo MSE over sorted `L`-tuples of times: a coarse
/// grid (thinned to the budget when `L ≥ 2`) and then coordinate-wise
/// golden-section refinement within one grid step. Every evaluation reuses
/// the same seed.
pub fn optimize_estimation_schedule(
    params: &SystemParams,
    prior: &VelocityPrior,
    l: usize,
    estimator: Estimator,
    spec: &EstimationSearchSpec,
) -> Result<EstimationOptimum> {
    if l == 0 {
        return Err(Error::InvalidParameter("L must be at least 1".into()));
    }
    let release = params.release_time();
    let eval = |times: &[f64]| -> Result<MseEstimate> {
        mse_montecarlo(params, prior, &SamplingSchedule::new(times.to_vec(), release)?, estimator, spec.n_trials, spec.seed)
    };
    let mut axis = grid(spec.t_lo, spec.t_hi, spec.resolution);
    while l > 1 && binomial_multiset(axis.len(), l) > spec.max_grid_points as f64 && axis.len() > 4 {
        axis = axis.iter().step_by(2).copied().collect();
    }
    let step = if axis.len() > 1 { axis[1] - axis[0] } else { spec.resolution };
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut curve = Vec::new();
    for tuple in sorted_tuples(axis.len(), l) {
        let times: Vec<f64> = tuple.iter().map(|&k| axis[k]).collect();
        let m = eval(&times)?;
        if l == 1 {
            curve.push((times[0], m.normalized));
        }
        if best.as_ref().is_none_or(|b| m.mse < b.1) {
            best = Some((times, m.mse));
        }
    }
    let (mut times, mut value) = best.expect("non-empty grid");
    for coord in 0..l {
        let lo = (times[coord] - step).max(spec.t_lo);
        let hi = (times[coord] + step).min(spec.t_hi);
        let mut failure = None;
        let (x, fx) = golden_section_min(
            |x| {
                let mut trial = times.clone();
                trial[coord] = x;
                match eval(&trial) {
                    Ok(m) => m.mse,
                    Err(e) => {
                        failure.get_or_insert(e);
                        f64::INFINITY
                    }
                }
            },
            lo,
            hi,
            spec.tolerance,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        if fx < value {
            times[coord] = x;
            value = fx;
        }
    }
    let schedule = SamplingSchedule::new(times, release)?;
    let mse = eval(schedule.times())?;
    Ok(EstimationOptimum { schedule, mse, curve })
}

fn binomial_multiset(n: usize, k: usize) -> f64 {
    (0..k).map(|i| (n + i) as f64 / (i + 1) as f64).product()
}

fn sorted_tuples(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; l];
    loop {
        out.push(cur.clone());
        let mut i = l;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] + 1 < n {
                let next = cur[i] + 1;
                for c in cur.iter_mut().skip(i) {
                    *c = next;
                }
                break;
            }
        }
    }
}

/// Settings for the two-time asymptotic design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoTimeSpec {
    pub t_lo: f64,
    pub t_hi: f64,
    pub resolution: f64,
    /// Stand-in for `L → ∞`.
    pub l_proxy: usize,
    pub estimator: Estimator,
    pub n_trials: usize,
    pub seed: u64,
}

impl TwoTimeSpec {
    pub fn new(t_lo: f64, t_hi: f64) -> Self {
        Self { t_lo, t_hi, resolution: 5e-3, l_proxy: 64, estimator: Estimator::Mmse, n_trials: 20_000, seed: 0 }
    }
}

/// At most two distinct times with weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoTimeSchedule {
    pub times: [f64; 2],
    pub weights: [f64; 2],
    /// 1 when the second weight is below 0.01.
    pub distinct: usize,
    pub mse: MseEstimate,
}

impl TwoTimeSchedule {
    pub fn to_schedule(&self, l: usize, release: f64) -> Result<SamplingSchedule> {
        let first = ((self.weights[0] * l as f64).round() as usize).clamp(1, l);
        let mut times = vec![self.times[0]; first];
        times.extend(std::iter::repeat_n(self.times[1], l - first));
        SamplingSchedule::new(times, release)
    }
}

/// Searches `t_1 ≤ t_2` on a grid and the split `w̃_1 = k/L` of an `L`-proxy
/// schedule for the smallest Monte Carlo MSE.
pub fn asymptotic_two_time_schedule(params: &SystemParams, prior: &VelocityPrior, spec: &TwoTimeSpec) -> Result<TwoTimeSchedule> {
    if prior.speed_range().is_none() {
        return Err(Error::InvalidParameter("two-time design needs a directional prior".into()));
    }
    let l = spec.l_proxy.max(2);
    let axis = grid(spec.t_lo, spec.t_hi, spec.resolution);
    let splits: Vec<usize> = {
        let mut s: Vec<usize> = (1..8).map(|k| k * l / 8).filter(|&k| k > 0 && k < l).collect();
        s.dedup();
        s
    };
    let mut best: Option<TwoTimeSchedule> = None;
    let mut consider = |times: [f64; 2], first: usize| -> Result<()> {
        let mut v = vec![times[0]; first];
        v.extend(std::iter::repeat_n(times[1], l - first));
        let m = mse_montecarlo(params, prior, &SamplingSchedule::new(v, params.release_time())?, spec.estimator, spec.n_trials, spec.seed)?;
        if best.as_ref().is_none_or(|b| m.mse < b.mse.mse) {
            let w1 = first as f64 / l as f64;
            best = Some(TwoTimeSchedule { times, weights: [w1, 1.0 - w1], distinct: 2, mse: m });
        }
        Ok(())
    };
    for &t in &axis {
        consider([t, t], l)?;
    }
    for (i, &a) in axis.iter().enumerate() {
        for &b in &axis[i + 1..] {
            for &k in &splits {
                consider([a, b], k)?;
            }
        }
    }
    let mut out = best.expect("non-empty grid");
    if out.weights[1] < 0.01 {
        out.distinct = 1;
        out.times[1] = out.times[0];
    }
    Ok(out)
}
