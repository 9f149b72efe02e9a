//! Choosing the sampling times of the detector.

use rayon::prelude::*;

use crate::channel::{mean_count, mean_count_time_derivative, SamplingSchedule};
use crate::detector::{closed_form_s, HypothesisSet, MeanMatrix, TailPolicy};
use crate::error::{Error, Result};
use crate::numerics::special::normal_pdf;
use crate::numerics::{find_root, golden_section_min, optimize_simplex_grid, scan_brackets, RootSpec, SimplexPoint};

/// Which error measure a schedule search minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Objective {
    Exact,
    Gaussian,
    ChernoffCi,
}

impl Objective {
    pub const ALL: [Objective; 3] = [Objective::Exact, Objective::Gaussian, Objective::ChernoffCi];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Exact => "exact",
            Objective::Gaussian => "gaussian",
            Objective::ChernoffCi => "chernoff",
        }
    }

    pub fn evaluate(self, means: &MeanMatrix, policy: &TailPolicy) -> Result<f64> {
        match self {
            Objective::Exact => means.error_probability_exact(policy),
            Objective::Gaussian => means.error_probability_gaussian(),
            Objective::ChernoffCi => means.error_bound_ci(),
        }
    }
}

/// How the coarse stage covers `[t_lo, t_hi]^L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridStrategy {
    /// Sorted tuples when the budget allows at least `MIN_POINTS_PER_AXIS`
    /// points per axis, otherwise the diagonal.
    Auto,
    /// Every sorted tuple of grid points.
    SortedTuples,
    /// Equal-time tuples only; coordinate descent then breaks the symmetry.
    Diagonal,
}

const MIN_POINTS_PER_AXIS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleSearchSpec {
    pub t_lo: f64,
    pub t_hi: f64,
    /// Grid step of the coarse stage (before the budget cap).
    pub resolution: f64,
    /// Stopping tolerance of the refinement, in seconds.
    pub tolerance: f64,
    pub objective: Objective,
    /// Cap on the number of coarse tuples evaluated.
    pub max_grid_points: usize,
    pub strategy: GridStrategy,
    pub tail: TailPolicy,
}

impl ScheduleSearchSpec {
    /// Window `[t_r + 1 ms, 1 s]` on a 0.5 ms grid.
    pub fn new(objective: Objective, release_time: f64) -> Self {
        Self {
            t_lo: release_time + 1e-3,
            t_hi: 1.0,
            resolution: 5e-4,
            tolerance: 1e-7,
            objective,
            max_grid_points: 40_000,
            strategy: GridStrategy::Auto,
            tail: TailPolicy::default(),
        }
    }

    pub fn window(mut self, t_lo: f64, t_hi: f64) -> Self {
        self.t_lo = t_lo;
        self.t_hi = t_hi;
        self
    }

    pub fn resolution(mut self, resolution: f64) -> Self {
        self.resolution = resolution;
        self
    }

    pub fn max_grid_points(mut self, n: usize) -> Self {
        self.max_grid_points = n;
        self
    }

    pub fn strategy(mut self, strategy: GridStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn objective(mut self, objective: Objective) -> Self {
        self.objective = objective;
        self
    }

    fn validate(&self, release_time: f64) -> Result<()> {
        if !(self.t_hi > self.t_lo) || !self.t_lo.is_finite() || !self.t_hi.is_finite() {
            return Err(Error::EmptyWindow { lo: self.t_lo, hi: self.t_hi });
        }
        if self.t_lo <= release_time {
            return Err(Error::NonPositiveObservationTime { t: self.t_lo, release: release_time });
        }
        if !(self.resolution > 0.0) || !(self.tolerance > 0.0) {
            return Err(Error::InvalidParameter("resolution and tolerance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleOptimum {
    pub schedule: SamplingSchedule,
    /// Objective re-evaluated at `schedule`.
    pub value: f64,
    /// Step of the coarse grid actually used.
    pub grid_step: f64,
    /// Coarse tuples that tied with the best coarse value.
    pub grid_ties: Vec<Vec<f64>>,
}

/// Minimizes the chosen objective over `L` sampling times.
///
/// The coarse stage evaluates sorted tuples of an evenly spaced grid (the
/// objectives are symmetric in the times), shrinking the grid until the
/// tuple count fits the budget. The best tuple is refined by a fine local
/// scan and golden-section search per coordinate, sweeping until no time
/// moves by more than the tolerance.
pub fn optimize_schedule(hyps: &HypothesisSet, spec: &ScheduleSearchSpec, l: usize) -> Result<ScheduleOptimum> {
    let release = hyps.params().release_time();
    spec.validate(release)?;
    if l == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let eval = |times: &[f64]| -> f64 {
        hyps.means_at(times).and_then(|m| spec.objective.evaluate(&m, &spec.tail)).unwrap_or(f64::INFINITY)
    };
    // surface errors such as an enumeration limit instead of silently returning ∞
    spec.objective.evaluate(&hyps.means_at(&vec![0.5 * (spec.t_lo + spec.t_hi); l])?, &spec.tail)?;

    let full_n = (((spec.t_hi - spec.t_lo) / spec.resolution).round() as usize + 1).max(2);
    let (n, diagonal) = coarse_size(full_n, l, spec);
    let grid: Vec<f64> = (0..n).map(|k| spec.t_lo + (spec.t_hi - spec.t_lo) * k as f64 / (n - 1) as f64).collect();
    let grid_step = (spec.t_hi - spec.t_lo) / (n - 1) as f64;

    let tuples: Vec<Vec<usize>> = if diagonal { (0..n).map(|k| vec![k; l]).collect() } else { sorted_tuples(n, l) };
    // rows of λ on the grid, reused by every tuple
    let table: Vec<Vec<f64>> = grid
        .iter()
        .map(|&t| hyps.flows().iter().map(|f| mean_count(hyps.params(), f, t)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let m = hyps.len();
    let values: Vec<f64> = tuples
        .par_iter()
        .map(|tuple| {
            let rows = (0..m).map(|i| tuple.iter().map(|&k| table[k][i]).collect()).collect();
            MeanMatrix::new(rows).and_then(|mm| spec.objective.evaluate(&mm, &spec.tail)).unwrap_or(f64::INFINITY)
        })
        .collect();
    let (best_idx, best_val) = values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    if !best_val.is_finite() {
        return Err(Error::InvalidParameter("objective is not finite anywhere on the grid".into()));
    }
    let grid_ties: Vec<Vec<f64>> = values
        .iter()
        .zip(&tuples)
        .filter(|(&v, _)| v == best_val)
        .map(|(_, t)| t.iter().map(|&k| grid[k]).collect())
        .collect();

    let mut times: Vec<f64> = tuples[best_idx].iter().map(|&k| grid[k]).collect();
    let mut current = best_val;
    let mut radius = grid_step;
    for _sweep in 0..200 {
        let mut moved: f64 = 0.0;
        for c in 0..l {
            let lo = (times[c] - radius).max(spec.t_lo);
            let hi = (times[c] + radius).min(spec.t_hi);
            let mut trial = times.clone();
            let mut probe = |t: f64| {
                trial[c] = t;
                eval(&trial)
            };
            // fine scan guards against the count-lattice steps of the exact objective
            let fine = 24;
            let (mut best_t, mut best_v) = (times[c], current);
            for k in 0..=fine {
                let t = lo + (hi - lo) * k as f64 / fine as f64;
                let v = probe(t);
                if v < best_v {
                    best_t = t;
                    best_v = v;
                }
            }
            let cell = (hi - lo) / fine as f64;
            let (gt, gv) = golden_section_min(
                &mut probe,
                (best_t - cell).max(spec.t_lo),
                (best_t + cell).min(spec.t_hi),
                spec.tolerance * 0.1,
            );
            if gv < best_v {
                best_t = gt;
                best_v = gv;
            }
            if best_v < current {
                moved = moved.max((best_t - times[c]).abs());
                times[c] = best_t;
                current = best_v;
            }
        }
        if moved <= spec.tolerance {
            if radius <= spec.tolerance * 10.0 {
                break;
            }
            radius *= 0.25;
        }
    }
    let schedule = SamplingSchedule::new(times, release)?;
    let value = spec.objective.evaluate(&hyps.means(&schedule)?, &spec.tail)?;
    Ok(ScheduleOptimum { schedule, value, grid_step, grid_ties })
}

fn coarse_size(full_n: usize, l: usize, spec: &ScheduleSearchSpec) -> (usize, bool) {
    let fits = |n: usize| tuple_count(n, l) <= spec.max_grid_points as f64;
    match spec.strategy {
        GridStrategy::Diagonal => (full_n.min(spec.max_grid_points.max(2)), true),
        GridStrategy::SortedTuples | GridStrategy::Auto => {
            let mut n = full_n;
            while n > 2 && !fits(n) {
                n = ((n as f64) * 0.9).floor() as usize;
            }
            if spec.strategy == GridStrategy::Auto && n < MIN_POINTS_PER_AXIS.min(full_n) {
                (full_n.min(spec.max_grid_points.max(2)), true)
            } else {
                (n.max(2), false)
            }
        }
    }
}

/// Number of nondecreasing `l`-tuples from `n` points, `C(n + l − 1, l)`.
fn tuple_count(n: usize, l: usize) -> f64 {
    (0..l).map(|k| (n + k) as f64 / (k + 1) as f64).product()
}

fn sorted_tuples(n: usize, l: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; l];
    fn rec(n: usize, pos: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for k in start..n {
            cur[pos] = k;
            rec(n, pos + 1, k, cur, out);
        }
    }
    rec(n, 0, 0, &mut cur, &mut out);
    out
}

/// Gradient `∂P_eG/∂t_l` of the binary Gaussian approximation.
///
/// With `z_i = (β − μ_i)/σ_i`, `P_eG = ½[1 − Q(z_0) + Q(z_1)]` and
/// `∂P_eG/∂t_l = ½[φ(z_0) ∂z_0/∂t_l − φ(z_1) ∂z_1/∂t_l]`, where the rule
/// weights, offset and moments are all differentiated through
/// `g_il = dλ_il/dt_l`. A stationary schedule of the approximation makes every
/// component vanish.
pub fn gaussian_stationarity_residual(hyps: &HypothesisSet, schedule: &SamplingSchedule) -> Result<Vec<f64>> {
    if hyps.len() != 2 {
        return Err(Error::InvalidParameter("stationarity residual is defined for two hypotheses".into()));
    }
    let means = hyps.means(schedule)?;
    let rule = means.binary_rule()?;
    let g = hyps
        .flows()
        .iter()
        .map(|f| {
            schedule.times().iter().map(|&t| mean_count_time_derivative(hyps.params(), f, t)).collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let (l0, l1) = (means.row(0), means.row(1));
    let w = &rule.weights;
    let beta = rule.offset;
    let moments = |row: &[f64]| {
        let mu: f64 = w.iter().zip(row).map(|(w, l)| w * l).sum();
        let var: f64 = w.iter().zip(row).map(|(w, l)| w * w * l).sum();
        (mu, var.sqrt())
    };
    let (mu0, s0) = moments(l0);
    let (mu1, s1) = moments(l1);
    let z0 = (beta - mu0) / s0;
    let z1 = (beta - mu1) / s1;
    Ok((0..schedule.len())
        .map(|l| {
            let dbeta = g[0][l] - g[1][l];
            let dw = g[0][l] / l0[l] - g[1][l] / l1[l];
            let dz = |row: &[f64], gi: f64, mu: f64, s: f64| {
                let dmu = dw * row[l] + w[l] * gi;
                let ds = (2.0 * w[l] * dw * row[l] + w[l] * w[l] * gi) / (2.0 * s);
                (dbeta - dmu) / s - (beta - mu) * ds / (s * s)
            };
            let dz0 = dz(l0, g[0][l], mu0, s0);
            let dz1 = dz(l1, g[1][l], mu1, s1);
            0.5 * (normal_pdf(z0) * dz0 - normal_pdf(z1) * dz1)
        })
        .collect())
}

/// Equal-time optimum of the binary Chernoff bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChernoffTime {
    pub t: f64,
    pub s: f64,
    /// Per-sample exponent `f(t, s) = λ_0 s + λ_1(1 − s) − λ_0^s λ_1^{1−s}`.
    pub exponent: f64,
    /// `∂f/∂t` at `(t, s)`; zero at a stationary point.
    pub residual: f64,
}

impl ChernoffTime {
    pub fn schedule(&self, l: usize, release_time: f64) -> Result<SamplingSchedule> {
        SamplingSchedule::repeated(self.t, l, release_time)
    }

    /// `½ exp(−L f)` for `L` samples at this time.
    pub fn bound(&self, l: usize) -> f64 {
        0.5 * (-(l as f64) * self.exponent).exp()
    }
}

/// Joint stationary point in `(t, s)` of the single-sample Chernoff exponent
/// of hypotheses `i1`, `i2`.
///
/// For fixed `t` the best `s` has the closed form `ln((r − 1)/ln r)/ln r`
/// with `r = λ_{i1}/λ_{i2}`; by the envelope theorem the best time is then a
/// root of `∂f/∂t` evaluated at that `s`. Roots are bracketed on a scan of the
/// window and the one with the largest exponent is returned. Because the
/// exponent of `L` samples is a sum over samples sharing one `s`, the same
/// time serves every `L`.
pub fn chernoff_time_for_pair(
    hyps: &HypothesisSet,
    i1: usize,
    i2: usize,
    spec: &ScheduleSearchSpec,
) -> Result<ChernoffTime> {
    spec.validate(hyps.params().release_time())?;
    if i1 >= hyps.len() || i2 >= hyps.len() || i1 == i2 {
        return Err(Error::InvalidParameter(format!("invalid hypothesis pair ({i1}, {i2})")));
    }
    let params = hyps.params();
    let (fa, fb) = (&hyps.flows()[i1], &hyps.flows()[i2]);
    let state = |t: f64| -> Option<(f64, f64, f64, f64, f64)> {
        let a = mean_count(params, fa, t).ok()?;
        let b = mean_count(params, fb, t).ok()?;
        let ga = mean_count_time_derivative(params, fa, t).ok()?;
        let gb = mean_count_time_derivative(params, fb, t).ok()?;
        let s = closed_form_s(a, b)?;
        Some((a, b, ga, gb, s))
    };
    let slope = |t: f64| match state(t) {
        Some((a, b, ga, gb, s)) => {
            let geo = a.powf(s) * b.powf(1.0 - s);
            ga * s + gb * (1.0 - s) - geo * (s * ga / a + (1.0 - s) * gb / b)
        }
        None => f64::NAN,
    };
    let exponent = |t: f64| match state(t) {
        Some((a, b, _, _, s)) => a * s + b * (1.0 - s) - a.powf(s) * b.powf(1.0 - s),
        None => f64::NEG_INFINITY,
    };
    let cells = (((spec.t_hi - spec.t_lo) / spec.resolution).round() as usize).clamp(16, 20_000);
    let mut best: Option<ChernoffTime> = None;
    for (lo, hi) in scan_brackets(slope, spec.t_lo, spec.t_hi, cells) {
        let root = find_root(slope, &RootSpec::new(lo, hi).tol(1e-15).max_iter(400))?;
        let Some((_, _, _, _, s)) = state(root.x) else { continue };
        let cand = ChernoffTime { t: root.x, s, exponent: exponent(root.x), residual: slope(root.x) };
        if best.is_none_or(|b| cand.exponent > b.exponent) {
            best = Some(cand);
        }
    }
    best.ok_or(Error::NoRootInWindow { lo: spec.t_lo, hi: spec.t_hi })
}

/// Chernoff-optimal time of a binary detector, shared by all `L` samples.
pub fn chernoff_schedule_binary(hyps: &HypothesisSet, spec: &ScheduleSearchSpec) -> Result<ChernoffTime> {
    if hyps.len() != 2 {
        return Err(Error::InvalidParameter("binary Chernoff schedule needs two hypotheses".into()));
    }
    chernoff_time_for_pair(hyps, 0, 1, spec)
}

/// Distinct sampling times with the fraction of samples placed at each.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSchedule {
    pub times: Vec<f64>,
    pub weights: SimplexPoint,
    /// `min_pairs max_s Σ_k w_k f_pair(t_k, s)`, the exponent per sample.
    pub exponent: f64,
}

impl WeightedSchedule {
    /// Rounds the weights to `L` samples (largest remainders first).
    pub fn to_schedule(&self, l: usize, release_time: f64) -> Result<SamplingSchedule> {
        let w = self.weights.weights();
        let mut counts: Vec<usize> = w.iter().map(|x| (x * l as f64).floor() as usize).collect();
        let mut order: Vec<usize> = (0..w.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = w[a] * l as f64 - counts[a] as f64;
            let rb = w[b] * l as f64 - counts[b] as f64;
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        let mut missing = l - counts.iter().sum::<usize>();
        for &k in order.iter().cycle() {
            if missing == 0 {
                break;
            }
            counts[k] += 1;
            missing -= 1;
        }
        let times = self.times.iter().zip(&counts).flat_map(|(&t, &c)| std::iter::repeat_n(t, c)).collect();
        SamplingSchedule::new(times, release_time)
    }
}

/// Outcome of the large-`L` Chernoff design.
#[derive(Debug, Clone, PartialEq)]
pub struct CaratheodorySchedule {
    /// `(i1, i2, t)`: the single-sample Chernoff time of every pair.
    pub pair_times: Vec<(usize, usize, f64)>,
    /// Weights optimized with the times fixed at the pair times.
    pub seeded: WeightedSchedule,
    /// Times and weights refined jointly, starting from `seeded`.
    pub refined: WeightedSchedule,
}

/// Per-sample exponent of a weighted design: for every pair the concave
/// function `s ↦ Σ_k w_k f(t_k, s)` is maximized, then the worst pair is kept.
pub fn weighted_exponent(hyps: &HypothesisSet, times: &[f64], weights: &[f64]) -> Result<f64> {
    let means = hyps.means_at(times)?;
    let m = hyps.len();
    let mut worst = f64::INFINITY;
    for i1 in 0..m {
        for i2 in i1 + 1..m {
            let f = |s: f64| -> f64 {
                weights
                    .iter()
                    .enumerate()
                    .map(|(k, &w)| {
                        let (a, b) = (means.row(i1)[k], means.row(i2)[k]);
                        w * (a * s + b * (1.0 - s) - a.powf(s) * b.powf(1.0 - s))
                    })
                    .sum()
            };
            let (_, neg) = golden_section_min(|s| -f(s), 0.0, 1.0, 1e-10);
            worst = worst.min(-neg);
        }
    }
    Ok(worst)
}

/// Large-`L` Chernoff design with at most `C(M, 2)` distinct times.
///
/// Candidate times are the per-pair single-sample Chernoff optima; weights
/// on those times maximize the worst-pair exponent over the simplex. The
/// times are then moved one at a time by golden-section search with the
/// weights re-optimized after each sweep.
pub fn caratheodory_schedule(
    hyps: &HypothesisSet,
    spec: &ScheduleSearchSpec,
    simplex_resolution: usize,
) -> Result<CaratheodorySchedule> {
    let m = hyps.len();
    let mut pair_times = Vec::new();
    for i1 in 0..m {
        for i2 in i1 + 1..m {
            pair_times.push((i1, i2, chernoff_time_for_pair(hyps, i1, i2, spec)?.t));
        }
    }
    let times: Vec<f64> = pair_times.iter().map(|p| p.2).collect();
    let seeded = weights_for(hyps, &times, simplex_resolution)?;

    let mut refined = seeded.clone();
    for _round in 0..4 {
        let mut times = refined.times.clone();
        let w = refined.weights.weights().to_vec();
        for k in 0..times.len() {
            if w[k] == 0.0 {
                continue;
            }
            let mut trial = times.clone();
            let (t, _) = golden_section_min(
                |t| {
                    trial[k] = t;
                    -weighted_exponent(hyps, &trial, &w).unwrap_or(f64::NEG_INFINITY)
                },
                spec.t_lo,
                spec.t_hi.min(4.0 * times[k]),
                spec.tolerance,
            );
            times[k] = t;
        }
        let next = weights_for(hyps, &times, simplex_resolution)?;
        let improved = next.exponent > refined.exponent;
        if improved {
            refined = next;
        }
        if !improved || (refined.exponent - seeded.exponent).abs() < 1e-15 {
            break;
        }
    }
    Ok(CaratheodorySchedule { pair_times, seeded, refined })
}

fn weights_for(hyps: &HypothesisSet, times: &[f64], resolution: usize) -> Result<WeightedSchedule> {
    let means = hyps.means_at(times)?;
    // per-time exponent tables make the simplex search cheap: f_pair(t_k, s) on an s-grid
    let m = hyps.len();
    let s_grid: Vec<f64> = (0..=400).map(|j| j as f64 / 400.0).collect();
    let mut tables = Vec::new();
    for i1 in 0..m {
        for i2 in i1 + 1..m {
            let rows: Vec<Vec<f64>> = (0..times.len())
                .map(|k| {
                    let (a, b) = (means.row(i1)[k], means.row(i2)[k]);
                    s_grid.iter().map(|&s| a * s + b * (1.0 - s) - a.powf(s) * b.powf(1.0 - s)).collect()
                })
                .collect();
            tables.push(rows);
        }
    }
    let coarse = |w: &[f64]| -> f64 {
        tables
            .iter()
            .map(|rows| {
                (0..s_grid.len())
                    .map(|j| rows.iter().zip(w).map(|(r, &wk)| wk * r[j]).sum::<f64>())
                    .fold(f64::NEG_INFINITY, f64::max)
            })
            .fold(f64::INFINITY, f64::min)
    };
    let opt = optimize_simplex_grid(coarse, times.len(), resolution);
    let exponent = weighted_exponent(hyps, times, opt.point.weights())?;
    Ok(WeightedSchedule { times: times.to_vec(), weights: opt.point, exponent })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::SystemParams;

    fn binary() -> HypothesisSet {
        HypothesisSet::along_direction(SystemParams::reference(), &[0.0, 4e-4]).unwrap()
    }

    fn spec(objective: Objective) -> ScheduleSearchSpec {
        ScheduleSearchSpec::new(objective, 0.0).window(0.02, 0.4).resolution(1e-3)
    }

    #[test]
    fn tuple_enumeration_counts() {
        assert_eq!(sorted_tuples(5, 2).len(), 15);
        assert_eq!(tuple_count(5, 2), 15.0);
        assert_eq!(sorted_tuples(4, 3).len(), 20);
        assert!(sorted_tuples(4, 3).iter().all(|t| t.windows(2).all(|w| w[0] <= w[1])));
    }

    #[test]
    fn rejects_empty_window() {
        let s = spec(Objective::Gaussian).window(0.3, 0.2);
        assert!(matches!(optimize_schedule(&binary(), &s, 1), Err(Error::EmptyWindow { .. })));
    }

    #[test]
    fn exact_objective_respects_enumeration_limit() {
        let r = optimize_schedule(&binary(), &spec(Objective::Exact), 5);
        assert!(matches!(r, Err(Error::EnumerationTooLarge { .. })));
    }

    #[test]
    fn chernoff_time_matches_grid_search() {
        let h = binary();
        let ct = chernoff_schedule_binary(&h, &spec(Objective::ChernoffCi)).unwrap();
        let grid = optimize_schedule(&h, &spec(Objective::ChernoffCi), 1).unwrap();
        assert!((ct.t - grid.schedule.times()[0]).abs() < 1e-5, "{} vs {:?}", ct.t, grid.schedule);
        assert!(ct.residual.abs() < 1e-8, "{}", ct.residual);
        assert!((ct.bound(1) - grid.value).abs() < 1e-9);
    }

    #[test]
    fn returned_value_is_a_direct_evaluation() {
        let h = binary();
        let opt = optimize_schedule(&h, &spec(Objective::Gaussian), 1).unwrap();
        let direct = h.means(&opt.schedule).unwrap().error_probability_gaussian().unwrap();
        assert_eq!(opt.value, direct);
    }

    #[test]
    fn residual_changes_sign_with_hypothesis_swap() {
        let p = SystemParams::reference();
        let a = HypothesisSet::along_direction(p.clone(), &[0.0, 4e-4]).unwrap();
        let b = HypothesisSet::along_direction(p, &[4e-4, 0.0]).unwrap();
        let s = SamplingSchedule::new(vec![0.09, 0.13], 0.0).unwrap();
        let ra = gaussian_stationarity_residual(&a, &s).unwrap();
        let rb = gaussian_stationarity_residual(&b, &s).unwrap();
        // P_eG itself is symmetric under the swap, so its gradient is unchanged
        for (x, y) in ra.iter().zip(&rb) {
            assert!((x - y).abs() <= 1e-12 * x.abs().max(1e-300), "{x} vs {y}");
        }
    }

    #[test]
    fn weighted_schedule_rounding() {
        let ws = WeightedSchedule {
            times: vec![0.1, 0.2, 0.3],
            weights: SimplexPoint::new(vec![0.5, 0.3, 0.2]).unwrap(),
            exponent: 0.0,
        };
        let s = ws.to_schedule(7, 0.0).unwrap();
        assert_eq!(s.len(), 7);
        assert_eq!(s.times().iter().filter(|&&t| t == 0.1).count(), 4);
    }
}
