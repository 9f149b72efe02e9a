//! M-ary MAP detection of the flow velocity and its error performance.
//!
//! Hypotheses are equiprobable flow profiles. Everything downstream of the
//! channel only needs the mean matrix `λ[i][l] = Λ(H_i, t_l)`, so the
//! formulas live on [`MeanMatrix`] and the free functions bind a
//! [`HypothesisSet`] to a [`SamplingSchedule`] first.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::channel::{mean_count, FlowProfile, ObservationVector, SamplingSchedule, SystemParams};
use crate::error::{Error, Result};
use crate::numerics::special::{poisson_pmf, poisson_support_limit, xlogy};
use crate::numerics::{bivariate_upper_orthant, find_root, golden_section_min, q_function, RootSpec};

/// Equiprobable hypotheses `H_0..H_{M-1}` about the flow.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    params: SystemParams,
    flows: Vec<FlowProfile>,
}

impl HypothesisSet {
    pub fn new(params: SystemParams, flows: Vec<FlowProfile>) -> Result<Self> {
        if flows.len() < 2 {
            return Err(Error::InvalidParameter(format!("need at least two hypotheses, got {}", flows.len())));
        }
        for i in 0..flows.len() {
            for j in i + 1..flows.len() {
                if flows[i] == flows[j] {
                    return Err(Error::DegenerateHypotheses(i, j));
                }
            }
        }
        Ok(Self { params, flows })
    }

    /// Constant flows of the given speeds along the receiver direction.
    pub fn along_direction(params: SystemParams, speeds: &[f64]) -> Result<Self> {
        let flows = speeds.iter().map(|&v| FlowProfile::along(params.direction(), v)).collect();
        Self::new(params, flows)
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn flows(&self) -> &[FlowProfile] {
        &self.flows
    }

    pub fn len(&self) -> usize {
        self.flows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flows.is_empty()
    }

    /// Mean matrix for the sampling times of `schedule`.
    pub fn means(&self, schedule: &SamplingSchedule) -> Result<MeanMatrix> {
        self.means_at(schedule.times())
    }

    /// Mean matrix for arbitrary (unsorted) sampling times.
    pub fn means_at(&self, times: &[f64]) -> Result<MeanMatrix> {
        let rows = self
            .flows
            .iter()
            .map(|f| times.iter().map(|&t| mean_count(&self.params, f, t)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        MeanMatrix::new(rows)
    }
}

/// Expected counts `λ[i][l]` for hypothesis `i` and sample `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanMatrix {
    rows: Vec<Vec<f64>>,
}

/// Truncation of the Poisson sums in the exact error probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPolicy {
    /// Upper bound on the probability mass left out of the enumeration.
    pub tail_bound: f64,
    /// Largest number of samples enumerated exactly.
    pub max_samples: usize,
}

impl Default for TailPolicy {
    fn default() -> Self {
        Self { tail_bound: 1e-12, max_samples: 4 }
    }
}

/// Likelihood-ratio rule for two hypotheses: decide `H_0` when `Σ w_l y_l ≥ β`.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDecisionRule {
    pub weights: Vec<f64>,
    pub offset: f64,
    /// Scalar count threshold for a single sample.
    pub threshold: Option<f64>,
}

impl BinaryDecisionRule {
    pub fn statistic(&self, y: &[u64]) -> f64 {
        self.weights.iter().zip(y).map(|(w, &y)| w * y as f64).sum()
    }

    /// Equality goes to `H_0`, as in [`MeanMatrix::decide`].
    pub fn decide(&self, y: &[u64]) -> usize {
        if self.statistic(y) >= self.offset {
            0
        } else {
            1
        }
    }
}

/// Optimized Chernoff exponent for one pair of hypotheses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairExponent {
    pub i1: usize,
    pub i2: usize,
    pub s: f64,
    pub exponent: f64,
}

/// Monte Carlo estimate of a probability with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub trials: u64,
}

impl McEstimate {
    pub fn from_counts(hits: u64, trials: u64) -> Self {
        let p = hits as f64 / trials as f64;
        Self { estimate: p, std_error: (p * (1.0 - p) / trials as f64).sqrt(), trials }
    }

    /// `|x − estimate| ≤ k·SE`; a zero standard error admits only rounding noise.
    pub fn agrees_with(&self, x: f64, k: f64) -> bool {
        (x - self.estimate).abs() <= k * self.std_error + 1e-12
    }
}

const MC_CHUNK: u64 = 4096;

impl MeanMatrix {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InvalidParameter("need at least two hypotheses".into()));
        }
        let l = rows[0].len();
        if l == 0 || rows.iter().any(|r| r.len() != l) {
            return Err(Error::InvalidParameter("mean rows must be nonempty and of equal length".into()));
        }
        if rows.iter().flatten().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidParameter("means must be finite and nonnegative".into()));
        }
        Ok(Self { rows })
    }

    pub fn hypotheses(&self) -> usize {
        self.rows.len()
    }

    pub fn samples(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    fn require_positive(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            if let Some(l) = row.iter().position(|&x| x <= 0.0) {
                return Err(Error::ZeroMeanCount { hypothesis: i, sample: l });
            }
        }
        Ok(())
    }

    fn require_distinct(&self, i1: usize, i2: usize) -> Result<()> {
        if self.rows[i1] == self.rows[i2] {
            Err(Error::DegenerateHypotheses(i1.min(i2), i1.max(i2)))
        } else {
            Ok(())
        }
    }

    fn check_pair(&self, i1: usize, i2: usize) -> Result<()> {
        let m = self.hypotheses();
        if i1 >= m || i2 >= m || i1 == i2 {
            return Err(Error::InvalidParameter(format!("invalid hypothesis pair ({i1}, {i2}) for M = {m}")));
        }
        Ok(())
    }

    /// `Σ_l y_l ln λ_il − λ_il`; `-∞` when a zero mean meets a positive count.
    pub fn log_likelihood(&self, i: usize, y: &[f64]) -> f64 {
        self.rows[i].iter().zip(y).map(|(&lam, &y)| xlogy(y, lam) - lam).sum()
    }

    /// MAP decision with ties resolved toward the smallest index.
    pub fn decide(&self, y: &[u64]) -> usize {
        let y: Vec<f64> = y.iter().map(|&v| v as f64).collect();
        let mut best = 0;
        let mut best_ll = self.log_likelihood(0, &y);
        for i in 1..self.hypotheses() {
            let ll = self.log_likelihood(i, &y);
            if ll > best_ll {
                best = i;
                best_ll = ll;
            }
        }
        best
    }

    pub fn binary_rule(&self) -> Result<BinaryDecisionRule> {
        if self.hypotheses() != 2 {
            return Err(Error::InvalidParameter(format!(
                "binary rule needs exactly two hypotheses, got {}",
                self.hypotheses()
            )));
        }
        self.require_positive()?;
        self.require_distinct(0, 1)?;
        let (r0, r1) = (&self.rows[0], &self.rows[1]);
        let weights: Vec<f64> = r0.iter().zip(r1).map(|(a, b)| (a / b).ln()).collect();
        let offset = r0.iter().zip(r1).map(|(a, b)| a - b).sum();
        let threshold = (self.samples() == 1).then(|| (r0[0] - r1[0]) / (r0[0] / r1[0]).ln());
        Ok(BinaryDecisionRule { weights, offset, threshold })
    }

    /// Exact MAP error probability by enumerating the truncated count lattice.
    ///
    /// The probability of an error at `y` is `Σ_i P(y | H_i) − max_i P(y | H_i)`,
    /// so the tie convention changes which hypothesis is chosen but not the
    /// value. These error terms are summed directly (no `1 − P_c`
    /// cancellation), so tiny error probabilities keep full relative
    /// precision. Samples whose means agree under every hypothesis are merged
    /// into their sum, which carries the same likelihood ratios. Each merged
    /// sample's support is cut where every hypothesis leaves less than
    /// `tail_bound / L` of its mass; the result is a lower bound within
    /// `tail_bound` of the untruncated value.
    pub fn error_probability_exact(&self, policy: &TailPolicy) -> Result<f64> {
        let l = self.samples();
        if l > policy.max_samples {
            return Err(Error::EnumerationTooLarge { samples: l, limit: policy.max_samples });
        }
        let m = self.hypotheses();
        // samples with identical means under every hypothesis only matter through their sum
        let mut columns: Vec<(Vec<f64>, f64)> = Vec::new();
        for s in 0..l {
            let col: Vec<f64> = (0..m).map(|i| self.rows[i][s]).collect();
            match columns.iter_mut().find(|(c, _)| *c == col) {
                Some((_, k)) => *k += 1.0,
                None => columns.push((col, 1.0)),
            }
        }
        let per_sample_tail = policy.tail_bound / columns.len() as f64;
        // pmf[l][y][i]
        let pmf: Vec<Vec<Vec<f64>>> = columns
            .iter()
            .map(|(col, k)| {
                let lam: Vec<f64> = col.iter().map(|x| x * k).collect();
                let upper = lam.iter().map(|&x| poisson_support_limit(x, per_sample_tail)).max().unwrap_or(0);
                (0..=upper).map(|y| lam.iter().map(|&x| poisson_pmf(y, x)).collect()).collect()
            })
            .collect();
        let mut partial = vec![1.0; m];
        let error = if m == 2 {
            let (head, last) = pmf.split_at(pmf.len() - 1);
            let col = &columns[columns.len() - 1];
            let tail = BinaryTail::new(&last[0], col.0[0] * col.1, col.0[1] * col.1);
            enumerate_binary(head, &tail, 0, partial[0], partial[1])
        } else {
            enumerate_error(&pmf, 0, &mut partial)
        };
        Ok((error / m as f64).clamp(0.0, 1.0))
    }

    /// Gaussian approximation of the MAP error probability.
    ///
    /// Counts are replaced by independent normals `N(λ_il, λ_il)`; the
    /// decision statistics `Σ_l w_ijl y_l − β_ij` are then jointly normal. Two
    /// hypotheses use the univariate form; a single sample reduces every
    /// hypothesis's acceptance region to an interval; three hypotheses with
    /// several samples use the bivariate orthant probability. Other cases
    /// have no tractable form here and are rejected.
    pub fn error_probability_gaussian(&self) -> Result<f64> {
        self.require_positive()?;
        let m = self.hypotheses();
        for i in 0..m {
            for j in i + 1..m {
                self.require_distinct(i, j)?;
            }
        }
        if m == 2 {
            let (z0, z1) = self.binary_gaussian_arguments()?;
            return Ok(0.5 * (1.0 - q_function(z0) + q_function(z1)));
        }
        if self.samples() == 1 {
            let mut correct = 0.0;
            for i in 0..m {
                let lam = self.rows[i][0];
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for j in (0..m).filter(|&j| j != i) {
                    let w = (lam / self.rows[j][0]).ln();
                    let b = lam - self.rows[j][0];
                    if w > 0.0 {
                        lo = lo.max(b / w);
                    } else {
                        hi = hi.min(b / w);
                    }
                }
                if hi > lo {
                    let sd = lam.sqrt();
                    correct += q_function((lo - lam) / sd) - q_function((hi - lam) / sd);
                }
            }
            return Ok((1.0 - correct / m as f64).clamp(0.0, 1.0));
        }
        if m == 3 {
            let mut correct = 0.0;
            for i in 0..3 {
                let others: Vec<usize> = (0..3).filter(|&j| j != i).collect();
                let stats: Vec<(f64, f64, Vec<f64>)> = others
                    .iter()
                    .map(|&j| {
                        let w: Vec<f64> =
                            self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| (a / b).ln()).collect();
                        let beta: f64 = self.rows[i].iter().zip(&self.rows[j]).map(|(a, b)| a - b).sum();
                        let mean: f64 = w.iter().zip(&self.rows[i]).map(|(w, l)| w * l).sum::<f64>() - beta;
                        let var: f64 = w.iter().zip(&self.rows[i]).map(|(w, l)| w * w * l).sum();
                        (mean, var, w)
                    })
                    .collect();
                let cov: f64 = stats[0].2.iter().zip(&stats[1].2).zip(&self.rows[i]).map(|((a, b), l)| a * b * l).sum();
                let (s0, s1) = (stats[0].1.sqrt(), stats[1].1.sqrt());
                let rho = cov / (s0 * s1);
                correct += bivariate_upper_orthant(-stats[0].0 / s0, -stats[1].0 / s1, rho);
            }
            return Ok((1.0 - correct / 3.0).clamp(0.0, 1.0));
        }
        Err(Error::InvalidParameter(format!(
            "Gaussian approximation with {m} hypotheses needs a single sample, got {}",
            self.samples()
        )))
    }

    /// Standardized arguments `((β − μ_0)/σ_0, (β − μ_1)/σ_1)` of the binary
    /// Gaussian approximation, `μ_i = Σ w_l λ_il`, `σ_i² = Σ w_l² λ_il`.
    pub fn binary_gaussian_arguments(&self) -> Result<(f64, f64)> {
        let rule = self.binary_rule()?;
        let z = |i: usize| {
            let mu: f64 = rule.weights.iter().zip(&self.rows[i]).map(|(w, l)| w * l).sum();
            let sigma: f64 = rule.weights.iter().zip(&self.rows[i]).map(|(w, l)| w * w * l).sum::<f64>().sqrt();
            (rule.offset - mu) / sigma
        };
        Ok((z(0), z(1)))
    }

    /// `D_{i1,i2}(s) = Σ_l [λ_{i1,l} s + λ_{i2,l}(1 − s) − λ_{i1,l}^s λ_{i2,l}^{1−s}]`.
    pub fn chernoff_exponent(&self, i1: usize, i2: usize, s: f64) -> f64 {
        self.rows[i1].iter().zip(&self.rows[i2]).map(|(&a, &b)| chernoff_term(a, b, s)).sum()
    }

    /// `dD/ds = Σ_l [λ_{i1,l} − λ_{i2,l} − λ_{i1,l}^s λ_{i2,l}^{1−s} ln(λ_{i1,l}/λ_{i2,l})]`.
    pub fn chernoff_exponent_slope(&self, i1: usize, i2: usize, s: f64) -> f64 {
        self.rows[i1]
            .iter()
            .zip(&self.rows[i2])
            .map(|(&a, &b)| a - b - a.powf(s) * b.powf(1.0 - s) * (a / b).ln())
            .sum()
    }

    /// Maximizer of the concave exponent `D_{i1,i2}` over `[0, 1]`.
    pub fn optimal_chernoff_s(&self, i1: usize, i2: usize) -> Result<f64> {
        self.check_pair(i1, i2)?;
        self.require_positive()?;
        self.require_distinct(i1, i2)?;
        let spec = RootSpec::new(1e-9, 1.0 - 1e-9).tol(1e-12);
        match find_root(|s| self.chernoff_exponent_slope(i1, i2, s), &spec) {
            Ok(root) => Ok(root.x),
            // rows so close that the slope is rounding noise at both ends
            Err(Error::Bracket { .. }) => {
                Ok(golden_section_min(|s| -self.chernoff_exponent(i1, i2, s), 0.0, 1.0, 1e-10).0)
            }
            Err(e) => Err(e),
        }
    }

    pub fn pair_exponent(&self, i1: usize, i2: usize) -> Result<PairExponent> {
        let s = self.optimal_chernoff_s(i1, i2)?;
        Ok(PairExponent { i1, i2, s, exponent: self.chernoff_exponent(i1, i2, s) })
    }

    /// Optimized exponents for every unordered pair `i1 < i2`.
    pub fn pair_exponents(&self) -> Result<Vec<PairExponent>> {
        let m = self.hypotheses();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for i1 in 0..m {
            for i2 in i1 + 1..m {
                out.push(self.pair_exponent(i1, i2)?);
            }
        }
        Ok(out)
    }

    /// `((M − 1)/2) · max_pairs exp(−max_s D)`.
    pub fn error_bound_ci(&self) -> Result<f64> {
        let worst = self.pair_exponents()?.iter().map(|p| p.exponent).fold(f64::INFINITY, f64::min);
        Ok(0.5 * (self.hypotheses() - 1) as f64 * (-worst).exp())
    }

    /// Hölder surrogate `K(s)` built from the row sums.
    pub fn holder_exponent(&self, i1: usize, i2: usize, s: f64) -> f64 {
        let a: f64 = self.rows[i1].iter().sum();
        let b: f64 = self.rows[i2].iter().sum();
        chernoff_term(a, b, s)
    }

    /// Looser bound using the row-sum surrogate and its closed-form `s`.
    pub fn error_bound_holder_ci(&self) -> Result<f64> {
        let m = self.hypotheses();
        self.require_positive()?;
        let mut worst = f64::INFINITY;
        for i1 in 0..m {
            for i2 in i1 + 1..m {
                let a: f64 = self.rows[i1].iter().sum();
                let b: f64 = self.rows[i2].iter().sum();
                let s = closed_form_s(a, b).ok_or(Error::EqualRowSums(i1, i2))?;
                worst = worst.min(chernoff_term(a, b, s));
            }
        }
        Ok(0.5 * (m - 1) as f64 * (-worst).exp())
    }

    /// Simulated MAP error rate: each trial draws a hypothesis uniformly,
    /// samples the counts and decides. Trials are split into fixed chunks;
    /// chunk `k` uses stream `k` of a ChaCha8 generator seeded with `seed`.
    pub fn error_probability_montecarlo(&self, n_trials: u64, seed: u64) -> Result<McEstimate> {
        if n_trials == 0 {
            return Err(Error::InvalidParameter("need at least one trial".into()));
        }
        let m = self.hypotheses();
        let dists: Vec<Vec<Option<Poisson<f64>>>> = self
            .rows
            .iter()
            .map(|row| row.iter().map(|&lam| (lam > 0.0).then(|| Poisson::new(lam).expect("finite mean"))).collect())
            .collect();
        let chunks = n_trials.div_ceil(MC_CHUNK);
        let errors: u64 = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c);
                let count = MC_CHUNK.min(n_trials - c * MC_CHUNK);
                let mut y = vec![0u64; self.samples()];
                let mut errors = 0u64;
                for _ in 0..count {
                    let truth = rng.random_range(0..m);
                    for (slot, d) in y.iter_mut().zip(&dists[truth]) {
                        *slot = d.as_ref().map_or(0, |d| d.sample(&mut rng) as u64);
                    }
                    if self.decide(&y) != truth {
                        errors += 1;
                    }
                }
                errors
            })
            .collect::<Vec<_>>()
            .into_iter()
            .sum();
        Ok(McEstimate::from_counts(errors, n_trials))
    }
}

fn chernoff_term(a: f64, b: f64, s: f64) -> f64 {
    a * s + b * (1.0 - s) - a.powf(s) * b.powf(1.0 - s)
}

/// Maximizer of `a s + b(1 − s) − a^s b^{1−s}`:
/// `s* = ln((r − 1)/ln r) / ln r` with `r = a/b`. `None` when `a = b`.
pub fn closed_form_s(a: f64, b: f64) -> Option<f64> {
    let r = a / b;
    if !(r > 0.0) || r == 1.0 || !r.is_finite() {
        return None;
    }
    let ln_r = r.ln();
    Some(((r - 1.0) / ln_r).ln() / ln_r)
}

/// Last sample of a binary problem summed in closed form: the likelihood
/// ratio is monotone in the count, so the smaller term switches sides once.
struct BinaryTail {
    /// `Σ_{y<k} P_i(y)` and `Σ_{y≥k} P_i(y)` over the truncated support.
    below: [Vec<f64>; 2],
    above: [Vec<f64>; 2],
    ln_ratio: f64,
    mean_gap: f64,
}

impl BinaryTail {
    fn new(pmf: &[Vec<f64>], lam0: f64, lam1: f64) -> Self {
        let n = pmf.len();
        let mut below = [vec![0.0; n + 1], vec![0.0; n + 1]];
        let mut above = [vec![0.0; n + 1], vec![0.0; n + 1]];
        for i in 0..2 {
            for y in 0..n {
                below[i][y + 1] = below[i][y] + pmf[y][i];
            }
            // suffix sums from the far end keep small tails exact
            for y in (0..n).rev() {
                above[i][y] = above[i][y + 1] + pmf[y][i];
            }
        }
        Self { below, above, ln_ratio: (lam0 / lam1).ln(), mean_gap: lam0 - lam1 }
    }

    /// `Σ_y min(p0 P_0(y), p1 P_1(y))`.
    fn error(&self, p0: f64, p1: f64) -> f64 {
        if p0 == 0.0 || p1 == 0.0 {
            return 0.0;
        }
        let n = self.below[0].len() - 1;
        // ln(p0 P_0(y)) − ln(p1 P_1(y)) = a + b y
        let a = (p0 / p1).ln() - self.mean_gap;
        let b = self.ln_ratio;
        if b == 0.0 || !b.is_finite() {
            let i = if a < 0.0 { 0 } else { 1 };
            let p = if i == 0 { p0 } else { p1 };
            return p * self.below[i][n];
        }
        let cut = -a / b;
        if b > 0.0 {
            // hypothesis 0 is the smaller term below the cut
            let k = if cut <= 0.0 { 0 } else { (cut.ceil() as usize).min(n) };
            p0 * self.below[0][k] + p1 * self.above[1][k]
        } else {
            let k = if cut < 0.0 { 0 } else { ((cut.floor() + 1.0) as usize).min(n) };
            p1 * self.below[1][k] + p0 * self.above[0][k]
        }
    }
}

fn enumerate_binary(pmf: &[Vec<Vec<f64>>], tail: &BinaryTail, depth: usize, p0: f64, p1: f64) -> f64 {
    if depth == pmf.len() {
        return tail.error(p0, p1);
    }
    let mut total = 0.0;
    for probs in &pmf[depth] {
        let (q0, q1) = (p0 * probs[0], p1 * probs[1]);
        if q0 == 0.0 && q1 == 0.0 {
            continue;
        }
        total += enumerate_binary(pmf, tail, depth + 1, q0, q1);
    }
    total
}

fn enumerate_error(pmf: &[Vec<Vec<f64>>], depth: usize, partial: &mut Vec<f64>) -> f64 {
    let m = partial.len();
    if depth == pmf.len() {
        return partial.iter().sum::<f64>() - partial.iter().copied().fold(0.0, f64::max);
    }
    let saved = partial.clone();
    let mut total = 0.0;
    for probs in &pmf[depth] {
        for i in 0..m {
            partial[i] = saved[i] * probs[i];
        }
        if partial.iter().all(|&p| p == 0.0) {
            continue;
        }
        total += enumerate_error(pmf, depth + 1, partial);
    }
    partial.copy_from_slice(&saved);
    total
}

pub fn map_decide(hyps: &HypothesisSet, schedule: &SamplingSchedule, obs: &ObservationVector) -> Result<usize> {
    if obs.len() != schedule.len() {
        return Err(Error::InvalidParameter(format!(
            "{} observations for a schedule of {} samples",
            obs.len(),
            schedule.len()
        )));
    }
    Ok(hyps.means(schedule)?.decide(obs.counts()))
}

pub fn binary_rule(hyps: &HypothesisSet, schedule: &SamplingSchedule) -> Result<BinaryDecisionRule> {
    hyps.means(schedule)?.binary_rule()
}

pub fn error_probability_exact(hyps: &HypothesisSet, schedule: &SamplingSchedule, policy: &TailPolicy) -> Result<f64> {
    hyps.means(schedule)?.error_probability_exact(policy)
}

pub fn error_probability_gaussian(hyps: &HypothesisSet, schedule: &SamplingSchedule) -> Result<f64> {
    hyps.means(schedule)?.error_probability_gaussian()
}

pub fn chernoff_exponent(hyps: &HypothesisSet, schedule: &SamplingSchedule, i1: usize, i2: usize, s: f64) -> Result<f64> {
    let means = hyps.means(schedule)?;
    means.check_pair(i1, i2)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidParameter(format!("s = {s} outside [0, 1]")));
    }
    Ok(means.chernoff_exponent(i1, i2, s))
}

pub fn optimal_chernoff_s(hyps: &HypothesisSet, schedule: &SamplingSchedule, i1: usize, i2: usize) -> Result<f64> {
    hyps.means(schedule)?.optimal_chernoff_s(i1, i2)
}

pub fn error_bound_ci(hyps: &HypothesisSet, schedule: &SamplingSchedule) -> Result<f64> {
    hyps.means(schedule)?.error_bound_ci()
}

pub fn error_bound_holder_ci(hyps: &HypothesisSet, schedule: &SamplingSchedule) -> Result<f64> {
    hyps.means(schedule)?.error_bound_holder_ci()
}

pub fn error_probability_montecarlo(
    hyps: &HypothesisSet,
    schedule: &SamplingSchedule,
    n_trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    hyps.means(schedule)?.error_probability_montecarlo(n_trials, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two(a: f64, b: f64) -> MeanMatrix {
        MeanMatrix::new(vec![vec![a], vec![b]]).unwrap()
    }

    #[test]
    fn repeated_times_match_the_full_lattice() {
        let m = MeanMatrix::new(vec![vec![3.0, 3.0, 1.5], vec![5.0, 5.0, 2.0]]).unwrap();
        let p = |y: u64, l: f64| poisson_pmf(y, l);
        let mut brute = 0.0;
        for a in 0..60u64 {
            for b in 0..60u64 {
                for c in 0..40u64 {
                    let h0 = p(a, 3.0) * p(b, 3.0) * p(c, 1.5);
                    let h1 = p(a, 5.0) * p(b, 5.0) * p(c, 2.0);
                    brute += h0.min(h1);
                }
            }
        }
        let exact = m.error_probability_exact(&TailPolicy::default()).unwrap();
        assert!((exact - 0.5 * brute).abs() < 1e-12, "{exact} vs {}", 0.5 * brute);
    }

    #[test]
    fn binary_closed_tail_matches_generic_enumeration() {
        let cases = [
            vec![vec![3.0, 7.0, 1.5], vec![5.0, 2.0, 2.0]],
            vec![vec![40.0, 12.0], vec![9.0, 12.0]],
            vec![vec![0.2], vec![30.0]],
            vec![vec![80.0, 95.0, 60.0], vec![100.0, 70.0, 61.0]],
        ];
        for rows in cases {
            let m = MeanMatrix::new(rows.clone()).unwrap();
            let fast = m.error_probability_exact(&TailPolicy::default()).unwrap();
            let pmf: Vec<Vec<Vec<f64>>> = (0..rows[0].len())
                .map(|s| (0..250u64).map(|y| vec![poisson_pmf(y, rows[0][s]), poisson_pmf(y, rows[1][s])]).collect())
                .collect();
            let slow = 0.5 * enumerate_error(&pmf, 0, &mut vec![1.0, 1.0]);
            assert!((fast - slow).abs() <= 1e-12 + 1e-9 * slow, "{rows:?}: {fast} vs {slow}");
        }
    }

    #[test]
    fn threshold_for_two_and_one() {
        let rule = two(2.0, 1.0).binary_rule().unwrap();
        assert!((rule.weights[0] - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(rule.offset, 1.0);
        assert!((rule.threshold.unwrap() - 1.0 / std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(two(2.0, 1.0).decide(&[2]), 0);
        assert_eq!(two(2.0, 1.0).decide(&[1]), 1);
    }

    #[test]
    fn threshold_at_reference_means() {
        let t = two(40.8, 8.24).binary_rule().unwrap().threshold.unwrap();
        assert!((t - 20.35).abs() < 0.01, "{t}");
    }

    #[test]
    fn swapping_labels_negates_rule() {
        let a = MeanMatrix::new(vec![vec![3.0, 5.0], vec![1.0, 7.0]]).unwrap().binary_rule().unwrap();
        let b = MeanMatrix::new(vec![vec![1.0, 7.0], vec![3.0, 5.0]]).unwrap().binary_rule().unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x + y).abs() < 1e-15);
        }
        assert_eq!(a.offset, -b.offset);
    }

    #[test]
    fn identical_rows_tie_to_first_index() {
        let m = two(4.0, 4.0);
        for y in 0..20 {
            assert_eq!(m.decide(&[y]), 0);
        }
        assert!(matches!(m.binary_rule(), Err(Error::DegenerateHypotheses(0, 1))));
        assert!((m.error_probability_exact(&TailPolicy::default()).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_mean_hypothesis_survives_only_all_zero_counts() {
        let m = MeanMatrix::new(vec![vec![0.0, 0.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!(m.decide(&[0, 0]), 0);
        assert_eq!(m.decide(&[0, 1]), 1);
        assert!(matches!(m.binary_rule(), Err(Error::ZeroMeanCount { hypothesis: 0, sample: 0 })));
    }

    #[test]
    fn exact_error_for_two_and_one() {
        let pe = two(2.0, 1.0).error_probability_exact(&TailPolicy::default()).unwrap();
        let closed = (3.0 * (-2.0f64).exp() + 1.0 - 2.0 * (-1.0f64).exp()) / 2.0;
        assert!((pe - closed).abs() < 1e-12);
        assert!((pe - 0.33512).abs() < 1e-5);
    }

    #[test]
    fn well_separated_means_rarely_err() {
        let pe = two(100.0, 0.01).error_probability_exact(&TailPolicy::default()).unwrap();
        assert!(pe < 1e-6, "{pe:e}");
    }

    #[test]
    fn enumeration_limit_is_enforced() {
        let m = MeanMatrix::new(vec![vec![1.0; 5], vec![2.0; 5]]).unwrap();
        assert!(matches!(
            m.error_probability_exact(&TailPolicy::default()),
            Err(Error::EnumerationTooLarge { samples: 5, limit: 4 })
        ));
    }

    #[test]
    fn gaussian_for_two_and_one() {
        let pe = two(2.0, 1.0).error_probability_gaussian().unwrap();
        assert!((pe - 0.3379).abs() < 5e-4, "{pe}");
    }

    #[test]
    fn single_sample_gaussian_forms_agree() {
        // interval form (used for M > 2) against the binary statistic form
        let m = two(40.8, 8.24);
        let (lo, lam0, lam1) = (m.binary_rule().unwrap().threshold.unwrap(), 40.8f64, 8.24f64);
        let interval = 0.5 * (1.0 - q_function((lo - lam0) / lam0.sqrt()) + q_function((lo - lam1) / lam1.sqrt()));
        assert!((m.error_probability_gaussian().unwrap() - interval).abs() < 1e-14);
    }

    #[test]
    fn three_hypothesis_gaussian_reduces_to_intervals_with_equal_times() {
        let one = MeanMatrix::new(vec![vec![8.0], vec![20.0], vec![35.0]]).unwrap();
        // two samples at the same time: the two statistics are perfectly correlated
        let doubled = MeanMatrix::new(vec![vec![4.0, 4.0], vec![10.0, 10.0], vec![17.5, 17.5]]).unwrap();
        let a = one.error_probability_gaussian().unwrap();
        let b = doubled.error_probability_gaussian().unwrap();
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }

    #[test]
    fn chernoff_for_two_and_one() {
        let m = two(2.0, 1.0);
        assert_eq!(m.chernoff_exponent(0, 1, 0.0), 0.0);
        assert!(m.chernoff_exponent(0, 1, 1.0).abs() < 1e-15);
        let s = m.optimal_chernoff_s(0, 1).unwrap();
        let closed = (1.0f64.ln() - std::f64::consts::LN_2.ln()) / std::f64::consts::LN_2;
        assert!((s - closed).abs() < 1e-10);
        assert!((s - 0.5288).abs() < 1e-4);
        let d = m.chernoff_exponent(0, 1, s);
        assert!((d - 0.0861).abs() < 1e-4, "{d}");
        let bound = m.error_bound_ci().unwrap();
        assert!((bound - 0.4587).abs() < 1e-4, "{bound}");
    }

    #[test]
    fn chernoff_s_tends_to_half() {
        let s = two(1.0 + 1e-4, 1.0).optimal_chernoff_s(0, 1).unwrap();
        assert!((s - 0.5).abs() < 1e-3, "{s}");
    }

    #[test]
    fn chernoff_exponent_is_symmetric() {
        let m = MeanMatrix::new(vec![vec![3.0, 0.5], vec![1.0, 7.0]]).unwrap();
        for s in [0.1, 0.37, 0.8] {
            assert!((m.chernoff_exponent(0, 1, s) - m.chernoff_exponent(1, 0, 1.0 - s)).abs() < 1e-14);
        }
    }

    #[test]
    fn holder_matches_ci_for_one_sample() {
        let m = MeanMatrix::new(vec![vec![2.0], vec![1.0], vec![5.0]]).unwrap();
        let a = m.error_bound_ci().unwrap();
        let b = m.error_bound_holder_ci().unwrap();
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }

    #[test]
    fn holder_needs_distinct_row_sums() {
        let m = MeanMatrix::new(vec![vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!(matches!(m.error_bound_holder_ci(), Err(Error::EqualRowSums(0, 1))));
    }

    #[test]
    fn closed_form_s_below_one_ratio() {
        // swapping the pair maps s to 1 − s
        let a = closed_form_s(2.0, 1.0).unwrap();
        let b = closed_form_s(1.0, 2.0).unwrap();
        assert!((a + b - 1.0).abs() < 1e-14);
    }

    #[test]
    fn montecarlo_is_seed_deterministic() {
        let m = two(2.0, 1.0);
        let a = m.error_probability_montecarlo(10_000, 5).unwrap();
        let b = m.error_probability_montecarlo(10_000, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.agrees_with(0.33512, 4.0));
    }

    #[test]
    fn hypothesis_set_validation() {
        let p = SystemParams::reference();
        assert!(HypothesisSet::along_direction(p.clone(), &[0.0]).is_err());
        assert!(matches!(HypothesisSet::along_direction(p.clone(), &[0.0, 0.0]), Err(Error::DegenerateHypotheses(0, 1))));
        let h = HypothesisSet::along_direction(p, &[0.0, 4e-4]).unwrap();
        let s = SamplingSchedule::new(vec![0.1], 0.0).unwrap();
        let mm = h.means(&s).unwrap();
        assert!((mm.row(0)[0] - 8.2378).abs() < 1e-3);
        assert!((mm.row(1)[0] - 40.802).abs() < 1e-2);
    }
}
