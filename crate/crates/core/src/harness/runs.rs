//! Figure reproductions and the single-shot detect / estimate commands.

use crate::channel::{sample_observations, FlowProfile, SamplingSchedule, SystemParams};
use crate::detect_schedule::{
    caratheodory_schedule, chernoff_time_for_pair, optimize_schedule, GridStrategy, Objective, ScheduleOptimum,
    ScheduleSearchSpec,
};
use crate::detector::{HypothesisSet, MeanMatrix, TailPolicy};
use crate::error::{Error, Result};
use crate::est_bounds::{
    bcr_bound, ecr_bound, mse_montecarlo, mse_quadrature, optimize_estimation_schedule, EstimationSearchSpec, Estimator,
};
use crate::estimator::{lmmse_estimate, map_estimate, mmse_estimate, VelocityPrior};

use super::config::ExperimentConfig;
use super::table::{content_hash, Cell, ResultTable};

/// Adds the metadata block: command, table name, seed, input hash and the full config echo.
pub fn stamp(cfg: &ExperimentConfig, command: &str, tables: &mut [ResultTable]) {
    let hashed: String = cfg
        .echo()
        .into_iter()
        .filter(|(k, _)| k != "threads" && k != "out")
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect();
    let hash = content_hash(&format!("command={command}\n{hashed}"));
    for t in tables.iter_mut() {
        let mut meta = vec![
            ("flowmeter".to_string(), command.to_string()),
            ("table".to_string(), t.name.clone()),
            ("seed".to_string(), cfg.seed.to_string()),
            ("input_sha256".to_string(), hash.clone()),
        ];
        meta.extend(cfg.echo().into_iter().map(|(k, v)| ("config".to_string(), format!("{k}={v}"))));
        t.metadata = meta;
    }
}

fn search_spec(cfg: &ExperimentConfig, objective: Objective) -> ScheduleSearchSpec {
    ScheduleSearchSpec::new(objective, cfg.release_time).window(cfg.t_lo, cfg.t_hi).resolution(cfg.resolution)
}

fn steps(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|k| lo + step * k as f64).collect()
}

fn nan_on_error(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// `[exact, gaussian, chernoff, mc, mc_se]` at fixed sampling times.
fn detection_row(means: &MeanMatrix, cfg: &ExperimentConfig) -> Result<[f64; 5]> {
    let mc = means.error_probability_montecarlo(cfg.trials as u64, cfg.seed)?;
    Ok([
        means.error_probability_exact(&TailPolicy::default())?,
        nan_on_error(means.error_probability_gaussian()),
        means.error_bound_ci()?,
        mc.estimate,
        mc.std_error,
    ])
}

fn cells(values: &[f64]) -> Vec<Cell> {
    values.iter().map(|&v| Cell::Num(v)).collect()
}

/// Error curves versus one sampling time and the three single-sample optima.
fn detection_curve(name: &str, hyps: &HypothesisSet, cfg: &ExperimentConfig) -> Result<(ResultTable, ResultTable)> {
    let mut curve = ResultTable::new(name, &["t1", "pe_exact", "pe_gauss", "pe_ci", "pe_mc", "pe_mc_se"]);
    for t in steps(cfg.t_lo, cfg.t_hi, cfg.curve_step) {
        // mirror times where two hypotheses share a mean are left blank
        let row = match detection_row(&hyps.means_at(&[t])?, cfg) {
            Err(Error::DegenerateHypotheses(..)) => [f64::NAN; 5],
            other => other?,
        };
        let mut r = vec![Cell::Num(t)];
        r.extend(cells(&row));
        curve.push(r);
    }
    let mut optima = ResultTable::new(&format!("{name}_optima"), &["objective", "t1", "value", "pe_exact", "pe_mc", "pe_mc_se"]);
    for objective in Objective::ALL {
        let opt = optimize_schedule(hyps, &search_spec(cfg, objective), 1)?;
        let row = detection_row(&hyps.means(&opt.schedule)?, cfg)?;
        optima.push(vec![
            objective.name().into(),
            opt.schedule.times()[0].into(),
            opt.value.into(),
            row[0].into(),
            row[3].into(),
            row[4].into(),
        ]);
    }
    Ok((curve, optima))
}

/// Optimum schedules of all objectives for each sweep speed and `L`,
/// returned as `(v, L, [optimum per objective])`.
fn detection_sweep(
    cfg: &ExperimentConfig,
    max_l: usize,
    speeds_for: impl Fn(f64) -> Vec<f64>,
) -> Result<Vec<(f64, usize, Vec<ScheduleOptimum>)>> {
    let mut out = Vec::new();
    for &v in &cfg.sweep_speeds {
        let hyps = HypothesisSet::along_direction(cfg.params()?, &speeds_for(v))?;
        for l in 1..=max_l {
            let opts = Objective::ALL
                .iter()
                .map(|&o| optimize_schedule(&hyps, &search_spec(cfg, o), l))
                .collect::<Result<Vec<_>>>()?;
            out.push((v, l, opts));
        }
    }
    Ok(out)
}

fn sweep_tables(
    prefix: &str,
    cfg: &ExperimentConfig,
    sweep: &[(f64, usize, Vec<ScheduleOptimum>)],
    speeds_for: impl Fn(f64) -> Vec<f64>,
) -> Result<Vec<ResultTable>> {
    let mut perf = ResultTable::new(&format!("{prefix}b"), &["v1", "L", "pe_exact", "pe_gauss", "pe_ci", "pe_mc", "pe_mc_se"]);
    let mut times1 = ResultTable::new(&format!("{prefix}c"), &["v1", "t_exact", "t_gauss", "t_ci"]);
    let mut times2 =
        ResultTable::new(&format!("{prefix}d"), &["v1", "t1_exact", "t2_exact", "t1_gauss", "t2_gauss", "t1_ci", "t2_ci"]);
    for (v, l, opts) in sweep {
        let hyps = HypothesisSet::along_direction(cfg.params()?, &speeds_for(*v))?;
        let mc = hyps.means(&opts[0].schedule)?.error_probability_montecarlo(cfg.trials as u64, cfg.seed)?;
        perf.push(vec![
            (*v).into(),
            (*l).into(),
            opts[0].value.into(),
            opts[1].value.into(),
            opts[2].value.into(),
            mc.estimate.into(),
            mc.std_error.into(),
        ]);
        match l {
            1 => {
                let mut row = vec![Cell::Num(*v)];
                row.extend(opts.iter().map(|o| Cell::Num(o.schedule.times()[0])));
                times1.push(row);
            }
            2 => {
                let mut row = vec![Cell::Num(*v)];
                for o in opts {
                    row.push(o.schedule.times()[0].into());
                    row.push(o.schedule.times()[1].into());
                }
                times2.push(row);
            }
            _ => {}
        }
    }
    let mut tables = vec![perf, times1];
    if !times2.rows.is_empty() {
        tables.push(times2);
    }
    Ok(tables)
}

/// Binary detection: error curves versus `t_1`, the three optima, error
/// versus `v_1` for `L = 1..sweep_samples`, and the optimal times versus `v_1`.
pub fn run_fig2(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    if cfg.speeds.len() != 2 {
        return Err(Error::Config("fig2 needs exactly two speeds".into()));
    }
    let hyps = HypothesisSet::along_direction(cfg.params()?, &cfg.speeds)?;
    let (curve, optima) = detection_curve("fig2a", &hyps, cfg)?;
    let base = cfg.speeds[0];
    let speeds_for = |v: f64| vec![base, v];
    let sweep = detection_sweep(cfg, cfg.sweep_samples, speeds_for)?;
    let mut tables = vec![curve, optima];
    tables.extend(sweep_tables("fig2", cfg, &sweep, speeds_for)?);
    stamp(cfg, "fig2", &mut tables);
    Ok(tables)
}

/// Multi-hypothesis detection: curves and optima for `m3_speeds`, sweeps with
/// speeds `(v_0, v_1, 2v_1)`, and the large-`L` Chernoff design for `pair_speeds`.
pub fn run_fig3(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    let params = cfg.params()?;
    let hyps = HypothesisSet::along_direction(params.clone(), &cfg.m3_speeds)?;
    let (curve, optima) = detection_curve("fig3a", &hyps, cfg)?;
    let base = cfg.m3_speeds[0];
    let speeds_for = |v: f64| vec![base, v, 2.0 * v];
    let sweep = detection_sweep(cfg, cfg.m3_sweep_samples, speeds_for)?;
    let mut tables = vec![curve, optima];
    tables.extend(sweep_tables("fig3", cfg, &sweep, speeds_for)?);

    let pairs = HypothesisSet::along_direction(params.clone(), &cfg.pair_speeds)?;
    let spec = search_spec(cfg, Objective::ChernoffCi);
    let mut pair_table = ResultTable::new("fig3e_pairs", &["i1", "i2", "t", "s", "exponent", "residual"]);
    for i1 in 0..pairs.len() {
        for i2 in i1 + 1..pairs.len() {
            let c = chernoff_time_for_pair(&pairs, i1, i2, &spec)?;
            pair_table.push(vec![i1.into(), i2.into(), c.t.into(), c.s.into(), c.exponent.into(), c.residual.into()]);
        }
    }
    let design = caratheodory_schedule(&pairs, &spec, cfg.simplex_resolution)?;
    let mut weights = ResultTable::new("fig3e_weights", &["stage", "t", "weight", "exponent"]);
    for (stage, w) in [("seeded", &design.seeded), ("refined", &design.refined)] {
        for (t, x) in w.times.iter().zip(w.weights.weights()) {
            weights.push(vec![stage.into(), (*t).into(), (*x).into(), w.exponent.into()]);
        }
    }
    let large = cfg.large_samples;
    let designed = design.seeded.to_schedule(large, params.release_time())?;
    let direct = optimize_schedule(&pairs, &spec.strategy(GridStrategy::Diagonal), large)?;
    let mut big = ResultTable::new("fig3f_large_l", &["method", "L", "t_min", "t_max", "pe_ci"]);
    for (method, schedule) in [("weighted", &designed), ("direct", &direct.schedule)] {
        let t = schedule.times();
        big.push(vec![
            method.into(),
            large.into(),
            t[0].into(),
            t[t.len() - 1].into(),
            pairs.means(schedule)?.error_bound_ci()?.into(),
        ]);
    }
    tables.extend([pair_table, weights, big]);
    stamp(cfg, "fig3", &mut tables);
    Ok(tables)
}

fn estimation_spec(cfg: &ExperimentConfig, scale: f64) -> EstimationSearchSpec {
    let mut spec = EstimationSearchSpec::new(cfg.est_t_lo * scale, cfg.est_t_hi * scale)
        .resolution(cfg.est_resolution * scale)
        .trials(cfg.trials)
        .seed(cfg.seed);
    spec.tolerance *= scale;
    spec
}

/// Normalized MSE versus `t_1` for the three estimators (Monte Carlo and
/// quadrature side by side) with the ECR bound, their optima, and the optima
/// versus `v_max`. Each sweep window is the base window scaled by
/// `prior_max / v_max`.
pub fn run_fig4(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    let params = cfg.params()?;
    let prior = cfg.prior()?;
    let mean2 = prior.mean(&params).norm_squared();
    let mut cols = vec!["t1".to_string()];
    for e in Estimator::ALL {
        for suffix in ["mc", "mc_se", "quad"] {
            cols.push(format!("{}_{suffix}", e.name()));
        }
    }
    cols.push("ecr".into());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut curve = ResultTable::new("fig4a", &col_refs);
    for t in steps(cfg.est_t_lo, cfg.est_t_hi, cfg.est_curve_step) {
        let schedule = SamplingSchedule::new(vec![t], params.release_time())?;
        let mut row = vec![Cell::Num(t)];
        for e in Estimator::ALL {
            let m = mse_montecarlo(&params, &prior, &schedule, e, cfg.trials, cfg.seed)?;
            row.push(m.normalized.into());
            row.push(m.normalized_std_error.into());
            row.push((mse_quadrature(&params, &prior, t, e)? / mean2).into());
        }
        row.push(match ecr_bound(&params, &prior, t) {
            Ok(b) => b.normalized.into(),
            Err(Error::SingularityInRange { .. }) => f64::NAN.into(),
            Err(e) => return Err(e),
        });
        curve.push(row);
    }
    let mut optima = ResultTable::new("fig4a_optima", &["estimator", "t1", "normalized_mc", "normalized_mc_se", "normalized_quad"]);
    for e in Estimator::ALL {
        let opt = optimize_estimation_schedule(&params, &prior, 1, e, &estimation_spec(cfg, 1.0))?;
        let t = opt.schedule.times()[0];
        optima.push(vec![
            e.name().into(),
            t.into(),
            opt.mse.normalized.into(),
            opt.mse.normalized_std_error.into(),
            (mse_quadrature(&params, &prior, t, e)? / mean2).into(),
        ]);
    }
    let mut sweep = ResultTable::new("fig4b", &["v_max", "t_map", "t_mmse", "t_lmmse"]);
    for &v_max in &cfg.sweep_vmax {
        let p = VelocityPrior::uniform_along(cfg.prior_min, v_max)?;
        let scale = cfg.prior_max / v_max;
        let mut row = vec![Cell::Num(v_max)];
        for e in Estimator::ALL {
            let opt = optimize_estimation_schedule(&params, &p, 1, e, &estimation_spec(cfg, scale))?;
            row.push(opt.schedule.times()[0].into());
        }
        sweep.push(row);
    }
    let mut tables = vec![curve, optima, sweep];
    stamp(cfg, "fig4", &mut tables);
    Ok(tables)
}

fn flow_for(params: &SystemParams, speed: f64) -> FlowProfile {
    FlowProfile::along(params.direction(), speed)
}

/// Detection at a fixed or optimized schedule: per-objective optima, error
/// probabilities and, when counts are given or a true speed is set, the decision.
pub fn detect(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    let params = cfg.params()?;
    let hyps = HypothesisSet::along_direction(params.clone(), &cfg.speeds)?;
    let mut tables = Vec::new();
    let schedule = if cfg.times.is_empty() {
        let l = cfg.samples;
        let mut cols = vec!["objective".to_string(), "value".to_string()];
        cols.extend((1..=l).map(|k| format!("t{k}")));
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut opt_table = ResultTable::new("detect_schedule", &col_refs);
        let mut chosen = None;
        for objective in Objective::ALL {
            let opt = optimize_schedule(&hyps, &search_spec(cfg, objective), l)?;
            let mut row = vec![Cell::from(objective.name()), opt.value.into()];
            row.extend(cells(opt.schedule.times()));
            opt_table.push(row);
            chosen.get_or_insert(opt.schedule);
        }
        tables.push(opt_table);
        chosen.expect("three objectives")
    } else {
        SamplingSchedule::new(cfg.times.clone(), cfg.release_time)?
    };
    let means = hyps.means(&schedule)?;
    let row = detection_row(&means, cfg)?;
    let mut perf = ResultTable::new("detect_performance", &["L", "pe_exact", "pe_gauss", "pe_ci", "pe_holder_ci", "pe_mc", "pe_mc_se"]);
    perf.push(vec![
        schedule.len().into(),
        row[0].into(),
        row[1].into(),
        row[2].into(),
        nan_on_error(means.error_bound_holder_ci()).into(),
        row[3].into(),
        row[4].into(),
    ]);
    tables.push(perf);

    let counts = if !cfg.observations.is_empty() {
        Some(cfg.observations.clone())
    } else {
        match cfg.true_speed {
            Some(v) => Some(sample_observations(&params, &flow_for(&params, v), &schedule, cfg.seed)?.0),
            None => None,
        }
    };
    if let Some(y) = counts {
        let mut decision = ResultTable::new("detect_decision", &["hypothesis", "speed", "log_likelihood", "decided"]);
        let decided = means.decide(&y);
        let yf: Vec<f64> = y.iter().map(|&c| c as f64).collect();
        for (i, &v) in cfg.speeds.iter().enumerate() {
            decision.push(vec![i.into(), v.into(), means.log_likelihood(i, &yf).into(), usize::from(i == decided).into()]);
        }
        tables.push(decision);
    }
    stamp(cfg, "detect", &mut tables);
    Ok(tables)
}

fn estimator_named(name: &str) -> Estimator {
    match name {
        "map" => Estimator::Map,
        "lmmse" => Estimator::Lmmse,
        _ => Estimator::Mmse,
    }
}

/// Estimation at a fixed or optimized schedule: the three estimates for the
/// given (or simulated) counts, their Monte Carlo MSE and the lower bounds.
pub fn estimate(cfg: &ExperimentConfig) -> Result<Vec<ResultTable>> {
    let params = cfg.params()?;
    let prior = cfg.prior()?;
    let mut tables = Vec::new();
    let schedule = if cfg.times.is_empty() {
        let est = estimator_named(&cfg.estimator);
        let opt = optimize_estimation_schedule(&params, &prior, cfg.samples, est, &estimation_spec(cfg, 1.0))?;
        let mut cols = vec!["estimator".to_string(), "normalized_mc".to_string(), "normalized_mc_se".to_string()];
        cols.extend((1..=cfg.samples).map(|k| format!("t{k}")));
        let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
        let mut t = ResultTable::new("estimate_schedule", &col_refs);
        let mut row = vec![Cell::from(est.name()), opt.mse.normalized.into(), opt.mse.normalized_std_error.into()];
        row.extend(cells(opt.schedule.times()));
        t.push(row);
        tables.push(t);
        opt.schedule
    } else {
        SamplingSchedule::new(cfg.times.clone(), cfg.release_time)?
    };
    let truth = cfg.true_speed.unwrap_or(0.5 * (cfg.prior_min + cfg.prior_max));
    let counts = if cfg.observations.is_empty() {
        sample_observations(&params, &flow_for(&params, truth), &schedule, cfg.seed)?.0
    } else {
        cfg.observations.clone()
    };
    let y: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    let mut est = ResultTable::new("estimate", &["estimator", "speed", "vx", "vy", "vz"]);
    let d = *params.direction();
    for (name, v) in [
        ("map", map_estimate(&params, &prior, &schedule, &y, cfg.seed)?.estimate),
        ("mmse", mmse_estimate(&params, &prior, &schedule, &y)?),
        ("lmmse", lmmse_estimate(&params, &prior, &schedule, &y)?),
    ] {
        est.push(vec![name.into(), v.dot(&d).into(), v.x.into(), v.y.into(), v.z.into()]);
    }
    tables.push(est);

    let mean2 = prior.mean(&params).norm_squared();
    let mut perf = ResultTable::new("estimate_mse", &["method", "mse", "mse_se", "normalized", "quadrature", "valid"]);
    for e in Estimator::ALL {
        let m = mse_montecarlo(&params, &prior, &schedule, e, cfg.trials, cfg.seed)?;
        let quad = if schedule.len() == 1 { mse_quadrature(&params, &prior, schedule.times()[0], e)? } else { f64::NAN };
        perf.push(vec![e.name().into(), m.mse.into(), m.std_error.into(), m.normalized.into(), quad.into(), 1usize.into()]);
    }
    if schedule.len() == 1 && cfg.prior_max > cfg.prior_min {
        match ecr_bound(&params, &prior, schedule.times()[0]) {
            Ok(b) => perf.push(vec!["ecr".into(), b.value.into(), 0.0.into(), b.normalized.into(), f64::NAN.into(), 1usize.into()]),
            Err(Error::SingularityInRange { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    if cfg.prior_max > cfg.prior_min {
        let b = bcr_bound(&params, &prior, &schedule)?;
        perf.push(vec![
            "bcr".into(),
            b.value.into(),
            0.0.into(),
            (b.value / mean2).into(),
            f64::NAN.into(),
            usize::from(b.regular).into(),
        ]);
    }
    tables.push(perf);
    stamp(cfg, "estimate", &mut tables);
    Ok(tables)
}
