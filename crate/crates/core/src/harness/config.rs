//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::channel::{SystemParams, Vec3};
use crate::error::{Error, Result};
use crate::estimator::VelocityPrior;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Detect,
    Estimate,
}

/// Every experiment knob. Defaults are the reference system of the flow
/// meter (D = 1e-8 m²/s, ζ = 1e4, r₀ = 100 µm, r_R = 15 µm, t_r = 0).
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub diffusion: f64,
    pub burst_size: f64,
    pub distance: f64,
    pub receiver_radius: f64,
    pub release_time: f64,
    pub direction: [f64; 3],
    pub mode: Option<Mode>,
    /// Hypothesis speeds along the receiver direction (detection).
    pub speeds: Vec<f64>,
    pub prior_min: f64,
    pub prior_max: f64,
    /// Fixed schedule; empty means "search".
    pub times: Vec<f64>,
    pub samples: usize,
    pub observations: Vec<u64>,
    pub true_speed: Option<f64>,
    pub estimator: String,
    pub t_lo: f64,
    pub t_hi: f64,
    pub resolution: f64,
    pub curve_step: f64,
    pub est_t_lo: f64,
    pub est_t_hi: f64,
    pub est_resolution: f64,
    pub est_curve_step: f64,
    pub trials: usize,
    pub seed: u64,
    pub threads: usize,
    pub out: PathBuf,
    pub sweep_speeds: Vec<f64>,
    pub sweep_samples: usize,
    pub m3_speeds: Vec<f64>,
    pub m3_sweep_samples: usize,
    pub pair_speeds: Vec<f64>,
    pub large_samples: usize,
    pub simplex_resolution: usize,
    pub sweep_vmax: Vec<f64>,
    pub particles: u64,
}

/// Accepted keys, in echo order.
pub const KEYS: [&str; 36] = [
    "diffusion",
    "burst_size",
    "distance",
    "receiver_radius",
    "release_time",
    "direction",
    "mode",
    "speeds",
    "prior_min",
    "prior_max",
    "times",
    "samples",
    "observations",
    "true_speed",
    "estimator",
    "t_lo",
    "t_hi",
    "resolution",
    "curve_step",
    "est_t_lo",
    "est_t_hi",
    "est_resolution",
    "est_curve_step",
    "trials",
    "seed",
    "threads",
    "out",
    "sweep_speeds",
    "sweep_samples",
    "m3_speeds",
    "m3_sweep_samples",
    "pair_speeds",
    "large_samples",
    "simplex_resolution",
    "sweep_vmax",
    "particles",
];

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            diffusion: 1e-8,
            burst_size: 1e4,
            distance: 1e-4,
            receiver_radius: 1.5e-5,
            release_time: 0.0,
            direction: [1.0, 0.0, 0.0],
            mode: None,
            speeds: vec![0.0, 4e-4],
            prior_min: 0.0,
            prior_max: 1e-3,
            times: Vec::new(),
            samples: 1,
            observations: Vec::new(),
            true_speed: None,
            estimator: "mmse".into(),
            t_lo: 0.02,
            t_hi: 0.3,
            resolution: 5e-4,
            curve_step: 2e-3,
            est_t_lo: 0.04,
            est_t_hi: 0.14,
            est_resolution: 1e-3,
            est_curve_step: 2e-3,
            trials: 200_000,
            seed: 1,
            threads: 0,
            out: PathBuf::from("out"),
            sweep_speeds: (1..=10).map(|k| k as f64 * 1e-4).collect(),
            sweep_samples: 3,
            m3_speeds: vec![0.0, 4e-4, 8e-4],
            m3_sweep_samples: 2,
            pair_speeds: vec![0.0, 1e-4, 2e-4],
            large_samples: 50,
            simplex_resolution: 20,
            sweep_vmax: vec![5e-4, 1e-3, 1.5e-3, 2e-3],
            particles: 1_000_000,
        }
    }
}

fn number(key: &str, value: &str) -> Result<f64> {
    let x: f64 = value.trim().parse().map_err(|_| Error::Config(format!("{key}: '{value}' is not a number")))?;
    if !x.is_finite() {
        return Err(Error::Config(format!("{key}: '{value}' is not finite")));
    }
    Ok(x)
}

fn integer<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("{key}: '{value}' is not a nonnegative integer")))
}

fn list<T>(key: &str, value: &str, parse: impl Fn(&str, &str) -> Result<T>) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v)).collect()
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parses `key = value` lines; `#` starts a comment, blank lines are
    /// skipped, unknown or repeated keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if seen.insert(key.to_string(), ()).is_some() {
                return Err(Error::Config(format!("line {}: key '{key}' repeated", n + 1)));
            }
            cfg.set(key, value.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "diffusion" => self.diffusion = number(key, value)?,
            "burst_size" => self.burst_size = number(key, value)?,
            "distance" => self.distance = number(key, value)?,
            "receiver_radius" => self.receiver_radius = number(key, value)?,
            "release_time" => self.release_time = number(key, value)?,
            "direction" => {
                let v = list(key, value, number)?;
                self.direction = v.try_into().map_err(|_| Error::Config("direction: need three components".into()))?;
            }
            "mode" => {
                self.mode = match value {
                    "" => None,
                    "detect" => Some(Mode::Detect),
                    "estimate" => Some(Mode::Estimate),
                    other => return Err(Error::Config(format!("mode: '{other}' is not detect or estimate"))),
                }
            }
            "speeds" => self.speeds = list(key, value, number)?,
            "prior_min" => self.prior_min = number(key, value)?,
            "prior_max" => self.prior_max = number(key, value)?,
            "times" => self.times = list(key, value, number)?,
            "samples" => self.samples = integer(key, value)?,
            "observations" => self.observations = list(key, value, integer)?,
            "true_speed" => self.true_speed = if value.is_empty() { None } else { Some(number(key, value)?) },
            "estimator" => {
                if !["map", "mmse", "lmmse"].contains(&value) {
                    return Err(Error::Config(format!("estimator: '{value}' is not map, mmse or lmmse")));
                }
                self.estimator = value.to_string();
            }
            "t_lo" => self.t_lo = number(key, value)?,
            "t_hi" => self.t_hi = number(key, value)?,
            "resolution" => self.resolution = number(key, value)?,
            "curve_step" => self.curve_step = number(key, value)?,
            "est_t_lo" => self.est_t_lo = number(key, value)?,
            "est_t_hi" => self.est_t_hi = number(key, value)?,
            "est_resolution" => self.est_resolution = number(key, value)?,
            "est_curve_step" => self.est_curve_step = number(key, value)?,
            "trials" => self.trials = integer(key, value)?,
            "seed" => self.seed = integer(key, value)?,
            "threads" => self.threads = integer(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "sweep_speeds" => self.sweep_speeds = list(key, value, number)?,
            "sweep_samples" => self.sweep_samples = integer(key, value)?,
            "m3_speeds" => self.m3_speeds = list(key, value, number)?,
            "m3_sweep_samples" => self.m3_sweep_samples = integer(key, value)?,
            "pair_speeds" => self.pair_speeds = list(key, value, number)?,
            "large_samples" => self.large_samples = integer(key, value)?,
            "simplex_resolution" => self.simplex_resolution = integer(key, value)?,
            "sweep_vmax" => self.sweep_vmax = list(key, value, number)?,
            "particles" => self.particles = integer(key, value)?,
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    /// Checks cross-key constraints and that the system parameters are physical.
    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.prior()?;
        let positive = [
            ("resolution", self.resolution),
            ("curve_step", self.curve_step),
            ("est_resolution", self.est_resolution),
            ("est_curve_step", self.est_curve_step),
        ];
        for (k, v) in positive {
            if !(v > 0.0) {
                return Err(Error::Config(format!("{k} must be positive")));
            }
        }
        for (k, lo, hi) in [("t_lo/t_hi", self.t_lo, self.t_hi), ("est_t_lo/est_t_hi", self.est_t_lo, self.est_t_hi)] {
            if !(lo > self.release_time && hi > lo) {
                return Err(Error::Config(format!("{k}: need release_time < lo < hi")));
            }
        }
        if self.samples == 0 || self.sweep_samples == 0 || self.m3_sweep_samples == 0 || self.large_samples == 0 {
            return Err(Error::Config("sample counts must be at least 1".into()));
        }
        if self.trials == 0 || self.particles == 0 {
            return Err(Error::Config("trials and particles must be at least 1".into()));
        }
        if self.speeds.len() < 2 {
            return Err(Error::Config("speeds: need at least two hypotheses".into()));
        }
        if self.pair_speeds.len() < 2 || self.m3_speeds.len() < 2 {
            return Err(Error::Config("pair_speeds and m3_speeds need at least two entries".into()));
        }
        if self.times.iter().any(|&t| t <= self.release_time) {
            return Err(Error::Config("times must be after release_time".into()));
        }
        if !self.times.is_empty() && !self.observations.is_empty() && self.times.len() != self.observations.len() {
            return Err(Error::Config("observations and times must have equal length".into()));
        }
        if self.times.is_empty() && !self.observations.is_empty() && self.observations.len() != self.samples {
            return Err(Error::Config("observations must have `samples` entries".into()));
        }
        if self.sweep_vmax.iter().any(|&v| !(v > self.prior_min)) {
            return Err(Error::Config("sweep_vmax entries must exceed prior_min".into()));
        }
        Ok(())
    }

    pub fn params(&self) -> Result<SystemParams> {
        let [x, y, z] = self.direction;
        SystemParams::new(self.diffusion, self.burst_size, self.distance, Vec3::new(x, y, z), self.receiver_radius, self.release_time)
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn prior(&self) -> Result<VelocityPrior> {
        VelocityPrior::uniform_along(self.prior_min, self.prior_max).map_err(|e| Error::Config(e.to_string()))
    }

    /// Every key with its effective value, in canonical order.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mode = match self.mode {
            None => "",
            Some(Mode::Detect) => "detect",
            Some(Mode::Estimate) => "estimate",
        };
        let pairs: Vec<(&str, String)> = vec![
            ("diffusion", self.diffusion.to_string()),
            ("burst_size", self.burst_size.to_string()),
            ("distance", self.distance.to_string()),
            ("receiver_radius", self.receiver_radius.to_string()),
            ("release_time", self.release_time.to_string()),
            ("direction", join(&self.direction)),
            ("mode", mode.to_string()),
            ("speeds", join(&self.speeds)),
            ("prior_min", self.prior_min.to_string()),
            ("prior_max", self.prior_max.to_string()),
            ("times", join(&self.times)),
            ("samples", self.samples.to_string()),
            ("observations", join(&self.observations)),
            ("true_speed", self.true_speed.map(|v| v.to_string()).unwrap_or_default()),
            ("estimator", self.estimator.clone()),
            ("t_lo", self.t_lo.to_string()),
            ("t_hi", self.t_hi.to_string()),
            ("resolution", self.resolution.to_string()),
            ("curve_step", self.curve_step.to_string()),
            ("est_t_lo", self.est_t_lo.to_string()),
            ("est_t_hi", self.est_t_hi.to_string()),
            ("est_resolution", self.est_resolution.to_string()),
            ("est_curve_step", self.est_curve_step.to_string()),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("threads", self.threads.to_string()),
            ("out", self.out.display().to_string()),
            ("sweep_speeds", join(&self.sweep_speeds)),
            ("sweep_samples", self.sweep_samples.to_string()),
            ("m3_speeds", join(&self.m3_speeds)),
            ("m3_sweep_samples", self.m3_sweep_samples.to_string()),
            ("pair_speeds", join(&self.pair_speeds)),
            ("large_samples", self.large_samples.to_string()),
            ("simplex_resolution", self.simplex_resolution.to_string()),
            ("sweep_vmax", join(&self.sweep_vmax)),
            ("particles", self.particles.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// The echo as a config file; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        self.echo().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_reference_parameters() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.params().unwrap(), SystemParams::reference());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(ExperimentConfig::parse("difusion = 1e-8"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("seed = 1\nseed = 2"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("seed"), Err(Error::Config(_))));
    }

    #[test]
    fn echo_covers_every_key() {
        let keys: Vec<String> = ExperimentConfig::default().echo().into_iter().map(|p| p.0).collect();
        assert_eq!(keys, KEYS);
    }

    #[test]
    fn comments_and_lists() {
        let cfg = ExperimentConfig::parse("# system\nspeeds = 0, 1e-4 ,2e-4 # three\n\ntimes=0.1,0.12\nobservations=3,4\n").unwrap();
        assert_eq!(cfg.speeds, vec![0.0, 1e-4, 2e-4]);
        assert_eq!(cfg.times, vec![0.1, 0.12]);
        assert_eq!(cfg.observations, vec![3, 4]);
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = ExperimentConfig::parse("true_speed = 3e-4\nmode = estimate\ntimes = 0.07").unwrap();
        cfg.seed = 99;
        let back = ExperimentConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in ["diffusion = -1", "t_lo = 0.3\nt_hi = 0.2", "speeds = 0", "estimator = ml", "samples = 0", "times = 0.1\nobservations = 1,2"] {
            assert!(matches!(ExperimentConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }
}
