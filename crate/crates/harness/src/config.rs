//! Flat `key = value` experiment configuration.
//!
//! Keys are dotted (`sensor.frame.readout_sigma`); `#` starts a comment;
//! lists are comma separated. A `[section]` line prefixes the keys that
//! follow it with `section.`. See the README for every key.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use phasetie::retrieval::{Regularization, DEFAULT_CANDIDATES};
use phasetie::sensor::{EvsConfig, FrameSensorConfig, Quantization};
use phasetie::zernike::{presets, DEFAULT_MAX_INDEX, MAX_SUPPORTED_INDEX};
use phasetie::{SolveConfig, ZernikeWeights64};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Tie,
    Tee,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tie => "tie",
            Method::Tee => "tee",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MethodSet {
    Tie,
    Tee,
    Both,
}

impl MethodSet {
    pub fn methods(self) -> &'static [Method] {
        match self {
            MethodSet::Tie => &[Method::Tie],
            MethodSet::Tee => &[Method::Tee],
            MethodSet::Both => &[Method::Tie, Method::Tee],
        }
    }
}

impl FromStr for MethodSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tie" => Ok(MethodSet::Tie),
            "tee" => Ok(MethodSet::Tee),
            "both" => Ok(MethodSet::Both),
            other => Err(format!("expected tie, tee or both, got {other:?}")),
        }
    }
}

/// Phase to synthesize: a named preset or explicit OSA weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Preset(String),
    Weights(ZernikeWeights64),
}

impl Target {
    pub fn label(&self) -> String {
        match self {
            Target::Preset(name) => name.clone(),
            Target::Weights(_) => "custom".into(),
        }
    }

    pub fn weights(&self) -> Result<ZernikeWeights64> {
        match self {
            Target::Preset(name) => preset(name),
            Target::Weights(w) => Ok(w.clone()),
        }
    }
}

pub fn preset(name: &str) -> Result<ZernikeWeights64> {
    presets::by_name(name).ok_or_else(|| {
        let known: Vec<_> = presets::names().collect();
        HarnessError::config(
            "target",
            format!("unknown preset {name:?} (known: {})", known.join(", ")),
        )
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventsConfig {
    pub path: Option<PathBuf>,
    pub t_start: f64,
    pub t_end: f64,
    /// Translation time `2T`, seconds.
    pub duration: f64,
    /// Axial samples used when generating a stepwise stream.
    pub samples: usize,
    /// Preset to score a retrieval from recorded events against.
    pub reference: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub target: Target,
    pub wavelength: f64,
    pub pupil_diameter: f64,
    pub resolution: (usize, usize),
    pub pitch: f64,
    pub two_delta: f64,
    /// Focus-plane intensity for single runs.
    pub intensity: f64,
    pub seed: u64,
    pub intensity_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub sweep_phases: Vec<String>,
    pub two_delta_grid: Vec<f64>,
    pub delta_sweep_intensity: f64,
    pub frame: FrameSensorConfig<f64>,
    pub evs: EvsConfig<f64>,
    pub noise_free: bool,
    pub pinned_c: Option<f64>,
    pub auto_c: bool,
    pub c_grid: Vec<f64>,
    pub method: MethodSet,
    pub max_index: usize,
    pub events: EventsConfig,
    pub output_dir: PathBuf,
    pub previews: bool,
}

/// `count` points spaced evenly in log between `lo` and `hi`, inclusive.
pub fn log_space(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let resolution = (539, 539);
        let pitch = 6.4e-6;
        Self {
            target: Target::Preset("phase0".into()),
            wavelength: 635e-9,
            pupil_diameter: 3.2e-3,
            resolution,
            pitch,
            two_delta: 0.04,
            intensity: 2.0,
            seed: 0,
            intensity_levels: log_space(0.1, 100.0, 20),
            seeds: (0..10).collect(),
            sweep_phases: presets::BENCHMARK
                .iter()
                .map(|(n, _)| n.to_string())
                .collect(),
            two_delta_grid: vec![0.004, 0.01, 0.025, 0.04, 0.07, 0.1],
            delta_sweep_intensity: 2.0,
            frame: FrameSensorConfig {
                resolution,
                pitch,
                ..FrameSensorConfig::default()
            },
            evs: EvsConfig {
                resolution,
                pitch,
                ..EvsConfig::default()
            },
            noise_free: false,
            pinned_c: None,
            auto_c: true,
            c_grid: DEFAULT_CANDIDATES.to_vec(),
            method: MethodSet::Both,
            max_index: DEFAULT_MAX_INDEX,
            events: EventsConfig {
                path: None,
                t_start: 0.0,
                t_end: f64::INFINITY,
                duration: 1.0,
                samples: 33,
                reference: None,
            },
            output_dir: PathBuf::from("out"),
            previews: true,
        }
    }
}

fn parse<V: FromStr>(key: &str, value: &str) -> Result<V>
where
    V::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| HarnessError::config(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_list<V: FromStr>(key: &str, value: &str) -> Result<Vec<V>>
where
    V::Err: std::fmt::Display,
{
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        other => Err(HarnessError::config(
            key,
            format!("expected a boolean, got {other:?}"),
        )),
    }
}

impl ExperimentConfig {
    /// Defaults overridden by the file at `path`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section = String::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                HarnessError::config(
                    format!("line {}", k + 1),
                    format!("expected key = value, got {line:?}"),
                )
            })?;
            let key = key.trim();
            let key = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            self.set(&key, value.trim())?;
        }
        self.validate()
    }

    /// Sets one key. Resolution and pitch apply to both sensors.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if let Some(index) = key.strip_prefix("zernike.i.") {
            let index: usize = parse(key, index)?;
            let weight: f64 = parse(key, value)?;
            let mut weights = match &self.target {
                Target::Weights(w) => w.clone(),
                Target::Preset(_) => ZernikeWeights64::new(MAX_SUPPORTED_INDEX)?,
            };
            weights
                .set(index, weight)
                .map_err(|e| HarnessError::config(key, e.to_string()))?;
            self.target = Target::Weights(weights);
            return Ok(());
        }
        match key {
            "target" => self.target = Target::Preset(value.to_string()),
            "optics.wavelength" => self.wavelength = parse(key, value)?,
            "optics.pupil_diameter" => self.pupil_diameter = parse(key, value)?,
            "optics.two_delta" => self.two_delta = parse(key, value)?,
            "grid.rows" => self.set_resolution((parse(key, value)?, self.resolution.1)),
            "grid.cols" => self.set_resolution((self.resolution.0, parse(key, value)?)),
            "grid.pitch" => {
                self.pitch = parse(key, value)?;
                self.frame.pitch = self.pitch;
                self.evs.pitch = self.pitch;
            }
            "run.intensity" => self.intensity = parse(key, value)?,
            "run.seed" => self.seed = parse(key, value)?,
            "run.method" => {
                self.method = value
                    .parse()
                    .map_err(|e: String| HarnessError::config(key, e))?
            }
            "run.noise_free" => self.noise_free = parse_bool(key, value)?,
            "sweep.intensity_levels" => self.intensity_levels = parse_list(key, value)?,
            "sweep.seeds" => self.seeds = parse_list(key, value)?,
            "sweep.phases" => {
                self.sweep_phases = value
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .filter(|s| !s.is_empty())
                    .collect()
            }
            "sweep.two_delta" => self.two_delta_grid = parse_list(key, value)?,
            "sweep.delta_intensity" => self.delta_sweep_intensity = parse(key, value)?,
            "sensor.frame.readout_sigma" => self.frame.readout_sigma = parse(key, value)?,
            "sensor.frame.quant_step" => self.frame.quant_step = parse(key, value)?,
            "sensor.frame.quant_mode" => {
                self.frame.quant_mode = match value.to_ascii_lowercase().as_str() {
                    "nearest" => Quantization::Nearest,
                    "floor" => Quantization::Floor,
                    other => {
                        return Err(HarnessError::config(
                            key,
                            format!("expected nearest or floor, got {other:?}"),
                        ))
                    }
                }
            }
            "sensor.frame.min_measurable" => self.frame.min_measurable = parse(key, value)?,
            "sensor.frame.max_measurable" => self.frame.max_measurable = parse(key, value)?,
            "sensor.frame.poisson" => self.frame.enable_poisson = parse_bool(key, value)?,
            "sensor.evs.mu" => self.evs.mu = parse(key, value)?,
            "sensor.evs.mu_sigma" => self.evs.mu_sigma = parse(key, value)?,
            "sensor.evs.min_measurable" => self.evs.min_measurable = parse(key, value)?,
            "sensor.evs.poisson" => self.evs.enable_poisson = parse_bool(key, value)?,
            "solve.C" => self.pinned_c = Some(parse(key, value)?),
            "solve.C_grid" => self.c_grid = parse_list(key, value)?,
            "solve.auto_C" => self.auto_c = parse_bool(key, value)?,
            "zernike.max_index" => self.max_index = parse(key, value)?,
            "events.path" => self.events.path = Some(PathBuf::from(value)),
            "events.t_start" => self.events.t_start = parse(key, value)?,
            "events.t_end" => self.events.t_end = parse(key, value)?,
            "events.duration" => self.events.duration = parse(key, value)?,
            "events.samples" => self.events.samples = parse(key, value)?,
            "events.reference" => self.events.reference = Some(value.to_string()),
            "output.dir" => self.output_dir = PathBuf::from(value),
            "output.previews" => self.previews = parse_bool(key, value)?,
            _ => return Err(HarnessError::config(key, "unknown key")),
        }
        Ok(())
    }

    pub fn set_resolution(&mut self, resolution: (usize, usize)) {
        self.resolution = resolution;
        self.frame.resolution = resolution;
        self.evs.resolution = resolution;
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(HarnessError::config(
                    key,
                    format!("{v} is not a positive number"),
                ))
            }
        };
        positive("optics.wavelength", self.wavelength)?;
        positive("optics.pupil_diameter", self.pupil_diameter)?;
        positive("optics.two_delta", self.two_delta)?;
        positive("grid.pitch", self.pitch)?;
        positive("run.intensity", self.intensity)?;
        positive("sweep.delta_intensity", self.delta_sweep_intensity)?;
        positive("events.duration", self.events.duration)?;
        if self.resolution.0 == 0 || self.resolution.1 == 0 {
            return Err(HarnessError::config(
                "grid.rows",
                "resolution must be non-empty",
            ));
        }
        if self.frame.resolution != self.resolution || self.evs.resolution != self.resolution {
            return Err(HarnessError::config(
                "grid.rows",
                "sensor resolution differs from the grid",
            ));
        }
        for (key, empty) in [
            ("sweep.intensity_levels", self.intensity_levels.is_empty()),
            ("sweep.seeds", self.seeds.is_empty()),
            ("sweep.phases", self.sweep_phases.is_empty()),
            ("sweep.two_delta", self.two_delta_grid.is_empty()),
        ] {
            if empty {
                return Err(HarnessError::config(key, "list is empty"));
            }
        }
        for v in &self.intensity_levels {
            positive("sweep.intensity_levels", *v)?;
        }
        for v in &self.two_delta_grid {
            positive("sweep.two_delta", *v)?;
        }
        for v in &self.c_grid {
            positive("solve.C_grid", *v)?;
        }
        if let Some(c) = self.pinned_c {
            if !(c >= 0.0) {
                return Err(HarnessError::config("solve.C", format!("{c} is negative")));
            }
        }
        if self.auto_c && self.c_grid.is_empty() {
            return Err(HarnessError::config("solve.C_grid", "empty candidate grid"));
        }
        if self.max_index > MAX_SUPPORTED_INDEX {
            return Err(HarnessError::config(
                "zernike.max_index",
                format!("{} exceeds {MAX_SUPPORTED_INDEX}", self.max_index),
            ));
        }
        if self.events.samples < 2 {
            return Err(HarnessError::config(
                "events.samples",
                "need at least 2 samples",
            ));
        }
        if !(self.events.t_start < self.events.t_end) {
            return Err(HarnessError::config(
                "events.t_end",
                "window must satisfy t_start < t_end",
            ));
        }
        positive("sensor.frame.quant_step", self.frame.quant_step)?;
        positive("sensor.frame.min_measurable", self.frame.min_measurable)?;
        positive("sensor.frame.max_measurable", self.frame.max_measurable)?;
        positive("sensor.evs.mu", self.evs.mu)?;
        positive("sensor.evs.min_measurable", self.evs.min_measurable)?;
        if !(self.frame.readout_sigma >= 0.0) {
            return Err(HarnessError::config(
                "sensor.frame.readout_sigma",
                "must not be negative",
            ));
        }
        if !(self.evs.mu_sigma >= 0.0) {
            return Err(HarnessError::config(
                "sensor.evs.mu_sigma",
                "must not be negative",
            ));
        }
        self.frame
            .validate()
            .map_err(|e| HarnessError::config("sensor.frame", e.to_string()))?;
        self.evs
            .validate()
            .map_err(|e| HarnessError::config("sensor.evs", e.to_string()))?;
        for name in &self.sweep_phases {
            preset(name).map_err(|_| {
                HarnessError::config("sweep.phases", format!("unknown preset {name:?}"))
            })?;
        }
        self.target.weights()?;
        Ok(())
    }

    /// Sensor models actually used: stochastic stages off in noise-free mode.
    pub fn sensors(&self) -> (FrameSensorConfig<f64>, EvsConfig<f64>) {
        if self.noise_free {
            (
                self.frame.clone().noise_free(),
                self.evs.clone().noise_free(),
            )
        } else {
            (self.frame.clone(), self.evs.clone())
        }
    }

    /// Solver settings: a pinned `solve.C` wins; otherwise automatic
    /// selection over `solve.C_grid` when `solve.auto_C` is set.
    pub fn solve_config(&self) -> Result<SolveConfig<f64>> {
        let mut cfg = SolveConfig::new(self.wavelength)?;
        cfg.candidates = self.c_grid.clone();
        cfg.regularization = match (self.pinned_c, self.auto_c) {
            (Some(c), _) => Regularization::Fixed(c),
            (None, true) => Regularization::Auto,
            (None, false) => {
                return Err(HarnessError::config(
                    "solve.C",
                    "auto_C is off and no constant is pinned",
                ))
            }
        };
        Ok(cfg)
    }

    /// `key = value` lines describing the run, for report echoes.
    pub fn echo(&self) -> Vec<(String, String)> {
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("target".into(), self.target.label()),
            ("optics.wavelength".into(), self.wavelength.to_string()),
            (
                "optics.pupil_diameter".into(),
                self.pupil_diameter.to_string(),
            ),
            ("optics.two_delta".into(), self.two_delta.to_string()),
            ("grid.rows".into(), self.resolution.0.to_string()),
            ("grid.cols".into(), self.resolution.1.to_string()),
            ("grid.pitch".into(), self.pitch.to_string()),
            ("run.intensity".into(), self.intensity.to_string()),
            ("run.seed".into(), self.seed.to_string()),
            ("run.noise_free".into(), self.noise_free.to_string()),
            (
                "sensor.frame.readout_sigma".into(),
                self.frame.readout_sigma.to_string(),
            ),
            (
                "sensor.frame.quant_step".into(),
                self.frame.quant_step.to_string(),
            ),
            (
                "sensor.frame.min_measurable".into(),
                self.frame.min_measurable.to_string(),
            ),
            (
                "sensor.frame.max_measurable".into(),
                self.frame.max_measurable.to_string(),
            ),
            (
                "sensor.frame.poisson".into(),
                self.frame.enable_poisson.to_string(),
            ),
            ("sensor.evs.mu".into(), self.evs.mu.to_string()),
            ("sensor.evs.mu_sigma".into(), self.evs.mu_sigma.to_string()),
            (
                "sensor.evs.min_measurable".into(),
                self.evs.min_measurable.to_string(),
            ),
            (
                "sensor.evs.poisson".into(),
                self.evs.enable_poisson.to_string(),
            ),
            (
                "solve.C".into(),
                self.pinned_c
                    .map_or_else(|| "auto".into(), |c| c.to_string()),
            ),
            ("solve.C_grid".into(), list(&self.c_grid)),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.intensity_levels.len(), 20);
        assert!((cfg.intensity_levels[0] - 0.1).abs() < 1e-12);
        assert!((cfg.intensity_levels[19] - 100.0).abs() < 1e-9);
        assert_eq!(cfg.seeds.len(), 10);
        assert_eq!(cfg.frame.max_measurable, 3350.0);
    }

    #[test]
    fn parses_sections_comments_and_lists() {
        let cfg = ExperimentConfig::from_text(
            "# comment\ntarget = phase3\n[sensor.evs]\nmu = 0.2 # inline\n\n[sweep]\nseeds = 1, 2,3\n",
        )
        .unwrap();
        assert_eq!(cfg.target, Target::Preset("phase3".into()));
        assert_eq!(cfg.evs.mu, 0.2);
        assert_eq!(cfg.seeds, vec![1, 2, 3]);
    }

    #[test]
    fn inline_weights() {
        let cfg = ExperimentConfig::from_text("zernike.i.4 = 0.1\nzernike.i.7 = -0.05").unwrap();
        let w = cfg.target.weights().unwrap();
        assert_eq!(w.get(4), 0.1);
        assert_eq!(w.get(7), -0.05);
        assert_eq!(w.get(3), 0.0);
    }

    #[test]
    fn errors_name_the_key() {
        let err = ExperimentConfig::from_text("optics.wavelength = -1").unwrap_err();
        assert!(err.to_string().contains("optics.wavelength"), "{err}");
        assert_eq!(err.exit_code(), 2);
        let err = ExperimentConfig::from_text("bogus.key = 1").unwrap_err();
        assert!(err.to_string().contains("bogus.key"));
        let err = ExperimentConfig::from_text("sensor.evs.mu = abc").unwrap_err();
        assert!(err.to_string().contains("sensor.evs.mu"));
        let err = ExperimentConfig::from_text("target = phase9").unwrap_err();
        assert!(err.to_string().contains("phase9"));
    }

    #[test]
    fn resolution_follows_grid() {
        let cfg = ExperimentConfig::from_text("grid.rows = 64\ngrid.cols = 32\ngrid.pitch = 1e-5")
            .unwrap();
        assert_eq!(cfg.frame.resolution, (64, 32));
        assert_eq!(cfg.evs.pitch, 1e-5);
    }

    #[test]
    fn solve_config_modes() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(
            cfg.solve_config().unwrap().regularization,
            Regularization::Auto
        );
        cfg.pinned_c = Some(1e-6);
        assert_eq!(
            cfg.solve_config().unwrap().regularization,
            Regularization::Fixed(1e-6)
        );
        cfg.pinned_c = None;
        cfg.auto_c = false;
        assert!(cfg.solve_config().is_err());
    }
}
