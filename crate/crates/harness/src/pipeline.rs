//! Simulation and retrieval runs: single runs, sweeps and ingestion of
//! recorded event streams.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use phasetie::events::{accumulate, parse_event_csv, write_event_csv, EventStream};
use phasetie::metrics::weight_errors_with;
use phasetie::retrieval::{solve_selected, tee_rhs, tie_rhs, Reference, Solution};
use phasetie::sensor::{simulate_event_stream, EventRecord};
use phasetie::wavefield::FresnelPropagator;
use phasetie::{
    derive_seed, field_from_phase, full_frame_rmse, intensity_of, linear_derivative,
    log_derivative, rmse, simulate_event_plane, simulate_frame, synthesize_phase, DerivativeMap,
    EvalReport, IntensityMap, PhaseMap, PupilGrid64, SolveConfig64, ZernikeFitter,
    ZernikeWeights64,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{preset, EventsConfig, ExperimentConfig, Method};
use crate::error::{HarnessError, Result};
use crate::output::{write_csv, write_grid, write_jsonl, write_raster};

// Stream tags mixed with the run seed; one independent stream per sensor.
const STREAM_FRAME_MINUS: u64 = 1;
const STREAM_FRAME_PLUS: u64 = 2;
const STREAM_EVENTS: u64 = 3;

/// Acceptable TEE RMSE reported alongside the defocus-distance sweep.
pub const ACCEPTABLE_RMSE: f64 = 0.141;

/// Grid, propagator and fitter shared by every run of one configuration.
pub struct Scene {
    cfg: ExperimentConfig,
    grid: PupilGrid64,
    fitter: ZernikeFitter,
    propagator: FresnelPropagator<f64>,
    solve: SolveConfig64,
}

/// A target phase and its unit-intensity defocus pair.
pub struct Prepared {
    pub label: String,
    pub weights: ZernikeWeights64,
    pub phase: PhaseMap<f64>,
    pub two_delta: f64,
    /// Intensity at `-Δ` for unit focus intensity.
    pub minus: IntensityMap<f64>,
    pub plus: IntensityMap<f64>,
}

/// Outcome of one method at one operating point.
pub struct MethodRun {
    pub method: Method,
    pub intensity: f64,
    pub seed: u64,
    pub rmse: f64,
    pub rmse_full_frame: f64,
    pub regularization: f64,
    pub weight_errors: BTreeMap<usize, f64>,
    pub phase: PhaseMap<f64>,
    pub derivative: DerivativeMap<f64>,
}

impl Scene {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let (rows, cols) = cfg.resolution;
        let grid = PupilGrid64::new(rows, cols, cfg.pitch, cfg.pupil_diameter)
            .map_err(|e| HarnessError::config("optics.pupil_diameter", e.to_string()))?;
        let fitter = ZernikeFitter::new(&grid, cfg.max_index)
            .map_err(|e| HarnessError::config("zernike.max_index", e.to_string()))?;
        let propagator = FresnelPropagator::new(cfg.resolution, cfg.pitch, cfg.wavelength)?;
        Ok(Self {
            cfg: cfg.clone(),
            grid,
            fitter,
            propagator,
            solve: cfg.solve_config()?,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &PupilGrid64 {
        &self.grid
    }

    fn check_delta(&self, two_delta: f64) -> Result<()> {
        let max = self.propagator.max_distance();
        if two_delta / 2.0 > max {
            return Err(HarnessError::config(
                "optics.two_delta",
                format!(
                    "half distance {} m exceeds the {max} m sampling limit",
                    two_delta / 2.0
                ),
            ));
        }
        Ok(())
    }

    /// Synthesizes the phase and propagates a unit-intensity field to
    /// `∓two_delta/2`.
    pub fn prepare(
        &self,
        label: &str,
        weights: &ZernikeWeights64,
        two_delta: f64,
    ) -> Result<Prepared> {
        self.check_delta(two_delta)?;
        let phase = synthesize_phase(weights, &self.grid)?;
        let field = field_from_phase(&phase, 1.0, self.cfg.wavelength)?;
        let (minus, plus) = self.propagator.propagate_pair(&field, two_delta / 2.0)?;
        Ok(Prepared {
            label: label.to_string(),
            weights: weights.clone(),
            phase,
            two_delta,
            minus: intensity_of(&minus),
            plus: intensity_of(&plus),
        })
    }

    pub fn prepare_target(&self) -> Result<Prepared> {
        self.prepare(
            &self.cfg.target.label(),
            &self.cfg.target.weights()?,
            self.cfg.two_delta,
        )
    }

    /// Simulates the sensor for `method` at focus intensity `intensity` and
    /// retrieves the phase.
    pub fn run(
        &self,
        target: &Prepared,
        intensity: f64,
        seed: u64,
        method: Method,
    ) -> Result<MethodRun> {
        let (frame_cfg, evs_cfg) = self.cfg.sensors();
        let minus = target.minus.scaled(intensity)?;
        let plus = target.plus.scaled(intensity)?;
        let delta = target.two_delta / 2.0;
        let k = self.solve.wavenumber;
        let (derivative, rhs) = match method {
            Method::Tie => {
                let m = simulate_frame(&minus, &frame_cfg, derive_seed(seed, STREAM_FRAME_MINUS))?;
                let p = simulate_frame(&plus, &frame_cfg, derive_seed(seed, STREAM_FRAME_PLUS))?;
                let d = linear_derivative(&m, &p, delta)?;
                let rhs = tie_rhs(&d, intensity, k)?;
                (d, rhs)
            }
            Method::Tee => {
                let events = simulate_event_plane(
                    &minus,
                    &plus,
                    delta,
                    self.cfg.events.duration,
                    &evs_cfg,
                    derive_seed(seed, STREAM_EVENTS),
                )?;
                let d = log_derivative(&events, self.cfg.pitch)?;
                let rhs = tee_rhs(&d, k)?;
                (d, rhs)
            }
        };
        let reference = Reference {
            phase: &target.phase,
            mask: self.grid.mask(),
        };
        let Solution {
            phase,
            regularization,
        } = solve_selected(&rhs, self.cfg.pitch, &self.solve, Some(reference))?;
        Ok(MethodRun {
            method,
            intensity,
            seed,
            rmse: rmse(&phase, &target.phase, self.grid.mask())?,
            rmse_full_frame: full_frame_rmse(&phase, &target.phase)?,
            regularization,
            weight_errors: weight_errors_with(&target.weights, &phase, &self.fitter)?,
            phase,
            derivative,
        })
    }

    /// Stepwise event stream for `target` at focus intensity `intensity`:
    /// the field is propagated to `events.samples` evenly spaced planes
    /// from `-Δ` to `+Δ`, traversed in `events.duration` seconds.
    pub fn event_stream(
        &self,
        target: &Prepared,
        intensity: f64,
        seed: u64,
    ) -> Result<Vec<EventRecord>> {
        let (_, evs_cfg) = self.cfg.sensors();
        let delta = target.two_delta / 2.0;
        let samples = self.cfg.events.samples;
        let zs: Vec<f64> = (0..samples)
            .map(|s| -delta + 2.0 * delta * s as f64 / (samples - 1) as f64)
            .collect();
        let field = field_from_phase(&target.phase, intensity, self.cfg.wavelength)?;
        let trajectory: Vec<(f64, IntensityMap<f64>)> = self
            .propagator
            .propagate_many(&field, &zs)?
            .iter()
            .zip(&zs)
            .map(|(f, z)| (*z, intensity_of(f)))
            .collect();
        Ok(simulate_event_stream(
            &trajectory,
            &evs_cfg,
            self.cfg.events.duration / 2.0,
            derive_seed(seed, STREAM_EVENTS),
        )?)
    }

    /// Report for `run`, echoing the configuration.
    pub fn report(&self, run: &MethodRun, target: &Prepared) -> EvalReport {
        let mut echo: BTreeMap<String, String> = self.cfg.echo().into_iter().collect();
        echo.insert("target".into(), target.label.clone());
        echo.insert("optics.two_delta".into(), target.two_delta.to_string());
        echo.insert("run.intensity".into(), run.intensity.to_string());
        echo.insert("run.seed".into(), run.seed.to_string());
        echo.insert("method".into(), run.method.name().into());
        EvalReport {
            rmse: run.rmse,
            rmse_full_frame: run.rmse_full_frame,
            per_index_weight_error: run.weight_errors.clone(),
            regularization: run.regularization,
            config_echo: echo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRow {
    pub phase_id: String,
    pub method: &'static str,
    #[serde(rename = "I")]
    pub intensity: f64,
    pub seed: u64,
    pub two_delta: f64,
    pub rmse: f64,
    pub rmse_full_frame: f64,
    #[serde(rename = "C_used")]
    pub c_used: f64,
}

impl RunRow {
    fn new(target: &Prepared, run: &MethodRun) -> Self {
        Self {
            phase_id: target.label.clone(),
            method: run.method.name(),
            intensity: run.intensity,
            seed: run.seed,
            two_delta: target.two_delta,
            rmse: run.rmse,
            rmse_full_frame: run.rmse_full_frame,
            c_used: run.regularization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct WeightRow {
    method: &'static str,
    index: usize,
    true_weight: f64,
    abs_error: f64,
}

pub struct SingleOutcome {
    pub target: Prepared,
    pub runs: Vec<MethodRun>,
    pub reports: Vec<EvalReport>,
}

/// Synthesize, propagate, simulate, retrieve and evaluate once per
/// configured method; writes rasters, previews and reports to the output
/// directory.
pub fn run_single(cfg: &ExperimentConfig) -> Result<SingleOutcome> {
    let scene = Scene::new(cfg)?;
    let target = scene.prepare_target()?;
    let runs = cfg
        .method
        .methods()
        .iter()
        .map(|m| scene.run(&target, cfg.intensity, cfg.seed, *m))
        .collect::<Result<Vec<_>>>()?;
    let reports: Vec<EvalReport> = runs.iter().map(|r| scene.report(r, &target)).collect();

    let dir = &cfg.output_dir;
    write_grid(
        dir,
        "phase_true",
        &target.phase.values,
        cfg.pitch,
        cfg.previews,
    )?;
    let mut weight_rows = Vec::new();
    for run in &runs {
        let name = run.method.name();
        write_grid(
            dir,
            &format!("phase_{name}"),
            &run.phase.values,
            cfg.pitch,
            cfg.previews,
        )?;
        write_grid(
            dir,
            &format!("derivative_{name}"),
            &run.derivative.values,
            cfg.pitch,
            cfg.previews,
        )?;
        weight_rows.extend(run.weight_errors.iter().map(|(i, e)| WeightRow {
            method: name,
            index: *i,
            true_weight: target.weights.get(*i),
            abs_error: *e,
        }));
    }
    let rows: Vec<RunRow> = runs.iter().map(|r| RunRow::new(&target, r)).collect();
    write_csv(&dir.join("report.csv"), &rows)?;
    write_csv(&dir.join("weights.csv"), &weight_rows)?;
    write_jsonl(&dir.join("report.jsonl"), &reports)?;
    Ok(SingleOutcome {
        target,
        runs,
        reports,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntensityMean {
    pub method: &'static str,
    #[serde(rename = "I")]
    pub intensity: f64,
    pub mean_rmse: f64,
    pub runs: usize,
}

pub struct IntensitySweep {
    pub rows: Vec<RunRow>,
    pub means: Vec<IntensityMean>,
}

impl IntensitySweep {
    pub fn mean(&self, method: Method, intensity: f64) -> Option<f64> {
        self.means
            .iter()
            .find(|m| m.method == method.name() && m.intensity == intensity)
            .map(|m| m.mean_rmse)
    }
}

fn prepare_phases(scene: &Scene, names: &[String], two_delta: f64) -> Result<Vec<Prepared>> {
    names
        .par_iter()
        .map(|name| scene.prepare(name, &preset(name)?, two_delta))
        .collect()
}

/// RMSE for every (phase, intensity, seed, method) cell, plus the mean per
/// (method, intensity). Writes `sweep_intensity.csv`,
/// `sweep_intensity.jsonl` and `sweep_intensity_mean.csv`.
pub fn run_intensity_sweep(cfg: &ExperimentConfig) -> Result<IntensitySweep> {
    if cfg.intensity_levels.is_empty() {
        return Err(HarnessError::config(
            "sweep.intensity_levels",
            "no intensity levels",
        ));
    }
    if cfg.seeds.is_empty() {
        return Err(HarnessError::config("sweep.seeds", "no seeds"));
    }
    let scene = Scene::new(cfg)?;
    let targets = prepare_phases(&scene, &cfg.sweep_phases, cfg.two_delta)?;
    let cells: Vec<(usize, f64, u64, Method)> = targets
        .iter()
        .enumerate()
        .flat_map(|(t, _)| {
            cfg.intensity_levels.iter().flat_map(move |i| {
                cfg.seeds
                    .iter()
                    .flat_map(move |s| cfg.method.methods().iter().map(move |m| (t, *i, *s, *m)))
            })
        })
        .collect();
    let rows = cells
        .par_iter()
        .map(|(t, i, s, m)| {
            let run = scene.run(&targets[*t], *i, *s, *m)?;
            Ok(RunRow::new(&targets[*t], &run))
        })
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<IntensityMean> = cfg
        .method
        .methods()
        .iter()
        .flat_map(|m| {
            let rows = &rows;
            cfg.intensity_levels.iter().map(move |i| {
                let hits: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.method == m.name() && r.intensity == *i)
                    .map(|r| r.rmse)
                    .collect();
                IntensityMean {
                    method: m.name(),
                    intensity: *i,
                    mean_rmse: hits.iter().sum::<f64>() / hits.len() as f64,
                    runs: hits.len(),
                }
            })
        })
        .collect();
    let dir = &cfg.output_dir;
    write_csv(&dir.join("sweep_intensity.csv"), &rows)?;
    write_jsonl(&dir.join("sweep_intensity.jsonl"), &rows)?;
    write_csv(&dir.join("sweep_intensity_mean.csv"), &means)?;
    Ok(IntensitySweep { rows, means })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaMean {
    pub label: &'static str,
    pub two_delta: Option<f64>,
    pub rmse: f64,
    pub runs: usize,
}

pub struct DeltaSweep {
    pub rows: Vec<RunRow>,
    /// One `mean` row per distance, then the `acceptable` threshold row.
    pub means: Vec<DeltaMean>,
}

impl DeltaSweep {
    pub fn mean_rmse(&self) -> Vec<(f64, f64)> {
        self.means
            .iter()
            .filter_map(|m| m.two_delta.map(|d| (d, m.rmse)))
            .collect()
    }
}

/// TEE RMSE against the translation distance `2Δ` at the configured
/// sweep intensity. Writes `sweep_delta.csv` and `sweep_delta_mean.csv`.
pub fn run_delta_sweep(cfg: &ExperimentConfig) -> Result<DeltaSweep> {
    if cfg.two_delta_grid.is_empty() {
        return Err(HarnessError::config("sweep.two_delta", "no distances"));
    }
    if cfg.seeds.is_empty() {
        return Err(HarnessError::config("sweep.seeds", "no seeds"));
    }
    let scene = Scene::new(cfg)?;
    for d in &cfg.two_delta_grid {
        scene
            .check_delta(*d)
            .map_err(|e| HarnessError::config("sweep.two_delta", e.to_string()))?;
    }
    let mut rows = Vec::new();
    let mut means = Vec::new();
    for two_delta in &cfg.two_delta_grid {
        let targets = prepare_phases(&scene, &cfg.sweep_phases, *two_delta)?;
        let cells: Vec<(usize, u64)> = (0..targets.len())
            .flat_map(|t| cfg.seeds.iter().map(move |s| (t, *s)))
            .collect();
        let batch = cells
            .par_iter()
            .map(|(t, s)| {
                let run = scene.run(&targets[*t], cfg.delta_sweep_intensity, *s, Method::Tee)?;
                Ok(RunRow::new(&targets[*t], &run))
            })
            .collect::<Result<Vec<_>>>()?;
        means.push(DeltaMean {
            label: "mean",
            two_delta: Some(*two_delta),
            rmse: batch.iter().map(|r| r.rmse).sum::<f64>() / batch.len() as f64,
            runs: batch.len(),
        });
        rows.extend(batch);
    }
    means.push(DeltaMean {
        label: "acceptable",
        two_delta: None,
        rmse: ACCEPTABLE_RMSE,
        runs: 0,
    });
    let dir = &cfg.output_dir;
    write_csv(&dir.join("sweep_delta.csv"), &rows)?;
    write_csv(&dir.join("sweep_delta_mean.csv"), &means)?;
    Ok(DeltaSweep { rows, means })
}

/// Generates a stepwise event stream for the configured target and writes
/// it as CSV to `path`.
pub fn simulate_events(cfg: &ExperimentConfig, path: &Path) -> Result<usize> {
    let scene = Scene::new(cfg)?;
    let target = scene.prepare_target()?;
    let records = scene.event_stream(&target, cfg.intensity, cfg.seed)?;
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_event_csv(BufWriter::new(file), &records).map_err(|e| match e {
        phasetie::Error::Io(io) => HarnessError::io(path, io),
        other => other.into(),
    })?;
    Ok(records.len())
}

pub struct EventsOutcome {
    pub stream: EventStream,
    pub phase: PhaseMap<f64>,
    pub derivative: DerivativeMap<f64>,
    pub report: Option<EvalReport>,
}

/// Solves the TEE for an already parsed stream with the pinned constant.
pub fn retrieve_from_stream(
    cfg: &ExperimentConfig,
    stream: &EventStream,
) -> Result<(PhaseMap<f64>, DerivativeMap<f64>)> {
    let c = cfg.pinned_c.ok_or_else(|| {
        HarnessError::config(
            "solve.C",
            "retrieval from recorded events needs a pinned constant",
        )
    })?;
    let EventsConfig { t_start, t_end, .. } = cfg.events;
    let plane = accumulate(stream, (t_start, t_end), cfg.evs.mu, cfg.two_delta / 2.0)?;
    let derivative = log_derivative(&plane, cfg.pitch)?;
    let solve = SolveConfig64::new(cfg.wavelength)?.pinned(c);
    let phase = phasetie::solve_tee(&derivative, &solve)?;
    Ok((phase, derivative))
}

/// Parses the CSV at `events.path`, accumulates the window, solves the TEE
/// and writes `phase_events.*`; scores against `events.reference` when set.
pub fn run_from_events(cfg: &ExperimentConfig) -> Result<EventsOutcome> {
    cfg.validate()?;
    let path: PathBuf = cfg
        .events
        .path
        .clone()
        .ok_or_else(|| HarnessError::config("events.path", "no event file given"))?;
    let file = File::open(&path).map_err(|e| HarnessError::io(&path, e))?;
    let stream =
        parse_event_csv(BufReader::new(file), cfg.resolution).map_err(|source| match source {
            phasetie::Error::Io(io) => HarnessError::io(&path, io),
            source => HarnessError::Input {
                path: path.clone(),
                source,
            },
        })?;
    let stream = stream.with_duration(cfg.events.duration);
    if stream.is_empty() {
        eprintln!(
            "warning: {} holds no events; the retrieved phase is zero",
            path.display()
        );
    }
    let (phase, derivative) = retrieve_from_stream(cfg, &stream)?;

    let report = match &cfg.events.reference {
        Some(name) => {
            let scene = Scene::new(cfg)?;
            let weights = preset(name)?;
            let truth = synthesize_phase(&weights, scene.grid())?;
            let mask = scene.grid().mask();
            let mut echo: BTreeMap<String, String> = cfg.echo().into_iter().collect();
            echo.insert("target".into(), name.clone());
            echo.insert("events.path".into(), path.display().to_string());
            echo.insert("method".into(), "tee".into());
            Some(EvalReport {
                rmse: rmse(&phase, &truth, mask)?,
                rmse_full_frame: full_frame_rmse(&phase, &truth)?,
                per_index_weight_error: weight_errors_with(&weights, &phase, &scene.fitter)?,
                regularization: cfg.pinned_c.unwrap_or_default(),
                config_echo: echo,
            })
        }
        None => None,
    };
    let dir = &cfg.output_dir;
    write_grid(dir, "phase_events", &phase.values, cfg.pitch, cfg.previews)?;
    write_raster(
        &dir.join("derivative_events.phr"),
        &derivative.values,
        cfg.pitch,
    )?;
    if let Some(r) = &report {
        write_jsonl(&dir.join("report_events.jsonl"), std::slice::from_ref(r))?;
    }
    Ok(EventsOutcome {
        stream,
        phase,
        derivative,
        report,
    })
}
