//! Sensor degradation models.
//!
//! * Frame sensor: shot noise, additive readout noise, clipping at the
//!   full-scale ceiling, then quantization with a lower detection floor.
//! * Event sensor (endpoint model): shot noise on both defocus endpoints,
//!   flooring at the minimum measurable intensity, a per-pixel Gaussian
//!   contrast threshold, and integer event counts.
//! * Event sensor (stepwise model): replays a sampled axial trajectory and
//!   emits timestamped events as the log intensity crosses successive
//!   thresholds.
//!
//! All stochastic draws for a pixel come from a stream seeded by
//! `(seed, row)`, so outputs are independent of thread scheduling.

use ndarray::{Array2, Zip};
use rand::Rng;
use rayon::prelude::*;

use crate::error::{ensure_same_shape, Error, Result};
use crate::grid::{IntensityMap, Plane};
use crate::rng::row_rng;
use crate::scalar::Scalar;

/// Dynamic range of the reference frame sensor, dB.
pub const FRAME_DYNAMIC_RANGE_DB: f64 = 70.5;

/// Linear ratio for a dynamic range given in dB (`20·log10`).
pub fn dynamic_range_ratio(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Rounding applied by the frame sensor's analog-to-digital conversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quantization {
    #[default]
    Nearest,
    Floor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSensorConfig<T> {
    /// Standard deviation of the additive readout noise, intensity units.
    pub readout_sigma: T,
    pub quant_step: T,
    pub quant_mode: Quantization,
    /// Quantized values below this are lost (read as zero).
    pub min_measurable: T,
    /// Clipping ceiling applied before quantization.
    pub max_measurable: T,
    pub pitch: T,
    pub resolution: (usize, usize),
    pub enable_poisson: bool,
}

impl<T: Scalar> Default for FrameSensorConfig<T> {
    fn default() -> Self {
        Self {
            readout_sigma: T::lit(0.5),
            quant_step: T::one(),
            quant_mode: Quantization::Nearest,
            min_measurable: T::one(),
            max_measurable: T::lit(dynamic_range_ratio(FRAME_DYNAMIC_RANGE_DB).round()),
            pitch: T::lit(6.4e-6),
            resolution: (539, 539),
            enable_poisson: true,
        }
    }
}

impl<T: Scalar> FrameSensorConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.min_measurable > T::zero() && self.min_measurable <= self.max_measurable) {
            return Err(Error::domain(
                "frame sensor range",
                format!(
                    "need 0 < min ({}) <= max ({})",
                    self.min_measurable, self.max_measurable
                ),
            ));
        }
        if !(self.quant_step > T::zero()) {
            return Err(Error::domain(
                "quantization step",
                format!("{} is not positive", self.quant_step),
            ));
        }
        if !(self.readout_sigma >= T::zero()) {
            return Err(Error::domain(
                "readout sigma",
                format!("{} is negative", self.readout_sigma),
            ));
        }
        if !(self.pitch > T::zero()) {
            return Err(Error::domain(
                "pitch",
                format!("{} is not positive", self.pitch),
            ));
        }
        Ok(())
    }

    /// Same sensor with shot and readout noise disabled.
    pub fn noise_free(mut self) -> Self {
        self.enable_poisson = false;
        self.readout_sigma = T::zero();
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvsConfig<T> {
    /// Nominal contrast threshold, natural-log units.
    pub mu: T,
    /// Per-pixel standard deviation of the threshold.
    pub mu_sigma: T,
    /// Intensities below this are raised to it before taking logs.
    pub min_measurable: T,
    pub pitch: T,
    pub resolution: (usize, usize),
    pub enable_poisson: bool,
}

impl<T: Scalar> Default for EvsConfig<T> {
    fn default() -> Self {
        Self {
            mu: T::lit(0.1),
            mu_sigma: T::lit(0.03),
            min_measurable: T::lit(0.1),
            pitch: T::lit(6.4e-6),
            resolution: (539, 539),
            enable_poisson: true,
        }
    }
}

impl<T: Scalar> EvsConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > T::zero()) {
            return Err(Error::domain(
                "contrast threshold",
                format!("{} is not positive", self.mu),
            ));
        }
        if !(self.mu_sigma >= T::zero()) {
            return Err(Error::domain(
                "threshold sigma",
                format!("{} is negative", self.mu_sigma),
            ));
        }
        if !(self.min_measurable > T::zero()) {
            return Err(Error::domain(
                "minimum measurable intensity",
                format!("{} is not positive", self.min_measurable),
            ));
        }
        if !(self.pitch > T::zero()) {
            return Err(Error::domain(
                "pitch",
                format!("{} is not positive", self.pitch),
            ));
        }
        Ok(())
    }

    /// Same sensor with shot noise and threshold fluctuation disabled.
    pub fn noise_free(mut self) -> Self {
        self.enable_poisson = false;
        self.mu_sigma = T::zero();
        self
    }

    /// Draws a per-pixel threshold `μ + N(0, σ²)`, redrawn until positive.
    fn sample_threshold<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        if self.mu_sigma == T::zero() {
            return self.mu;
        }
        loop {
            let m = self.mu + self.mu_sigma * T::sample_standard_normal(rng);
            if m > T::zero() {
                return m;
            }
        }
    }
}

/// Net signed event counts accumulated over one translation `z̃-Δ → z̃+Δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPlane<T> {
    pub counts: Array2<i32>,
    /// Nominal contrast threshold.
    pub mu: T,
    /// Half the translation distance, meters.
    pub delta: T,
    /// Translation time `2T`, seconds.
    pub duration: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    On,
    Off,
}

impl Polarity {
    pub fn sign(self) -> i32 {
        match self {
            Polarity::On => 1,
            Polarity::Off => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRecord {
    /// Seconds since the start of the translation.
    pub t: f64,
    /// Column.
    pub x: u32,
    /// Row.
    pub y: u32,
    pub polarity: Polarity,
}

fn check_resolution(shape: (usize, usize), resolution: (usize, usize)) -> Result<()> {
    ensure_same_shape(shape, resolution)
}

fn map_rows<T: Scalar, F>(shape: (usize, usize), seed: u64, f: F) -> Array2<T>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng, usize, &mut [T]) + Sync,
{
    let (rows, cols) = shape;
    let mut out = vec![T::zero(); rows * cols];
    if cols > 0 {
        out.par_chunks_mut(cols).enumerate().for_each(|(r, row)| {
            let mut rng = row_rng(seed, r);
            f(&mut rng, r, row);
        });
    }
    Array2::from_shape_vec(shape, out).expect("shape")
}

/// Degrades an ideal intensity image through the frame-sensor pipeline.
pub fn simulate_frame<T: Scalar>(
    ideal: &IntensityMap<T>,
    cfg: &FrameSensorConfig<T>,
    seed: u64,
) -> Result<IntensityMap<T>> {
    cfg.validate()?;
    check_resolution(ideal.shape(), cfg.resolution)?;
    let src = ideal.values().as_standard_layout();
    let src = src.as_slice().expect("standard layout");
    let cols = cfg.resolution.1;
    let step = cfg.quant_step;
    let values = map_rows(cfg.resolution, seed, |rng, r, row| {
        for (c, out) in row.iter_mut().enumerate() {
            let mut v = src[r * cols + c];
            if cfg.enable_poisson {
                v = T::sample_poisson(v, rng);
            }
            if cfg.readout_sigma > T::zero() {
                v += cfg.readout_sigma * T::sample_standard_normal(rng);
            }
            v = v.max(T::zero()).min(cfg.max_measurable);
            let q = match cfg.quant_mode {
                Quantization::Nearest => (v / step).round() * step,
                Quantization::Floor => (v / step).floor() * step,
            };
            *out = if q < cfg.min_measurable { T::zero() } else { q };
        }
    });
    Ok(IntensityMap::from_trusted(
        values,
        ideal.pitch(),
        ideal.plane(),
    ))
}

/// Endpoint event model: net event count per pixel for the translation
/// from `i_minus` (at `z̃-Δ`) to `i_plus` (at `z̃+Δ`).
///
/// A pixel with threshold `μ'` fires once for every full `μ'` of log
/// change, so the count is `trunc((ln I⁺ − ln I⁻)/μ')`; a residual smaller
/// than the threshold produces nothing.
pub fn simulate_event_plane<T: Scalar>(
    i_minus: &IntensityMap<T>,
    i_plus: &IntensityMap<T>,
    delta: T,
    duration: T,
    cfg: &EvsConfig<T>,
    seed: u64,
) -> Result<EventPlane<T>> {
    cfg.validate()?;
    ensure_same_shape(i_minus.shape(), i_plus.shape())?;
    check_resolution(i_minus.shape(), cfg.resolution)?;
    let minus = i_minus.values().as_standard_layout();
    let plus = i_plus.values().as_standard_layout();
    let (minus, plus) = (
        minus.as_slice().expect("standard layout"),
        plus.as_slice().expect("standard layout"),
    );
    let cols = cfg.resolution.1;
    let floor = cfg.min_measurable;
    let counts: Array2<f64> = map_rows(cfg.resolution, seed, |rng, r, row| {
        for (c, out) in row.iter_mut().enumerate() {
            let k = r * cols + c;
            let (mut a, mut b) = (minus[k], plus[k]);
            if cfg.enable_poisson {
                a = T::sample_poisson(a, rng);
                b = T::sample_poisson(b, rng);
            }
            let (a, b) = (a.max(floor), b.max(floor));
            let threshold = cfg.sample_threshold(rng);
            *out = ((b.ln() - a.ln()) / threshold).trunc().to_f64_lossy();
        }
    });
    Ok(EventPlane {
        counts: counts.mapv(|v| v as i32),
        mu: cfg.mu,
        delta,
        duration,
    })
}

/// Stepwise event model over an axial trajectory sampled from `z̃-Δ` to
/// `z̃+Δ` at constant velocity, taking `2·half_period` seconds.
///
/// Each pixel keeps the reference log intensity of its last event
/// (initially the first sample). Whenever the current log intensity is at
/// least `μ'` away from the reference, one event per full `μ'` is emitted
/// and the reference advances by the emitted amount. Event times are
/// interpolated linearly in log intensity between samples. Records are
/// returned sorted by `(t, y, x)`.
pub fn simulate_event_stream<T: Scalar>(
    trajectory: &[(T, IntensityMap<T>)],
    cfg: &EvsConfig<T>,
    half_period: T,
    seed: u64,
) -> Result<Vec<EventRecord>> {
    cfg.validate()?;
    if !(half_period > T::zero()) {
        return Err(Error::domain(
            "half period",
            format!("{half_period} is not positive"),
        ));
    }
    for (index, pair) in trajectory.windows(2).enumerate() {
        if !(pair[1].0 >= pair[0].0) {
            return Err(Error::UnsortedTrajectory { index: index + 1 });
        }
    }
    for (_, map) in trajectory {
        check_resolution(map.shape(), cfg.resolution)?;
    }
    if trajectory.len() < 2 {
        return Ok(Vec::new());
    }
    let z0 = trajectory[0].0.to_f64_lossy();
    let span = trajectory[trajectory.len() - 1].0.to_f64_lossy() - z0;
    if !(span > 0.0) {
        return Err(Error::domain(
            "trajectory",
            "first and last samples share one position",
        ));
    }
    // t = (z - z̃ + Δ)·T/Δ with Δ = span/2
    let times: Vec<f64> = trajectory
        .iter()
        .map(|(z, _)| (z.to_f64_lossy() - z0) * 2.0 * half_period.to_f64_lossy() / span)
        .collect();
    let layouts: Vec<_> = trajectory
        .iter()
        .map(|(_, m)| m.values().as_standard_layout())
        .collect();
    let slices: Vec<&[T]> = layouts
        .iter()
        .map(|a| a.as_slice().expect("standard layout"))
        .collect();
    let (rows, cols) = cfg.resolution;
    let floor = cfg.min_measurable;

    let per_row: Vec<Vec<EventRecord>> = (0..rows)
        .into_par_iter()
        .map(|r| {
            let mut rng = row_rng(seed, r);
            let mut events = Vec::new();
            for c in 0..cols {
                let k = r * cols + c;
                let threshold = cfg.sample_threshold(&mut rng);
                let sample = |s: usize, rng: &mut rand_chacha::ChaCha8Rng| {
                    let mut v = slices[s][k];
                    if cfg.enable_poisson {
                        v = T::sample_poisson(v, rng);
                    }
                    v.max(floor).ln()
                };
                let origin = sample(0, &mut rng);
                // Levels are counted in units of the threshold from the initial reference.
                let mut net: i64 = 0;
                let mut prev = 0.0f64;
                for s in 1..slices.len() {
                    let level = ((sample(s, &mut rng) - origin) / threshold).to_f64_lossy();
                    let (fire, sign) = if level.floor() as i64 > net {
                        (level.floor() as i64 - net, 1i64)
                    } else if (level.ceil() as i64) < net {
                        (net - level.ceil() as i64, -1i64)
                    } else {
                        (0, 0)
                    };
                    for j in 1..=fire {
                        let crossing = (net + sign * j) as f64;
                        let frac = if level != prev {
                            ((crossing - prev) / (level - prev)).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                        events.push(EventRecord {
                            t: times[s - 1] + frac * (times[s] - times[s - 1]),
                            x: c as u32,
                            y: r as u32,
                            polarity: if sign > 0 {
                                Polarity::On
                            } else {
                                Polarity::Off
                            },
                        });
                    }
                    net += sign * fire;
                    prev = level;
                }
            }
            events
        })
        .collect();

    let mut events: Vec<EventRecord> = per_row.into_iter().flatten().collect();
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.y.cmp(&b.y)).then(a.x.cmp(&b.x)));
    Ok(events)
}

/// Trajectory whose log intensity moves linearly between two endpoint maps,
/// `I(s) = I⁻^(1-s)·I⁺^s`, sampled at `samples` evenly spaced positions
/// from `z̃-Δ` to `z̃+Δ`. Values are floored at `floor` first so the path
/// between floored endpoints is monotone in log at every pixel.
pub fn log_linear_trajectory<T: Scalar>(
    i_minus: &IntensityMap<T>,
    i_plus: &IntensityMap<T>,
    delta: T,
    samples: usize,
    floor: T,
) -> Result<Vec<(T, IntensityMap<T>)>> {
    ensure_same_shape(i_minus.shape(), i_plus.shape())?;
    if samples < 2 {
        return Err(Error::domain(
            "trajectory samples",
            format!("{samples} < 2"),
        ));
    }
    let lm = i_minus.values().mapv(|v| v.max(floor).ln());
    let lp = i_plus.values().mapv(|v| v.max(floor).ln());
    let last = samples - 1;
    (0..samples)
        .map(|s| {
            let z =
                -delta + T::lit(2.0) * delta * T::from_usize_lossy(s) / T::from_usize_lossy(last);
            let values = if s == 0 {
                i_minus.values().mapv(|v| v.max(floor))
            } else if s == last {
                i_plus.values().mapv(|v| v.max(floor))
            } else {
                let w = T::from_usize_lossy(s) / T::from_usize_lossy(last);
                Zip::from(&lm)
                    .and(&lp)
                    .map_collect(|a, b| (*a + (*b - *a) * w).exp())
            };
            let plane = match s {
                0 => Plane::Minus,
                s if s == last => Plane::Plus,
                _ => Plane::Offset(z.to_f64_lossy()),
            };
            Ok((z, IntensityMap::new(values, i_minus.pitch(), plane)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn frame_cfg(shape: (usize, usize)) -> FrameSensorConfig<f64> {
        FrameSensorConfig {
            resolution: shape,
            ..FrameSensorConfig::default()
        }
        .noise_free()
    }

    fn evs_cfg(shape: (usize, usize)) -> EvsConfig<f64> {
        EvsConfig {
            resolution: shape,
            ..EvsConfig::default()
        }
        .noise_free()
    }

    fn map(v: Array2<f64>) -> IntensityMap<f64> {
        IntensityMap::new(v, 6.4e-6, Plane::Focus).unwrap()
    }

    #[test]
    fn default_ceiling_from_dynamic_range() {
        let ratio = dynamic_range_ratio(70.5);
        assert!((ratio - 3349.654).abs() < 1e-3);
        assert_eq!(FrameSensorConfig::<f64>::default().max_measurable, 3350.0);
    }

    #[test]
    fn frame_noise_free_examples() {
        let ideal = map(array![[2.4, 0.4, 1e6, 2.5]]);
        let out = simulate_frame(&ideal, &frame_cfg((1, 4)), 0).unwrap();
        assert_eq!(out.values(), &array![[2.0, 0.0, 3350.0, 3.0]]);
    }

    #[test]
    fn frame_floor_mode() {
        let ideal = map(array![[2.9, 1.2]]);
        let cfg = FrameSensorConfig {
            quant_mode: Quantization::Floor,
            ..frame_cfg((1, 2))
        };
        assert_eq!(
            simulate_frame(&ideal, &cfg, 0).unwrap().values(),
            &array![[2.0, 1.0]]
        );
    }

    #[test]
    fn frame_poisson_mean() {
        let shape = (100, 1000);
        let ideal = IntensityMap::uniform(shape, 100.0, 6.4e-6, Plane::Focus).unwrap();
        let cfg = FrameSensorConfig {
            enable_poisson: true,
            ..frame_cfg(shape)
        };
        let out = simulate_frame(&ideal, &cfg, 11).unwrap();
        let mean = out.values().mean().unwrap();
        // standard error 10/sqrt(1e5) ≈ 0.032; ±1 is far beyond 3σ
        assert!((mean - 100.0).abs() < 1.0, "{mean}");
    }

    #[test]
    fn frame_is_deterministic_per_seed() {
        let shape = (20, 30);
        let ideal = IntensityMap::uniform(shape, 5.0, 6.4e-6, Plane::Focus).unwrap();
        let cfg = FrameSensorConfig {
            resolution: shape,
            ..FrameSensorConfig::default()
        };
        let a = simulate_frame(&ideal, &cfg, 3).unwrap();
        let b = simulate_frame(&ideal, &cfg, 3).unwrap();
        let c = simulate_frame(&ideal, &cfg, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn event_plane_examples() {
        let e = std::f64::consts::E;
        let minus = map(array![[1.0, 1.0, 1.0, 1.0]]);
        let plus = map(array![[1.0, e, 0.05, 0.55f64.exp()]]);
        let plane = simulate_event_plane(&minus, &plus, 0.02, 1.0, &evs_cfg((1, 4)), 0).unwrap();
        // ln(0.1) / 0.1 = -23.03 → -23
        assert_eq!(plane.counts, array![[0, 10, -23, 5]]);
        assert_eq!(plane.mu, 0.1);
        assert_eq!(plane.delta, 0.02);
    }

    #[test]
    fn event_plane_floor_applies_before_log() {
        let minus = map(array![[0.1]]);
        let plus = map(array![[0.05]]);
        let plane = simulate_event_plane(&minus, &plus, 0.02, 1.0, &evs_cfg((1, 1)), 0).unwrap();
        assert_eq!(plane.counts[[0, 0]], 0);
    }

    #[test]
    fn event_plane_shape_mismatch() {
        let a = map(Array2::ones((2, 2)));
        let b = map(Array2::ones((2, 3)));
        assert!(matches!(
            simulate_event_plane(&a, &b, 0.02, 1.0, &evs_cfg((2, 2)), 0),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn thresholds_stay_positive() {
        let cfg = EvsConfig {
            mu: 0.01,
            mu_sigma: 0.05,
            ..EvsConfig::default()
        };
        let mut rng = row_rng(5, 0);
        for _ in 0..10_000 {
            assert!(cfg.sample_threshold(&mut rng) > 0.0);
        }
    }

    #[test]
    fn constant_trajectory_is_silent() {
        let m = map(Array2::from_elem((3, 3), 2.0));
        let traj: Vec<_> = (0..5).map(|s| (s as f64 * 0.01, m.clone())).collect();
        let ev = simulate_event_stream(&traj, &evs_cfg((3, 3)), 0.5, 1).unwrap();
        assert!(ev.is_empty());
    }

    #[test]
    fn unsorted_trajectory_rejected() {
        let m = map(Array2::from_elem((1, 1), 2.0));
        let traj = vec![(0.0, m.clone()), (0.02, m.clone()), (0.01, m)];
        assert!(matches!(
            simulate_event_stream(&traj, &evs_cfg((1, 1)), 0.5, 1),
            Err(Error::UnsortedTrajectory { index: 2 })
        ));
    }

    #[test]
    fn ramp_of_035_emits_three_events_at_crossings() {
        // log intensity rises linearly by 0.35 over 100 samples spanning 1 s
        let samples = 100;
        let traj: Vec<_> = (0..samples)
            .map(|s| {
                let f = s as f64 / (samples - 1) as f64;
                (-0.02 + 0.04 * f, map(array![[(0.35 * f).exp()]]))
            })
            .collect();
        let ev = simulate_event_stream(&traj, &evs_cfg((1, 1)), 0.5, 0).unwrap();
        assert_eq!(ev.len(), 3);
        let spacing = 1.0 / (samples - 1) as f64;
        // direct-scan oracle: first sample whose level reaches each threshold
        for (event, target) in ev.iter().zip([0.1, 0.2, 0.3]) {
            assert_eq!(event.polarity, Polarity::On);
            let crossing = target / 0.35;
            assert!(
                (event.t - crossing).abs() <= spacing,
                "{} vs {}",
                event.t,
                crossing
            );
        }
    }

    #[test]
    fn hysteresis_on_reversal() {
        // up 0.25 then back to 0.12: two ON events then nothing (0.08 < μ)
        let traj = vec![
            (0.0, map(array![[1.0]])),
            (0.01, map(array![[0.25f64.exp()]])),
            (0.02, map(array![[0.12f64.exp()]])),
        ];
        let ev = simulate_event_stream(&traj, &evs_cfg((1, 1)), 0.5, 0).unwrap();
        assert_eq!(ev.iter().map(|e| e.polarity.sign()).sum::<i32>(), 2);
        // then down to 0.05: only the level at 0.1 is crossed below the reference at 0.2
        let traj2 = vec![
            (0.0, map(array![[1.0]])),
            (0.01, map(array![[0.25f64.exp()]])),
            (0.02, map(array![[0.05f64.exp()]])),
        ];
        let ev2 = simulate_event_stream(&traj2, &evs_cfg((1, 1)), 0.5, 0).unwrap();
        assert_eq!(ev2.len(), 3);
        assert_eq!(ev2.iter().map(|e| e.polarity.sign()).sum::<i32>(), 1);
    }

    #[test]
    fn two_sample_stream_matches_plane() {
        let minus = map(array![[1.0, 2.0, 0.3], [5.0, 0.01, 1.0]]);
        let plus = map(array![[3.0, 0.5, 0.3], [5.5, 2.0, 0.2]]);
        let cfg = evs_cfg((2, 3));
        let plane = simulate_event_plane(&minus, &plus, 0.02, 1.0, &cfg, 0).unwrap();
        let ev = simulate_event_stream(&[(-0.02, minus), (0.02, plus)], &cfg, 0.5, 0).unwrap();
        let mut counts = Array2::<i32>::zeros((2, 3));
        for e in &ev {
            counts[[e.y as usize, e.x as usize]] += e.polarity.sign();
        }
        assert_eq!(counts, plane.counts);
    }
}
