use ndarray::{array, Array2};
use phasetie::sensor::log_linear_trajectory;
use phasetie::{
    simulate_event_plane, simulate_event_stream, simulate_frame, EvsConfig, FrameSensorConfig,
    IntensityMap64, Plane,
};
use proptest::prelude::*;

const PITCH: f64 = 6.4e-6;

fn map(values: Array2<f64>, plane: Plane) -> IntensityMap64 {
    IntensityMap64::new(values, PITCH, plane).unwrap()
}

fn quiet_evs(shape: (usize, usize)) -> EvsConfig<f64> {
    EvsConfig {
        resolution: shape,
        ..EvsConfig::default()
    }
    .noise_free()
}

fn grid_from(values: &[f64], shape: (usize, usize)) -> Array2<f64> {
    Array2::from_shape_fn(shape, |(r, c)| values[(r * shape.1 + c) % values.len()])
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let shape = (37, 23);
    let ideal = map(
        Array2::from_shape_fn(shape, |(r, c)| (r + 2 * c) as f64 * 0.3),
        Plane::Minus,
    );
    let other = map(
        Array2::from_shape_fn(shape, |(r, c)| (3 * r + c) as f64 * 0.2 + 0.05),
        Plane::Plus,
    );
    let frame_cfg = FrameSensorConfig {
        resolution: shape,
        ..FrameSensorConfig::default()
    };
    let evs_cfg = EvsConfig {
        resolution: shape,
        ..EvsConfig::default()
    };
    let run = || {
        (
            simulate_frame(&ideal, &frame_cfg, 9).unwrap(),
            simulate_event_plane(&ideal, &other, 0.02, 1.0, &evs_cfg, 9).unwrap(),
        )
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(run);
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap()
        .install(run);
    assert_eq!(single, many);
}

#[test]
fn truncation_example_stops_at_five() {
    let minus = map(array![[1.0]], Plane::Minus);
    let plus = map(array![[0.55f64.exp()]], Plane::Plus);
    let plane = simulate_event_plane(&minus, &plus, 0.02, 1.0, &quiet_evs((1, 1)), 0).unwrap();
    assert_eq!(plane.counts[[0, 0]], 5);
    // the stepwise oracle on a fine ramp agrees
    let traj = log_linear_trajectory(&minus, &plus, 0.02, 200, 0.1).unwrap();
    let events = simulate_event_stream(&traj, &quiet_evs((1, 1)), 0.5, 0).unwrap();
    assert_eq!(events.len(), 5);
}

// E[trunc(L/μ')] with μ' ~ N(μ, σ²) conditioned on μ' > 0, by trapezoidal
// integration of the density.
fn expected_count(log_ratio: f64, mu: f64, sigma: f64) -> f64 {
    let steps = 2_000_000;
    let hi = mu + 12.0 * sigma;
    let h = hi / steps as f64;
    let density = |m: f64| (-0.5 * ((m - mu) / sigma).powi(2)).exp();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..steps {
        let m = i as f64 * h;
        let w = density(m);
        num += w * (log_ratio / m).trunc();
        den += w;
    }
    num / den
}

#[test]
fn fluctuating_threshold_mean_matches_expectation() {
    let log_ratio: f64 = 0.47;
    let cfg = EvsConfig {
        resolution: (1, 1),
        enable_poisson: false,
        ..EvsConfig::default()
    };
    let minus = map(array![[1.0]], Plane::Minus);
    let plus = map(array![[log_ratio.exp()]], Plane::Plus);
    let n = 10_000;
    let counts: Vec<f64> = (0..n)
        .map(|seed| {
            simulate_event_plane(&minus, &plus, 0.02, 1.0, &cfg, seed)
                .unwrap()
                .counts[[0, 0]] as f64
        })
        .collect();
    let mean = counts.iter().sum::<f64>() / n as f64;
    let var = counts.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let expected = expected_count(log_ratio, 0.1, 0.03);
    assert!(
        (mean - expected).abs() < 3.0 * se,
        "mean {mean} expected {expected} se {se}"
    );
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_are_monotone_in_end_intensity(
        a in 0.01f64..50.0,
        b in 0.01f64..50.0,
        bump in 0.0f64..20.0,
    ) {
        let cfg = quiet_evs((1, 1));
        let minus = map(array![[a]], Plane::Minus);
        let low = simulate_event_plane(&minus, &map(array![[b]], Plane::Plus), 0.02, 1.0, &cfg, 0).unwrap();
        let high = simulate_event_plane(&minus, &map(array![[b + bump]], Plane::Plus), 0.02, 1.0, &cfg, 0).unwrap();
        prop_assert!(high.counts[[0, 0]] >= low.counts[[0, 0]]);
    }

    #[test]
    fn counts_ignore_common_scale(
        values in proptest::collection::vec((0.2f64..40.0, 0.2f64..40.0), 30),
        alpha in 0.5f64..8.0,
    ) {
        let shape = (5, 6);
        let cfg = quiet_evs(shape);
        let a = grid_from(&values.iter().map(|v| v.0).collect::<Vec<_>>(), shape);
        let b = grid_from(&values.iter().map(|v| v.1).collect::<Vec<_>>(), shape);
        let base = simulate_event_plane(&map(a.clone(), Plane::Minus), &map(b.clone(), Plane::Plus), 0.02, 1.0, &cfg, 0).unwrap();
        let scaled = simulate_event_plane(
            &map(a * alpha, Plane::Minus),
            &map(b * alpha, Plane::Plus),
            0.02,
            1.0,
            &cfg,
            0,
        )
        .unwrap();
        prop_assert_eq!(base.counts, scaled.counts);
    }

    #[test]
    fn fine_monotone_stream_matches_plane(
        values in proptest::collection::vec((0.01f64..40.0, 0.01f64..40.0), 24),
        samples in 64usize..100,
    ) {
        let shape = (4, 6);
        let cfg = quiet_evs(shape);
        let minus = map(grid_from(&values.iter().map(|v| v.0).collect::<Vec<_>>(), shape), Plane::Minus);
        let plus = map(grid_from(&values.iter().map(|v| v.1).collect::<Vec<_>>(), shape), Plane::Plus);
        let plane = simulate_event_plane(&minus, &plus, 0.02, 1.0, &cfg, 0).unwrap();
        let traj = log_linear_trajectory(&minus, &plus, 0.02, samples, cfg.min_measurable).unwrap();
        let events = simulate_event_stream(&traj, &cfg, 0.5, 0).unwrap();
        let mut counts = Array2::<i32>::zeros(shape);
        for e in &events {
            prop_assert!((0.0..=1.0).contains(&e.t));
            counts[[e.y as usize, e.x as usize]] += e.polarity.sign();
        }
        prop_assert_eq!(counts, plane.counts);
    }

    #[test]
    fn frame_values_are_quantized_and_bounded(
        values in proptest::collection::vec(0.0f64..5000.0, 20),
        seed in any::<u64>(),
    ) {
        let shape = (4, 5);
        let cfg = FrameSensorConfig { resolution: shape, ..FrameSensorConfig::default() };
        let out = simulate_frame(&map(grid_from(&values, shape), Plane::Focus), &cfg, seed).unwrap();
        for v in out.values().iter() {
            prop_assert!(*v == 0.0 || (*v >= 1.0 && *v <= 3350.0));
            prop_assert_eq!(v.fract(), 0.0);
        }
    }
}
