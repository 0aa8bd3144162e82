use std::fs;
use std::path::Path;

use phasetie::{accumulate, write_event_csv, EventStream};
use phasetie_harness::config::{ExperimentConfig, Method, MethodSet, Target};
use phasetie_harness::pipeline::{
    retrieve_from_stream, run_delta_sweep, run_from_events, run_intensity_sweep, run_single, Scene,
};
use phasetie_harness::{HarnessError, ACCEPTABLE_RMSE};

// A coarse 128² grid spanning the same 3.4 mm aperture.
fn small(dir: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_text(
        "grid.rows = 128\ngrid.cols = 128\ngrid.pitch = 27e-6\noptics.pupil_diameter = 3.2e-3\n",
    )
    .unwrap();
    cfg.output_dir = dir.to_path_buf();
    cfg.previews = false;
    cfg
}

#[test]
fn same_seed_gives_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        let mut cfg = small(dir.path());
        cfg.seed = 7;
        cfg.previews = true;
        run_single(&cfg).unwrap();
    }
    let mut names: Vec<_> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 10, "{names:?}");
    for name in names {
        assert_eq!(
            fs::read(a.path().join(&name)).unwrap(),
            fs::read(b.path().join(&name)).unwrap(),
            "{name:?}"
        );
    }
}

#[test]
fn unaberrated_target_gives_no_events_and_flat_phase() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.target = Target::Preset("zero".into());
    cfg.noise_free = true;
    cfg.method = MethodSet::Tee;
    let out = run_single(&cfg).unwrap();
    let run = &out.runs[0];
    assert_eq!(run.method, Method::Tee);
    assert!(run.derivative.values.iter().all(|v| *v == 0.0));
    assert!(run.rmse < 1e-12, "{}", run.rmse);
}

#[test]
fn single_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let out = run_single(&cfg).unwrap();
    assert_eq!(out.runs.len(), 2);
    assert_eq!(out.reports.len(), 2);
    for name in [
        "phase_true.phr",
        "phase_tie.phr",
        "phase_tee.phr",
        "derivative_tie.phr",
        "derivative_tee.phr",
        "report.csv",
        "weights.csv",
        "report.jsonl",
    ] {
        assert!(dir.path().join(name).is_file(), "{name}");
    }
    let echo = &out.reports[1].config_echo;
    assert_eq!(echo["method"], "tee");
    assert_eq!(echo["target"], "phase0");
}

#[test]
fn sweep_cells_reproduce_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.intensity_levels = vec![2.0];
    cfg.seeds = vec![3];
    cfg.sweep_phases = vec!["phase1".into()];
    let sweep = run_intensity_sweep(&cfg).unwrap();
    assert_eq!(sweep.means.len(), 2);
    assert_eq!(sweep.rows.len(), 2);

    cfg.target = Target::Preset("phase1".into());
    cfg.seed = 3;
    cfg.intensity = 2.0;
    let single = run_single(&cfg).unwrap();
    for run in &single.runs {
        let row = sweep
            .rows
            .iter()
            .find(|r| r.method == run.method.name())
            .unwrap();
        assert_eq!(row.rmse, run.rmse);
        assert_eq!(row.c_used, run.regularization);
    }

    cfg.two_delta_grid = vec![0.04];
    cfg.seeds = vec![3];
    cfg.delta_sweep_intensity = 2.0;
    let delta = run_delta_sweep(&cfg).unwrap();
    let tee = single
        .runs
        .iter()
        .find(|r| r.method == Method::Tee)
        .unwrap();
    assert_eq!(delta.rows.len(), 1);
    assert_eq!(delta.rows[0].rmse, tee.rmse);
    let last = delta.means.last().unwrap();
    assert_eq!((last.label, last.rmse), ("acceptable", ACCEPTABLE_RMSE));
}

#[test]
fn empty_event_file_gives_zero_phase() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "t,x,y,p\n").unwrap();
    let mut cfg = small(dir.path());
    cfg.events.path = Some(path);
    cfg.pinned_c = Some(1e-3);
    let out = run_from_events(&cfg).unwrap();
    assert!(out.stream.is_empty());
    assert!(out.phase.values.iter().all(|v| *v == 0.0));
    assert!(out.report.is_none());
    assert!(dir.path().join("phase_events.phr").is_file());
}

#[test]
fn event_retrieval_needs_pinned_constant() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    fs::write(&path, "").unwrap();
    let mut cfg = small(dir.path());
    cfg.events.path = Some(path);
    match run_from_events(&cfg) {
        Err(HarnessError::Config { key, .. }) => assert_eq!(key, "solve.C"),
        other => panic!("{:?}", other.map(|_| ())),
    }
}

#[test]
fn malformed_event_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "t,x,y,p\n10,1,2,1\n20,1,oops,0\n").unwrap();
    let mut cfg = small(dir.path());
    cfg.events.path = Some(path);
    cfg.pinned_c = Some(1e-3);
    let err = run_from_events(&cfg).err().unwrap();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("line 3"), "{err}");
}

#[test]
fn sub_windows_add_up_to_full_window() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.noise_free = true;
    cfg.pinned_c = Some(1e-3);
    let scene = Scene::new(&cfg).unwrap();
    let target = scene.prepare_target().unwrap();
    let records = scene.event_stream(&target, 2.0, 0).unwrap();
    assert!(!records.is_empty());
    let stream = EventStream::new(records, cfg.resolution).unwrap();
    let full = accumulate(&stream, (0.0, f64::INFINITY), 0.1, 0.02).unwrap();
    let early = accumulate(&stream, (0.0, 0.4), 0.1, 0.02).unwrap();
    let late = accumulate(&stream, (0.4, f64::INFINITY), 0.1, 0.02).unwrap();
    assert_eq!(full.counts, &early.counts + &late.counts);
    assert!(early.counts.iter().any(|c| *c != 0) && late.counts.iter().any(|c| *c != 0));

    cfg.events.t_end = 0.4;
    let (_, d_early) = retrieve_from_stream(&cfg, &stream).unwrap();
    cfg.events.t_start = 0.4;
    cfg.events.t_end = f64::INFINITY;
    let (_, d_late) = retrieve_from_stream(&cfg, &stream).unwrap();
    cfg.events.t_start = 0.0;
    let (_, d_full) = retrieve_from_stream(&cfg, &stream).unwrap();
    for ((a, b), f) in d_early
        .values
        .iter()
        .zip(d_late.values.iter())
        .zip(d_full.values.iter())
    {
        assert!((a + b - f).abs() <= 1e-9 * f.abs().max(1.0));
    }
}

#[test]
fn recorded_phase0_stream_is_retrieved_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("phase0.csv");
    let mut cfg = ExperimentConfig {
        output_dir: dir.path().to_path_buf(),
        previews: false,
        noise_free: true,
        ..ExperimentConfig::default()
    };
    let scene = Scene::new(&cfg).unwrap();
    let records = scene
        .event_stream(&scene.prepare_target().unwrap(), 2.0, 0)
        .unwrap();
    write_event_csv(fs::File::create(&path).unwrap(), &records).unwrap();

    cfg.events.path = Some(path);
    cfg.events.reference = Some("phase0".into());
    cfg.pinned_c = Some(1e-3);
    let out = run_from_events(&cfg).unwrap();
    assert_eq!(out.stream.len(), records.len());
    let report = out.report.unwrap();
    assert!(report.rmse < ACCEPTABLE_RMSE, "{}", report.rmse);
    assert!(dir.path().join("report_events.jsonl").is_file());
}
