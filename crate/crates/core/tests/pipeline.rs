use std::path::{Path, PathBuf};

use stmrf::config::{MatrixSource, PipelineConfig};
use stmrf::energy::total_energy;
use stmrf::ivm::read_model;
use stmrf::model::{argmax, argmax_labels, BURNT_PASTURE, CLEAN_PASTURE};
use stmrf::pipeline::{
    cmd_assess, cmd_classify, cmd_regularize, cmd_synth, cmd_synth_scenario, method_problem, regularize, run_all,
    Layout, Method,
};
use stmrf::raster::{read_features, read_labels, read_probabilities, write_labels};
use stmrf::synth::Appearance;
use stmrf::Error;

fn small_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.scenario.height = 48;
    cfg.scenario.width = 48;
    cfg.scenario.patches = 24;
    cfg.scenario.polygons.count = 24;
    cfg.ivm.folds = 2;
    cfg.ivm.c_grid = vec![10.0];
    cfg.ivm.sigma_scales = vec![1.0];
    cfg.ivm.max_import = 12;
    cfg.runs = 2;
    cfg.seed = 5;
    cfg
}

fn files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn rerun_is_identical_and_reports_are_structural() {
    let cfg = small_config();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_all(&cfg, a.path()).unwrap();
    run_all(&cfg, b.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));

    let lay = Layout::new(a.path());
    let t = cfg.scenario.dates.len();
    let metrics = 1 + 3 * cfg.classes.len();
    let mean = csv_rows(&lay.reports().join("accuracy.csv"));
    assert_eq!(mean.len(), t * Method::ALL.len() * metrics);
    let per_run = csv_rows(&lay.reports().join("accuracy_runs.csv"));
    assert_eq!(per_run.len(), cfg.runs * t * Method::ALL.len() * metrics);
    assert_eq!(csv_rows(&lay.reports().join("burnt_area.csv")).len(), t * Method::ALL.len());

    for run in 0..cfg.runs {
        let (p, dates) = read_probabilities(&lay.probabilities(run)).unwrap();
        assert_eq!(dates, cfg.scenario.dates);
        for px in p.values().chunks(cfg.classes.len()) {
            assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn classifier_and_spatial_modes_relate() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&cfg, dir.path()).unwrap();
    cmd_classify(&cfg, dir.path()).unwrap();
    let lay = Layout::new(dir.path());
    let (p, dates) = read_probabilities(&lay.probabilities(0)).unwrap();
    let (ivm, trace) = regularize(&cfg, &p, &dates, Method::Ivm).unwrap();
    assert_eq!(ivm, argmax_labels(&p));
    assert!(trace.is_empty());

    let mut flat = cfg.clone();
    flat.mrf.beta_sp = 0.0;
    let (s, _) = regularize(&flat, &p, &dates, Method::SpatialMrf).unwrap();
    assert_eq!(s, ivm);

    cmd_regularize(&cfg, dir.path(), Method::SpatialMrf).unwrap();
    let log = std::fs::read_to_string(lay.run(0).join("lbp_s-mrf.csv")).unwrap();
    assert!(log.starts_with("iter,energy,changed_frac\n"));
    assert!(log.lines().count() > 1);
}

#[test]
fn spatio_temporal_mode_lowers_its_energy_on_the_default_scene() {
    let cfg = PipelineConfig {
        runs: 1,
        ..PipelineConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&cfg, dir.path()).unwrap();
    cmd_classify(&cfg, dir.path()).unwrap();
    let (p, dates) = read_probabilities(&Layout::new(dir.path()).probabilities(0)).unwrap();
    let (st, _) = regularize(&cfg, &p, &dates, Method::SpatioTemporalMrf).unwrap();
    let (sp, _) = regularize(&cfg, &p, &dates, Method::SpatialMrf).unwrap();
    assert!(st.changed_fraction(&sp) > 0.0);
    let prob = method_problem(&cfg, &p, &dates, Method::SpatioTemporalMrf).unwrap().unwrap();
    assert!(total_energy(&st, &prob).unwrap() < total_energy(&sp, &prob).unwrap());
}

#[test]
fn separable_scene_is_learned_on_the_training_samples() {
    let mut cfg = PipelineConfig {
        runs: 1,
        ..PipelineConfig::default()
    };
    cfg.scenario.looks = None;
    let dir = tempfile::tempdir().unwrap();
    let mut sc = cfg.scenario(cfg.seed);
    for (c, a) in sc.appearance.iter_mut().enumerate() {
        *a = Appearance {
            mean: vec![0.1 + 0.2 * c as f64, 0.9 - 0.15 * c as f64],
            cov: vec![1e-6, 0.0, 0.0, 1e-6],
        };
    }
    cmd_synth_scenario(&cfg, &sc, dir.path()).unwrap();
    cmd_classify(&cfg, dir.path()).unwrap();
    let lay = Layout::new(dir.path());
    let feats = read_features(&lay.features()).unwrap();
    let (truth, _) = read_labels(&lay.truth(), cfg.classes.len()).unwrap();
    let samples = csv_rows(&lay.samples(0));
    for (t, date) in cfg.scenario.dates.iter().enumerate() {
        let model = read_model(&lay.run(0).join("models").join(format!("{date}.ivm"))).unwrap();
        let mut p = vec![0.0; cfg.classes.len()];
        let (mut hit, mut n) = (0, 0);
        for s in samples.iter().filter(|s| s[3] == "train") {
            let (r, c): (usize, usize) = (s[1].parse().unwrap(), s[2].parse().unwrap());
            model.predict_one(feats.pixel(t, r, c), &mut p).unwrap();
            hit += usize::from(argmax(&p) == truth.get(t, r, c) as usize);
            n += 1;
        }
        let acc = hit as f64 / n as f64;
        assert!(acc >= 0.95, "{date}: training accuracy {acc}");
    }
}

#[test]
fn perfect_maps_score_one_and_burns_accumulate() {
    let cfg = small_config();
    let mut sc = cfg.scenario(cfg.seed);
    // burns are permanent and may start at once
    sc.transition[BURNT_PASTURE] = vec![1.0, 0.0, 0.0, 0.0, 0.0];
    sc.transition[CLEAN_PASTURE] = vec![0.2, 0.8, 0.0, 0.0, 0.0];
    sc.burn_start = None;
    let dir = tempfile::tempdir().unwrap();
    cmd_synth_scenario(&cfg, &sc, dir.path()).unwrap();
    let lay = Layout::new(dir.path());
    let (truth, dates) = read_labels(&lay.truth(), cfg.classes.len()).unwrap();
    for run in 0..cfg.runs {
        for m in Method::ALL {
            write_labels(&lay.labels(run, m), &truth, &dates).unwrap();
        }
    }
    let summary = cmd_assess(&cfg, dir.path()).unwrap();
    for m in Method::ALL {
        for r in &summary.averaged[&m] {
            assert_eq!(r.overall.value, 1.0);
        }
    }
    let burnt = csv_rows(&lay.reports().join("burnt_area.csv"));
    for m in Method::ALL {
        let series: Vec<f64> = burnt.iter().filter(|r| r[1] == m.name()).map(|r| r[2].parse().unwrap()).collect();
        assert_eq!(series.len(), dates.len());
        assert!(series.windows(2).all(|w| w[1] >= w[0]), "{series:?}");
        assert!(series.last().unwrap() > series.first().unwrap());
    }
}

#[test]
fn empty_test_set_is_rejected() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&cfg, dir.path()).unwrap();
    let lay = Layout::new(dir.path());
    let text = std::fs::read_to_string(lay.samples(0)).unwrap();
    let kept: Vec<&str> = text.lines().filter(|l| !l.ends_with(",test")).collect();
    std::fs::write(lay.samples(0), kept.join("\n")).unwrap();
    let (truth, dates) = read_labels(&lay.truth(), cfg.classes.len()).unwrap();
    for run in 0..cfg.runs {
        write_labels(&lay.labels(run, Method::Ivm), &truth, &dates).unwrap();
    }
    let err = cmd_assess(&cfg, dir.path()).unwrap_err();
    assert!(matches!(err, Error::Data(_)));
    assert!(err.to_string().contains("empty test set"), "{err}");
}

#[test]
fn missing_inputs_fail() {
    let cfg = small_config();
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("absent");
    assert!(matches!(cmd_synth(&cfg, &missing), Err(Error::Io { .. })));

    cmd_synth(&cfg, dir.path()).unwrap();
    cmd_classify(&cfg, dir.path()).unwrap();
    let mut bad = cfg.clone();
    bad.mrf.forward = MatrixSource::File(dir.path().join("forward.csv"));
    assert!(cmd_regularize(&bad, dir.path(), Method::SpatioTemporalMrf).is_err());
    assert!(bad.validate().is_err());
}
