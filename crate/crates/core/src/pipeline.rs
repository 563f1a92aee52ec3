//! The four pipeline stages: `synth`, `classify`, `regularize`, `assess`.
//!
//! Output layout under the output directory:
//!
//! ```text
//! scenario/truth.stmr        reference labels (u16)
//! scenario/intensity.stmr    speckled intensity bands (f64)
//! scenario/features.stmr     texture + intensity features fed to the classifier
//! scenario/polygons.csv      run,id,date,class,role,vertices
//! runs/run_XX/samples.csv    polygon,row,col,role
//! runs/run_XX/prob.stmr      class probabilities (f64)
//! runs/run_XX/grid.csv       cross-validation table per date
//! runs/run_XX/models/*.ivm   one classifier per date
//! runs/run_XX/labels_<method>.stmr
//! runs/run_XX/lbp_<method>.csv
//! runs/run_XX/agreement_st-mrf_vs_ivm.stmr   agree flag, st-mrf class
//! reports/accuracy_runs.csv  run,date,method,metric,class,value,ci
//! reports/accuracy.csv       date,method,metric,class,value,ci,run_sd
//! reports/burnt_area.csv     date,method,area_ha,ci,run_sd
//! reports/agreement.csv      run,date,agreement
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::assess::{
    agreement_map, area_adjusted_metrics, error_matrix, multi_run_average, AccuracyReport, ErrorMatrix, Estimate,
    RefSample,
};
use crate::config::{MatrixSource, PipelineConfig};
use crate::energy::{total_energy, MrfProblem};
use crate::error::{Error, Result};
use crate::ivm::{
    grid_search_cv, median_pairwise_distance, predict_proba, train_ivm, write_model, SearchSettings, TrainSet,
};
use crate::lbp::{lbp_layered_sweep, IterStats};
use crate::model::{argmax, argmax_labels, prob_to_energy, FeatureStack, LabelStack, ProbabilityStack, BURNT_PASTURE,
    DEFAULT_PROB_FLOOR};
use crate::raster::{
    read_features, read_labels, read_probabilities, write_features, write_labels, write_probabilities, write_raster,
    Raster, RasterData,
};
use crate::synth::{gaps, generate_polygons, generate_truth_stack, render_features, sample_run, Role, Scenario};
use crate::texture::{texture_feature_stack, NUM_FEATURES};
use crate::transitions::{
    build_tau_pair, default_study_matrix, potts_matrix, read_matrix_csv, tau_pairs_for_gaps, MatrixKind, TauPair,
    TransitionMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ivm,
    SpatialMrf,
    SpatioTemporalMrf,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Ivm, Method::SpatialMrf, Method::SpatioTemporalMrf];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ivm => "ivm",
            Method::SpatialMrf => "s-mrf",
            Method::SpatioTemporalMrf => "st-mrf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown mode '{s}' (expected ivm, s-mrf or st-mrf)")))
    }
}

/// File locations under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn scenario(&self) -> PathBuf {
        self.root.join("scenario")
    }

    pub fn truth(&self) -> PathBuf {
        self.scenario().join("truth.stmr")
    }

    pub fn intensity(&self) -> PathBuf {
        self.scenario().join("intensity.stmr")
    }

    pub fn features(&self) -> PathBuf {
        self.scenario().join("features.stmr")
    }

    pub fn polygons(&self) -> PathBuf {
        self.scenario().join("polygons.csv")
    }

    pub fn run(&self, run: usize) -> PathBuf {
        self.root.join("runs").join(format!("run_{run:02}"))
    }

    pub fn samples(&self, run: usize) -> PathBuf {
        self.run(run).join("samples.csv")
    }

    pub fn probabilities(&self, run: usize) -> PathBuf {
        self.run(run).join("prob.stmr")
    }

    pub fn labels(&self, run: usize, m: Method) -> PathBuf {
        self.run(run).join(format!("labels_{}.stmr", m.name()))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, s: &str) -> Result<()> {
    std::fs::write(p, s).map_err(|e| Error::io(p, e))
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::io(p, e))
}

fn require_dir(root: &Path) -> Result<()> {
    if !root.is_dir() {
        return Err(Error::io(
            root,
            std::io::Error::new(std::io::ErrorKind::NotFound, "output directory does not exist"),
        ));
    }
    Ok(())
}

/// Generates the synthetic scene, reference polygons and per-run samples.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    cmd_synth_scenario(cfg, &cfg.scenario(cfg.seed), out)
}

/// `cmd_synth` for an explicit scenario, e.g. one with custom transitions.
pub fn cmd_synth_scenario(cfg: &PipelineConfig, sc: &Scenario, out: &Path) -> Result<()> {
    require_dir(out)?;
    sc.validate()?;
    if sc.num_classes() != cfg.classes.len() {
        return Err(Error::data(format!(
            "scenario has {} classes but the config names {}",
            sc.num_classes(),
            cfg.classes.len()
        )));
    }
    let lay = Layout::new(out);
    mkdir(&lay.scenario())?;
    let truth = generate_truth_stack(sc)?;
    let intensity = render_features(&truth.labels, sc)?;
    let polys = generate_polygons(&truth, sc)?;
    write_labels(&lay.truth(), &truth.labels, &sc.dates)?;
    write_features(&lay.intensity(), &intensity)?;

    let mut csv = String::from("run,id,date,class,role,vertices\n");
    for run in 0..cfg.runs {
        let s = sample_run(&truth, &polys, sc, run as u32)?;
        if !s.short_polygons.is_empty() {
            let detail: Vec<String> = s.short_polygons.iter().map(|(id, n)| format!("{id}:{n}")).collect();
            log::warn!(
                "run {run}: {} polygon(s) hold fewer than {} spaced samples (id:count {})",
                s.short_polygons.len(),
                sc.polygons.per_poly,
                detail.join(" ")
            );
        }
        for p in &polys {
            let verts: Vec<String> = p.vertices().iter().map(|(r, c)| format!("{r}:{c}")).collect();
            for (t, d) in sc.dates.iter().enumerate() {
                let class = truth.labels.get(t, p.r0, p.c0);
                writeln!(
                    csv,
                    "{run},{},{},{},{},{}",
                    p.id,
                    d.format("%Y-%m-%d"),
                    cfg.classes.name(class as usize),
                    s.roles[p.id as usize].as_str(),
                    verts.join(";")
                )
                .expect("string write");
            }
        }
        mkdir(&lay.run(run))?;
        let mut samples = String::from("polygon,row,col,role\n");
        for pt in &s.points {
            writeln!(samples, "{},{},{},{}", pt.polygon, pt.row, pt.col, pt.role.as_str()).expect("string write");
        }
        write_text(&lay.samples(run), &samples)?;
    }
    write_text(&lay.polygons(), &csv)?;
    log::info!(
        "synth: {}x{} scene, {} dates, {} polygons, {} runs",
        sc.h,
        sc.w,
        sc.dates.len(),
        polys.len(),
        cfg.runs
    );
    Ok(())
}

/// Reference polygons: class per `(run, polygon, date index)` and role per
/// `(run, polygon)`.
struct PolygonTable {
    class: BTreeMap<(usize, u32, usize), u16>,
    role: BTreeMap<(usize, u32), Role>,
}

fn read_polygons(path: &Path, cfg: &PipelineConfig, dates: &[NaiveDate]) -> Result<PolygonTable> {
    let text = read_text(path)?;
    let mut class = BTreeMap::new();
    let mut role = BTreeMap::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| Error::format(path, format!("line {}: {m}", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let run: usize = f[0].parse().map_err(|_| bad("bad run"))?;
        let id: u32 = f[1].parse().map_err(|_| bad("bad polygon id"))?;
        let date = NaiveDate::parse_from_str(f[2], "%Y-%m-%d").map_err(|_| bad("bad date"))?;
        let t = dates.iter().position(|&d| d == date).ok_or_else(|| bad("date not in the stack"))?;
        let c = cfg.classes.index_of(f[3]).ok_or_else(|| bad("unknown class"))?;
        let r = match f[4] {
            "train" => Role::Train,
            "test" => Role::Test,
            _ => return Err(bad("role must be train or test")),
        };
        class.insert((run, id, t), c as u16);
        role.insert((run, id), r);
    }
    Ok(PolygonTable { class, role })
}

#[derive(Debug, Clone, Copy)]
struct Sample {
    polygon: u32,
    row: usize,
    col: usize,
    role: Role,
}

fn read_samples(path: &Path) -> Result<Vec<Sample>> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::format(path, format!("line {}: expected polygon,row,col,role", n + 1));
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad());
        }
        out.push(Sample {
            polygon: f[0].parse().map_err(|_| bad())?,
            row: f[1].parse().map_err(|_| bad())?,
            col: f[2].parse().map_err(|_| bad())?,
            role: match f[3] {
                "train" => Role::Train,
                "test" => Role::Test,
                _ => return Err(bad()),
            },
        });
    }
    Ok(out)
}

/// Texture features of every intensity band followed by the intensities in
/// decibels, per pixel and date.
pub fn classification_features(intensity: &FeatureStack, cfg: &PipelineConfig) -> Result<FeatureStack> {
    let s = intensity.shape();
    let b = intensity.num_features();
    let nf = NUM_FEATURES * b + b;
    let mut values = Vec::with_capacity(s.len() * nf);
    for t in 0..s.t {
        let layer = intensity.layer(t);
        let tex = texture_feature_stack(layer, s.h, s.w, b, &cfg.glcm)?;
        for p in 0..s.layer_len() {
            values.extend_from_slice(&tex[p * NUM_FEATURES * b..(p + 1) * NUM_FEATURES * b]);
            values.extend(layer[p * b..(p + 1) * b].iter().map(|v| 10.0 * v.max(1e-12).log10()));
        }
    }
    FeatureStack::new(s, nf, values, intensity.dates().to_vec())
}

fn training_set(
    feats: &FeatureStack,
    t: usize,
    run: usize,
    samples: &[Sample],
    polys: &PolygonTable,
    role: Role,
) -> Result<(Vec<f64>, Vec<u16>, Vec<u32>)> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut ids = Vec::new();
    for s in samples.iter().filter(|s| s.role == role) {
        if polys.role.get(&(run, s.polygon)) != Some(&s.role) {
            return Err(Error::data(format!(
                "run {run}: sample role disagrees with polygon {}",
                s.polygon
            )));
        }
        let c = *polys
            .class
            .get(&(run, s.polygon, t))
            .ok_or_else(|| Error::data(format!("run {run}: polygon {} has no class at date {t}", s.polygon)))?;
        x.extend_from_slice(feats.pixel(t, s.row, s.col));
        y.push(c);
        ids.push(s.polygon);
    }
    Ok((x, y, ids))
}

fn fmt_date(d: NaiveDate) -> String {
    d.format("%Y-%m-%d").to_string()
}

/// Per-date grid search, training and prediction for every run.
pub fn cmd_classify(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let lay = Layout::new(out);
    let intensity = read_features(&lay.intensity())?;
    let feats = classification_features(&intensity, cfg)?;
    write_features(&lay.features(), &feats)?;
    let dates = feats.dates().to_vec();
    let polys = read_polygons(&lay.polygons(), cfg, &dates)?;
    let k = cfg.classes.len();
    let names = cfg.classes.names().to_vec();

    for run in 0..cfg.runs {
        let samples = read_samples(&lay.samples(run))?;
        let models_dir = lay.run(run).join("models");
        mkdir(&models_dir)?;
        let mut grid_csv = String::from("date,sigma,c,cv_accuracy,chosen\n");
        let mut layers = Vec::with_capacity(dates.len());
        for (t, &date) in dates.iter().enumerate() {
            let (x, y, ids) = training_set(&feats, t, run, &samples, &polys, Role::Train)?;
            if y.is_empty() {
                return Err(Error::data(format!("run {run}, {date}: no training samples")));
            }
            let train = TrainSet::new(feats.num_features(), x, y, ids)?;
            let med = median_pairwise_distance(&train);
            let sigmas: Vec<f64> = cfg.ivm.sigma_scales.iter().map(|s| s * med).collect();
            let seed = cfg.seed ^ ((run as u64) << 32) ^ t as u64;
            let settings = SearchSettings {
                folds: cfg.ivm.folds,
                max_import: cfg.ivm.max_import,
                tol: cfg.ivm.tol,
                params: crate::ivm::IvmParams {
                    seed,
                    ..cfg.ivm.params.clone()
                },
                seed,
            };
            let grid = grid_search_cv(&train, &sigmas, &cfg.ivm.c_grid, &settings, &names)?;
            for &(s, c, a) in &grid.table {
                let chosen = s == grid.sigma && c == grid.c;
                writeln!(grid_csv, "{},{s},{c},{a},{chosen}", fmt_date(date)).expect("string write");
            }
            let model = train_ivm(&train, grid.sigma, grid.c, cfg.ivm.max_import, cfg.ivm.tol, &settings.params, k)?;
            let mut p = vec![0.0; k];
            let correct = (0..train.len())
                .filter(|&i| {
                    model.predict_one(train.sample(i), &mut p).expect("feature count matches");
                    argmax(&p) == train.labels()[i] as usize
                })
                .count();
            log::info!(
                "run {run}, {date}: sigma={:.4} C={} cv={:.3} train_acc={:.3} import={}",
                grid.sigma,
                grid.c,
                grid.accuracy,
                correct as f64 / train.len() as f64,
                model.num_import()
            );
            write_model(&model, &models_dir.join(format!("{}.ivm", fmt_date(date))))?;
            layers.push(predict_proba(&model, &feats.date_slice(t))?);
        }
        let probs = ProbabilityStack::concat(layers)?;
        write_probabilities(&lay.probabilities(run), &probs, &dates)?;
        write_text(&lay.run(run).join("grid.csv"), &grid_csv)?;
    }
    Ok(())
}

fn load_matrix(src: &MatrixSource, cfg: &PipelineConfig, builtin: impl FnOnce() -> Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    match src {
        MatrixSource::Builtin => Ok(builtin()),
        MatrixSource::File(p) => read_matrix_csv(p, &cfg.classes),
    }
}

/// Spatial compatibility matrix and per-gap temporal pairs of the config.
pub fn mrf_matrices(cfg: &PipelineConfig, dates: &[NaiveDate]) -> Result<(TransitionMatrix, Vec<TauPair>)> {
    let k = cfg.classes.len();
    let delta_rows = load_matrix(&cfg.mrf.delta, cfg, || potts_matrix(k).expect("k >= 1").rows())?;
    let delta = TransitionMatrix::from_rows(&delta_rows, MatrixKind::Spatial, None)?;
    let forward_rows = load_matrix(&cfg.mrf.forward, cfg, default_study_matrix)?;
    let forward = TransitionMatrix::from_rows(&forward_rows, MatrixKind::TemporalForward, Some(cfg.mrf.base_gap))?;
    let taus = tau_pairs_for_gaps(&forward, &gaps(dates)?, cfg.mrf.base_gap)?;
    Ok((delta, taus))
}

/// The MRF problem a method optimizes, or `None` for the plain classifier.
pub fn method_problem(
    cfg: &PipelineConfig,
    probs: &ProbabilityStack,
    dates: &[NaiveDate],
    m: Method,
) -> Result<Option<MrfProblem>> {
    let unary = prob_to_energy(probs, DEFAULT_PROB_FLOOR)?;
    let k = probs.num_classes();
    match m {
        Method::Ivm => Ok(None),
        Method::SpatialMrf => {
            let (delta, _) = mrf_matrices(cfg, dates)?;
            let identity: Vec<Vec<f64>> = (0..k).map(|a| (0..k).map(|b| f64::from(u8::from(a == b))).collect()).collect();
            let taus = (1..dates.len()).map(|_| build_tau_pair(&identity)).collect::<Result<Vec<_>>>()?;
            Ok(Some(MrfProblem::new(unary, delta, taus, cfg.mrf.beta_sp, 0.0)?))
        }
        Method::SpatioTemporalMrf => {
            let (delta, taus) = mrf_matrices(cfg, dates)?;
            Ok(Some(MrfProblem::new(unary, delta, taus, cfg.mrf.beta_sp, cfg.mrf.beta_temp)?))
        }
    }
}

/// Labels of one method from class probabilities, with the LBP trace.
pub fn regularize(
    cfg: &PipelineConfig,
    probs: &ProbabilityStack,
    dates: &[NaiveDate],
    m: Method,
) -> Result<(LabelStack, Vec<IterStats>)> {
    match method_problem(cfg, probs, dates, m)? {
        None => Ok((argmax_labels(probs), Vec::new())),
        Some(prob) => {
            let out = lbp_layered_sweep(&prob, &cfg.lbp)?;
            log::info!(
                "{}: {} iterations, converged={}, energy={:.4}",
                m.name(),
                out.iters,
                out.converged,
                total_energy(&out.labels, &prob)?
            );
            Ok((out.labels, out.trace))
        }
    }
}

pub fn cmd_regularize(cfg: &PipelineConfig, out: &Path, m: Method) -> Result<()> {
    let lay = Layout::new(out);
    for run in 0..cfg.runs {
        let (probs, dates) = read_probabilities(&lay.probabilities(run))?;
        if dates.len() != probs.shape().t {
            return Err(Error::format(lay.probabilities(run), "probability raster has no date list"));
        }
        let (labels, trace) = regularize(cfg, &probs, &dates, m)?;
        write_labels(&lay.labels(run, m), &labels, &dates)?;
        if m != Method::Ivm {
            let mut csv = String::from("iter,energy,changed_frac\n");
            trace.iter().for_each(|s| writeln!(csv, "{s}").expect("string write"));
            write_text(&lay.run(run).join(format!("lbp_{}.csv", m.name())), &csv)?;
        }
    }
    Ok(())
}

/// Mean area-adjusted overall accuracy per method over all dates and runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AssessSummary {
    pub mean_oa: BTreeMap<Method, f64>,
    /// `[method][date]` averaged reports.
    pub averaged: BTreeMap<Method, Vec<AccuracyReport>>,
}

/// Error matrix of one date with strata that have map area but no test
/// samples removed and the remaining weights renormalized.
fn assessable_matrix(e: ErrorMatrix, context: &str) -> Result<ErrorMatrix> {
    let mut w = e.weights().to_vec();
    let mut dropped = Vec::new();
    for (i, wi) in w.iter_mut().enumerate() {
        if *wi > 0.0 && e.row_total(i) == 0 {
            dropped.push(i);
            *wi = 0.0;
        }
    }
    if dropped.is_empty() {
        return Ok(e);
    }
    let s: f64 = w.iter().sum();
    if s <= 0.0 {
        return Err(Error::data(format!("{context}: no stratum has test samples")));
    }
    log::info!("{context}: mapped classes {dropped:?} have no test samples; their strata are left out");
    e.with_weights(w.iter().map(|v| v / s).collect())
}

pub fn cmd_assess(cfg: &PipelineConfig, out: &Path) -> Result<AssessSummary> {
    let lay = Layout::new(out);
    mkdir(&lay.reports())?;
    let k = cfg.classes.len();
    let mut methods = Vec::new();
    for m in Method::ALL {
        if lay.labels(0, m).is_file() {
            methods.push(m);
        }
    }
    if methods.is_empty() {
        return Err(Error::data(format!("no label rasters under {}", lay.run(0).display())));
    }
    let (first, dates) = read_labels(&lay.labels(0, methods[0]), k)?;
    let shape = first.shape();
    let polys = read_polygons(&lay.polygons(), cfg, &dates)?;

    let mut per_run: BTreeMap<(Method, usize), Vec<AccuracyReport>> = BTreeMap::new();
    let mut runs_csv = String::from("run,date,method,metric,class,value,ci\n");
    let mut agree_csv = String::from("run,date,agreement\n");
    for run in 0..cfg.runs {
        let samples = read_samples(&lay.samples(run))?;
        let mut maps = BTreeMap::new();
        for &m in &methods {
            let (l, _) = read_labels(&lay.labels(run, m), k)?;
            if l.shape() != shape {
                return Err(Error::data(format!("run {run}: {} labels differ in shape", m.name())));
            }
            maps.insert(m, l);
        }
        for (t, &date) in dates.iter().enumerate() {
            let refs: Vec<RefSample> = samples
                .iter()
                .filter(|s| s.role == Role::Test)
                .map(|s| {
                    polys
                        .class
                        .get(&(run, s.polygon, t))
                        .map(|&class| RefSample { row: s.row, col: s.col, class })
                        .ok_or_else(|| Error::data(format!("polygon {} has no class at {date}", s.polygon)))
                })
                .collect::<Result<_>>()?;
            if refs.is_empty() {
                return Err(Error::data(format!("run {run}, {date}: empty test set")));
            }
            for &m in &methods {
                let context = format!("run {run}, {date}, {}", m.name());
                let e = assessable_matrix(error_matrix(&maps[&m], t, &refs)?, &context)?;
                let r = area_adjusted_metrics(&e)?;
                write_report_rows(&mut runs_csv, &format!("{run},{}", fmt_date(date)), m, &r, cfg, false);
                per_run.entry((m, t)).or_default().push(r);
            }
            if let (Some(st), Some(ivm)) = (maps.get(&Method::SpatioTemporalMrf), maps.get(&Method::Ivm)) {
                let a = agreement_map(ivm, st, t)?;
                let frac = a.iter().filter(|r| r.0).count() as f64 / a.len() as f64;
                writeln!(agree_csv, "{run},{},{frac}", fmt_date(date)).expect("string write");
            }
        }
        if let (Some(st), Some(ivm)) = (maps.get(&Method::SpatioTemporalMrf), maps.get(&Method::Ivm)) {
            let mut data = Vec::with_capacity(shape.len() * 2);
            for t in 0..shape.t {
                for (flag, class) in agreement_map(ivm, st, t)? {
                    data.push(u16::from(flag));
                    data.push(class);
                }
            }
            write_raster(
                &lay.run(run).join("agreement_st-mrf_vs_ivm.stmr"),
                &Raster {
                    shape,
                    channels: 2,
                    data: RasterData::U16(data),
                    dates: dates.clone(),
                },
            )?;
        }
    }

    let mut mean_csv = String::from("date,method,metric,class,value,ci,run_sd\n");
    let mut burnt_csv = String::from("date,method,area_ha,ci,run_sd\n");
    let total_ha = shape.layer_len() as f64 * cfg.pixel_area_ha;
    let mut summary = AssessSummary {
        mean_oa: BTreeMap::new(),
        averaged: BTreeMap::new(),
    };
    for &m in &methods {
        let mut oa_sum = 0.0;
        let mut avgs = Vec::new();
        for (t, &date) in dates.iter().enumerate() {
            let reports = &per_run[&(m, t)];
            let avg = multi_run_average(reports)?;
            oa_sum += avg.overall.value;
            write_report_rows(&mut mean_csv, &fmt_date(date), m, &avg, cfg, true);
            let b = avg.area[BURNT_PASTURE];
            writeln!(
                burnt_csv,
                "{},{},{},{},{}",
                fmt_date(date),
                m.name(),
                b.value * total_ha,
                b.ci * total_ha,
                b.run_sd * total_ha
            )
            .expect("string write");
            avgs.push(avg);
        }
        summary.mean_oa.insert(m, oa_sum / dates.len() as f64);
        summary.averaged.insert(m, avgs);
    }
    write_text(&lay.reports().join("accuracy_runs.csv"), &runs_csv)?;
    write_text(&lay.reports().join("accuracy.csv"), &mean_csv)?;
    write_text(&lay.reports().join("burnt_area.csv"), &burnt_csv)?;
    write_text(&lay.reports().join("agreement.csv"), &agree_csv)?;
    for (m, oa) in &summary.mean_oa {
        log::info!("{}: mean area-adjusted OA {:.4}", m.name(), oa);
    }
    Ok(summary)
}

fn push_row(csv: &mut String, prefix: &str, m: Method, metric: &str, class: &str, e: Option<&Estimate>, sd: bool) {
    let (name, na) = (m.name(), "NA");
    match (e, sd) {
        (Some(e), false) => writeln!(csv, "{prefix},{name},{metric},{class},{},{}", e.value, e.ci),
        (Some(e), true) => writeln!(csv, "{prefix},{name},{metric},{class},{},{},{}", e.value, e.ci, e.run_sd),
        (None, false) => writeln!(csv, "{prefix},{name},{metric},{class},{na},{na}"),
        (None, true) => writeln!(csv, "{prefix},{name},{metric},{class},{na},{na},{na}"),
    }
    .expect("string write");
}

/// Overall accuracy plus user's, producer's and area rows for every class;
/// undefined accuracies are written as `NA`.
fn write_report_rows(csv: &mut String, prefix: &str, m: Method, r: &AccuracyReport, cfg: &PipelineConfig, sd: bool) {
    push_row(csv, prefix, m, "oa", "all", Some(&r.overall), sd);
    for c in 0..r.num_classes() {
        let name = cfg.classes.name(c);
        push_row(csv, prefix, m, "ua", name, r.user[c].as_ref(), sd);
        push_row(csv, prefix, m, "pa", name, r.producer[c].as_ref(), sd);
        push_row(csv, prefix, m, "area", name, Some(&r.area[c]), sd);
    }
}

/// All four stages with every regularization mode.
pub fn run_all(cfg: &PipelineConfig, out: &Path) -> Result<AssessSummary> {
    cmd_synth(cfg, out)?;
    cmd_classify(cfg, out)?;
    for m in Method::ALL {
        cmd_regularize(cfg, out, m)?;
    }
    cmd_assess(cfg, out)
}
