//! Synthetic multi-temporal scenes: a patch mosaic whose classes evolve as a
//! Markov chain, speckled intensity rendering, and reference polygons with
//! spaced point sampling.

use chrono::NaiveDate;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{
    FeatureStack, LabelStack, Shape, BURNT_PASTURE, CLEAN_PASTURE, FOREST, SHRUBBY_PASTURE, STUDY_CLASSES, WATER,
};

/// Random streams, one per generation stage.
const STREAM_TRUTH: u64 = 1;
const STREAM_FEATURES: u64 = 2;
const STREAM_POLYGONS: u64 = 3;
const STREAM_RUNS: u64 = 1000;

pub fn stage_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Class-conditional intensity distribution before speckle.
#[derive(Debug, Clone, PartialEq)]
pub struct Appearance {
    pub mean: Vec<f64>,
    /// Row-major `bands x bands`, positive semidefinite.
    pub cov: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolygonParams {
    /// Number of polygons attempted; one per patch at most.
    pub count: usize,
    pub min_side: usize,
    pub max_side: usize,
    pub per_poly: usize,
    /// Minimum Euclidean spacing between samples of a polygon, in pixels.
    pub min_dist: f64,
    /// Training samples wanted for every class present at a date; splits
    /// are redrawn until met or until no split can meet it.
    pub min_train_per_class: usize,
}

impl Default for PolygonParams {
    fn default() -> Self {
        Self {
            count: 80,
            min_side: 3,
            max_side: 20,
            per_poly: 15,
            min_dist: 6.0,
            min_train_per_class: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub h: usize,
    pub w: usize,
    pub dates: Vec<NaiveDate>,
    pub seed: u64,
    pub patches: usize,
    /// Class distribution of patches at the first date.
    pub initial: Vec<f64>,
    /// Row-stochastic `K x K` transition probabilities over `base_gap` days.
    pub transition: Vec<Vec<f64>>,
    pub base_gap: u32,
    /// Class that can only be entered on or after `burn_start`.
    pub burn_class: Option<usize>,
    pub burn_start: Option<NaiveDate>,
    pub appearance: Vec<Appearance>,
    /// Speckle looks; `None` disables speckle.
    pub looks: Option<f64>,
    pub polygons: PolygonParams,
}

pub fn study_dates() -> Vec<NaiveDate> {
    [(6, 8), (6, 30), (7, 22), (8, 24), (9, 4)]
        .iter()
        .map(|&(m, d)| NaiveDate::from_ymd_opt(2014, m, d).expect("valid date"))
        .collect()
}

/// Day gaps between consecutive dates.
pub fn gaps(dates: &[NaiveDate]) -> Result<Vec<u32>> {
    dates
        .windows(2)
        .map(|w| {
            let d = (w[1] - w[0]).num_days();
            u32::try_from(d)
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::data(format!("dates must be strictly increasing ({} then {})", w[0], w[1])))
        })
        .collect()
}

impl Scenario {
    /// Five-class pasture/forest scene on the study dates.
    pub fn study(seed: u64) -> Self {
        let k = STUDY_CLASSES.len();
        let mut t = vec![vec![0.0; k]; k];
        let set = |t: &mut Vec<Vec<f64>>, a: usize, b: usize, p: f64| t[a][b] = p;
        set(&mut t, BURNT_PASTURE, CLEAN_PASTURE, 0.10);
        set(&mut t, CLEAN_PASTURE, BURNT_PASTURE, 0.12);
        set(&mut t, CLEAN_PASTURE, SHRUBBY_PASTURE, 0.03);
        set(&mut t, SHRUBBY_PASTURE, BURNT_PASTURE, 0.10);
        set(&mut t, SHRUBBY_PASTURE, CLEAN_PASTURE, 0.04);
        set(&mut t, FOREST, CLEAN_PASTURE, 0.01);
        for (a, row) in t.iter_mut().enumerate() {
            let off: f64 = row.iter().sum();
            row[a] = 1.0 - off;
        }
        let diag = |v: f64, c: f64| vec![v, c, c, v];
        let appearance = vec![
            Appearance { mean: vec![0.30, 0.12], cov: diag(0.002, 0.0005) },
            Appearance { mean: vec![0.45, 0.20], cov: diag(0.002, 0.0005) },
            Appearance { mean: vec![0.60, 0.30], cov: diag(0.003, 0.0008) },
            Appearance { mean: vec![0.06, 0.03], cov: diag(0.0002, 0.0) },
            Appearance { mean: vec![0.80, 0.45], cov: diag(0.004, 0.001) },
        ];
        Self {
            h: 128,
            w: 128,
            dates: study_dates(),
            seed,
            patches: 80,
            initial: vec![0.0, 0.35, 0.25, 0.06, 0.34],
            transition: t,
            base_gap: 11,
            burn_class: Some(BURNT_PASTURE),
            burn_start: NaiveDate::from_ymd_opt(2014, 7, 20),
            appearance,
            looks: Some(4.0),
            polygons: PolygonParams::default(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.initial.len()
    }

    pub fn bands(&self) -> usize {
        self.appearance.first().map_or(0, |a| a.mean.len())
    }

    pub fn shape(&self) -> Shape {
        Shape::new(self.dates.len(), self.h, self.w)
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.num_classes();
        if self.h < 2 || self.w < 2 || self.dates.is_empty() {
            return Err(Error::data(format!(
                "degenerate scenario: {}x{} with {} dates",
                self.h,
                self.w,
                self.dates.len()
            )));
        }
        if self.patches == 0 || self.patches > self.h * self.w {
            return Err(Error::data(format!("patch count {} does not fit the grid", self.patches)));
        }
        gaps(&self.dates)?;
        if k < 2 || self.transition.len() != k || self.transition.iter().any(|r| r.len() != k) {
            return Err(Error::data("transition matrix must be K x K with K >= 2"));
        }
        for row in self.transition.iter().chain(std::iter::once(&self.initial)) {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::data("transition rows and the initial distribution must be probability vectors"));
            }
        }
        if self.base_gap == 0 {
            return Err(Error::data("base gap must be positive"));
        }
        if self.burn_class.is_some_and(|b| b >= k) {
            return Err(Error::data("burn class outside the class set"));
        }
        if self.appearance.len() != k {
            return Err(Error::data(format!("need appearance parameters for all {k} classes")));
        }
        let b = self.bands();
        if b == 0 {
            return Err(Error::data("appearance needs at least one band"));
        }
        for a in &self.appearance {
            if a.mean.len() != b || a.cov.len() != b * b {
                return Err(Error::data("appearance means and covariances disagree in band count"));
            }
        }
        if let Some(l) = self.looks {
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::data("speckle looks must be positive"));
            }
        }
        let p = &self.polygons;
        if p.per_poly == 0 || p.min_side == 0 || p.max_side < p.min_side || !(p.min_dist >= 0.0) {
            return Err(Error::data("invalid polygon parameters"));
        }
        Ok(())
    }

    /// Transition probabilities for a gap of `gap` days ending at `to`:
    /// the base matrix raised to the rounded gap ratio, with entry into the
    /// burn class folded back onto the diagonal before the burn season.
    pub fn transition_for(&self, gap: u32, to: NaiveDate) -> Vec<Vec<f64>> {
        let k = self.num_classes();
        let steps = ((gap as f64 / self.base_gap as f64).round() as usize).max(1);
        let base = DMatrix::from_fn(k, k, |a, b| self.transition[a][b]);
        let mut m = DMatrix::identity(k, k);
        for _ in 0..steps {
            m = &m * &base;
        }
        let mut rows: Vec<Vec<f64>> = (0..k).map(|a| (0..k).map(|b| m[(a, b)]).collect()).collect();
        if let (Some(bc), Some(start)) = (self.burn_class, self.burn_start) {
            if to < start {
                for (a, row) in rows.iter_mut().enumerate() {
                    if a != bc {
                        row[a] += row[bc];
                        row[bc] = 0.0;
                    }
                }
            }
        }
        rows
    }
}

/// Ground truth with the patch structure it was generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct Truth {
    pub labels: LabelStack,
    /// Patch id of every pixel, `H x W`.
    pub patch_of: Vec<u32>,
    /// Class of every patch at every date, `[t][patch]`.
    pub patch_classes: Vec<Vec<u16>>,
}

fn sample_index(rng: &mut impl Rng, p: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    // rounding: last class with positive mass
    p.iter().rposition(|&v| v > 0.0).unwrap_or(0)
}

/// Tiles the grid into `n` patches by simultaneous random region growth.
fn grow_patches(rng: &mut ChaCha8Rng, h: usize, w: usize, n: usize) -> Vec<u32> {
    const FREE: u32 = u32::MAX;
    let mut owner = vec![FREE; h * w];
    let seeds = rand::seq::index::sample(rng, h * w, n);
    let mut frontier: Vec<usize> = Vec::with_capacity(h * w);
    for (id, s) in seeds.into_iter().enumerate() {
        owner[s] = id as u32;
        frontier.push(s);
    }
    while !frontier.is_empty() {
        let i = rng.random_range(0..frontier.len());
        let p = frontier.swap_remove(i);
        let (r, c) = (p / w, p % w);
        let mut grew = false;
        let neighbors = [
            (r > 0).then(|| p - w),
            (r + 1 < h).then(|| p + w),
            (c > 0).then(|| p - 1),
            (c + 1 < w).then(|| p + 1),
        ];
        for q in neighbors.into_iter().flatten() {
            if owner[q] == FREE {
                owner[q] = owner[p];
                frontier.push(q);
                grew = true;
            }
        }
        if grew {
            // p may still have free neighbors left for later turns
            frontier.push(p);
        }
    }
    owner
}

/// Patch mosaic at the first date, evolved date by date.
pub fn generate_truth_stack(sc: &Scenario) -> Result<Truth> {
    sc.validate()?;
    let mut rng = stage_rng(sc.seed, STREAM_TRUTH);
    let patch_of = grow_patches(&mut rng, sc.h, sc.w, sc.patches);
    let k = sc.num_classes();
    let mut first: Vec<u16> = (0..sc.patches).map(|_| sample_index(&mut rng, &sc.initial) as u16).collect();
    // at least one water body when the class set has one
    if k == STUDY_CLASSES.len() && sc.initial[WATER] > 0.0 && !first.contains(&(WATER as u16)) {
        first[0] = WATER as u16;
    }
    let gap = gaps(&sc.dates)?;
    let mut patch_classes = vec![first];
    for (t, &g) in gap.iter().enumerate() {
        let m = sc.transition_for(g, sc.dates[t + 1]);
        let next = patch_classes[t]
            .iter()
            .map(|&a| sample_index(&mut rng, &m[a as usize]) as u16)
            .collect();
        patch_classes.push(next);
    }
    let shape = sc.shape();
    let mut values = Vec::with_capacity(shape.len());
    for classes in &patch_classes {
        values.extend(patch_of.iter().map(|&p| classes[p as usize]));
    }
    Ok(Truth {
        labels: LabelStack::new(shape, k, values)?,
        patch_of,
        patch_classes,
    })
}

/// Lower factor `L` with `L L' = cov` for a positive semidefinite `cov`.
fn psd_factor(cov: &[f64], b: usize) -> Result<DMatrix<f64>> {
    let m = DMatrix::from_row_slice(b, b, cov);
    if (&m - m.transpose()).abs().max() > 1e-12 {
        return Err(Error::data("class covariance is not symmetric"));
    }
    let eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.abs().max().max(1e-300);
    if eig.eigenvalues.iter().any(|&v| v < -1e-12 * scale) {
        return Err(Error::data("class covariance is not positive semidefinite"));
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// Per-pixel class-conditional draw times unit-mean gamma speckle.
/// Intensities are clamped at a small positive floor before speckle.
pub fn render_features(truth: &LabelStack, sc: &Scenario) -> Result<FeatureStack> {
    sc.validate()?;
    if truth.shape() != sc.shape() || truth.num_classes() != sc.num_classes() {
        return Err(Error::data("truth stack does not match the scenario"));
    }
    let b = sc.bands();
    let factors = sc
        .appearance
        .iter()
        .map(|a| psd_factor(&a.cov, b))
        .collect::<Result<Vec<_>>>()?;
    let speckle = match sc.looks {
        Some(l) => Some(Gamma::new(l, 1.0 / l).map_err(|e| Error::data(e.to_string()))?),
        None => None,
    };
    let mut rng = stage_rng(sc.seed, STREAM_FEATURES);
    let mut values = Vec::with_capacity(truth.values().len() * b);
    let mut z = vec![0.0; b];
    for &l in truth.values() {
        let a = &sc.appearance[l as usize];
        let fac = &factors[l as usize];
        z.iter_mut().for_each(|v| *v = StandardNormal.sample(&mut rng));
        for i in 0..b {
            let mut x = a.mean[i];
            for j in 0..b {
                x += fac[(i, j)] * z[j];
            }
            let x = x.max(1e-6);
            let s = speckle.as_ref().map_or(1.0, |g| g.sample(&mut rng));
            values.push(x * s);
        }
    }
    FeatureStack::new(truth.shape(), b, values, sc.dates.clone())
}

/// Axis-aligned rectangle of pixels `[r0, r1) x [c0, c1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Polygon {
    pub id: u32,
    pub patch: u32,
    pub r0: usize,
    pub c0: usize,
    pub r1: usize,
    pub c1: usize,
}

impl Polygon {
    pub fn area(&self) -> usize {
        (self.r1 - self.r0) * (self.c1 - self.c0)
    }

    /// Corner vertices, clockwise from the top left, in pixel-edge units.
    pub fn vertices(&self) -> [(usize, usize); 4] {
        [(self.r0, self.c0), (self.r0, self.c1), (self.r1, self.c1), (self.r1, self.c0)]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        (self.r0..self.r1).contains(&r) && (self.c0..self.c1).contains(&c)
    }
}

/// Largest square-ish rectangle inside `patch` found from random anchors.
fn fit_rectangle(
    rng: &mut ChaCha8Rng,
    patch_of: &[u32],
    h: usize,
    w: usize,
    patch: u32,
    pixels: &[usize],
    p: &PolygonParams,
) -> Option<(usize, usize, usize, usize)> {
    let inside = |r0: usize, c0: usize, r1: usize, c1: usize| {
        r1 <= h && c1 <= w && (r0..r1).all(|r| (c0..c1).all(|c| patch_of[r * w + c] == patch))
    };
    let mut best: Option<(usize, usize, usize, usize)> = None;
    for _ in 0..20 {
        let anchor = pixels[rng.random_range(0..pixels.len())];
        let (ar, ac) = (anchor / w, anchor % w);
        for side in (p.min_side..=p.max_side).rev() {
            if best.is_some_and(|b| (b.2 - b.0) >= side) {
                break;
            }
            // centered on the anchor where possible
            let r0 = ar.saturating_sub(side / 2);
            let c0 = ac.saturating_sub(side / 2);
            if inside(r0, c0, r0 + side, c0 + side) {
                best = Some((r0, c0, r0 + side, c0 + side));
                break;
            }
        }
    }
    best
}

/// One rectangle per chosen patch, well inside its interior, so each
/// polygon carries a single class at every date.
pub fn generate_polygons(truth: &Truth, sc: &Scenario) -> Result<Vec<Polygon>> {
    let mut rng = stage_rng(sc.seed, STREAM_POLYGONS);
    let mut pixels: Vec<Vec<usize>> = vec![Vec::new(); sc.patches];
    for (i, &p) in truth.patch_of.iter().enumerate() {
        pixels[p as usize].push(i);
    }
    // deal patches round-robin over their first-date class so every class
    // gets polygons before any class gets many
    let mut by_class: Vec<Vec<u32>> = vec![Vec::new(); sc.num_classes()];
    for p in (0..sc.patches as u32).filter(|&p| !pixels[p as usize].is_empty()) {
        by_class[truth.patch_classes[0][p as usize] as usize].push(p);
    }
    by_class.iter_mut().for_each(|g| g.shuffle(&mut rng));
    let longest = by_class.iter().map(Vec::len).max().unwrap_or(0);
    let order: Vec<u32> = (0..longest).flat_map(|i| by_class.iter().filter_map(move |g| g.get(i).copied())).collect();
    let mut out = Vec::new();
    for patch in order {
        if out.len() >= sc.polygons.count {
            break;
        }
        if let Some((r0, c0, r1, c1)) =
            fit_rectangle(&mut rng, &truth.patch_of, sc.h, sc.w, patch, &pixels[patch as usize], &sc.polygons)
        {
            out.push(Polygon {
                id: out.len() as u32,
                patch,
                r0,
                c0,
                r1,
                c1,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::data("no patch can host a reference polygon"));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Train,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Test => "test",
        }
    }
}

/// A sampled pixel of a polygon. Positions are shared by all dates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplePoint {
    pub polygon: u32,
    pub row: usize,
    pub col: usize,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSamples {
    pub roles: Vec<Role>,
    pub points: Vec<SamplePoint>,
    /// Polygons that could not host `per_poly` spaced points.
    pub short_polygons: Vec<(u32, usize)>,
    /// Sub-seed attempts needed to cover every class in training.
    pub attempts: u32,
}

/// Up to `per_poly` points per polygon by rejection sampling with minimum
/// spacing `min_dist`. Returns the points and whether the polygon fell short.
pub fn sample_polygon(rng: &mut impl Rng, poly: &Polygon, per_poly: usize, min_dist: f64) -> Vec<(usize, usize)> {
    let mut pts: Vec<(usize, usize)> = Vec::with_capacity(per_poly);
    let d2 = min_dist * min_dist;
    let tries = 50 * per_poly.max(1) + poly.area();
    for _ in 0..tries {
        if pts.len() >= per_poly {
            break;
        }
        let r = rng.random_range(poly.r0..poly.r1);
        let c = rng.random_range(poly.c0..poly.c1);
        let ok = pts.iter().all(|&(pr, pc)| {
            let dr = pr as f64 - r as f64;
            let dc = pc as f64 - c as f64;
            dr * dr + dc * dc >= d2 && (pr, pc) != (r, c)
        });
        if ok {
            pts.push((r, c));
        }
    }
    pts
}

/// Random 50:50 polygon split and spaced point sampling for run `run`.
/// If some class present in the truth at some date would be missing from the
/// training samples of that date, the split is redrawn with the next
/// sub-seed.
pub fn sample_run(truth: &Truth, polys: &[Polygon], sc: &Scenario, run: u32) -> Result<RunSamples> {
    let p = &sc.polygons;
    let shape = truth.labels.shape();
    let k = truth.labels.num_classes();
    for attempt in 0..100u32 {
        let mut rng = stage_rng(sc.seed, STREAM_RUNS + u64::from(run) * 100 + u64::from(attempt));
        let mut idx: Vec<usize> = (0..polys.len()).collect();
        idx.shuffle(&mut rng);
        let mut roles = vec![Role::Test; polys.len()];
        for &i in idx.iter().take(polys.len().div_ceil(2)) {
            roles[i] = Role::Train;
        }
        let mut points = Vec::new();
        let mut short = Vec::new();
        for (poly, &role) in polys.iter().zip(&roles) {
            let pts = sample_polygon(&mut rng, poly, p.per_poly, p.min_dist);
            if pts.len() < p.per_poly {
                short.push((poly.id, pts.len()));
            }
            points.extend(pts.into_iter().map(|(row, col)| SamplePoint {
                polygon: poly.id,
                row,
                col,
                role,
            }));
        }
        let covered = (0..shape.t).all(|t| {
            let mut trained = vec![0usize; k];
            let mut available = vec![0usize; k];
            for s in &points {
                let c = truth.labels.get(t, s.row, s.col) as usize;
                available[c] += 1;
                if s.role == Role::Train {
                    trained[c] += 1;
                }
            }
            let mut present = vec![false; k];
            truth.labels.layer(t).iter().for_each(|&l| present[l as usize] = true);
            (0..k).all(|c| {
                // a class whose polygons hold fewer points than wanted can at
                // best be trained with all but one of them
                let want = p.min_train_per_class.min(available[c].saturating_sub(1)).max(1);
                !present[c] || trained[c] >= want
            })
        });
        if covered {
            if attempt > 0 {
                log::info!("run {run}: training split redrawn {attempt} time(s) to cover every class");
            }
            return Ok(RunSamples {
                roles,
                points,
                short_polygons: short,
                attempts: attempt + 1,
            });
        }
    }
    Err(Error::data(format!(
        "run {run}: no polygon split covers every class present in the truth"
    )))
}
