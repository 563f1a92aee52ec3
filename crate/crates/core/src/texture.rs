//! Gray-level co-occurrence texture features.
//!
//! Bands are quantized into equal-frequency levels, then every pixel gets
//! ten GLCM statistics from the window around it. Co-occurrences are
//! counted in the four directions (0,1), (1,0), (1,1), (1,-1) and both pair
//! orders, so the matrices are symmetric. Windows near the border are
//! shifted inward so they always lie inside the scene.

use crate::error::{Error, Result};
use crate::par;

pub const NUM_FEATURES: usize = 10;

pub const FEATURE_NAMES: [&str; NUM_FEATURES] = [
    "contrast",
    "dissimilarity",
    "homogeneity",
    "asm",
    "energy",
    "max_prob",
    "entropy",
    "mean",
    "variance",
    "correlation",
];

/// Unit direction vectors (row step, column step).
pub const DIRECTIONS: [(isize, isize); 4] = [(0, 1), (1, 0), (1, 1), (1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlcmConfig {
    pub window: usize,
    pub levels: usize,
    pub offset: usize,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        Self {
            window: 11,
            levels: 64,
            offset: 1,
        }
    }
}

impl GlcmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 3 || self.window % 2 == 0 {
            return Err(Error::Config(format!(
                "glcm.window must be odd and >= 3, got {}",
                self.window
            )));
        }
        if self.levels < 2 || self.levels > u16::MAX as usize {
            return Err(Error::Config(format!(
                "glcm.levels must be >= 2, got {}",
                self.levels
            )));
        }
        if self.offset == 0 {
            return Err(Error::Config("glcm.offset must be >= 1".into()));
        }
        Ok(())
    }
}

/// Normalized, symmetric co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    levels: usize,
    p: Vec<f64>,
}

impl Glcm {
    pub fn levels(&self) -> usize {
        self.levels
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    /// Builds a matrix from raw entries, normalizing them to sum to one.
    pub fn from_counts(levels: usize, counts: &[f64]) -> Result<Self> {
        if counts.len() != levels * levels {
            return Err(Error::data("glcm counts have the wrong length"));
        }
        let total: f64 = counts.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NoPairs);
        }
        Ok(Self {
            levels,
            p: counts.iter().map(|c| c / total).collect(),
        })
    }
}

/// Equal-frequency quantization: a value's level is
/// `floor(levels * rank / n)` where `rank` counts strictly smaller values,
/// so equal values share a level.
pub fn quantize_probabilistic(band: &[f64], levels: usize) -> Result<Vec<u16>> {
    if levels < 2 || levels > u16::MAX as usize {
        return Err(Error::data(format!("levels must be >= 2, got {levels}")));
    }
    if band.iter().any(|v| !v.is_finite()) {
        return Err(Error::data("band contains non-finite values"));
    }
    let n = band.len();
    let mut sorted = band.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(band
        .iter()
        .map(|v| {
            let rank = sorted.partition_point(|x| x < v);
            ((levels * rank) / n).min(levels - 1) as u16
        })
        .collect())
}

/// GLCM of a `rows x cols` window of level indices.
pub fn compute_glcm(window: &[u16], rows: usize, cols: usize, cfg: &GlcmConfig) -> Result<Glcm> {
    compute_glcm_dirs(window, rows, cols, cfg, &DIRECTIONS)
}

/// GLCM restricted to the given directions.
pub fn compute_glcm_dirs(
    window: &[u16],
    rows: usize,
    cols: usize,
    cfg: &GlcmConfig,
    dirs: &[(isize, isize)],
) -> Result<Glcm> {
    if window.len() != rows * cols {
        return Err(Error::data("window buffer does not match its dimensions"));
    }
    let l = cfg.levels;
    if let Some(&v) = window.iter().find(|&&v| v as usize >= l) {
        return Err(Error::data(format!("level {v} is not below {l}")));
    }
    let mut counts = vec![0.0; l * l];
    let o = cfg.offset as isize;
    for r in 0..rows as isize {
        for c in 0..cols as isize {
            for &(dr, dc) in dirs {
                let (r2, c2) = (r + dr * o, c + dc * o);
                if r2 < 0 || c2 < 0 || r2 >= rows as isize || c2 >= cols as isize {
                    continue;
                }
                let a = window[(r * cols as isize + c) as usize] as usize;
                let b = window[(r2 * cols as isize + c2) as usize] as usize;
                counts[a * l + b] += 1.0;
                counts[b * l + a] += 1.0;
            }
        }
    }
    Glcm::from_counts(l, &counts)
}

/// The ten texture statistics of a normalized GLCM, in
/// [`FEATURE_NAMES`] order.
pub fn glcm_features(g: &Glcm) -> [f64; NUM_FEATURES] {
    let l = g.levels;
    let cells = g
        .p
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(idx, &p)| ((idx / l) as u16, (idx % l) as u16, p));
    features_from_cells(cells)
}

/// Shared by the dense and sparse paths: iterates nonzero `(i, j, p)`.
fn features_from_cells<I>(cells: I) -> [f64; NUM_FEATURES]
where
    I: Iterator<Item = (u16, u16, f64)> + Clone,
{
    let mut contrast = 0.0;
    let mut dissim = 0.0;
    let mut homog = 0.0;
    let mut asm = 0.0;
    let mut max_p: f64 = 0.0;
    let mut entropy = 0.0;
    let mut mean_i = 0.0;
    let mut mean_j = 0.0;
    for (i, j, p) in cells.clone() {
        let d = i as f64 - j as f64;
        contrast += p * d * d;
        dissim += p * d.abs();
        homog += p / (1.0 + d * d);
        asm += p * p;
        max_p = max_p.max(p);
        entropy -= p * p.ln();
        mean_i += p * i as f64;
        mean_j += p * j as f64;
    }
    let mut var_i = 0.0;
    let mut var_j = 0.0;
    let mut cov = 0.0;
    for (i, j, p) in cells {
        let di = i as f64 - mean_i;
        let dj = j as f64 - mean_j;
        var_i += p * di * di;
        var_j += p * dj * dj;
        cov += p * di * dj;
    }
    let correlation = if var_i <= 1e-12 || var_j <= 1e-12 {
        1.0
    } else {
        cov / (var_i * var_j).sqrt()
    };
    [
        contrast,
        dissim,
        homog,
        asm,
        asm.sqrt(),
        max_p,
        entropy,
        mean_i,
        var_i,
        correlation,
    ]
}

/// Co-occurrence counts that support adding and removing whole columns of
/// a window and enumerating only the occupied cells.
struct SlidingCounts {
    levels: usize,
    counts: Vec<u32>,
    /// Occupied cell indices, unordered.
    active: Vec<u32>,
    /// Position of each cell in `active`, `u32::MAX` when empty.
    pos: Vec<u32>,
    total: u64,
}

impl SlidingCounts {
    fn new(levels: usize) -> Self {
        Self {
            levels,
            counts: vec![0; levels * levels],
            active: Vec::new(),
            pos: vec![u32::MAX; levels * levels],
            total: 0,
        }
    }

    #[inline]
    fn add(&mut self, a: u16, b: u16) {
        let cell = a as usize * self.levels + b as usize;
        if self.counts[cell] == 0 {
            self.pos[cell] = self.active.len() as u32;
            self.active.push(cell as u32);
        }
        self.counts[cell] += 1;
        self.total += 1;
    }

    #[inline]
    fn remove(&mut self, a: u16, b: u16) {
        let cell = a as usize * self.levels + b as usize;
        debug_assert!(self.counts[cell] > 0);
        self.counts[cell] -= 1;
        self.total -= 1;
        if self.counts[cell] == 0 {
            let at = self.pos[cell] as usize;
            let last = *self.active.last().expect("active cell");
            self.active.swap_remove(at);
            if last as usize != cell {
                self.pos[last as usize] = at as u32;
            }
            self.pos[cell] = u32::MAX;
        }
    }

    /// Adds (or removes) every ordered pair that touches column `col` and
    /// lies inside the window `rows x [c0, c1)`.
    fn column(
        &mut self,
        img: &[u16],
        width: usize,
        rows: std::ops::Range<usize>,
        cols: std::ops::Range<usize>,
        col: usize,
        offset: isize,
        adding: bool,
    ) {
        for r in rows.clone() {
            let a = img[r * width + col];
            for &(dr, dc) in &DIRECTIONS {
                for sign in [1isize, -1] {
                    let r2 = r as isize + sign * dr * offset;
                    let c2 = col as isize + sign * dc * offset;
                    if r2 < rows.start as isize
                        || r2 >= rows.end as isize
                        || c2 < cols.start as isize
                        || c2 >= cols.end as isize
                    {
                        continue;
                    }
                    let b = img[r2 as usize * width + c2 as usize];
                    // (a, b) is ours; (b, a) too unless the partner sits in
                    // the same column and will be visited itself
                    let pair_twice = c2 as usize != col;
                    if adding {
                        self.add(a, b);
                        if pair_twice {
                            self.add(b, a);
                        }
                    } else {
                        self.remove(a, b);
                        if pair_twice {
                            self.remove(b, a);
                        }
                    }
                }
            }
        }
    }

    fn features(&self) -> Result<[f64; NUM_FEATURES]> {
        if self.total == 0 {
            return Err(Error::NoPairs);
        }
        let total = self.total as f64;
        let l = self.levels;
        Ok(features_from_cells(self.active.iter().map(|&cell| {
            let cell = cell as usize;
            (
                (cell / l) as u16,
                (cell % l) as u16,
                self.counts[cell] as f64 / total,
            )
        })))
    }
}

/// Start of the window covering pixel `i` along an axis of length `n`.
#[inline]
fn window_start(i: usize, window: usize, n: usize) -> usize {
    let half = window / 2;
    i.saturating_sub(half).min(n - window)
}

/// Texture features of one quantized band, `h x w x 10`.
pub fn texture_band(levels_img: &[u16], h: usize, w: usize, cfg: &GlcmConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if levels_img.len() != h * w {
        return Err(Error::data("band buffer does not match its dimensions"));
    }
    if cfg.window > h || cfg.window > w {
        return Err(Error::data(format!(
            "glcm window {} exceeds the {h}x{w} scene",
            cfg.window
        )));
    }
    if let Some(&v) = levels_img.iter().find(|&&v| v as usize >= cfg.levels) {
        return Err(Error::data(format!("level {v} is not below {}", cfg.levels)));
    }
    let win = cfg.window;
    let offset = cfg.offset as isize;
    // Features for every distinct window position, row by row.
    let n_rows = h - win + 1;
    let n_cols = w - win + 1;
    let per_row: Vec<Result<Vec<[f64; NUM_FEATURES]>>> = par::map_collect(n_rows, |r0| {
        let rows = r0..r0 + win;
        let mut acc = SlidingCounts::new(cfg.levels);
        for c in 0..win {
            acc.column(levels_img, w, rows.clone(), 0..c + 1, c, offset, true);
        }
        let mut out = Vec::with_capacity(n_cols);
        out.push(acc.features()?);
        for c0 in 1..n_cols {
            acc.column(levels_img, w, rows.clone(), c0 - 1..c0 - 1 + win, c0 - 1, offset, false);
            acc.column(levels_img, w, rows.clone(), c0..c0 + win, c0 + win - 1, offset, true);
            out.push(acc.features()?);
        }
        Ok(out)
    });
    let per_row = per_row.into_iter().collect::<Result<Vec<_>>>()?;
    let mut out = vec![0.0; h * w * NUM_FEATURES];
    for (p, px) in out.chunks_exact_mut(NUM_FEATURES).enumerate() {
        let (r, c) = (p / w, p % w);
        px.copy_from_slice(&per_row[window_start(r, win, h)][window_start(c, win, w)]);
    }
    Ok(out)
}

/// Texture features for a multi-band scene laid out `h x w x bands`.
/// The output is `h x w x (10 * bands)`, band-major within each pixel.
pub fn texture_feature_stack(scene: &[f64], h: usize, w: usize, bands: usize, cfg: &GlcmConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if scene.len() != h * w * bands {
        return Err(Error::data("scene buffer does not match its dimensions"));
    }
    let nf = NUM_FEATURES * bands;
    let mut out = vec![0.0; h * w * nf];
    for b in 0..bands {
        let band: Vec<f64> = scene.iter().skip(b).step_by(bands).copied().collect();
        let q = quantize_probabilistic(&band, cfg.levels)?;
        let feats = texture_band(&q, h, w, cfg)?;
        for (p, f) in feats.chunks_exact(NUM_FEATURES).enumerate() {
            out[p * nf + b * NUM_FEATURES..p * nf + (b + 1) * NUM_FEATURES].copy_from_slice(f);
        }
    }
    Ok(out)
}
