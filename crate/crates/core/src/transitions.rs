//! Spatial and temporal compatibility matrices.
//!
//! Entries are weights in `[0, 1]` that enter the energy as `1 - m(a, b)`,
//! so rows are not normalized. The temporal pair is derived from a single
//! forward matrix `F`: `tau2 = F` (date t to t+1) and `tau1 = F^T`
//! (date t to t-1).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ClassSet, BURNT_PASTURE, CLEAN_PASTURE, FOREST, SHRUBBY_PASTURE};

/// Revisit interval of the reference sensor, used as the unit gap.
pub const BASE_GAP_DAYS: u32 = 11;

/// Lower bound on every entry of the default study matrix.
pub const STUDY_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Spatial,
    /// tau2: messages from date t to t+1.
    TemporalForward,
    /// tau1: messages from date t to t-1.
    TemporalBackward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    values: Vec<f64>,
    kind: MatrixKind,
    gap_days: Option<u32>,
}

impl TransitionMatrix {
    pub fn new(
        k: usize,
        values: Vec<f64>,
        kind: MatrixKind,
        gap_days: Option<u32>,
    ) -> Result<Self> {
        let m = Self {
            k,
            values,
            kind,
            gap_days,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix from row vectors.
    pub fn from_rows(rows: &[Vec<f64>], kind: MatrixKind, gap_days: Option<u32>) -> Result<Self> {
        let k = square_dim(rows)?;
        Self::new(k, rows.concat(), kind, gap_days)
    }

    fn validate(&self) -> Result<()> {
        let k = self.k;
        if k == 0 {
            return Err(Error::data("transition matrix must have K >= 1"));
        }
        if self.values.len() != k * k {
            return Err(Error::data(format!(
                "transition matrix expects {} entries, got {}",
                k * k,
                self.values.len()
            )));
        }
        for (i, &v) in self.values.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::data(format!(
                    "transition entry ({}, {}) = {v} outside [0, 1]",
                    i / k,
                    i % k
                )));
            }
        }
        match self.kind {
            MatrixKind::Spatial => {
                for a in 0..k {
                    for b in a + 1..k {
                        if self.get(a, b) != self.get(b, a) {
                            return Err(Error::data(format!(
                                "spatial matrix must be symmetric; ({a}, {b}) != ({b}, {a})"
                            )));
                        }
                    }
                }
            }
            MatrixKind::TemporalForward | MatrixKind::TemporalBackward => {
                for a in 0..k {
                    let d = self.get(a, a);
                    if let Some(b) = (0..k).find(|&b| self.get(a, b) > d) {
                        return Err(Error::data(format!(
                            "temporal matrix row {a}: entry ({a}, {b}) exceeds the diagonal"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    pub fn gap_days(&self) -> Option<u32> {
        self.gap_days
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.k + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.k).map(|r| r.to_vec()).collect()
    }

    pub fn transposed(&self) -> Vec<f64> {
        let k = self.k;
        (0..k * k).map(|i| self.get(i % k, i / k)).collect()
    }
}

fn square_dim(rows: &[Vec<f64>]) -> Result<usize> {
    let k = rows.len();
    if k == 0 {
        return Err(Error::data("matrix has no rows"));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != k) {
        return Err(Error::data(format!(
            "matrix is not square: {k} rows but row {i} has {} columns",
            r.len()
        )));
    }
    Ok(k)
}

/// Identity compatibility (Potts) for the spatial neighborhood.
pub fn potts_matrix(k: usize) -> Result<TransitionMatrix> {
    if k == 0 {
        return Err(Error::data("Potts matrix needs K >= 1"));
    }
    let values = (0..k * k)
        .map(|i| if i / k == i % k { 1.0 } else { 0.0 })
        .collect();
    TransitionMatrix::new(k, values, MatrixKind::Spatial, None)
}

/// Backward/forward temporal pair for one date gap.
#[derive(Debug, Clone, PartialEq)]
pub struct TauPair {
    /// tau1, toward the predecessor.
    pub backward: TransitionMatrix,
    /// tau2, toward the successor.
    pub forward: TransitionMatrix,
}

/// Builds `(tau1, tau2) = (F^T, F)` from forward compatibilities `F`.
pub fn build_tau_pair(forward: &[Vec<f64>]) -> Result<TauPair> {
    let tau2 = TransitionMatrix::from_rows(forward, MatrixKind::TemporalForward, None)?;
    tau_pair_from_forward(&tau2)
}

pub(crate) fn tau_pair_from_forward(tau2: &TransitionMatrix) -> Result<TauPair> {
    let forward = TransitionMatrix {
        kind: MatrixKind::TemporalForward,
        ..tau2.clone()
    };
    forward.validate()?;
    let backward = TransitionMatrix::new(
        forward.k,
        forward.transposed(),
        MatrixKind::TemporalBackward,
        forward.gap_days,
    )?;
    Ok(TauPair { backward, forward })
}

/// Scales off-diagonal compatibilities linearly with the elapsed time
/// `gap_days / base_days`, clipping to `[0, 1]`.
pub fn scale_for_gap(tau: &TransitionMatrix, gap_days: u32, base_days: u32) -> Result<TransitionMatrix> {
    if base_days == 0 {
        return Err(Error::data("base gap must be positive"));
    }
    let factor = gap_days as f64 / base_days as f64;
    let k = tau.k;
    let values = tau
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if i / k == i % k {
                v
            } else {
                (v * factor).clamp(0.0, 1.0)
            }
        })
        .collect();
    TransitionMatrix::new(k, values, tau.kind, Some(gap_days))
}

/// One tau pair per consecutive date gap, scaled from a base-gap forward
/// matrix.
pub fn tau_pairs_for_gaps(forward: &TransitionMatrix, gaps: &[u32], base_days: u32) -> Result<Vec<TauPair>> {
    gaps.iter()
        .map(|&g| tau_pair_from_forward(&scale_for_gap(forward, g, base_days)?))
        .collect()
}

/// Forward compatibilities for the five study classes, indexed
/// `[from][to]` in [`ClassSet::study`] order, at the base gap.
pub fn default_study_matrix() -> Vec<Vec<f64>> {
    let mut f = vec![vec![STUDY_FLOOR; 5]; 5];
    for (k, row) in f.iter_mut().enumerate() {
        row[k] = 1.0;
    }
    // pasture burns
    f[CLEAN_PASTURE][BURNT_PASTURE] = 0.3;
    f[SHRUBBY_PASTURE][BURNT_PASTURE] = 0.3;
    // and recovers
    f[BURNT_PASTURE][CLEAN_PASTURE] = 0.4;
    f[BURNT_PASTURE][SHRUBBY_PASTURE] = 0.3;
    f[SHRUBBY_PASTURE][CLEAN_PASTURE] = 0.15;
    f[CLEAN_PASTURE][SHRUBBY_PASTURE] = 0.2;
    f[CLEAN_PASTURE][FOREST] = 0.1;
    f[SHRUBBY_PASTURE][FOREST] = 0.2;
    f[FOREST][CLEAN_PASTURE] = 0.08;
    f[FOREST][SHRUBBY_PASTURE] = 0.1;
    f
}

/// Reads a K x K matrix from CSV: a header line listing the class names in
/// class-set order, followed by K numeric rows.
pub fn read_matrix_csv(path: &Path, classes: &ClassSet) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text, classes).map_err(|msg| Error::format(path, msg))
}

fn parse_matrix_csv(text: &str, classes: &ClassSet) -> std::result::Result<Vec<Vec<f64>>, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header: Vec<&str> = lines
        .next()
        .ok_or("empty matrix file")?
        .split(',')
        .map(str::trim)
        .collect();
    if header != classes.names() {
        return Err(format!(
            "header {:?} does not match classes {:?}",
            header,
            classes.names()
        ));
    }
    let k = classes.len();
    let rows = lines
        .enumerate()
        .map(|(i, l)| {
            let row = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| format!("row {i}: {e}"))?;
            if row.len() != k {
                return Err(format!("row {i} has {} columns, expected {k}", row.len()));
            }
            Ok(row)
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if rows.len() != k {
        return Err(format!("expected {k} rows, found {}", rows.len()));
    }
    Ok(rows)
}

pub fn write_matrix_csv(path: &Path, classes: &ClassSet, rows: &[Vec<f64>]) -> Result<()> {
    let mut s = classes.names().join(",");
    s.push('\n');
    for r in rows {
        let cells: Vec<String> = r.iter().map(|v| format!("{v}")).collect();
        let _ = writeln!(s, "{}", cells.join(","));
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}
