//! MAP inference for the spatio-temporal MRF.
//!
//! Two min-sum loopy belief propagation schedules share the same message
//! semantics: [`lbp_reference`] floods every directed edge of an explicit
//! graph, while [`lbp_layered_sweep`] walks the stack date by date with a
//! rolling fallback copy of the previous layer and processes each layer in
//! moving windows. [`icm_baseline`] and [`brute_force_map`] serve as the
//! greedy baseline and the exhaustive oracle.

mod brute;
mod icm;
mod layered;
mod reference;

use std::fmt;

pub use brute::brute_force_map;
pub use icm::{icm_baseline, icm_with_observer};
pub use layered::lbp_layered_sweep;
pub use reference::lbp_reference;

use crate::energy::{total_energy_raw, MrfProblem};
use crate::error::{Error, Result};
use crate::model::{LabelStack, Shape};

#[derive(Debug, Clone, PartialEq)]
pub struct LbpConfig {
    pub max_iters: usize,
    /// Sweeps run before the convergence test applies, so messages can
    /// cross the graph before a stable labeling is accepted.
    pub min_iters: usize,
    /// Weight of the previous message in `(1 - d) * new + d * old`.
    pub damping: f64,
    /// Stop once the fraction of changed labels between sweeps stays
    /// below this value for `stable_sweeps` consecutive sweeps.
    pub convergence_eps: f64,
    pub stable_sweeps: usize,
    /// Edge length of the moving windows of the layered schedule.
    pub window: usize,
    /// Shift every message so its minimum is zero.
    pub normalize: bool,
}

impl Default for LbpConfig {
    fn default() -> Self {
        Self {
            max_iters: 10,
            min_iters: 5,
            damping: 0.0,
            convergence_eps: 1e-4,
            stable_sweeps: 1,
            window: 256,
            normalize: true,
        }
    }
}

impl LbpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::Config("lbp.max_iters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!(
                "lbp.damping must lie in [0, 1), got {}",
                self.damping
            )));
        }
        if !(self.convergence_eps >= 0.0) {
            return Err(Error::Config("lbp.convergence_eps must be >= 0".into()));
        }
        if self.stable_sweeps == 0 {
            return Err(Error::Config("lbp.stable_sweeps must be >= 1".into()));
        }
        if self.window == 0 {
            return Err(Error::Config("lbp.window must be >= 1".into()));
        }
        Ok(())
    }
}

/// One line of the per-iteration log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterStats {
    pub iter: usize,
    pub energy: f64,
    pub changed_frac: f64,
}

impl fmt::Display for IterStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.iter, self.energy, self.changed_frac)
    }
}

#[derive(Debug, Clone)]
pub struct LbpOutcome {
    pub labels: LabelStack,
    pub converged: bool,
    pub iters: usize,
    pub trace: Vec<IterStats>,
}

/// Shared sweep bookkeeping: records stats, decides termination.
pub(crate) struct Progress<'a> {
    prob: &'a MrfProblem,
    cfg: &'a LbpConfig,
    labels: Vec<u16>,
    trace: Vec<IterStats>,
    stable: usize,
}

impl<'a> Progress<'a> {
    pub(crate) fn new(prob: &'a MrfProblem, cfg: &'a LbpConfig) -> Self {
        Self {
            prob,
            cfg,
            labels: prob.unary().argmin_labels().into_values(),
            trace: Vec::new(),
            stable: 0,
        }
    }

    /// Records the labels after sweep `iter` (1-based); returns true when
    /// the run should stop because it converged.
    pub(crate) fn record(&mut self, iter: usize, labels: Vec<u16>) -> bool {
        let changed = labels
            .iter()
            .zip(&self.labels)
            .filter(|(a, b)| a != b)
            .count();
        let changed_frac = changed as f64 / labels.len() as f64;
        let stats = IterStats {
            iter,
            energy: total_energy_raw(&labels, self.prob),
            changed_frac,
        };
        log::debug!("{stats}");
        self.trace.push(stats);
        self.labels = labels;
        if changed_frac < self.cfg.convergence_eps {
            self.stable += 1;
        } else {
            self.stable = 0;
        }
        iter >= self.cfg.min_iters && self.stable >= self.cfg.stable_sweeps
    }

    pub(crate) fn finish(self, converged: bool) -> Result<LbpOutcome> {
        let iters = self.trace.len();
        Ok(LbpOutcome {
            labels: LabelStack::new(self.prob.shape(), self.prob.num_classes(), self.labels)?,
            converged,
            iters,
            trace: self.trace,
        })
    }
}

/// `out(y) = min_x h(x) + cost(x, y)` where `cost` is read either as
/// `table[x][y]` or, when `transpose`, as `table[y][x]`.
#[inline]
pub(crate) fn min_convolve(h: &[f64], table: &[f64], transpose: bool, out: &mut [f64]) {
    let k = h.len();
    for (y, o) in out.iter_mut().enumerate() {
        let mut best = f64::INFINITY;
        for (x, &hx) in h.iter().enumerate() {
            let c = if transpose { table[y * k + x] } else { table[x * k + y] };
            let v = hx + c;
            if v < best {
                best = v;
            }
        }
        *o = best;
    }
}

#[inline]
pub(crate) fn normalize_min(m: &mut [f64]) {
    let lo = m.iter().copied().fold(f64::INFINITY, f64::min);
    m.iter_mut().for_each(|v| *v -= lo);
}

pub(crate) fn non_finite_message(shape: Shape, flat: usize) -> Error {
    let (t, row, col) = shape.coords(flat);
    Error::Numerical(format!(
        "non-finite message at date {t}, pixel ({row}, {col})"
    ))
}
