//! Date-by-date message passing over the raster stack.
//!
//! Every pixel keeps six incoming messages (up, down, left, right, previous
//! date, next date). One iteration visits the dates in order. Before date
//! `t` is overwritten its old state becomes the fallback copy; date `t + 1`
//! then receives its backward-looking message from that fallback, date
//! `t` reads the not-yet-updated state of `t + 1`, and spatial messages come
//! from the pre-update snapshot of `t` itself. The previous fallback is
//! dropped as soon as a new one is made, so the working set is three dates.
//!
//! Within a date, pixels are processed in square moving windows whose
//! one-pixel halo overlaps the neighboring windows. Windows write disjoint
//! regions and read only snapshots, so the result does not depend on the
//! window size or the number of threads.

use super::{min_convolve, non_finite_message, normalize_min, LbpConfig, LbpOutcome, Progress};
use crate::energy::MrfProblem;
use crate::error::Result;
use crate::model::argmin;
use crate::par;

const UP: usize = 0;
const DOWN: usize = 1;
const LEFT: usize = 2;
const RIGHT: usize = 3;
const PREV: usize = 4;
const NEXT: usize = 5;
const SLOTS: usize = 6;
/// Accumulation order of incoming messages; matches the edge order of the
/// reference graph so both schedules round identically.
const SUM_ORDER: [usize; SLOTS] = [PREV, UP, LEFT, RIGHT, DOWN, NEXT];

/// Incoming messages of one date, `[pixel][slot][class]`.
type Layer = Vec<f64>;

struct Ctx<'a> {
    prob: &'a MrfProblem,
    cfg: &'a LbpConfig,
    h: usize,
    w: usize,
    k: usize,
}

impl Ctx<'_> {
    #[inline]
    fn slot<'b>(&self, layer: &'b [f64], pixel: usize, slot: usize) -> &'b [f64] {
        let o = (pixel * SLOTS + slot) * self.k;
        &layer[o..o + self.k]
    }

    /// Which slots of `(t, pixel)` are backed by an actual neighbor.
    #[inline]
    fn has(&self, t: usize, r: usize, c: usize, slot: usize) -> bool {
        match slot {
            UP => r > 0,
            DOWN => r + 1 < self.h,
            LEFT => c > 0,
            RIGHT => c + 1 < self.w,
            PREV => t > 0,
            _ => t + 1 < self.prob.shape().t,
        }
    }

    /// Unary plus every incoming message of `(t, r, c)` except `skip`.
    fn cavity(&self, t: usize, layer: &[f64], r: usize, c: usize, skip: usize, h: &mut [f64]) {
        let pixel = r * self.w + c;
        let flat = self.prob.shape().index(t, r, c);
        h.copy_from_slice(self.prob.unary().at(flat));
        for s in SUM_ORDER {
            if s != skip && self.has(t, r, c, s) {
                let m = self.slot(layer, pixel, s);
                h.iter_mut().zip(m).for_each(|(a, b)| *a += b);
            }
        }
    }

    /// Recomputes the incoming messages of date `t` for rows `rows` into
    /// `out` (those rows only), reading from snapshots.
    #[allow(clippy::too_many_arguments)]
    fn update_rows(
        &self,
        t: usize,
        rows: std::ops::Range<usize>,
        cur: &[f64],
        prev: Option<&[f64]>,
        next: Option<&[f64]>,
        out: &mut [f64],
    ) -> Result<()> {
        let (w, k) = (self.w, self.k);
        let mut h = vec![0.0; k];
        let mut msg = vec![0.0; k];
        let spatial = self.prob.spatial_cost();
        // moving windows across this band of rows
        for c0 in (0..w).step_by(self.cfg.window) {
            for r in rows.clone() {
                for c in c0..(c0 + self.cfg.window).min(w) {
                    let pixel = r * w + c;
                    let local = (r - rows.start) * w + c;
                    for slot in 0..SLOTS {
                        if !self.has(t, r, c, slot) {
                            continue;
                        }
                        // sender, its state, the sender's slot pointing back
                        // at us, the cost table and whether we are the
                        // table's row index
                        match slot {
                            UP => {
                                self.cavity(t, cur, r - 1, c, DOWN, &mut h);
                                min_convolve(&h, spatial, false, &mut msg);
                            }
                            DOWN => {
                                self.cavity(t, cur, r + 1, c, UP, &mut h);
                                min_convolve(&h, spatial, false, &mut msg);
                            }
                            LEFT => {
                                self.cavity(t, cur, r, c - 1, RIGHT, &mut h);
                                min_convolve(&h, spatial, false, &mut msg);
                            }
                            RIGHT => {
                                self.cavity(t, cur, r, c + 1, LEFT, &mut h);
                                min_convolve(&h, spatial, false, &mut msg);
                            }
                            PREV => {
                                let src = prev.expect("fallback exists for t > 0");
                                self.cavity(t - 1, src, r, c, NEXT, &mut h);
                                min_convolve(&h, self.prob.temporal_cost(t - 1), false, &mut msg);
                            }
                            _ => {
                                let src = next.expect("next layer exists");
                                self.cavity(t + 1, src, r, c, PREV, &mut h);
                                min_convolve(&h, self.prob.temporal_cost(t), true, &mut msg);
                            }
                        }
                        if self.cfg.normalize {
                            normalize_min(&mut msg);
                        }
                        let old = self.slot(cur, pixel, slot);
                        let o = (local * SLOTS + slot) * k;
                        let dst = &mut out[o..o + k];
                        for ((d, &n), &p) in dst.iter_mut().zip(&msg).zip(old) {
                            *d = (1.0 - self.cfg.damping) * n + self.cfg.damping * p;
                        }
                        if dst.iter().any(|v| !v.is_finite()) {
                            let flat = self.prob.shape().index(t, r, c);
                            return Err(non_finite_message(self.prob.shape(), flat));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Min-sum LBP using the layered fallback-copy schedule.
pub fn lbp_layered_sweep(prob: &MrfProblem, cfg: &LbpConfig) -> Result<LbpOutcome> {
    cfg.validate()?;
    let s = prob.shape();
    let k = prob.num_classes();
    let ctx = Ctx {
        prob,
        cfg,
        h: s.h,
        w: s.w,
        k,
    };
    let layer_len = s.layer_len() * SLOTS * k;
    let band = cfg.window.min(s.h) * s.w * SLOTS * k;
    let mut layers: Vec<Layer> = vec![vec![0.0; layer_len]; s.t];
    let mut progress = Progress::new(prob, cfg);

    for iter in 1..=cfg.max_iters {
        // Step 1 happens at the end of each date: the old state is kept as
        // the fallback for the next date, replacing the previous one.
        let mut fallback: Option<Layer> = None;
        for t in 0..s.t {
            let mut fresh = vec![0.0; layer_len];
            {
                let cur = &layers[t];
                let next = layers.get(t + 1).map(Vec::as_slice);
                let prev = fallback.as_deref();
                let rows_per_band = cfg.window.min(s.h);
                par::try_for_each_chunk_mut(&mut fresh, band, |bi, out| {
                    let r0 = bi * rows_per_band;
                    let r1 = (r0 + rows_per_band).min(s.h);
                    ctx.update_rows(t, r0..r1, cur, prev, next, out)
                })?;
            }
            fallback = Some(std::mem::replace(&mut layers[t], fresh));
        }
        drop(fallback);

        let labels = beliefs_argmin(&ctx, &layers);
        if progress.record(iter, labels) {
            return progress.finish(true);
        }
    }
    progress.finish(false)
}

fn beliefs_argmin(ctx: &Ctx<'_>, layers: &[Layer]) -> Vec<u16> {
    let s = ctx.prob.shape();
    let per_layer: Vec<Vec<u16>> = par::map_collect(s.t, |t| {
        let mut h = vec![0.0; ctx.k];
        (0..s.layer_len())
            .map(|p| {
                ctx.cavity(t, &layers[t], p / s.w, p % s.w, usize::MAX, &mut h);
                argmin(&h) as u16
            })
            .collect()
    });
    per_layer.concat()
}
