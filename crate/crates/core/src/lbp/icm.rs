//! Iterated conditional modes in raster order.

use crate::energy::MrfProblem;
use crate::error::{Error, Result};
use crate::model::{argmin, LabelStack};

/// Cost of giving `(t, r, c)` each label with all other labels fixed.
fn local_costs(prob: &MrfProblem, labels: &[u16], t: usize, r: usize, c: usize, out: &mut [f64]) {
    let s = prob.shape();
    let k = prob.num_classes();
    let i = s.index(t, r, c);
    out.copy_from_slice(prob.unary().at(i));
    let sp = prob.spatial_cost();
    let mut add_spatial = |j: usize| {
        let b = labels[j] as usize;
        out.iter_mut()
            .enumerate()
            .for_each(|(a, o)| *o += sp[a * k + b]);
    };
    if r > 0 {
        add_spatial(i - s.w);
    }
    if r + 1 < s.h {
        add_spatial(i + s.w);
    }
    if c > 0 {
        add_spatial(i - 1);
    }
    if c + 1 < s.w {
        add_spatial(i + 1);
    }
    let n = s.layer_len();
    if t > 0 {
        let table = prob.temporal_cost(t - 1);
        let b = labels[i - n] as usize;
        out.iter_mut()
            .enumerate()
            .for_each(|(a, o)| *o += table[b * k + a]);
    }
    if t + 1 < s.t {
        let table = prob.temporal_cost(t);
        let b = labels[i + n] as usize;
        out.iter_mut()
            .enumerate()
            .for_each(|(a, o)| *o += table[a * k + b]);
    }
}

/// ICM from `init`; see [`icm_with_observer`].
pub fn icm_baseline(prob: &MrfProblem, init: &LabelStack, max_sweeps: usize) -> Result<LabelStack> {
    icm_with_observer(prob, init, max_sweeps, |_, _, _| {})
}

/// Greedy single-pixel minimization in raster order (date, row, column).
/// A pixel moves only to a label that strictly lowers its local cost,
/// choosing the lowest index among the best. Stops after a sweep without
/// changes or after `max_sweeps`. `observer(labels, flat_index, delta)`
/// runs after every accepted flip, `delta` being the (negative) change in
/// total energy.
pub fn icm_with_observer<F>(
    prob: &MrfProblem,
    init: &LabelStack,
    max_sweeps: usize,
    mut observer: F,
) -> Result<LabelStack>
where
    F: FnMut(&[u16], usize, f64),
{
    let s = prob.shape();
    let k = prob.num_classes();
    if init.shape() != s || init.num_classes() != k {
        return Err(Error::data("initial labeling does not match the problem"));
    }
    let mut labels = init.values().to_vec();
    let mut costs = vec![0.0; k];
    for _ in 0..max_sweeps {
        let mut changed = 0usize;
        for t in 0..s.t {
            for r in 0..s.h {
                for c in 0..s.w {
                    local_costs(prob, &labels, t, r, c, &mut costs);
                    let i = s.index(t, r, c);
                    let cur = labels[i] as usize;
                    let best = argmin(&costs);
                    if costs[best] < costs[cur] {
                        labels[i] = best as u16;
                        changed += 1;
                        observer(&labels, i, costs[best] - costs[cur]);
                    }
                }
            }
        }
        if changed == 0 {
            break;
        }
    }
    LabelStack::new(s, k, labels)
}
