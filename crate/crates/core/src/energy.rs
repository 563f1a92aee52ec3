//! Spatio-temporal MRF energy.
//!
//! `U = sum_i u_i(y_i)
//!    + beta_sp * sum_{i~j spatial} (1 - delta(y_i, y_j))
//!    + beta_temp * sum_links [(1 - tau2(y_t, y_t+1)) + (1 - tau1(y_t+1, y_t))]`
//!
//! Spatial edges are unordered 4-neighbor pairs counted once. Each temporal
//! link contributes both of its directed terms.

use crate::error::{Error, Result};
use crate::model::{EnergyStack, LabelStack, Shape};
use crate::par;
use crate::transitions::{MatrixKind, TauPair, TransitionMatrix};

#[derive(Debug, Clone)]
pub struct MrfProblem {
    unary: EnergyStack,
    delta: TransitionMatrix,
    tau_pairs: Vec<TauPair>,
    beta_sp: f64,
    beta_temp: f64,
    spatial_cost: Vec<f64>,
    temporal_cost: Vec<Vec<f64>>,
}

impl MrfProblem {
    pub fn new(
        unary: EnergyStack,
        delta: TransitionMatrix,
        tau_pairs: Vec<TauPair>,
        beta_sp: f64,
        beta_temp: f64,
    ) -> Result<Self> {
        let k = unary.num_classes();
        let t = unary.shape().t;
        if !(beta_sp >= 0.0 && beta_sp.is_finite() && beta_temp >= 0.0 && beta_temp.is_finite()) {
            return Err(Error::data(format!(
                "beta weights must be finite and non-negative, got ({beta_sp}, {beta_temp})"
            )));
        }
        if delta.kind() != MatrixKind::Spatial {
            return Err(Error::data("delta must be a spatial matrix"));
        }
        if delta.num_classes() != k {
            return Err(Error::data(format!(
                "delta is {0}x{0} but the stack has K={k}",
                delta.num_classes()
            )));
        }
        if tau_pairs.len() + 1 != t {
            return Err(Error::data(format!(
                "{} dates need {} tau pairs, got {}",
                t,
                t - 1,
                tau_pairs.len()
            )));
        }
        for (g, p) in tau_pairs.iter().enumerate() {
            if p.forward.num_classes() != k || p.backward.num_classes() != k {
                return Err(Error::data(format!("tau pair {g} does not match K={k}")));
            }
        }
        let spatial_cost = spatial_cost_table(&delta, beta_sp);
        let temporal_cost = tau_pairs
            .iter()
            .map(|p| temporal_cost_table(p, beta_temp))
            .collect();
        Ok(Self {
            unary,
            delta,
            tau_pairs,
            beta_sp,
            beta_temp,
            spatial_cost,
            temporal_cost,
        })
    }

    pub fn unary(&self) -> &EnergyStack {
        &self.unary
    }

    pub fn delta(&self) -> &TransitionMatrix {
        &self.delta
    }

    pub fn tau_pairs(&self) -> &[TauPair] {
        &self.tau_pairs
    }

    pub fn beta_sp(&self) -> f64 {
        self.beta_sp
    }

    pub fn beta_temp(&self) -> f64 {
        self.beta_temp
    }

    pub fn shape(&self) -> Shape {
        self.unary.shape()
    }

    pub fn num_classes(&self) -> usize {
        self.unary.num_classes()
    }

    /// `beta_sp * (1 - delta)`, row-major K x K. Symmetric.
    pub fn spatial_cost(&self) -> &[f64] {
        &self.spatial_cost
    }

    /// Pairwise cost of the link between dates `gap` and `gap + 1`, indexed
    /// `[earlier label][later label]`.
    pub fn temporal_cost(&self, gap: usize) -> &[f64] {
        &self.temporal_cost[gap]
    }

    /// Same problem with different weights.
    pub fn with_betas(&self, beta_sp: f64, beta_temp: f64) -> Result<Self> {
        Self::new(
            self.unary.clone(),
            self.delta.clone(),
            self.tau_pairs.clone(),
            beta_sp,
            beta_temp,
        )
    }
}

fn spatial_cost_table(delta: &TransitionMatrix, beta: f64) -> Vec<f64> {
    delta.values().iter().map(|d| beta * (1.0 - d)).collect()
}

fn temporal_cost_table(pair: &TauPair, beta: f64) -> Vec<f64> {
    let k = pair.forward.num_classes();
    (0..k * k)
        .map(|i| {
            let (a, b) = (i / k, i % k);
            beta * ((1.0 - pair.forward.get(a, b)) + (1.0 - pair.backward.get(b, a)))
        })
        .collect()
}

fn check_shape(labels: &LabelStack, k: usize) -> Result<()> {
    if labels.num_classes() != k {
        return Err(Error::data(format!(
            "labels use K={} but the matrices are {k}x{k}",
            labels.num_classes()
        )));
    }
    Ok(())
}

/// Per-layer partial sums are combined sequentially, so the result is
/// bit-identical for any thread count.
fn sum_layers(t: usize, f: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    par::map_collect(t, f).into_iter().sum()
}

fn spatial_layer_sum(labels: &[u16], h: usize, w: usize, k: usize, cost: &[f64]) -> f64 {
    let mut s = 0.0;
    for r in 0..h {
        for c in 0..w {
            let a = labels[r * w + c] as usize;
            if c + 1 < w {
                s += cost[a * k + labels[r * w + c + 1] as usize];
            }
            if r + 1 < h {
                s += cost[a * k + labels[(r + 1) * w + c] as usize];
            }
        }
    }
    s
}

fn temporal_link_sum(earlier: &[u16], later: &[u16], k: usize, cost: &[f64]) -> f64 {
    earlier
        .iter()
        .zip(later)
        .map(|(&a, &b)| cost[a as usize * k + b as usize])
        .sum()
}

/// Weighted count of disagreeing 4-neighbor pairs within each date.
pub fn spatial_energy(labels: &LabelStack, delta: &TransitionMatrix, beta_sp: f64) -> Result<f64> {
    let k = delta.num_classes();
    check_shape(labels, k)?;
    let cost = spatial_cost_table(delta, beta_sp);
    let s = labels.shape();
    Ok(sum_layers(s.t, |t| {
        spatial_layer_sum(labels.layer(t), s.h, s.w, k, &cost)
    }))
}

/// Temporal energy with both directed terms per link.
pub fn temporal_energy(labels: &LabelStack, tau_pairs: &[TauPair], beta_temp: f64) -> Result<f64> {
    let s = labels.shape();
    if tau_pairs.len() + 1 != s.t {
        return Err(Error::data(format!(
            "{} dates need {} tau pairs, got {}",
            s.t,
            s.t - 1,
            tau_pairs.len()
        )));
    }
    let Some(first) = tau_pairs.first() else {
        return Ok(0.0);
    };
    let k = first.forward.num_classes();
    check_shape(labels, k)?;
    let tables: Vec<Vec<f64>> = tau_pairs
        .iter()
        .map(|p| temporal_cost_table(p, beta_temp))
        .collect();
    Ok(sum_layers(s.t - 1, |g| {
        temporal_link_sum(labels.layer(g), labels.layer(g + 1), k, &tables[g])
    }))
}

pub fn unary_energy(labels: &LabelStack, unary: &EnergyStack) -> Result<f64> {
    if labels.shape() != unary.shape() || labels.num_classes() != unary.num_classes() {
        return Err(Error::data("labels and unary stack disagree in shape"));
    }
    let k = unary.num_classes();
    let n = unary.shape().layer_len();
    Ok(sum_layers(unary.shape().t, |t| {
        labels
            .layer(t)
            .iter()
            .enumerate()
            .map(|(i, &y)| unary.values()[(t * n + i) * k + y as usize])
            .sum()
    }))
}

/// Unary, spatial and temporal components of a labeling's energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub unary: f64,
    pub spatial: f64,
    pub temporal: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.unary + self.spatial + self.temporal
    }
}

pub fn energy_breakdown(labels: &LabelStack, prob: &MrfProblem) -> Result<EnergyBreakdown> {
    if labels.shape() != prob.shape() {
        return Err(Error::data("labels and problem disagree in shape"));
    }
    Ok(EnergyBreakdown {
        unary: unary_energy(labels, &prob.unary)?,
        spatial: spatial_energy(labels, &prob.delta, prob.beta_sp)?,
        temporal: temporal_energy(labels, &prob.tau_pairs, prob.beta_temp)?,
    })
}

pub fn total_energy(labels: &LabelStack, prob: &MrfProblem) -> Result<f64> {
    Ok(energy_breakdown(labels, prob)?.total())
}

/// Energy of a raw label buffer using the problem's cached cost tables.
/// Callers guarantee `labels.len() == shape.len()` and labels `< K`.
pub(crate) fn total_energy_raw(labels: &[u16], prob: &MrfProblem) -> f64 {
    let s = prob.shape();
    let k = prob.num_classes();
    let n = s.layer_len();
    let u = prob.unary.values();
    let mut e = 0.0;
    for t in 0..s.t {
        let layer = &labels[t * n..(t + 1) * n];
        e += layer
            .iter()
            .enumerate()
            .map(|(i, &y)| u[(t * n + i) * k + y as usize])
            .sum::<f64>();
    }
    for t in 0..s.t {
        e += spatial_layer_sum(&labels[t * n..(t + 1) * n], s.h, s.w, k, &prob.spatial_cost);
    }
    for g in 0..s.t.saturating_sub(1) {
        e += temporal_link_sum(
            &labels[g * n..(g + 1) * n],
            &labels[(g + 1) * n..(g + 2) * n],
            k,
            &prob.temporal_cost[g],
        );
    }
    e
}
