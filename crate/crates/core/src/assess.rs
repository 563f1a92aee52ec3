//! Error matrices and stratified, area-adjusted accuracy estimates.
//!
//! Rows of an error matrix are map classes (the strata), columns reference
//! classes. With stratum weights `W_i` the estimated cell proportions are
//! `p_ij = W_i n_ij / n_i.`, from which overall, user's and producer's
//! accuracies and class areas follow. Confidence intervals are `1.96 SE`.

use crate::error::{Error, Result};
use crate::model::LabelStack;

pub const Z_95: f64 = 1.96;

/// A point estimate with its 95% half-width and, for averaged reports, the
/// standard deviation across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub ci: f64,
    pub run_sd: f64,
}

impl Estimate {
    fn new(value: f64, variance: f64) -> Self {
        Self {
            value,
            ci: Z_95 * variance.max(0.0).sqrt(),
            run_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMatrix {
    k: usize,
    /// Row-major `K x K`, `[mapped][reference]`.
    counts: Vec<u64>,
    weights: Vec<f64>,
}

impl ErrorMatrix {
    pub fn new(k: usize, counts: Vec<u64>, weights: Vec<f64>) -> Result<Self> {
        if k == 0 || counts.len() != k * k || weights.len() != k {
            return Err(Error::data(format!("error matrix needs {k}x{k} counts and {k} weights")));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::data("stratum weights must be finite and >= 0"));
        }
        let s: f64 = weights.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::data(format!("stratum weights sum to {s}, not 1")));
        }
        Ok(Self { k, counts, weights })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn count(&self, mapped: usize, reference: usize) -> u64 {
        self.counts[mapped * self.k + reference]
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i * self.k..(i + 1) * self.k].iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.k, self.counts.clone(), weights)
    }

    /// Estimated proportions `p_ij`, row-major. Strata with zero weight
    /// contribute nothing.
    pub fn proportions(&self) -> Result<Vec<f64>> {
        let k = self.k;
        let mut p = vec![0.0; k * k];
        for i in 0..k {
            if self.weights[i] == 0.0 {
                continue;
            }
            let n = self.row_total(i);
            if n == 0 {
                return Err(Error::data(format!(
                    "stratum {i} has weight {} but no reference samples",
                    self.weights[i]
                )));
            }
            for j in 0..k {
                p[i * k + j] = self.weights[i] * self.count(i, j) as f64 / n as f64;
            }
        }
        Ok(p)
    }
}

/// A reference sample at `(row, col)` of one date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RefSample {
    pub row: usize,
    pub col: usize,
    pub class: u16,
}

/// Class proportions of the map at date `t`.
pub fn mapped_proportions(map: &LabelStack, t: usize) -> Vec<f64> {
    let mut w = vec![0.0; map.num_classes()];
    let layer = map.layer(t);
    for &l in layer {
        w[l as usize] += 1.0;
    }
    w.iter_mut().for_each(|v| *v /= layer.len() as f64);
    w
}

/// Counts map/reference agreement at date `t`; stratum weights are the
/// mapped class proportions of that date.
pub fn error_matrix(map: &LabelStack, t: usize, samples: &[RefSample]) -> Result<ErrorMatrix> {
    let s = map.shape();
    let k = map.num_classes();
    if t >= s.t {
        return Err(Error::data(format!("date {t} outside the stack of {} dates", s.t)));
    }
    let mut counts = vec![0u64; k * k];
    for r in samples {
        if r.row >= s.h || r.col >= s.w {
            return Err(Error::data(format!(
                "sample ({}, {}) outside the {}x{} grid",
                r.row, r.col, s.h, s.w
            )));
        }
        if r.class as usize >= k {
            return Err(Error::data(format!("reference class {} outside the class set", r.class)));
        }
        let m = map.get(t, r.row, r.col) as usize;
        counts[m * k + r.class as usize] += 1;
    }
    ErrorMatrix::new(k, counts, mapped_proportions(map, t))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    pub overall: Estimate,
    /// `None` where the stratum is empty or has zero weight.
    pub user: Vec<Option<Estimate>>,
    /// `None` where the estimated reference proportion is zero.
    pub producer: Vec<Option<Estimate>>,
    /// Estimated reference-class proportions `p_.j`.
    pub area: Vec<Estimate>,
}

impl AccuracyReport {
    pub fn num_classes(&self) -> usize {
        self.area.len()
    }
}

/// `n_i. - 1`, floored at 1 so single-sample strata stay finite.
fn dof(n: u64) -> f64 {
    (n.max(2) - 1) as f64
}

/// Stratified accuracy and area estimators. Fails if a stratum with
/// positive weight has no samples.
pub fn area_adjusted_metrics(e: &ErrorMatrix) -> Result<AccuracyReport> {
    let k = e.k;
    let p = e.proportions()?;
    let w = &e.weights;
    let n_row: Vec<u64> = (0..k).map(|i| e.row_total(i)).collect();
    let live = |i: usize| w[i] > 0.0 && n_row[i] > 0;
    // within-stratum fraction n_ij / n_i.
    let frac = |i: usize, j: usize| e.count(i, j) as f64 / n_row[i] as f64;
    let user_acc: Vec<f64> = (0..k).map(|i| if live(i) { frac(i, i) } else { 0.0 }).collect();

    let oa: f64 = (0..k).map(|i| p[i * k + i]).sum();
    let oa_var: f64 = (0..k)
        .filter(|&i| live(i))
        .map(|i| w[i] * w[i] * user_acc[i] * (1.0 - user_acc[i]) / dof(n_row[i]))
        .sum();

    let user = (0..k)
        .map(|i| {
            live(i).then(|| Estimate::new(user_acc[i], user_acc[i] * (1.0 - user_acc[i]) / dof(n_row[i])))
        })
        .collect();

    let col: Vec<f64> = (0..k).map(|j| (0..k).map(|i| p[i * k + j]).sum()).collect();
    let producer = (0..k)
        .map(|j| {
            if col[j] <= 0.0 {
                return None;
            }
            let pa = p[j * k + j] / col[j];
            let mut v = 0.0;
            if live(j) {
                v += w[j] * w[j] * (1.0 - pa).powi(2) * user_acc[j] * (1.0 - user_acc[j]) / dof(n_row[j]);
            }
            for i in (0..k).filter(|&i| i != j && live(i)) {
                let f = frac(i, j);
                v += pa * pa * w[i] * w[i] * f * (1.0 - f) / dof(n_row[i]);
            }
            Some(Estimate::new(pa, v / (col[j] * col[j])))
        })
        .collect();

    let area = (0..k)
        .map(|j| {
            let v: f64 = (0..k)
                .filter(|&i| live(i))
                .map(|i| {
                    let f = frac(i, j);
                    w[i] * w[i] * f * (1.0 - f) / dof(n_row[i])
                })
                .sum();
            Estimate::new(col[j], v)
        })
        .collect();

    Ok(AccuracyReport {
        overall: Estimate::new(oa, oa_var),
        user,
        producer,
        area,
    })
}

/// Per-class area `total_area * p_.j` with its 95% half-width.
pub fn area_estimates(e: &ErrorMatrix, total_area: f64) -> Result<Vec<Estimate>> {
    if !(total_area > 0.0 && total_area.is_finite()) {
        return Err(Error::data(format!("total area must be positive, got {total_area}")));
    }
    Ok(area_adjusted_metrics(e)?
        .area
        .into_iter()
        .map(|a| Estimate {
            value: total_area * a.value,
            ci: total_area * a.ci,
            run_sd: 0.0,
        })
        .collect())
}

/// One record per pixel of date `t`: whether the maps agree, and the class
/// of `b`.
pub fn agreement_map(a: &LabelStack, b: &LabelStack, t: usize) -> Result<Vec<(bool, u16)>> {
    if a.shape() != b.shape() {
        return Err(Error::data("label stacks differ in shape"));
    }
    if t >= a.shape().t {
        return Err(Error::data(format!("date {t} outside the stack")));
    }
    Ok(a.layer(t).iter().zip(b.layer(t)).map(|(&x, &y)| (x == y, y)).collect())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn average(es: &[Estimate]) -> Estimate {
    let values: Vec<f64> = es.iter().map(|e| e.value).collect();
    let (value, run_sd) = mean_sd(&values);
    Estimate {
        value,
        ci: es.iter().map(|e| e.ci).sum::<f64>() / es.len() as f64,
        run_sd,
    }
}

fn average_opt(es: Vec<Option<Estimate>>) -> Option<Estimate> {
    let present: Vec<Estimate> = es.into_iter().flatten().collect();
    (!present.is_empty()).then(|| average(&present))
}

/// Element-wise mean of point estimates and CI half-widths, with the sample
/// standard deviation across runs. Absent per-class values are averaged over
/// the runs where they exist.
pub fn multi_run_average(reports: &[AccuracyReport]) -> Result<AccuracyReport> {
    let first = reports.first().ok_or_else(|| Error::data("no reports to average"))?;
    let k = first.num_classes();
    if reports.iter().any(|r| r.num_classes() != k) {
        return Err(Error::data("reports disagree in class count"));
    }
    let overall = average(&reports.iter().map(|r| r.overall).collect::<Vec<_>>());
    let user = (0..k).map(|c| average_opt(reports.iter().map(|r| r.user[c]).collect())).collect();
    let producer = (0..k).map(|c| average_opt(reports.iter().map(|r| r.producer[c]).collect())).collect();
    let area = (0..k)
        .map(|c| average(&reports.iter().map(|r| r.area[c]).collect::<Vec<_>>()))
        .collect();
    Ok(AccuracyReport {
        overall,
        user,
        producer,
        area,
    })
}
