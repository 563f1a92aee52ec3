//! Greedy forward selection of import vectors.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::objective::{solve_damped, KlrObjective};
use super::{rbf_unchecked, IvmModel, Standardizer, TrainSet};
use crate::error::{Error, Result};
use crate::par;

/// Training controls beyond `sigma`, `C`, `max_import` and `tol`.
#[derive(Debug, Clone, PartialEq)]
pub struct IvmParams {
    /// Candidates scored per step; `None` scores every remaining sample.
    pub candidates: Option<usize>,
    /// Best-scoring candidates refitted exactly before choosing one.
    pub shortlist: usize,
    /// Newton iterations per refit.
    pub newton_iters: usize,
    /// Seed for candidate subsampling.
    pub seed: u64,
}

impl Default for IvmParams {
    fn default() -> Self {
        Self {
            candidates: None,
            shortlist: 3,
            newton_iters: 50,
            seed: 0,
        }
    }
}

struct Fit {
    theta: Vec<f64>,
    value: f64,
}

struct Selector<'a> {
    kernel: &'a DMatrix<f64>,
    labels: &'a [usize],
    k: usize,
    c: f64,
    newton_iters: usize,
}

impl Selector<'_> {
    fn objective(&self, set: &[usize]) -> Result<KlrObjective> {
        let n = self.labels.len();
        let s = set.len();
        let design = DMatrix::from_fn(n, s + 1, |i, j| if j == 0 { 1.0 } else { self.kernel[(i, set[j - 1])] });
        let gram = DMatrix::from_fn(s, s, |a, b| self.kernel[(set[a], set[b])]);
        KlrObjective::new(design, gram, self.labels.to_vec(), self.k, self.c)
    }

    fn refit(&self, set: &[usize], warm: &[f64]) -> Result<Fit> {
        let obj = self.objective(set)?;
        let mut theta = warm.to_vec();
        let value = obj.minimize(&mut theta, self.newton_iters)?;
        Ok(Fit { theta, value })
    }

    /// Warm start for `set + [j]`: current coefficients with a zero column.
    fn extend(&self, theta: &[f64], s: usize) -> Vec<f64> {
        let w = s + 1;
        let mut out = Vec::with_capacity(self.k * (w + 1));
        for k in 0..self.k {
            out.extend_from_slice(&theta[k * w..(k + 1) * w]);
            out.push(0.0);
        }
        out
    }

    /// Predicted objective decrease from one Newton step on the new
    /// coefficient column of candidate `j`, all else fixed.
    fn score(&self, j: usize, set: &[usize], theta: &[f64], p: &DMatrix<f64>) -> f64 {
        let k = self.k;
        let w = set.len() + 1;
        let lambda = 1.0 / self.c;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        for (n, &y) in self.labels.iter().enumerate() {
            let c = self.kernel[(n, j)];
            if c == 0.0 {
                continue;
            }
            for a in 0..k {
                let pa = p[(n, a)];
                g[a] += c * (pa - if a == y { 1.0 } else { 0.0 });
                for b in 0..k {
                    let d = if a == b { 1.0 } else { 0.0 };
                    h[(a, b)] += c * c * pa * (d - p[(n, b)]);
                }
            }
        }
        for a in 0..k {
            let cross: f64 = set
                .iter()
                .enumerate()
                .map(|(s, &i)| self.kernel[(j, i)] * theta[a * w + 1 + s])
                .sum();
            g[a] += lambda * cross;
            h[(a, a)] += lambda * self.kernel[(j, j)];
        }
        match solve_damped(h, &g) {
            Ok(x) => 0.5 * g.dot(&x),
            Err(_) => 0.0,
        }
    }
}

/// Trains an import vector machine by greedy forward selection.
///
/// Each step scores the remaining candidates by the decrease a single Newton
/// step on the candidate's coefficients would give, refits the best
/// `params.shortlist` exactly, and keeps the one with the lowest objective.
/// Selection stops when the relative decrease falls below `tol` (that point
/// is not added, unless the set is still empty) or `max_import` points are
/// in the set.
pub fn train_ivm(
    train: &TrainSet,
    sigma: f64,
    c: f64,
    max_import: usize,
    tol: f64,
    params: &IvmParams,
    total_classes: usize,
) -> Result<IvmModel> {
    train_ivm_traced(train, sigma, c, max_import, tol, params, total_classes).map(|(m, _)| m)
}

/// Like [`train_ivm`], also returning the objective after the bias-only fit
/// and after every accepted import point.
pub fn train_ivm_traced(
    train: &TrainSet,
    sigma: f64,
    c: f64,
    max_import: usize,
    tol: f64,
    params: &IvmParams,
    total_classes: usize,
) -> Result<(IvmModel, Vec<f64>)> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("kernel width must be positive, got {sigma}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("cost parameter C must be positive, got {c}")));
    }
    if max_import == 0 {
        return Err(Error::Config("max_import must be >= 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::Config("tol must be positive".into()));
    }
    if params.shortlist == 0 {
        return Err(Error::Config("shortlist must be >= 1".into()));
    }
    let class_ids = train.classes();
    if class_ids.len() < 2 {
        return Err(Error::data("need ≥ 2 classes"));
    }
    if let Some(&bad) = class_ids.iter().find(|&&c| c as usize >= total_classes) {
        return Err(Error::data(format!("label {bad} outside the class set")));
    }
    let labels: Vec<usize> = train
        .labels()
        .iter()
        .map(|y| class_ids.binary_search(y).expect("label from the class list"))
        .collect();

    let standardizer = Standardizer::fit(train);
    let f = train.num_features();
    let z = standardizer.apply_all(&train.features);
    let n = train.len();
    let rows = par::map_collect(n, |i| {
        let a = &z[i * f..(i + 1) * f];
        (0..n).map(|j| rbf_unchecked(a, &z[j * f..(j + 1) * f], sigma)).collect::<Vec<_>>()
    });
    let kernel = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    drop(rows);

    let sel = Selector {
        kernel: &kernel,
        labels: &labels,
        k: class_ids.len(),
        c,
        newton_iters: params.newton_iters,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut set: Vec<usize> = Vec::new();
    let mut in_set = vec![false; n];
    let mut fit = sel.refit(&set, &vec![0.0; sel.k])?;
    let limit = max_import.min(n);
    let mut path = vec![fit.value];

    while set.len() < limit {
        let remaining: Vec<usize> = (0..n).filter(|&i| !in_set[i]).collect();
        let pool: Vec<usize> = match params.candidates {
            Some(m) if m < remaining.len() => {
                let mut picked: Vec<usize> = sample(&mut rng, remaining.len(), m)
                    .into_iter()
                    .map(|i| remaining[i])
                    .collect();
                picked.sort_unstable();
                picked
            }
            _ => remaining,
        };
        let obj = sel.objective(&set)?;
        let p = obj.probabilities(&fit.theta);
        let scores = par::map_collect(pool.len(), |i| sel.score(pool[i], &set, &fit.theta, &p));
        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(params.shortlist);

        let warm = sel.extend(&fit.theta, set.len());
        let mut best: Option<(usize, Fit)> = None;
        for &o in &order {
            let j = pool[o];
            let mut trial_set = set.clone();
            trial_set.push(j);
            let trial = sel.refit(&trial_set, &warm)?;
            if best.as_ref().map_or(true, |(_, b)| trial.value < b.value) {
                best = Some((j, trial));
            }
        }
        let Some((j, next)) = best else { break };
        let decrease = (fit.value - next.value) / fit.value.abs().max(f64::MIN_POSITIVE);
        if decrease < tol && !set.is_empty() {
            break;
        }
        log::debug!("import point {j} added, objective {:.6}", next.value);
        set.push(j);
        in_set[j] = true;
        fit = next;
        path.push(fit.value);
    }

    let import_points: Vec<f64> = set.iter().flat_map(|&i| train.sample(i).iter().copied()).collect();
    let model = IvmModel::from_parts(
        f,
        import_points,
        fit.theta,
        sigma,
        c,
        standardizer,
        class_ids,
        total_classes,
    )?;
    Ok((model, path))
}

