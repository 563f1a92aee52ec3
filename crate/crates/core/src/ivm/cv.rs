//! Cross-validated grid search over kernel width and cost.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{train_ivm, IvmParams, Standardizer, TrainSet};
use crate::error::{Error, Result};
use crate::model::argmax;

/// Pairs considered when estimating the median distance.
const MEDIAN_MAX_SAMPLES: usize = 1000;

/// Median Euclidean distance between distinct samples after standardization.
/// Large sets are thinned to an evenly strided subset first.
pub fn median_pairwise_distance(train: &TrainSet) -> f64 {
    let st = Standardizer::fit(train);
    let n = train.len();
    let stride = n.div_ceil(MEDIAN_MAX_SAMPLES).max(1);
    let idx: Vec<usize> = (0..n).step_by(stride).collect();
    let z: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| {
            let mut v = vec![0.0; train.num_features()];
            st.apply(train.sample(i), &mut v);
            v
        })
        .collect();
    let mut d = Vec::with_capacity(z.len() * z.len().saturating_sub(1) / 2);
    for a in 0..z.len() {
        for b in a + 1..z.len() {
            d.push(z[a].iter().zip(&z[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
        }
    }
    if d.is_empty() {
        return 1.0;
    }
    d.sort_by(f64::total_cmp);
    let m = d.len() / 2;
    let med = if d.len() % 2 == 1 { d[m] } else { 0.5 * (d[m - 1] + d[m]) };
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

/// `2^-2 .. 2^4` times `base`.
pub fn default_sigma_grid(base: f64) -> Vec<f64> {
    (-2..=4).map(|e| base * 2f64.powi(e)).collect()
}

/// `2^-3 .. 2^7`.
pub fn default_c_grid() -> Vec<f64> {
    (-3..=7).map(|e| 2f64.powi(e)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub sigma: f64,
    pub c: f64,
    /// Mean validation overall accuracy of the chosen pair.
    pub accuracy: f64,
    /// `(sigma, C, mean accuracy)` for every pair evaluated.
    pub table: Vec<(f64, f64, f64)>,
}

/// Fold index of every sample: each class is shuffled with `seed` and dealt
/// round-robin so every fold holds every class.
pub fn stratified_folds(train: &TrainSet, folds: usize, seed: u64, names: &[String]) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(format!("need >= 2 folds, got {folds}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fold_of = vec![0usize; train.len()];
    for class in train.classes() {
        let mut members: Vec<usize> = (0..train.len()).filter(|&i| train.labels()[i] == class).collect();
        if members.len() < folds {
            let name = names.get(class as usize).cloned().unwrap_or_else(|| format!("class {class}"));
            return Err(Error::data(format!(
                "class '{name}' has {} training samples, fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            fold_of[i] = j % folds;
        }
    }
    Ok(fold_of)
}

/// Settings shared by every model fitted during the search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSettings {
    pub folds: usize,
    pub max_import: usize,
    pub tol: f64,
    pub params: IvmParams,
    pub seed: u64,
}

/// Picks the `(sigma, C)` with the highest mean validation accuracy over
/// stratified folds. Ties go to the smaller C, then the smaller sigma.
/// `names` labels classes in error messages.
pub fn grid_search_cv(
    train: &TrainSet,
    sigma_grid: &[f64],
    c_grid: &[f64],
    settings: &SearchSettings,
    names: &[String],
) -> Result<GridResult> {
    if sigma_grid.is_empty() || c_grid.is_empty() {
        return Err(Error::Config("parameter grids must be non-empty".into()));
    }
    let total = names.len().max(train.classes().last().map_or(0, |&c| c as usize + 1));
    let fold_of = stratified_folds(train, settings.folds, settings.seed, names)?;
    let splits: Vec<(TrainSet, TrainSet)> = (0..settings.folds)
        .map(|f| {
            let fit: Vec<usize> = (0..train.len()).filter(|&i| fold_of[i] != f).collect();
            let val: Vec<usize> = (0..train.len()).filter(|&i| fold_of[i] == f).collect();
            (train.subset(&fit), train.subset(&val))
        })
        .collect();

    let mut sorted_c = c_grid.to_vec();
    sorted_c.sort_by(f64::total_cmp);
    let mut sorted_s = sigma_grid.to_vec();
    sorted_s.sort_by(f64::total_cmp);

    let mut table = Vec::new();
    let mut best: Option<(f64, f64, f64)> = None;
    // ascending C, then ascending sigma; a strict improvement is needed to
    // replace an earlier pair, which implements the tie rule
    for &c in &sorted_c {
        for &sigma in &sorted_s {
            let mut acc = 0.0;
            for (fit, val) in &splits {
                let model = train_ivm(fit, sigma, c, settings.max_import, settings.tol, &settings.params, total)?;
                let mut p = vec![0.0; total];
                let correct = (0..val.len())
                    .filter(|&i| {
                        model.predict_one(val.sample(i), &mut p).expect("feature count checked");
                        argmax(&p) == val.labels()[i] as usize
                    })
                    .count();
                acc += correct as f64 / val.len() as f64;
            }
            acc /= settings.folds as f64;
            log::debug!("grid sigma={sigma:.4} C={c:.4} accuracy={acc:.4}");
            table.push((sigma, c, acc));
            if best.map_or(true, |(_, _, a)| acc > a) {
                best = Some((sigma, c, acc));
            }
        }
    }
    let (sigma, c, accuracy) = best.expect("grids are non-empty");
    Ok(GridResult {
        sigma,
        c,
        accuracy,
        table,
    })
}
