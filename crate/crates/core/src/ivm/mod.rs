//! Import vector machine: sparse multiclass kernel logistic regression with
//! greedy forward selection of import points, RBF kernel, and a
//! cross-validated grid search over kernel width and cost.

mod cv;
mod io;
mod objective;
mod train;

pub use cv::{
    default_c_grid, default_sigma_grid, grid_search_cv, median_pairwise_distance, stratified_folds, GridResult,
    SearchSettings,
};
pub use io::{read_model, write_model};
pub use objective::KlrObjective;
pub use train::{train_ivm, train_ivm_traced, IvmParams};

use crate::error::{Error, Result};
use crate::model::{FeatureStack, ProbabilityStack};
use crate::par;

/// `exp(-|a - b|^2 / (2 sigma^2))`.
pub fn rbf_kernel(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::data(format!(
            "kernel arguments differ in dimension: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if !(sigma > 0.0) {
        return Err(Error::data(format!("kernel width must be positive, got {sigma}")));
    }
    Ok(rbf_unchecked(a, b, sigma))
}

#[inline]
pub(crate) fn rbf_unchecked(a: &[f64], b: &[f64], sigma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-d2 / (2.0 * sigma * sigma)).exp()
}

/// Labeled training samples. Labels are global class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSet {
    f: usize,
    features: Vec<f64>,
    labels: Vec<u16>,
    polygons: Vec<u32>,
}

impl TrainSet {
    pub fn new(f: usize, features: Vec<f64>, labels: Vec<u16>, polygons: Vec<u32>) -> Result<Self> {
        if f == 0 {
            return Err(Error::data("training samples need at least one feature"));
        }
        if features.len() != labels.len() * f || polygons.len() != labels.len() {
            return Err(Error::data("training set buffers disagree in length"));
        }
        if labels.is_empty() {
            return Err(Error::data("training set is empty"));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::data("training features must be finite"));
        }
        Ok(Self {
            f,
            features,
            labels,
            polygons,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.f
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        &self.features[n * self.f..(n + 1) * self.f]
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn polygons(&self) -> &[u32] {
        &self.polygons
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<u16> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn subset(&self, idx: &[usize]) -> TrainSet {
        TrainSet {
            f: self.f,
            features: idx.iter().flat_map(|&i| self.sample(i).iter().copied()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            polygons: idx.iter().map(|&i| self.polygons[i]).collect(),
        }
    }
}

/// Per-feature affine standardization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(train: &TrainSet) -> Self {
        let (n, f) = (train.len() as f64, train.f);
        let mut mean = vec![0.0; f];
        for i in 0..train.len() {
            mean.iter_mut().zip(train.sample(i)).for_each(|(m, x)| *m += x);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; f];
        for i in 0..train.len() {
            var.iter_mut()
                .zip(train.sample(i).iter().zip(&mean))
                .for_each(|(v, (x, m))| *v += (x - m) * (x - m));
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(f: usize) -> Self {
        Self {
            mean: vec![0.0; f],
            scale: vec![1.0; f],
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (o, ((v, m), s)) in out.iter_mut().zip(x.iter().zip(&self.mean).zip(&self.scale)) {
            *o = (v - m) / s;
        }
    }

    pub fn apply_all(&self, xs: &[f64]) -> Vec<f64> {
        let f = self.mean.len();
        let mut out = vec![0.0; xs.len()];
        for (o, x) in out.chunks_exact_mut(f).zip(xs.chunks_exact(f)) {
            self.apply(x, o);
        }
        out
    }
}

/// Trained import vector machine.
#[derive(Debug, Clone, PartialEq)]
pub struct IvmModel {
    /// Raw (unstandardized) import points, S x F.
    import_points: Vec<f64>,
    /// Same points after standardization.
    import_std: Vec<f64>,
    /// Class-major K x (S + 1): bias, then one weight per import point.
    alpha: Vec<f64>,
    sigma: f64,
    c: f64,
    standardizer: Standardizer,
    /// Global class index of each model class.
    class_ids: Vec<u16>,
    /// Size of the global class set.
    total_classes: usize,
    f: usize,
}

impl IvmModel {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        f: usize,
        import_points: Vec<f64>,
        alpha: Vec<f64>,
        sigma: f64,
        c: f64,
        standardizer: Standardizer,
        class_ids: Vec<u16>,
        total_classes: usize,
    ) -> Result<Self> {
        if f == 0 || import_points.len() % f != 0 || import_points.is_empty() {
            return Err(Error::data("import points must form a non-empty S x F matrix"));
        }
        let s = import_points.len() / f;
        let k = class_ids.len();
        if k < 2 {
            return Err(Error::data("need >= 2 classes"));
        }
        if alpha.len() != k * (s + 1) {
            return Err(Error::data(format!(
                "expected {} coefficients for K={k}, S={s}, got {}",
                k * (s + 1),
                alpha.len()
            )));
        }
        if alpha.iter().chain(&import_points).any(|v| !v.is_finite()) {
            return Err(Error::data("model parameters must be finite"));
        }
        if !(sigma > 0.0 && c > 0.0) {
            return Err(Error::data("sigma and C must be positive"));
        }
        if standardizer.mean.len() != f || standardizer.scale.len() != f {
            return Err(Error::data("standardizer does not match the feature count"));
        }
        if class_ids.iter().any(|&c| c as usize >= total_classes) {
            return Err(Error::data("model class outside the global class set"));
        }
        let import_std = standardizer.apply_all(&import_points);
        Ok(Self {
            import_points,
            import_std,
            alpha,
            sigma,
            c,
            standardizer,
            class_ids,
            total_classes,
            f,
        })
    }

    pub fn num_import(&self) -> usize {
        self.import_points.len() / self.f
    }

    pub fn num_features(&self) -> usize {
        self.f
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn cost(&self) -> f64 {
        self.c
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn import_points(&self) -> &[f64] {
        &self.import_points
    }

    pub fn import_point(&self, s: usize) -> &[f64] {
        &self.import_points[s * self.f..(s + 1) * self.f]
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    pub fn class_ids(&self) -> &[u16] {
        &self.class_ids
    }

    pub fn total_classes(&self) -> usize {
        self.total_classes
    }

    /// Global-class probabilities of one raw feature vector; classes the
    /// model was not trained on get zero.
    pub fn predict_one(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if x.len() != self.f {
            return Err(Error::data(format!(
                "model expects {} features, got {}",
                self.f,
                x.len()
            )));
        }
        let mut z = vec![0.0; self.f];
        let mut scores = vec![0.0; self.class_ids.len()];
        self.predict_std(x, &mut z, &mut scores);
        out.iter_mut().for_each(|v| *v = 0.0);
        for (&c, p) in self.class_ids.iter().zip(&scores) {
            out[c as usize] = *p;
        }
        Ok(())
    }

    fn predict_std(&self, x: &[f64], z: &mut [f64], scores: &mut [f64]) {
        self.standardizer.apply(x, z);
        let s = self.num_import();
        let w = s + 1;
        let kern: Vec<f64> = self
            .import_std
            .chunks_exact(self.f)
            .map(|p| rbf_unchecked(z, p, self.sigma))
            .collect();
        for (k, sc) in scores.iter_mut().enumerate() {
            let coef = &self.alpha[k * w..(k + 1) * w];
            *sc = coef[0] + coef[1..].iter().zip(&kern).map(|(a, b)| a * b).sum::<f64>();
        }
        objective::softmax_in_place(scores);
    }
}

/// Class probabilities for every pixel of every date.
pub fn predict_proba(model: &IvmModel, stack: &FeatureStack) -> Result<ProbabilityStack> {
    if stack.num_features() != model.f {
        return Err(Error::data(format!(
            "model expects {} features, stack has {}",
            model.f,
            stack.num_features()
        )));
    }
    let shape = stack.shape();
    let k_total = model.total_classes;
    let rows = shape.t * shape.h;
    let row_len = shape.w * k_total;
    let mut values = vec![0.0; shape.len() * k_total];
    let f = model.f;
    par::for_each_chunk_mut(&mut values, row_len, |r, out| {
        let mut z = vec![0.0; f];
        let mut scores = vec![0.0; model.class_ids.len()];
        let src = &stack.values()[r * shape.w * f..(r + 1) * shape.w * f];
        for (x, o) in src.chunks_exact(f).zip(out.chunks_exact_mut(k_total)) {
            model.predict_std(x, &mut z, &mut scores);
            for (&c, p) in model.class_ids.iter().zip(&scores) {
                o[c as usize] = *p;
            }
        }
    });
    debug_assert_eq!(rows * row_len, values.len());
    ProbabilityStack::new(shape, k_total, values)
}
