//! Raster-stack data model: class sets, feature/probability/energy/label
//! stacks, the probability-to-energy transform and argmax labeling.

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::par;

/// Default clip applied to probabilities before taking logarithms.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-12;

/// Tolerance on per-pixel probability sums.
pub const PROB_SUM_TOL: f64 = 1e-9;

/// Ordered set of class identifiers. A class index is its position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassSet {
    names: Vec<String>,
}

impl ClassSet {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(Error::data("class set must not be empty"));
        }
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::data(format!("class {i} has an empty name")));
            }
            if names[..i].contains(n) {
                return Err(Error::data(format!("duplicate class name '{n}'")));
            }
        }
        Ok(Self { names })
    }

    /// The five land-cover classes of the burnt-pasture study.
    pub fn study() -> Self {
        Self {
            names: STUDY_CLASSES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn name(&self, k: usize) -> &str {
        &self.names[k]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

pub const STUDY_CLASSES: [&str; 5] = [
    "burnt_pasture",
    "clean_pasture",
    "shrubby_pasture",
    "water",
    "forest",
];
pub const BURNT_PASTURE: usize = 0;
pub const CLEAN_PASTURE: usize = 1;
pub const SHRUBBY_PASTURE: usize = 2;
pub const WATER: usize = 3;
pub const FOREST: usize = 4;

/// Extent of a raster stack: `t` dates of `h` x `w` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub t: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(t: usize, h: usize, w: usize) -> Self {
        Self { t, h, w }
    }

    pub fn layer_len(&self) -> usize {
        self.h * self.w
    }

    pub fn len(&self) -> usize {
        self.t * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat index of pixel `(row, col)` on date `t`.
    #[inline]
    pub fn index(&self, t: usize, row: usize, col: usize) -> usize {
        (t * self.h + row) * self.w + col
    }

    /// Inverse of [`Shape::index`].
    #[inline]
    pub fn coords(&self, i: usize) -> (usize, usize, usize) {
        let plane = self.layer_len();
        (i / plane, (i % plane) / self.w, i % self.w)
    }
}

/// Per-date, per-pixel feature vectors plus the acquisition dates.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    shape: Shape,
    f: usize,
    values: Vec<f64>,
    dates: Vec<NaiveDate>,
}

impl FeatureStack {
    pub fn new(shape: Shape, f: usize, values: Vec<f64>, dates: Vec<NaiveDate>) -> Result<Self> {
        if shape.t == 0 || shape.h == 0 || shape.w == 0 || f == 0 {
            return Err(Error::data(format!(
                "feature stack dimensions must be positive, got T={} H={} W={} F={f}",
                shape.t, shape.h, shape.w
            )));
        }
        if values.len() != shape.len() * f {
            return Err(Error::data(format!(
                "feature stack expects {} values, got {}",
                shape.len() * f,
                values.len()
            )));
        }
        if dates.len() != shape.t {
            return Err(Error::data(format!(
                "feature stack has {} dates for {} layers",
                dates.len(),
                shape.t
            )));
        }
        validate_dates(&dates)?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let (t, row, col) = shape.coords(i / f);
            return Err(Error::data(format!(
                "non-finite feature {} at date {t}, pixel ({row}, {col})",
                i % f
            )));
        }
        Ok(Self {
            shape,
            f,
            values,
            dates,
        })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_features(&self) -> usize {
        self.f
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn pixel(&self, t: usize, row: usize, col: usize) -> &[f64] {
        let i = self.shape.index(t, row, col) * self.f;
        &self.values[i..i + self.f]
    }

    /// All pixels of date `t`, `f` values per pixel.
    pub fn layer(&self, t: usize) -> &[f64] {
        let n = self.shape.layer_len() * self.f;
        &self.values[t * n..(t + 1) * n]
    }

    /// Single-date sub-stack.
    pub fn date_slice(&self, t: usize) -> FeatureStack {
        FeatureStack {
            shape: Shape::new(1, self.shape.h, self.shape.w),
            f: self.f,
            values: self.layer(t).to_vec(),
            dates: vec![self.dates[t]],
        }
    }
}

pub(crate) fn validate_dates(dates: &[NaiveDate]) -> Result<()> {
    if dates.is_empty() {
        return Err(Error::data("at least one date is required"));
    }
    if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
        return Err(Error::data(format!(
            "dates must be strictly increasing: {} then {}",
            w[0], w[1]
        )));
    }
    Ok(())
}

/// Per-date, per-pixel class probabilities. Each pixel sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityStack {
    shape: Shape,
    k: usize,
    values: Vec<f64>,
}

impl ProbabilityStack {
    pub fn new(shape: Shape, k: usize, values: Vec<f64>) -> Result<Self> {
        check_len(shape, k, values.len(), "probability")?;
        for (p, px) in values.chunks_exact(k).enumerate() {
            let (t, row, col) = shape.coords(p);
            if let Some(c) = px.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    t,
                    row,
                    col,
                    class: c,
                });
            }
            if let Some(c) = px.iter().position(|&v| v < 0.0) {
                return Err(Error::data(format!(
                    "negative probability at date {t}, pixel ({row}, {col}), class {c}"
                )));
            }
            let s: f64 = px.iter().sum();
            if (s - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::data(format!(
                    "probabilities at date {t}, pixel ({row}, {col}) sum to {s}"
                )));
            }
        }
        Ok(Self { shape, k, values })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn pixel(&self, t: usize, row: usize, col: usize) -> &[f64] {
        let i = self.shape.index(t, row, col) * self.k;
        &self.values[i..i + self.k]
    }

    /// Stacks single-date probability maps along time.
    pub fn concat(layers: Vec<ProbabilityStack>) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::data("no probability layers"))?;
        let (h, w, k) = (first.shape.h, first.shape.w, first.k);
        let mut t = 0;
        let mut values = Vec::new();
        for l in layers {
            if l.shape.h != h || l.shape.w != w || l.k != k {
                return Err(Error::data("probability layers disagree in shape"));
            }
            t += l.shape.t;
            values.extend_from_slice(&l.values);
        }
        Ok(Self {
            shape: Shape::new(t, h, w),
            k,
            values,
        })
    }
}

fn check_len(shape: Shape, k: usize, len: usize, what: &str) -> Result<()> {
    if shape.is_empty() || k == 0 {
        return Err(Error::data(format!("{what} stack dimensions must be positive")));
    }
    if len != shape.len() * k {
        return Err(Error::data(format!(
            "{what} stack expects {} values, got {len}",
            shape.len() * k
        )));
    }
    Ok(())
}

/// Per-date, per-pixel, per-class unary costs (non-negative).
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyStack {
    shape: Shape,
    k: usize,
    values: Vec<f64>,
}

impl EnergyStack {
    pub fn new(shape: Shape, k: usize, values: Vec<f64>) -> Result<Self> {
        check_len(shape, k, values.len(), "energy")?;
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            let (t, row, col) = shape.coords(i / k);
            return Err(Error::data(format!(
                "unary energy {} at date {t}, pixel ({row}, {col}), class {} is not a finite non-negative number",
                values[i],
                i % k
            )));
        }
        Ok(Self { shape, k, values })
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Costs of every class at flat pixel index `i`.
    #[inline]
    pub fn at(&self, i: usize) -> &[f64] {
        &self.values[i * self.k..(i + 1) * self.k]
    }

    pub fn pixel(&self, t: usize, row: usize, col: usize) -> &[f64] {
        self.at(self.shape.index(t, row, col))
    }

    /// Per-pixel argmin, lowest class index on ties.
    pub fn argmin_labels(&self) -> LabelStack {
        let values = self
            .values
            .chunks_exact(self.k)
            .map(|u| argmin(u) as u16)
            .collect();
        LabelStack {
            shape: self.shape,
            k: self.k,
            values,
        }
    }
}

/// Per-date class maps.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelStack {
    shape: Shape,
    k: usize,
    values: Vec<u16>,
}

impl LabelStack {
    pub fn new(shape: Shape, k: usize, values: Vec<u16>) -> Result<Self> {
        if shape.is_empty() || k == 0 || k > u16::MAX as usize {
            return Err(Error::data("label stack dimensions must be positive"));
        }
        if values.len() != shape.len() {
            return Err(Error::data(format!(
                "label stack expects {} values, got {}",
                shape.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|&v| v as usize >= k) {
            let (t, row, col) = shape.coords(i);
            return Err(Error::data(format!(
                "label {} at date {t}, pixel ({row}, {col}) is not below K={k}",
                values[i]
            )));
        }
        Ok(Self { shape, k, values })
    }

    pub fn filled(shape: Shape, k: usize, label: u16) -> Result<Self> {
        Self::new(shape, k, vec![label; shape.len()])
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn values(&self) -> &[u16] {
        &self.values
    }

    pub fn get(&self, t: usize, row: usize, col: usize) -> u16 {
        self.values[self.shape.index(t, row, col)]
    }

    pub fn layer(&self, t: usize) -> &[u16] {
        let n = self.shape.layer_len();
        &self.values[t * n..(t + 1) * n]
    }

    /// Replaces the label at flat index `i`.
    pub fn set_flat(&mut self, i: usize, label: u16) {
        assert!((label as usize) < self.k, "label out of range");
        self.values[i] = label;
    }

    /// Fraction of pixels whose label differs from `other`.
    pub fn changed_fraction(&self, other: &LabelStack) -> f64 {
        let diff = self
            .values
            .iter()
            .zip(&other.values)
            .filter(|(a, b)| a != b)
            .count();
        diff as f64 / self.values.len() as f64
    }

    pub fn into_values(self) -> Vec<u16> {
        self.values
    }
}

/// Lowest index of the minimum; NaN entries are never selected.
#[inline]
pub fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x < v[best] {
            best = i;
        }
    }
    best
}

#[inline]
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Converts probabilities into unary energies `-ln(max(p, floor))`.
pub fn prob_to_energy(p: &ProbabilityStack, floor: f64) -> Result<EnergyStack> {
    if !(floor > 0.0 && floor <= 1e-6) {
        return Err(Error::data(format!(
            "probability floor must lie in (0, 1e-6], got {floor}"
        )));
    }
    let (shape, k) = (p.shape, p.k);
    let mut values = vec![0.0; p.values.len()];
    let row_len = shape.w * k;
    par::try_for_each_chunk_mut(&mut values, row_len, |r, out| {
        let src = &p.values[r * row_len..(r + 1) * row_len];
        for (i, (&pi, o)) in src.iter().zip(out.iter_mut()).enumerate() {
            if !pi.is_finite() {
                let t = r / shape.h;
                return Err(Error::NonFinite {
                    t,
                    row: r % shape.h,
                    col: i / k,
                    class: i % k,
                });
            }
            *o = -pi.max(floor).ln();
        }
        Ok(())
    })?;
    Ok(EnergyStack { shape, k, values })
}

/// Per-pixel most probable class, lowest index on ties.
pub fn argmax_labels(p: &ProbabilityStack) -> LabelStack {
    let k = p.k;
    let values = par::map_collect(p.shape.len(), |i| argmax(&p.values[i * k..(i + 1) * k]) as u16);
    LabelStack {
        shape: p.shape,
        k,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(probs: &[f64]) -> ProbabilityStack {
        ProbabilityStack::new(Shape::new(1, 1, 1), probs.len(), probs.to_vec()).unwrap()
    }

    #[test]
    fn energy_of_certain_class_is_zero() {
        let e = prob_to_energy(&single(&[1.0, 0.0]), DEFAULT_PROB_FLOOR).unwrap();
        assert_eq!(e.values()[0], 0.0);
    }

    #[test]
    fn energy_of_exp_minus_two() {
        let p = (-2.0f64).exp();
        let e = prob_to_energy(&single(&[p, 1.0 - p]), DEFAULT_PROB_FLOOR).unwrap();
        assert!((e.values()[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_hits_floor() {
        let e = prob_to_energy(&single(&[0.0, 1.0]), 1e-12).unwrap();
        // -ln(1e-12) = 12 ln 10
        assert!((e.values()[0] - 27.631021115928547).abs() < 1e-9);
    }

    #[test]
    fn floor_out_of_range_rejected() {
        let p = single(&[0.5, 0.5]);
        assert!(prob_to_energy(&p, 0.0).is_err());
        assert!(prob_to_energy(&p, 1e-3).is_err());
    }

    #[test]
    fn non_finite_probability_is_named() {
        let err = ProbabilityStack::new(Shape::new(1, 1, 2), 2, vec![0.5, 0.5, f64::NAN, 1.0])
            .unwrap_err();
        assert!(matches!(
            err,
            Error::NonFinite {
                t: 0,
                row: 0,
                col: 1,
                class: 0
            }
        ));
    }

    #[test]
    fn argmax_and_ties() {
        assert_eq!(argmax_labels(&single(&[0.1, 0.7, 0.2])).values(), &[1]);
        assert_eq!(argmax_labels(&single(&[0.4, 0.4, 0.2])).values(), &[0]);
        assert_eq!(argmax_labels(&single(&[0.2; 5])).values(), &[0]);
    }

    #[test]
    fn label_range_checked() {
        assert!(LabelStack::new(Shape::new(1, 1, 2), 3, vec![0, 3]).is_err());
        assert!(LabelStack::new(Shape::new(1, 1, 2), 3, vec![0, 2]).is_ok());
    }

    #[test]
    fn class_set_rejects_duplicates() {
        assert!(ClassSet::new(["a", "b", "a"]).is_err());
        assert!(ClassSet::new(Vec::<String>::new()).is_err());
        assert_eq!(ClassSet::study().index_of("water"), Some(WATER));
    }

    #[test]
    fn dates_must_increase() {
        let d = |m, day| NaiveDate::from_ymd_opt(2014, m, day).unwrap();
        let shape = Shape::new(2, 1, 1);
        assert!(FeatureStack::new(shape, 1, vec![0.0, 1.0], vec![d(6, 8), d(6, 8)]).is_err());
        assert!(FeatureStack::new(shape, 1, vec![0.0, 1.0], vec![d(6, 8), d(6, 30)]).is_ok());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stack() -> impl Strategy<Value = ProbabilityStack> {
            (1usize..4, 1usize..4, 1usize..4, 1usize..6).prop_flat_map(|(t, h, w, k)| {
                proptest::collection::vec(0.0f64..1.0, t * h * w * k).prop_map(move |raw| {
                    let mut v = raw;
                    for px in v.chunks_mut(k) {
                        let s: f64 = px.iter().sum::<f64>() + 1e-3;
                        px.iter_mut().for_each(|x| *x = (*x + 1e-3 / k as f64) / s);
                    }
                    ProbabilityStack::new(Shape::new(t, h, w), k, v).unwrap()
                })
            })
        }

        proptest! {
            #[test]
            fn energy_argmin_matches_argmax(p in stack()) {
                let e = prob_to_energy(&p, DEFAULT_PROB_FLOOR).unwrap();
                prop_assert_eq!(e.argmin_labels(), argmax_labels(&p));
            }

            #[test]
            fn energy_strictly_decreasing(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
                prop_assume!(a != b);
                let ea = prob_to_energy(&single(&[a, 1.0 - a]), 1e-12).unwrap().values()[0];
                let eb = prob_to_energy(&single(&[b, 1.0 - b]), 1e-12).unwrap().values()[0];
                prop_assert_eq!(a < b, ea > eb);
            }
        }
    }
}
