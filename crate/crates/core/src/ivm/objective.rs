//! Regularized multiclass kernel logistic regression objective and its
//! damped Newton minimizer.
//!
//! Parameters are laid out class-major, `K` blocks of `S + 1` entries: the
//! class bias followed by one weight per import point. For a sample with
//! design row `phi = [1, k(x, x_1), ..., k(x, x_S)]` the discriminant of
//! class `k` is `theta_k . phi`, and the objective is
//!
//! `sum_n [logsumexp_k f_nk - f_n,y_n] + (1 / 2C) sum_k alpha_k' K_S alpha_k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub struct KlrObjective {
    /// N x (S + 1) design matrix.
    design: DMatrix<f64>,
    /// S x S kernel among import points.
    gram: DMatrix<f64>,
    labels: Vec<usize>,
    k: usize,
    lambda: f64,
}

pub(crate) fn softmax_in_place(f: &mut [f64]) {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in f.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    f.iter_mut().for_each(|v| *v /= s);
}

fn logsumexp(f: &[f64]) -> f64 {
    let m = f.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + f.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl KlrObjective {
    /// `design` rows start with the constant 1; `labels` are in `0..k`.
    pub fn new(design: DMatrix<f64>, gram: DMatrix<f64>, labels: Vec<usize>, k: usize, c: f64) -> Result<Self> {
        let s = design.ncols().checked_sub(1).ok_or_else(|| Error::data("empty design"))?;
        if gram.nrows() != s || gram.ncols() != s {
            return Err(Error::data("gram matrix does not match the design"));
        }
        if labels.len() != design.nrows() {
            return Err(Error::data("label count does not match the design"));
        }
        if labels.iter().any(|&y| y >= k) {
            return Err(Error::data("label outside the class range"));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::data(format!("cost parameter C must be positive, got {c}")));
        }
        Ok(Self {
            design,
            gram,
            labels,
            k,
            lambda: 1.0 / c,
        })
    }

    pub fn num_params(&self) -> usize {
        self.k * self.design.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    fn width(&self) -> usize {
        self.design.ncols()
    }

    /// N x K discriminants.
    fn scores(&self, theta: &[f64]) -> DMatrix<f64> {
        let w = self.width();
        let coef = DMatrix::from_column_slice(w, self.k, theta);
        &self.design * coef
    }

    fn regularizer(&self, theta: &[f64]) -> f64 {
        let w = self.width();
        let mut r = 0.0;
        for k in 0..self.k {
            let a = DVector::from_column_slice(&theta[k * w + 1..(k + 1) * w]);
            r += a.dot(&(&self.gram * &a));
        }
        0.5 * self.lambda * r
    }

    pub fn value(&self, theta: &[f64]) -> f64 {
        let f = self.scores(theta);
        let mut nll = 0.0;
        let mut row = vec![0.0; self.k];
        for n in 0..f.nrows() {
            row.iter_mut().enumerate().for_each(|(k, v)| *v = f[(n, k)]);
            nll += logsumexp(&row) - row[self.labels[n]];
        }
        nll + self.regularizer(theta)
    }

    /// N x K class probabilities at `theta`.
    pub fn probabilities(&self, theta: &[f64]) -> DMatrix<f64> {
        let mut f = self.scores(theta);
        let mut row = vec![0.0; self.k];
        for n in 0..f.nrows() {
            row.iter_mut().enumerate().for_each(|(k, v)| *v = f[(n, k)]);
            softmax_in_place(&mut row);
            row.iter().enumerate().for_each(|(k, v)| f[(n, k)] = *v);
        }
        f
    }

    /// Residuals `p - onehot(y)`, N x K.
    fn residuals(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = p.clone();
        for (n, &y) in self.labels.iter().enumerate() {
            r[(n, y)] -= 1.0;
        }
        r
    }

    pub fn gradient(&self, theta: &[f64]) -> Vec<f64> {
        let p = self.probabilities(theta);
        self.gradient_from(theta, &p)
    }

    fn gradient_from(&self, theta: &[f64], p: &DMatrix<f64>) -> Vec<f64> {
        let w = self.width();
        // (S + 1) x K
        let g = self.design.transpose() * self.residuals(p);
        let mut out = g.as_slice().to_vec();
        for k in 0..self.k {
            let a = DVector::from_column_slice(&theta[k * w + 1..(k + 1) * w]);
            let ra = &self.gram * a;
            for s in 0..w - 1 {
                out[k * w + 1 + s] += self.lambda * ra[s];
            }
        }
        out
    }

    pub fn hessian(&self, theta: &[f64]) -> DMatrix<f64> {
        let p = self.probabilities(theta);
        self.hessian_from(&p)
    }

    fn hessian_from(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let w = self.width();
        let n = self.design.nrows();
        let dim = self.num_params();
        let mut h = DMatrix::zeros(dim, dim);
        for k in 0..self.k {
            for l in k..self.k {
                let mut scaled = self.design.clone();
                for i in 0..n {
                    let wkl = p[(i, k)] * (if k == l { 1.0 } else { 0.0 } - p[(i, l)]);
                    scaled.row_mut(i).scale_mut(wkl);
                }
                let block = self.design.transpose() * scaled;
                h.view_mut((k * w, l * w), (w, w)).copy_from(&block);
                if k != l {
                    h.view_mut((l * w, k * w), (w, w)).copy_from(&block.transpose());
                }
            }
            h.view_mut((k * w + 1, k * w + 1), (w - 1, w - 1))
                .zip_apply(&self.gram, |a, b| *a += self.lambda * b);
        }
        h
    }

    /// Minimizes the objective from `theta` by damped Newton steps with
    /// backtracking. Returns the final objective value.
    pub fn minimize(&self, theta: &mut [f64], max_iter: usize) -> Result<f64> {
        let mut f = self.value(theta);
        for _ in 0..max_iter {
            let p = self.probabilities(theta);
            let g = DVector::from_vec(self.gradient_from(theta, &p));
            let h = self.hessian_from(&p);
            let step = solve_damped(h, &g)?;
            // decrease rate along -step
            let slope = g.dot(&step);
            if slope < 1e-14 * (1.0 + f.abs()) {
                break;
            }
            let mut t = 1.0;
            let mut trial = theta.to_vec();
            let mut accepted = None;
            for _ in 0..40 {
                trial
                    .iter_mut()
                    .zip(theta.iter())
                    .zip(step.iter())
                    .for_each(|((x, &x0), &d)| *x = x0 - t * d);
                let ft = self.value(&trial);
                if ft <= f - 1e-4 * t * slope {
                    accepted = Some(ft);
                    break;
                }
                t *= 0.5;
            }
            let Some(ft) = accepted else { break };
            theta.copy_from_slice(&trial);
            let decrease = f - ft;
            f = ft;
            if decrease <= 1e-13 * (1.0 + f.abs()) {
                break;
            }
        }
        self.center_biases(theta);
        Ok(self.value(theta))
    }

    /// Biases are identified only up to a common shift; fix their mean at 0.
    fn center_biases(&self, theta: &mut [f64]) {
        let w = self.width();
        let mean = (0..self.k).map(|k| theta[k * w]).sum::<f64>() / self.k as f64;
        (0..self.k).for_each(|k| theta[k * w] -= mean);
    }
}

/// Solves `(H + mu I) x = g` with Cholesky, raising `mu` until the factor
/// exists. Returns `x` (the caller steps along `-x`).
pub(crate) fn solve_damped(h: DMatrix<f64>, g: &DVector<f64>) -> Result<DVector<f64>> {
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut mu = 1e-10 * scale;
    for _ in 0..12 {
        let mut damped = h.clone();
        for i in 0..damped.nrows() {
            damped[(i, i)] += mu;
        }
        if let Some(ch) = damped.cholesky() {
            let x = ch.solve(g);
            if x.iter().all(|v| v.is_finite()) {
                return Ok(x);
            }
        }
        mu *= 100.0;
    }
    Err(Error::Numerical(
        "Newton system stays singular after ridge damping".into(),
    ))
}
