#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stmrf::energy::MrfProblem;
use stmrf::model::{prob_to_energy, ProbabilityStack, Shape, DEFAULT_PROB_FLOOR};
use stmrf::texture::{GlcmConfig, NUM_FEATURES};
use stmrf::transitions::{build_tau_pair, potts_matrix, MatrixKind, TauPair, TransitionMatrix};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_probs(rng: &mut impl Rng, shape: Shape, k: usize) -> ProbabilityStack {
    let mut v = Vec::with_capacity(shape.len() * k);
    for _ in 0..shape.len() {
        let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(2) + 1e-3).collect();
        let s: f64 = raw.iter().sum();
        v.extend(raw.iter().map(|x| x / s));
    }
    ProbabilityStack::new(shape, k, v).unwrap()
}

pub fn random_delta(rng: &mut impl Rng, k: usize) -> TransitionMatrix {
    let mut v = vec![0.0; k * k];
    for a in 0..k {
        v[a * k + a] = 1.0;
        for b in a + 1..k {
            let x = rng.random::<f64>();
            v[a * k + b] = x;
            v[b * k + a] = x;
        }
    }
    TransitionMatrix::new(k, v, MatrixKind::Spatial, None).unwrap()
}

pub fn random_forward(rng: &mut impl Rng, k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|a| {
            (0..k)
                .map(|b| if a == b { 1.0 } else { rng.random::<f64>() })
                .collect()
        })
        .collect()
}

pub fn identity(k: usize) -> Vec<Vec<f64>> {
    (0..k)
        .map(|a| (0..k).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
        .collect()
}

/// Random problem with random delta, independent random tau pairs per gap
/// and the given weights.
pub fn random_problem(seed: u64, shape: Shape, k: usize, beta_sp: f64, beta_temp: f64) -> MrfProblem {
    let mut r = rng(seed);
    let p = random_probs(&mut r, shape, k);
    let delta = random_delta(&mut r, k);
    let taus: Vec<TauPair> = (1..shape.t)
        .map(|_| build_tau_pair(&random_forward(&mut r, k)).unwrap())
        .collect();
    MrfProblem::new(
        prob_to_energy(&p, DEFAULT_PROB_FLOOR).unwrap(),
        delta,
        taus,
        beta_sp,
        beta_temp,
    )
    .unwrap()
}

/// Blocky piecewise-constant truth with noisy unaries: the kind of problem
/// the regularizer is meant for.
pub fn blocky_problem(seed: u64, shape: Shape, k: usize, beta_sp: f64, beta_temp: f64) -> MrfProblem {
    let mut r = rng(seed);
    let block = 8;
    let bw = shape.w.div_ceil(block);
    let bh = shape.h.div_ceil(block);
    let mut truth: Vec<usize> = (0..bw * bh).map(|_| r.random_range(0..k)).collect();
    let mut v = Vec::with_capacity(shape.len() * k);
    for _t in 0..shape.t {
        for b in truth.iter_mut() {
            if r.random::<f64>() < 0.1 {
                *b = r.random_range(0..k);
            }
        }
        for row in 0..shape.h {
            for col in 0..shape.w {
                let y = truth[(row / block) * bw + col / block];
                let raw: Vec<f64> = (0..k)
                    .map(|c| r.random::<f64>() + if c == y { 0.6 } else { 0.0 })
                    .collect();
                let s: f64 = raw.iter().sum();
                v.extend(raw.iter().map(|x| x / s));
            }
        }
    }
    let p = ProbabilityStack::new(shape, k, v).unwrap();
    let mut f = random_forward(&mut r, k);
    for row in f.iter_mut() {
        for x in row.iter_mut() {
            if *x < 1.0 {
                *x *= 0.5;
            }
        }
    }
    let taus = (1..shape.t).map(|_| build_tau_pair(&f).unwrap()).collect();
    MrfProblem::new(
        prob_to_energy(&p, DEFAULT_PROB_FLOOR).unwrap(),
        potts_matrix(k).unwrap(),
        taus,
        beta_sp,
        beta_temp,
    )
    .unwrap()
}

/// Gaussian blobs, one per class, `n` samples dealt round-robin.
pub fn toy_clusters(seed: u64, n: usize, k: usize, f: usize, spread: f64) -> stmrf::ivm::TrainSet {
    let mut r = rng(seed);
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| (0..f).map(|_| r.random_range(-3.0..3.0)).collect())
        .collect();
    let mut x = Vec::with_capacity(n * f);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        for d in 0..f {
            let g: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut r);
            x.push(centers[c][d] + spread * g);
        }
        y.push(c as u16);
    }
    stmrf::ivm::TrainSet::new(f, x, y, (0..n as u32).collect()).unwrap()
}

/// Standardizes columns with population statistics, as the classifier does.
pub fn standardize(train: &stmrf::ivm::TrainSet) -> Vec<Vec<f64>> {
    let (n, f) = (train.len(), train.num_features());
    let mut cols = vec![(0.0, 0.0); f];
    for d in 0..f {
        let m = (0..n).map(|i| train.sample(i)[d]).sum::<f64>() / n as f64;
        let v = (0..n).map(|i| (train.sample(i)[d] - m).powi(2)).sum::<f64>() / n as f64;
        cols[d] = (m, if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
    }
    (0..n)
        .map(|i| (0..f).map(|d| (train.sample(i)[d] - cols[d].0) / cols[d].1).collect())
        .collect()
}

/// Objective of kernel logistic regression on every training point, minimized
/// by plain Newton iterations with per-entry loops. Biases are kept, labels
/// must be `0..k`.
pub fn full_klr_objective(train: &stmrf::ivm::TrainSet, sigma: f64, c: f64, k: usize) -> f64 {
    use nalgebra::{DMatrix, DVector};
    let z = standardize(train);
    let n = z.len();
    let kern = |a: &[f64], b: &[f64]| {
        (-a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / (2.0 * sigma * sigma)).exp()
    };
    let km: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| kern(&z[i], &z[j])).collect()).collect();
    let y: Vec<usize> = train.labels().iter().map(|&v| v as usize).collect();
    let w = n + 1;
    let dim = k * w;
    let lam = 1.0 / c;
    // phi(i, j): 1 for the bias column, kernel otherwise
    let phi = |i: usize, j: usize| if j == 0 { 1.0 } else { km[i][j - 1] };
    let probs = |th: &[f64]| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                let f: Vec<f64> = (0..k).map(|a| (0..w).map(|j| th[a * w + j] * phi(i, j)).sum()).collect();
                let m = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = f.iter().map(|v| (v - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.iter().map(|v| v / s).collect()
            })
            .collect()
    };
    let value = |th: &[f64]| -> f64 {
        let p = probs(th);
        let nll: f64 = (0..n).map(|i| -p[i][y[i]].ln()).sum();
        let mut reg = 0.0;
        for a in 0..k {
            for i in 0..n {
                for j in 0..n {
                    reg += th[a * w + 1 + i] * km[i][j] * th[a * w + 1 + j];
                }
            }
        }
        nll + 0.5 * lam * reg
    };
    let mut th = vec![0.0; dim];
    let mut f = value(&th);
    for _ in 0..200 {
        let p = probs(&th);
        let mut g: DVector<f64> = DVector::zeros(dim);
        let mut h: DMatrix<f64> = DMatrix::zeros(dim, dim);
        for i in 0..n {
            for a in 0..k {
                let r = p[i][a] - if a == y[i] { 1.0 } else { 0.0 };
                for j in 0..w {
                    g[a * w + j] += r * phi(i, j);
                }
                for b in 0..k {
                    let wt = p[i][a] * (if a == b { 1.0 } else { 0.0 } - p[i][b]);
                    for j in 0..w {
                        for l in 0..w {
                            h[(a * w + j, b * w + l)] += wt * phi(i, j) * phi(i, l);
                        }
                    }
                }
            }
        }
        for a in 0..k {
            for i in 0..n {
                for j in 0..n {
                    g[a * w + 1 + i] += lam * km[i][j] * th[a * w + 1 + j];
                    h[(a * w + 1 + i, a * w + 1 + j)] += lam * km[i][j];
                }
            }
        }
        for d in 0..dim {
            h[(d, d)] += 1e-10;
        }
        let step = h.lu().solve(&g).unwrap();
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = th.iter().zip(step.iter()).map(|(x, d)| x - t * d).collect();
            let ft = value(&trial);
            if ft <= f || t < 1e-12 {
                if ft <= f {
                    th = trial;
                }
                break;
            }
            t *= 0.5;
        }
        let fnew = value(&th);
        let done = f - fnew < 1e-14;
        f = fnew;
        if done {
            break;
        }
    }
    f
}

/// Energy written directly from the matrices: unary costs, `1 - delta` on
/// every 4-neighbor pair, and both directed temporal terms on every link.
pub fn naive_energy(prob: &MrfProblem, labels: &[u16]) -> f64 {
    let s = prob.shape();
    let y = |t: usize, r: usize, c: usize| labels[(t * s.h + r) * s.w + c] as usize;
    let mut e = 0.0;
    for t in 0..s.t {
        for r in 0..s.h {
            for c in 0..s.w {
                e += prob.unary().pixel(t, r, c)[y(t, r, c)];
                let mut nb = Vec::new();
                if r + 1 < s.h {
                    nb.push((r + 1, c));
                }
                if c + 1 < s.w {
                    nb.push((r, c + 1));
                }
                for (r2, c2) in nb {
                    e += prob.beta_sp() * (1.0 - prob.delta().get(y(t, r, c), y(t, r2, c2)));
                }
                if t + 1 < s.t {
                    let pair = &prob.tau_pairs()[t];
                    let (a, b) = (y(t, r, c), y(t + 1, r, c));
                    e += prob.beta_temp() * ((1.0 - pair.forward.get(a, b)) + (1.0 - pair.backward.get(b, a)));
                }
            }
        }
    }
    e
}

/// Minimum of `naive_energy` over every labeling, by odometer enumeration.
pub fn naive_brute_force(prob: &MrfProblem) -> f64 {
    let n = prob.shape().len();
    let k = prob.num_classes() as u16;
    let mut labels = vec![0u16; n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(naive_energy(prob, &labels));
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Direct per-pixel recount of the window around each pixel with dense
/// feature formulas.
pub fn naive_glcm_features(img: &[u16], h: usize, w: usize, cfg: &GlcmConfig) -> Vec<f64> {
    let l = cfg.levels;
    let win = cfg.window;
    let off = cfg.offset as isize;
    let mut out = Vec::with_capacity(h * w * NUM_FEATURES);
    for r in 0..h {
        for c in 0..w {
            let r0 = (r as isize - (win / 2) as isize).clamp(0, (h - win) as isize) as usize;
            let c0 = (c as isize - (win / 2) as isize).clamp(0, (w - win) as isize) as usize;
            let mut m = vec![0.0f64; l * l];
            for y in r0..r0 + win {
                for x in c0..c0 + win {
                    for (dy, dx) in [(0isize, 1isize), (1, 0), (1, 1), (1, -1)] {
                        let (y2, x2) = (y as isize + dy * off, x as isize + dx * off);
                        if y2 < r0 as isize
                            || y2 >= (r0 + win) as isize
                            || x2 < c0 as isize
                            || x2 >= (c0 + win) as isize
                        {
                            continue;
                        }
                        let a = img[y * w + x] as usize;
                        let b = img[y2 as usize * w + x2 as usize] as usize;
                        m[a * l + b] += 1.0;
                        m[b * l + a] += 1.0;
                    }
                }
            }
            let total: f64 = m.iter().sum();
            m.iter_mut().for_each(|v| *v /= total);
            let p = |i: usize, j: usize| m[i * l + j];
            let mut f = [0.0; NUM_FEATURES];
            let mut mu = 0.0;
            for i in 0..l {
                for j in 0..l {
                    let d = i as f64 - j as f64;
                    f[0] += p(i, j) * d * d;
                    f[1] += p(i, j) * d.abs();
                    f[2] += p(i, j) / (1.0 + d * d);
                    f[3] += p(i, j) * p(i, j);
                    f[5] = f64::max(f[5], p(i, j));
                    if p(i, j) > 0.0 {
                        f[6] -= p(i, j) * p(i, j).ln();
                    }
                    mu += i as f64 * p(i, j);
                }
            }
            f[4] = f[3].sqrt();
            f[7] = mu;
            let mut var = 0.0;
            let mut cov = 0.0;
            for i in 0..l {
                for j in 0..l {
                    var += (i as f64 - mu).powi(2) * p(i, j);
                    cov += (i as f64 - mu) * (j as f64 - mu) * p(i, j);
                }
            }
            f[8] = var;
            f[9] = if var <= 1e-12 { 1.0 } else { cov / var };
            out.extend_from_slice(&f);
        }
    }
    out
}

/// Longhand stratified estimators written against stratum pixel counts
/// `N_i` rather than weights.
pub struct Longhand {
    pub oa: f64,
    pub oa_se: f64,
    pub ua: Vec<f64>,
    pub ua_se: Vec<f64>,
    pub pa: Vec<f64>,
    pub pa_se: Vec<f64>,
    pub area_prop: Vec<f64>,
    pub area_se: Vec<f64>,
}

pub fn longhand(n: &[Vec<f64>], big_n: &[f64]) -> Longhand {
    let k = n.len();
    let total: f64 = big_n.iter().sum();
    let ni: Vec<f64> = n.iter().map(|r| r.iter().sum()).collect();
    let mut oa = 0.0;
    let mut oa_var = 0.0;
    let mut ua = vec![0.0; k];
    let mut ua_se = vec![0.0; k];
    for i in 0..k {
        let u = n[i][i] / ni[i];
        ua[i] = u;
        ua_se[i] = (u * (1.0 - u) / (ni[i] - 1.0)).sqrt();
        oa += big_n[i] / total * u;
        oa_var += (big_n[i] / total).powi(2) * u * (1.0 - u) / (ni[i] - 1.0);
    }
    let mut pa = vec![0.0; k];
    let mut pa_se = vec![0.0; k];
    let mut area_prop = vec![0.0; k];
    let mut area_se = vec![0.0; k];
    for j in 0..k {
        // estimated reference-class pixel count
        let nj: f64 = (0..k).map(|i| big_n[i] * n[i][j] / ni[i]).sum();
        let p = big_n[j] * n[j][j] / ni[j] / nj;
        pa[j] = p;
        let u = ua[j];
        let mut v = big_n[j].powi(2) * (1.0 - p).powi(2) * u * (1.0 - u) / (ni[j] - 1.0);
        let mut other = 0.0;
        for i in 0..k {
            if i != j {
                let f = n[i][j] / ni[i];
                other += big_n[i].powi(2) * f * (1.0 - f) / (ni[i] - 1.0);
            }
        }
        v += p * p * other;
        pa_se[j] = (v / (nj * nj)).sqrt();
        area_prop[j] = nj / total;
        let mut av = 0.0;
        for i in 0..k {
            let wi = big_n[i] / total;
            let pij = wi * n[i][j] / ni[i];
            av += (wi * pij - pij * pij) / (ni[i] - 1.0);
        }
        area_se[j] = av.sqrt();
    }
    Longhand {
        oa,
        oa_se: oa_var.sqrt(),
        ua,
        ua_se,
        pa,
        pa_se,
        area_prop,
        area_se,
    }
}

pub fn check_against_longhand(counts: &[Vec<u64>], big_n: &[f64]) {
    let k = counts.len();
    let total: f64 = big_n.iter().sum();
    let e = stmrf::assess::ErrorMatrix::new(
        k,
        counts.iter().flatten().copied().collect(),
        big_n.iter().map(|v| v / total).collect(),
    )
    .unwrap();
    let r = stmrf::assess::area_adjusted_metrics(&e).unwrap();
    let n: Vec<Vec<f64>> = counts.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
    let l = longhand(&n, big_n);
    let close = |a: f64, b: f64| assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    close(r.overall.value, l.oa);
    close(r.overall.ci, 1.96 * l.oa_se);
    for c in 0..k {
        close(r.user[c].unwrap().value, l.ua[c]);
        close(r.user[c].unwrap().ci, 1.96 * l.ua_se[c]);
        close(r.producer[c].unwrap().value, l.pa[c]);
        close(r.producer[c].unwrap().ci, 1.96 * l.pa_se[c]);
        close(r.area[c].value, l.area_prop[c]);
        close(r.area[c].ci, 1.96 * l.area_se[c]);
    }
}

