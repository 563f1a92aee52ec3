mod common;

use common::*;
use nalgebra::DMatrix;
use rand::Rng;
use stmrf::ivm::{
    grid_search_cv, predict_proba, read_model, train_ivm, train_ivm_traced, write_model, IvmParams, KlrObjective,
    SearchSettings, TrainSet,
};
use stmrf::model::{argmax, FeatureStack, Shape};

fn objective_for(train: &TrainSet, set: &[usize], sigma: f64, c: f64, k: usize) -> KlrObjective {
    let z = standardize(train);
    let kern = |a: &[f64], b: &[f64]| {
        (-a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / (2.0 * sigma * sigma)).exp()
    };
    let n = z.len();
    let design = DMatrix::from_fn(n, set.len() + 1, |i, j| if j == 0 { 1.0 } else { kern(&z[i], &z[set[j - 1]]) });
    let gram = DMatrix::from_fn(set.len(), set.len(), |a, b| kern(&z[set[a]], &z[set[b]]));
    let labels = train.labels().iter().map(|&v| v as usize).collect();
    KlrObjective::new(design, gram, labels, k, c).unwrap()
}

#[test]
fn gradient_matches_central_differences() {
    let train = toy_clusters(1, 40, 3, 4, 1.0);
    let set = [0, 5, 9, 17, 22, 31];
    let obj = objective_for(&train, &set, 1.3, 2.0, 3);
    let mut r = rng(2);
    for _ in 0..20 {
        let theta: Vec<f64> = (0..obj.num_params()).map(|_| r.random_range(-2.0..2.0)).collect();
        let g = obj.gradient(&theta);
        let mut fd = vec![0.0; theta.len()];
        for i in 0..theta.len() {
            let h = 1e-6 * (1.0 + theta[i].abs());
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            fd[i] = (obj.value(&a) - obj.value(&b)) / (2.0 * h);
        }
        let num: f64 = g.iter().zip(&fd).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        assert!(num / den < 1e-5, "relative error {}", num / den);
    }
}

#[test]
fn hessian_matches_gradient_differences() {
    let train = toy_clusters(3, 30, 3, 2, 1.0);
    let obj = objective_for(&train, &[1, 4, 8], 1.0, 1.0, 3);
    let theta: Vec<f64> = (0..obj.num_params()).map(|i| (i as f64 * 0.37).sin()).collect();
    let h = obj.hessian(&theta);
    for i in 0..theta.len() {
        let mut a = theta.clone();
        let mut b = theta.clone();
        a[i] += 1e-6;
        b[i] -= 1e-6;
        let (ga, gb) = (obj.gradient(&a), obj.gradient(&b));
        for j in 0..theta.len() {
            let fd = (ga[j] - gb[j]) / 2e-6;
            assert!((fd - h[(j, i)]).abs() < 1e-5 * (1.0 + fd.abs()));
        }
    }
}

#[test]
fn full_selection_matches_direct_fit() {
    let train = toy_clusters(7, 60, 3, 2, 1.2);
    let (sigma, c) = (1.0, 4.0);
    let params = IvmParams::default();
    let (model, path) = train_ivm_traced(&train, sigma, c, train.len(), 1e-300, &params, 3).unwrap();
    let oracle = full_klr_objective(&train, sigma, c, 3);
    let last = *path.last().unwrap();
    assert_eq!(model.num_import(), train.len());
    assert!((last - oracle).abs() < 1e-6, "{last} vs {oracle}");
    for w in path.windows(2) {
        assert!(w[1] <= w[0] + 1e-12);
    }
}

#[test]
fn objective_never_increases_during_selection() {
    let train = toy_clusters(11, 90, 4, 3, 1.5);
    let (_, path) = train_ivm_traced(&train, 1.0, 8.0, 25, 1e-9, &IvmParams::default(), 4).unwrap();
    assert!(path.len() > 2);
    for w in path.windows(2) {
        assert!(w[1] <= w[0]);
    }
}

#[test]
fn separable_clusters_are_learned() {
    let train = toy_clusters(5, 80, 2, 2, 0.2);
    let model = train_ivm(&train, 1.0, 10.0, 20, 1e-6, &IvmParams::default(), 2).unwrap();
    let mut p = [0.0; 2];
    for i in 0..train.len() {
        model.predict_one(train.sample(i), &mut p).unwrap();
        assert_eq!(argmax(&p), train.labels()[i] as usize);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }
    // cluster centers
    for class in 0..2u16 {
        let idx: Vec<usize> = (0..train.len()).filter(|&i| train.labels()[i] == class).collect();
        let center: Vec<f64> = (0..2)
            .map(|d| idx.iter().map(|&i| train.sample(i)[d]).sum::<f64>() / idx.len() as f64)
            .collect();
        model.predict_one(&center, &mut p).unwrap();
        assert!(p[class as usize] > 0.9, "{p:?}");
    }
    // import points come from the training set
    assert!(model.num_import() <= 20);
    for s in 0..model.num_import() {
        assert!((0..train.len()).any(|i| train.sample(i) == model.import_point(s)));
    }
}

#[test]
fn single_class_is_rejected() {
    let train = TrainSet::new(1, vec![0.0, 1.0, 2.0], vec![2, 2, 2], vec![0, 0, 0]).unwrap();
    let err = train_ivm(&train, 1.0, 1.0, 3, 1e-6, &IvmParams::default(), 5).unwrap_err();
    assert!(err.to_string().contains("need ≥ 2 classes"));
}

#[test]
fn subsampling_is_seeded() {
    let train = toy_clusters(13, 70, 3, 2, 1.0);
    let params = IvmParams {
        candidates: Some(10),
        seed: 4,
        ..IvmParams::default()
    };
    let a = train_ivm(&train, 1.0, 2.0, 8, 1e-6, &params, 3).unwrap();
    let b = train_ivm(&train, 1.0, 2.0, 8, 1e-6, &params, 3).unwrap();
    assert_eq!(a, b);
}

#[test]
fn predictions_sum_to_one_on_a_stack() {
    let train = toy_clusters(17, 60, 3, 2, 1.0);
    let model = train_ivm(&train, 1.0, 2.0, 10, 1e-6, &IvmParams::default(), 5).unwrap();
    let shape = Shape::new(2, 6, 7);
    let mut r = rng(3);
    let values = (0..shape.len() * 2).map(|_| r.random_range(-5.0..5.0)).collect();
    let dates = vec![
        chrono::NaiveDate::from_ymd_opt(2014, 6, 8).unwrap(),
        chrono::NaiveDate::from_ymd_opt(2014, 6, 30).unwrap(),
    ];
    let stack = FeatureStack::new(shape, 2, values, dates).unwrap();
    let p = predict_proba(&model, &stack).unwrap();
    for px in p.values().chunks(5) {
        assert!((px.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(px[3], 0.0);
        assert_eq!(px[4], 0.0);
    }
    let wrong = FeatureStack::new(Shape::new(1, 1, 1), 3, vec![0.0; 3], vec![stack.dates()[0]]).unwrap();
    assert!(predict_proba(&model, &wrong).is_err());
}

#[test]
fn model_file_round_trips() {
    let train = toy_clusters(19, 45, 3, 3, 1.0);
    let model = train_ivm(&train, 0.8, 2.0, 6, 1e-6, &IvmParams::default(), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ivm");
    write_model(&model, &path).unwrap();
    assert_eq!(&std::fs::read(&path).unwrap()[..4], b"IVM1");
    assert_eq!(read_model(&path).unwrap(), model);
    std::fs::write(&path, b"IVM1\x01").unwrap();
    assert!(read_model(&path).is_err());
}

fn settings(folds: usize) -> SearchSettings {
    SearchSettings {
        folds,
        max_import: 10,
        tol: 1e-4,
        params: IvmParams::default(),
        seed: 1,
    }
}

fn names(k: usize) -> Vec<String> {
    (0..k).map(|i| format!("c{i}")).collect()
}

#[test]
fn grid_search_basics() {
    let train = toy_clusters(23, 60, 3, 2, 0.15);
    let one = grid_search_cv(&train, &[0.7], &[3.0], &settings(3), &names(3)).unwrap();
    assert_eq!((one.sigma, one.c), (0.7, 3.0));
    // separable: every pair is perfect, so the tie rule picks the smallest C
    // and then the smallest sigma
    let r = grid_search_cv(&train, &[2.0, 1.0], &[8.0, 2.0], &settings(3), &names(3)).unwrap();
    assert_eq!(r.accuracy, 1.0);
    assert_eq!((r.sigma, r.c), (1.0, 2.0));
    assert_eq!(r.table.len(), 4);
}

#[test]
fn grid_search_names_thin_class() {
    let mut x = vec![];
    let mut y = vec![];
    for i in 0..12 {
        x.push(i as f64);
        y.push(if i < 10 { 0 } else { 1 });
    }
    let train = TrainSet::new(1, x, y, vec![0; 12]).unwrap();
    let err = grid_search_cv(&train, &[1.0], &[1.0], &settings(5), &names(2)).unwrap_err();
    assert!(err.to_string().contains("'c1'"), "{err}");
}
