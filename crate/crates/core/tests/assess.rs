mod common;

use common::{check_against_longhand, rng};
use proptest::prelude::*;
use rand::Rng;
use stmrf::assess::{area_adjusted_metrics, area_estimates, ErrorMatrix};

#[test]
fn worked_two_class_matrix() {
    let counts = vec![vec![40, 10], vec![5, 45]];
    check_against_longhand(&counts, &[3000.0, 7000.0]);
    let e = ErrorMatrix::new(2, vec![40, 10, 5, 45], vec![0.3, 0.7]).unwrap();
    let r = area_adjusted_metrics(&e).unwrap();
    assert!((r.overall.value - 0.87).abs() < 1e-9);
    assert!((r.user[0].unwrap().value - 0.80).abs() < 1e-9);
    assert!((r.producer[0].unwrap().value - 0.774_193_548_387).abs() < 1e-9);
    assert!((area_estimates(&e, 100.0).unwrap()[0].value - 31.0).abs() < 1e-9);
}

#[test]
fn random_matrices_match_longhand() {
    let mut r = rng(77);
    for _ in 0..200 {
        let k = r.random_range(2..6);
        let counts: Vec<Vec<u64>> = (0..k)
            .map(|i| {
                (0..k)
                    .map(|j| r.random_range(0..30) + if i == j { 5 } else { 1 })
                    .collect()
            })
            .collect();
        let big_n: Vec<f64> = (0..k).map(|_| r.random_range(100.0..5000.0)).collect();
        check_against_longhand(&counts, &big_n);
    }
}

fn matrix_strategy() -> impl Strategy<Value = (usize, Vec<u64>, Vec<f64>)> {
    (2usize..6).prop_flat_map(|k| {
        (
            Just(k),
            proptest::collection::vec(0u64..50, k * k),
            proptest::collection::vec(0.01f64..1.0, k),
        )
    })
}

fn make(k: usize, mut counts: Vec<u64>, w: Vec<f64>) -> ErrorMatrix {
    for i in 0..k {
        // every stratum gets at least one sample
        counts[i * k + i] += 1;
    }
    let s: f64 = w.iter().sum();
    ErrorMatrix::new(k, counts, w.iter().map(|v| v / s).collect()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn proportions_sum_to_one((k, counts, w) in matrix_strategy()) {
        let e = make(k, counts, w);
        let s: f64 = e.proportions().unwrap().iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-9);
        let r = area_adjusted_metrics(&e).unwrap();
        prop_assert!(r.overall.value <= 1.0 + 1e-12);
        let p = e.proportions().unwrap();
        for i in 0..k {
            let row: f64 = p[i * k..(i + 1) * k].iter().sum();
            let u = r.user[i].unwrap().value;
            prop_assert!((u * row - p[i * k + i]).abs() < 1e-12);
        }
    }

    /// With sample sizes proportional to stratum weights, merging two
    /// classes never lowers the overall accuracy estimate.
    #[test]
    fn merging_classes_does_not_lower_oa(
        k in 3usize..6,
        seed in 0u64..1000,
        a in 0usize..6,
        b in 0usize..6,
    ) {
        let (a, b) = (a % k, b % k);
        prop_assume!(a != b);
        let mut r = rng(seed);
        let rows: Vec<Vec<u64>> = (0..k)
            .map(|_| (0..k).map(|_| r.random_range(0..20) + 1).collect())
            .collect();
        let n: u64 = rows.iter().flatten().sum();
        let w: Vec<f64> = rows.iter().map(|row| row.iter().sum::<u64>() as f64 / n as f64).collect();
        let e = ErrorMatrix::new(k, rows.iter().flatten().copied().collect(), w.clone()).unwrap();
        let before = area_adjusted_metrics(&e).unwrap().overall.value;

        let map = |i: usize| if i == b { a } else { i };
        let keep: Vec<usize> = (0..k).filter(|&i| i != b).collect();
        let m = keep.len();
        let idx = |i: usize| keep.iter().position(|&x| x == map(i)).unwrap();
        let mut merged = vec![0u64; m * m];
        let mut mw = vec![0.0; m];
        for i in 0..k {
            mw[idx(i)] += w[i];
            for j in 0..k {
                merged[idx(i) * m + idx(j)] += rows[i][j];
            }
        }
        let after = area_adjusted_metrics(&ErrorMatrix::new(m, merged, mw).unwrap()).unwrap().overall.value;
        prop_assert!(after >= before - 1e-12);
    }
}
