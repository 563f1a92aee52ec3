mod common;

use rand::Rng;
use common::naive_glcm_features;
use stmrf::texture::{quantize_probabilistic, texture_band, texture_feature_stack, GlcmConfig, NUM_FEATURES};

#[test]
fn sliding_matches_naive_recount() {
    let mut rng = common::rng(77);
    for case in 0..6 {
        let (h, w) = (32, 32);
        let cfg = GlcmConfig {
            window: [3, 5, 11][case % 3],
            levels: 8,
            offset: 1 + case / 3,
        };
        let img: Vec<u16> = (0..h * w).map(|_| rng.random_range(0..8)).collect();
        let fast = texture_band(&img, h, w, &cfg).unwrap();
        let slow = naive_glcm_features(&img, h, w, &cfg);
        for (i, (a, b)) in fast.iter().zip(&slow).enumerate() {
            assert!((a - b).abs() <= 1e-10, "case {case} index {i}: {a} vs {b}");
        }
    }
}

#[test]
fn features_invariant_under_transpose() {
    let mut rng = common::rng(5);
    let (h, w) = (20, 20);
    let cfg = GlcmConfig {
        window: 5,
        levels: 6,
        offset: 1,
    };
    let img: Vec<u16> = (0..h * w).map(|_| rng.random_range(0..6)).collect();
    let tr: Vec<u16> = (0..h * w).map(|i| img[(i % w) * w + i / w]).collect();
    let a = texture_band(&img, h, w, &cfg).unwrap();
    let b = texture_band(&tr, w, h, &cfg).unwrap();
    for r in 0..h {
        for c in 0..w {
            let pa = &a[(r * w + c) * NUM_FEATURES..][..NUM_FEATURES];
            let pb = &b[(c * h + r) * NUM_FEATURES..][..NUM_FEATURES];
            for (x, y) in pa.iter().zip(pb) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn two_band_scene_gives_twenty_features_all_finite() {
    let mut rng = common::rng(3);
    let (h, w) = (24, 24);
    let scene: Vec<f64> = (0..h * w * 2).map(|_| rng.random::<f64>() * 10.0).collect();
    let f = texture_feature_stack(&scene, h, w, 2, &GlcmConfig::default()).unwrap();
    assert_eq!(f.len(), h * w * 20);
    assert!(f.iter().all(|v| v.is_finite()));
    // band 1 planes equal a direct single-band computation
    let band1: Vec<f64> = scene.iter().skip(1).step_by(2).copied().collect();
    let q = quantize_probabilistic(&band1, 64).unwrap();
    let direct = texture_band(&q, h, w, &GlcmConfig::default()).unwrap();
    for p in 0..h * w {
        assert_eq!(&f[p * 20 + 10..p * 20 + 20], &direct[p * 10..p * 10 + 10]);
    }
}
