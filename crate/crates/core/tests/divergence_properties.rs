use kklflow::kkl::kkl_alpha_unclamped;
use kklflow::measure::rng_stream;
use kklflow::study::nested_instance;
use kklflow::{
    kkl_alpha, kkl_alpha_grid, kkl_alpha_oracle, mix, DiscreteMeasure, KernelSpec, SpectralCache, TargetSpec,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;

fn cloud(rng: &mut impl Rng, n: usize, d: usize, shift: f64, scale: f64) -> Vec<f64> {
    (0..n * d).map(|_| shift + scale * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

fn weights(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.2..1.0)).collect()
}

#[test]
fn nonnegative_on_random_instances() {
    let mut worst = f64::INFINITY;
    for inst in 0..1000u64 {
        let mut rng = rng_stream(101, inst);
        let d = rng.random_range(1..=3);
        let n = rng.random_range(1..=15);
        let m = rng.random_range(1..=15);
        let p = DiscreteMeasure::normalized(cloud(&mut rng, n, d, 0.0, 1.5), d, weights(&mut rng, n)).unwrap();
        let q = DiscreteMeasure::normalized(cloud(&mut rng, m, d, 0.4, 1.5), d, weights(&mut rng, m)).unwrap();
        let k = KernelSpec::gaussian(rng.random_range(0.3..3.0)).unwrap();
        let alpha = rng.random_range(0.01..0.99);
        let v = kkl_alpha_unclamped(&p, &q, &k, alpha).unwrap();
        worst = worst.min(v);
        assert!(kkl_alpha(&p, &q, &k, alpha).unwrap() >= 0.0);
    }
    assert!(worst >= -1e-9, "{worst}");
}

fn hausdorff(a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
    let one_way = |a: &DiscreteMeasure, b: &DiscreteMeasure| {
        a.points().map(|x| b.points().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
    };
    one_way(a, b).max(one_way(b, a))
}

#[test]
fn separation_of_distinct_supports() {
    let k = KernelSpec::gaussian(1.0).unwrap();
    let mut checked = 0;
    for inst in 0..300u64 {
        let mut rng = rng_stream(102, inst);
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=8);
        let p = DiscreteMeasure::uniform(cloud(&mut rng, n, 2, 0.0, 1.0), 2).unwrap();
        let q = DiscreteMeasure::uniform(cloud(&mut rng, m, 2, 0.0, 1.0), 2).unwrap();
        if hausdorff(&p, &q) < 0.1 {
            continue;
        }
        checked += 1;
        let v = kkl_alpha(&p, &q, &k, 0.5).unwrap();
        assert!(v > 1e-6, "instance {inst}: {v}");
    }
    assert!(checked > 250);
}

#[test]
fn monotone_on_nested_pairs() {
    let alphas: Vec<f64> = (1..=19).map(|i| 0.05 * i as f64).collect();
    let k = KernelSpec::gaussian(1.0).unwrap();
    for seed in 0..30 {
        let (p, q) = nested_instance(&TargetSpec::isotropic_gaussian(vec![0.0, 0.0], 1.0), 20, 8, seed).unwrap();
        let v = kkl_alpha_grid(&p, &q, &k, &alphas).unwrap();
        for w in v.windows(2) {
            assert!(w[1] <= w[0] + 1e-10, "seed {seed}: {v:?}");
        }
    }
}

#[test]
fn cached_matrices_symmetric() {
    for inst in 0..20u64 {
        let mut rng = rng_stream(103, inst);
        let p = DiscreteMeasure::uniform(cloud(&mut rng, 6, 2, 0.0, 1.0), 2).unwrap();
        let q = DiscreteMeasure::uniform(cloud(&mut rng, 9, 2, 0.5, 1.0), 2).unwrap();
        let cache = SpectralCache::build(&p, &q, &KernelSpec::gaussian(0.8).unwrap(), 0.3).unwrap();
        for m in [cache.g_entropy(), cache.g_joint_plus_a()] {
            let scale = m.amax().max(1.0);
            let asym: DMatrix<f64> = m - m.transpose();
            assert!(asym.amax() <= 1e-10 * scale, "{} vs {scale}", asym.amax());
        }
    }
}

#[test]
fn particle_gradient_identity() {
    let k = KernelSpec::gaussian(1.2).unwrap();
    let h = 1e-5;
    for inst in 0..20u64 {
        let mut rng = rng_stream(104, inst);
        let n = rng.random_range(2..=6);
        let pts = cloud(&mut rng, n, 2, 0.0, 1.0);
        let q = DiscreteMeasure::uniform(cloud(&mut rng, 7, 2, 0.3, 1.0), 2).unwrap();
        let p = DiscreteMeasure::uniform(pts.clone(), 2).unwrap();
        let cache = SpectralCache::build(&p, &q, &k, 0.2).unwrap();
        for i in 0..n {
            let g = cache.wasserstein_gradient(p.point(i)).unwrap();
            for c in 0..2 {
                let shifted = |delta: f64| {
                    let mut x = pts.clone();
                    x[2 * i + c] += delta;
                    kkl_alpha_unclamped(&DiscreteMeasure::uniform(x, 2).unwrap(), &q, &k, 0.2).unwrap()
                };
                let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
                let expected = g[c] / n as f64;
                assert!((fd - expected).abs() <= 1e-3 * expected.abs().max(1e-3), "inst {inst}: {fd} vs {expected}");
            }
        }
    }
}

fn small_cloud(d: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1usize..8).prop_flat_map(move |n| {
        (prop::collection::vec(-1.5f64..1.5, n * d), prop::collection::vec(0.1f64..1.0, n))
            .prop_map(move |(pts, w)| DiscreteMeasure::normalized(pts, d, w).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_equivalence(p in small_cloud(2), q in small_cloud(2), alpha in 0.05f64..0.95, offset in 0.5f64..2.0) {
        let k = KernelSpec::polynomial(2, offset).unwrap();
        let a = kkl_alpha_unclamped(&p, &q, &k, alpha).unwrap();
        let b = kkl_alpha_oracle(&p, &q, &k, alpha).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-3), "{} vs {}", a, b);
    }

    #[test]
    fn identical_measures_vanish(p in small_cloud(3), alpha in 0.01f64..0.99) {
        let k = KernelSpec::gaussian(1.0).unwrap();
        prop_assert!(kkl_alpha(&p, &p, &k, alpha).unwrap() < 1e-9);
    }

    #[test]
    fn mixtures_are_probability_measures(p in small_cloud(2), r in small_cloud(2), eps in 0.0f64..=1.0) {
        let m = mix(&p, &r, eps).unwrap();
        let total: f64 = m.weights().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert!(m.weights().iter().all(|w| *w >= 0.0));
    }
}
