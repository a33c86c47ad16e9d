mod common;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use peco_core::bias::{cluster_profiles, peco_curve, Weighting};
use peco_core::clusterer::{fit_kmeans, Assignment, KMeansParams};
use peco_core::dataset::{Label, LabelDistribution};
use peco_core::reducer::fit_pca;

fn to_rows(x: &Array2<f64>) -> Vec<Vec<f64>> {
    x.rows().into_iter().map(|r| r.to_vec()).collect()
}

#[test]
fn kmeans_never_beats_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(0.0, 1.0).unwrap();
    for seed in 0..40 {
        let x = Array2::from_shape_fn((6, 2), |_| normal.sample(&mut rng));
        let best = common::brute_force_kmeans_inertia(&to_rows(&x), 2);
        let (model, _) = fit_kmeans(x.view(), &KMeansParams { k: 2, seed, ..KMeansParams::default() }).unwrap();
        assert!(model.inertia() >= best - 1e-9, "seed {seed}: {} < optimum {best}", model.inertia());
    }
}

#[test]
fn kmeans_finds_optimum_on_separated_groups() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..40 {
        let x = Array2::from_shape_fn((6, 2), |(i, _)| rng.random_range(-1.0..1.0) + if i < 3 { 0.0 } else { 40.0 });
        let best = common::brute_force_kmeans_inertia(&to_rows(&x), 2);
        let (model, _) = fit_kmeans(x.view(), &KMeansParams { k: 2, seed, ..KMeansParams::default() }).unwrap();
        assert!((model.inertia() - best).abs() < 1e-9, "seed {seed}: {} vs {best}", model.inertia());
    }
}

#[test]
fn three_cluster_optimum_matches_enumeration() {
    // 3^6 assignments; three tight, far-apart pairs.
    let x = ndarray::array![[0.0, 0.0], [0.5, 0.1], [30.0, 0.0], [30.2, 0.4], [0.0, 30.0], [0.3, 29.8]];
    let best = common::brute_force_kmeans_inertia(&to_rows(&x), 3);
    let (model, _) = fit_kmeans(x.view(), &KMeansParams { k: 3, ..KMeansParams::default() }).unwrap();
    assert!((model.inertia() - best).abs() < 1e-9);
}

#[test]
fn pca_gram_path_matches_covariance_oracle() {
    // More columns than rows, so the library takes the Gram-matrix route.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let normal = Normal::new(0.0, 1.0).unwrap();
    for _ in 0..10 {
        let n = rng.random_range(3..=6);
        let dim = rng.random_range(n + 1..=14);
        let x = Array2::from_shape_fn((n, dim), |(_, j)| normal.sample(&mut rng) * (1.0 + j as f64 * 0.3));
        let eig = common::jacobi_eigen(&common::covariance(&to_rows(&x)));
        let model = fit_pca(x.view(), n - 1).unwrap();
        for (j, (lambda, v)) in eig.iter().take(n - 1).enumerate() {
            let comp = model.components().row(j);
            let cos: f64 = comp.iter().zip(v).map(|(a, b)| a * b).sum();
            assert!(cos.abs() > 1.0 - 1e-6, "{n}x{dim} comp {j}: {cos}");
            assert!((model.explained_variance()[j] - lambda).abs() < 1e-6);
        }
    }
}

#[test]
fn auc_matches_step_integral_for_random_assignments() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..50 {
        let k = rng.random_range(1..=30);
        let n = rng.random_range(k..=k * 40);
        let mut ids: Vec<usize> = (0..k).collect();
        ids.extend((k..n).map(|_| rng.random_range(0..k)));
        let labels: Vec<Label> = (0..n).map(|_| Label::ALL[rng.random_range(0..3)]).collect();
        let assignment = Assignment::new(ids, k).unwrap();
        let set = cluster_profiles(&assignment, &labels, k, &LabelDistribution::uniform()).unwrap();
        let curve = peco_curve(&set.profiles, 0.01, Weighting::Clusters).unwrap();
        for p in &set.profiles {
            assert!((p.d - common::distance_to_uniform(p.counts)).abs() < 1e-12);
        }
        let ds: Vec<f64> = set.profiles.iter().map(|p| p.d).collect();
        assert!((curve.auc - common::step_integral(&ds, 0.01)).abs() < 1e-12);
    }
}
