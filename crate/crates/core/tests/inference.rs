use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triprobit::inference::{
    clustered_sandwich, compute_covariances, delta_method, invert_symmetric, robust_sandwich, selection_matrix,
    stars, two_sided_p, wald_test,
};

fn random_problem(n: usize, p: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scores = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
    let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-1.0..1.0));
    // Negative definite log-likelihood Hessian.
    let hessian = -(&a * a.transpose() + DMatrix::identity(p, p) * p as f64);
    (scores, hessian)
}

#[test]
fn singleton_clusters_reproduce_the_robust_sandwich() {
    for seed in 0..10 {
        let n = 25 + seed as usize;
        let (s, h) = random_problem(n, 4, seed);
        let ids: Vec<u64> = (0..n as u64).rev().collect();
        let (clustered, g) = clustered_sandwich(&s, &h, &ids).unwrap();
        assert_eq!(g, n);
        let robust = robust_sandwich(&s, &h).unwrap() * (n as f64 / (n as f64 - 1.0));
        assert_eq!(clustered, robust);
    }
}

#[test]
fn sandwich_reduces_to_inverse_hessian_when_meat_equals_bread() {
    // Scores whose outer product equals −H make the sandwich collapse.
    let (s, _) = random_problem(30, 3, 4);
    let h = -(s.transpose() * &s);
    let set = compute_covariances(&s, &h, None).unwrap();
    for (a, b) in set.robust.iter().zip(set.hessian.iter()) {
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
    }
    for (a, b) in set.opg.iter().zip(set.hessian.iter()) {
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
    }
    assert!(set.clustered.is_none());
}

#[test]
fn single_coefficient_wald_is_squared_z() {
    let (s, h) = random_problem(40, 5, 8);
    let v = compute_covariances(&s, &h, None).unwrap().hessian;
    let theta = [0.3, -1.2, 0.05, 2.0, -0.7];
    for j in 0..5 {
        let w = wald_test(&selection_matrix(&[j], 5), &theta, &v).unwrap();
        let z = theta[j] / v[(j, j)].sqrt();
        assert!((w.statistic - z * z).abs() < 1e-10 * (z * z).max(1.0), "{} vs {}", w.statistic, z * z);
        assert_eq!(w.df, 1);
        assert!((w.p_value - two_sided_p(z)).abs() < 1e-10);
    }
}

#[test]
fn joint_wald_with_diagonal_covariance_sums_squares() {
    let v = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.04, 0.25, 1.0]));
    let w = wald_test(&selection_matrix(&[0, 2], 3), &[0.5, 3.0, -2.0], &v).unwrap();
    assert!((w.statistic - (6.25 + 4.0)).abs() < 1e-12);
    assert_eq!(w.df, 2);
    // χ²₂ survival function is exp(−x/2).
    assert!((w.p_value - (-w.statistic / 2.0).exp()).abs() < 1e-12);
}

#[test]
fn rank_deficient_restrictions_are_rejected() {
    let r = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
    assert!(wald_test(&r, &[1.0, 1.0], &DMatrix::identity(2, 2)).is_err());
}

#[test]
fn delta_method_for_a_product() {
    let v = DMatrix::from_row_slice(2, 2, &[0.01, 0.002, 0.002, 0.04]);
    let (val, se) = delta_method(|t| Ok(t[0] * t[1]), &[2.0, 3.0], &v).unwrap();
    assert_eq!(val, 6.0);
    // ∇ = (3, 2): var = 9·0.01 + 4·0.04 + 2·6·0.002.
    let want = (0.09f64 + 0.16 + 0.024).sqrt();
    assert!((se - want).abs() < 1e-9);
}

#[test]
fn near_singular_inverse_reports_condition() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 + 1e-15]);
    assert!(invert_symmetric(&m, "test").is_err());
    let ok = invert_symmetric(&DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), "test").unwrap();
    let want = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, -0.5, 2.0]) / 1.75;
    assert!((ok - want).amax() < 1e-14);
}

#[test]
fn star_thresholds() {
    assert_eq!(stars(0.009), "***");
    assert_eq!(stars(0.01), "**");
    assert_eq!(stars(0.049), "**");
    assert_eq!(stars(0.05), "*");
    assert_eq!(stars(0.099), "*");
    assert_eq!(stars(0.10), "");
    assert!((two_sided_p(1.959_963_984_540_054) - 0.05).abs() < 1e-12);
}

proptest! {
    #[test]
    fn cluster_labels_do_not_matter(
        seed in 0u64..1000,
        labels in proptest::collection::vec(0u64..5, 20),
        offset in 1u64..1_000_000,
    ) {
        let distinct = labels.iter().collect::<std::collections::BTreeSet<_>>().len();
        prop_assume!(distinct >= 2);
        let (s, h) = random_problem(20, 3, seed);
        let relabeled: Vec<u64> = labels.iter().map(|l| l.wrapping_mul(7919) + offset).collect();
        let (a, ga) = clustered_sandwich(&s, &h, &labels).unwrap();
        let (b, gb) = clustered_sandwich(&s, &h, &relabeled).unwrap();
        prop_assert_eq!(ga, gb);
        prop_assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn covariances_are_symmetric_psd(seed in 0u64..1000) {
        let (s, h) = random_problem(30, 4, seed);
        let ids: Vec<u64> = (0..30).map(|i| i % 6).collect();
        let set = compute_covariances(&s, &h, Some(&ids)).unwrap();
        for m in [&set.opg, &set.hessian, &set.robust, set.clustered.as_ref().unwrap()] {
            prop_assert_eq!(m, &m.transpose());
            let eig = m.clone().symmetric_eigen().eigenvalues;
            prop_assert!(eig.min() > -1e-12);
        }
        prop_assert_eq!(set.n_clusters, Some(6));
        prop_assert_eq!(set.small_sample_factor, Some(1.2));
    }
}
