use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use egcn_core::graph::{batch_graphs, normalized_laplacian, Graph};
use egcn_core::metric::{evolved_laplacian, mahalanobis_distances, metric_matrix, MetricParams};
use egcn_core::random::{random_adjacency, random_graph, random_permutation, uniform};
use egcn_core::spectral::{chebyshev_filter, scale_laplacian, spectral_oracle, ChebyshevCoeffs};
use egcn_core::tensor::{symmetric_eigenvalues, Tensor};
use egcn_core::training::{auc, auc_brute_force, fold_assignments, learning_rate};

fn adjacency(seed: u64, n: usize, density: f64) -> Tensor {
    random_adjacency(&mut ChaCha8Rng::seed_from_u64(seed), n, density)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn laplacian_is_symmetric_with_bounded_spectrum(seed: u64, n in 1usize..14, density in 0.0f64..=1.0) {
        let l = normalized_laplacian(&adjacency(seed, n, density)).unwrap();
        prop_assert!(l.asymmetry() <= 1e-12);
        for ev in symmetric_eigenvalues(&l) {
            prop_assert!((-1e-10..=2.0 + 1e-10).contains(&ev));
        }
    }

    #[test]
    fn isolated_nodes_keep_unit_diagonal(seed: u64, n in 1usize..10) {
        let mut a = adjacency(seed, n, 0.5);
        for j in 0..n {
            a[(0, j)] = 0.0;
            a[(j, 0)] = 0.0;
        }
        let l = normalized_laplacian(&a).unwrap();
        prop_assert_eq!(l[(0, 0)], 1.0);
        prop_assert!((1..n).all(|j| l[(0, j)] == 0.0));
    }

    #[test]
    fn laplacian_commutes_with_permutation(seed: u64, n in 1usize..10) {
        let a = adjacency(seed, n, 0.6);
        let perm = random_permutation(&mut ChaCha8Rng::seed_from_u64(seed ^ 1), n);
        let l = normalized_laplacian(&a).unwrap();
        let lp = normalized_laplacian(&a.permute_symmetric(&perm)).unwrap();
        prop_assert!(l.permute_symmetric(&perm).max_abs_diff(&lp) <= 1e-12);
    }

    #[test]
    fn chebyshev_recursion_matches_eigendecomposition(
        seed: u64,
        n in 1usize..10,
        theta in prop::collection::vec(-2.0f64..2.0, 1..7),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = normalized_laplacian(&random_adjacency(&mut rng, n, 0.5)).unwrap();
        let x = uniform(&mut rng, n, 3, -1.0, 1.0);
        let theta = ChebyshevCoeffs::new(theta).unwrap();
        let fast = chebyshev_filter(&scale_laplacian(&l, 2.0).unwrap(), &x, &theta).unwrap();
        let exact = spectral_oracle(&l, &x, &theta, 2.0).unwrap();
        prop_assert!(fast.max_abs_diff(&exact) <= 1e-9 * exact.max_abs().max(1.0));
    }

    #[test]
    fn metric_is_psd_and_distances_are_a_pseudometric(seed: u64, n in 1usize..9, d in 1usize..5, m in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = uniform(&mut rng, d, m, -2.0, 2.0);
        prop_assert!(symmetric_eigenvalues(&metric_matrix(&w)).into_iter().all(|e| e >= -1e-10));
        let x = uniform(&mut rng, n, d, -3.0, 3.0);
        let dist = mahalanobis_distances(&x, &w).unwrap();
        prop_assert_eq!(dist.asymmetry(), 0.0);
        for i in 0..n {
            prop_assert_eq!(dist[(i, i)], 0.0);
            for j in 0..n {
                prop_assert!(dist[(i, j)] >= 0.0);
                for k in 0..n {
                    prop_assert!(dist[(i, k)] <= dist[(i, j)] + dist[(j, k)] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn evolved_laplacian_is_symmetric_and_equivariant(seed: u64, n in 1usize..9, mix in 0.0f64..=1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_graph(&mut rng, "g", n, 3, 0.5, 0);
        let params = MetricParams::new(uniform(&mut rng, 3, 2, -1.0, 1.0), 1.0, mix, 0.0).unwrap();
        let le = evolved_laplacian(g.node_features(), &g.laplacian(), &params).unwrap();
        prop_assert!(le.asymmetry() <= 1e-12);
        for ev in symmetric_eigenvalues(&le) {
            prop_assert!(ev >= -1e-10 && ev <= 2.0 + 2.0 * (1.0 - mix) + 1e-10);
        }
        let perm = random_permutation(&mut rng, n);
        let gp = g.permuted(&perm).unwrap();
        let lep = evolved_laplacian(gp.node_features(), &gp.laplacian(), &params).unwrap();
        prop_assert!(le.permute_symmetric(&perm).max_abs_diff(&lep) <= 1e-12);
    }

    #[test]
    fn batching_preserves_samples(seed: u64, sizes in prop::collection::vec(1usize..7, 1..5), extra in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graphs: Vec<Graph> = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| random_graph(&mut rng, format!("g{i}"), n, 2, 0.5, 1))
            .collect();
        let n_max = sizes.iter().max().unwrap() + extra;
        let batch = batch_graphs(&graphs, n_max).unwrap();
        for (b, g) in graphs.iter().enumerate() {
            prop_assert_eq!(&batch.sample_features(b), g.node_features());
            prop_assert_eq!(&batch.sample_adjacency(b), g.adjacency());
            prop_assert_eq!(batch.node_mask()[b].iter().filter(|&&m| m).count(), g.num_nodes());
        }
    }

    #[test]
    fn auc_matches_pairwise_count(
        pairs in prop::collection::vec((0u8..5, any::<bool>()), 2..40),
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
        let positive: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        prop_assert_eq!(auc(&scores, &positive).unwrap(), auc_brute_force(&scores, &positive));
    }

    #[test]
    fn learning_rate_is_a_non_increasing_staircase(iter in 0usize..10_000) {
        let lr = learning_rate(0.005, 0.9, 50, iter);
        prop_assert_eq!(lr, 0.005 * 0.9f64.powi((iter / 50) as i32));
        prop_assert!(learning_rate(0.005, 0.9, 50, iter + 1) <= lr);
    }

    #[test]
    fn folds_partition_any_dataset(n in 2usize..200, k in 2usize..10, seed: u64) {
        prop_assume!(k <= n);
        let folds = fold_assignments(n, k, seed).unwrap();
        let mut all = folds.concat();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let sizes: Vec<usize> = folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }
}
