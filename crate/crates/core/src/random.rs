//! Seeded generators for graphs and permutations, shared by tests, benches
//! and the synthetic dataset.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::graph::Graph;
use crate::tensor::Tensor;

/// Entries drawn uniformly from `[lo, hi)`.
pub fn uniform<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| rng.random_range(lo..hi))
}

/// Symmetric weighted adjacency where each pair is an edge with probability
/// `density`, weights in `[0.1, 1.5)`.
pub fn random_adjacency<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64) -> Tensor {
    let mut a = Tensor::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(density.clamp(0.0, 1.0)) {
                let w = rng.random_range(0.1..1.5);
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    a
}

pub fn complete_adjacency(n: usize) -> Tensor {
    Tensor::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 })
}

pub fn path_adjacency(n: usize) -> Tensor {
    Tensor::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
}

/// Disjoint union of complete graphs of the given sizes.
pub fn cliques_adjacency(sizes: &[usize]) -> Tensor {
    let n: usize = sizes.iter().sum();
    let mut block = vec![0; n];
    let mut at = 0;
    for (c, &s) in sizes.iter().enumerate() {
        block[at..at + s].fill(c);
        at += s;
    }
    Tensor::from_fn(n, n, |i, j| if i != j && block[i] == block[j] { 1.0 } else { 0.0 })
}

/// Random graph with features in `[-1, 1)` and `tasks` labels in `[-1, 1)`.
pub fn random_graph<R: Rng + ?Sized>(
    rng: &mut R,
    id: impl Into<String>,
    n: usize,
    d: usize,
    density: f64,
    tasks: usize,
) -> Graph {
    let x = uniform(rng, n, d, -1.0, 1.0);
    let a = random_adjacency(rng, n, density);
    let labels = (tasks > 0).then(|| (0..tasks).map(|_| rng.random_range(-1.0..1.0)).collect());
    Graph::new(id, x, a, labels, None).expect("generated graph is valid")
}

pub fn random_permutation<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::normalized_laplacian;

    #[test]
    fn generators_produce_valid_graphs() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..8 {
            let g = random_graph(&mut rng, "g", n, 3, 0.5, 2);
            assert_eq!(g.num_nodes(), n);
            normalized_laplacian(&complete_adjacency(n)).unwrap();
            normalized_laplacian(&path_adjacency(n)).unwrap();
        }
        let c = cliques_adjacency(&[2, 1, 3]);
        assert_eq!(c[(0, 1)], 1.0);
        assert_eq!(c[(1, 2)], 0.0);
        assert_eq!(c[(3, 5)], 1.0);
        assert_eq!(c[(2, 2)], 0.0);
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = random_permutation(&mut rng, 9);
        p.sort_unstable();
        assert_eq!(p, (0..9).collect::<Vec<_>>());
    }
}
