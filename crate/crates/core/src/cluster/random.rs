use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{check_input, finish_distance_model, Algorithm, ClusterError, ClusterModel, FitInfo};
use crate::matrix::DenseMatrix;
use crate::rng::rng_with;

/// Baseline: uniform random labels. The first k points of a seeded
/// permutation get one cluster each so no cluster is empty.
pub fn random_assignment(points: &DenseMatrix, k: usize, seed: u64) -> Result<ClusterModel, ClusterError> {
    check_input(points, k)?;
    let n = points.rows();
    let mut rng = rng_with(seed, &[0x7A4D]);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut labels = vec![0usize; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = if pos < k { pos } else { rng.random_range(0..k) };
    }
    Ok(finish_distance_model(
        Algorithm::Random,
        points,
        labels,
        k,
        Some(seed),
        FitInfo {
            converged: true,
            ..FitInfo::default()
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n_equal_k_is_all_singletons() {
        let x = DenseMatrix::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let m = random_assignment(&x, 4, 7).unwrap();
        assert_eq!(m.cluster_sizes(), vec![1, 1, 1, 1]);
    }
}
