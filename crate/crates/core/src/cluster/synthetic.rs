//! Seeded isotropic Gaussian blobs with their generating labels, used as the
//! ground-truth oracle for clustering recovery checks.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::matrix::DenseMatrix;
use crate::rng::{rng_with, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub n: usize,
    pub dim: usize,
    pub centers: usize,
    /// Standard deviation of every coordinate around its center.
    pub spread: f64,
    /// Centers are drawn uniformly from `[-w, w]^dim`.
    pub box_half_width: f64,
    pub seed: u64,
}

impl BlobSpec {
    /// 600 points, 16 dimensions, 6 blobs.
    pub fn six_blobs(seed: u64) -> Self {
        BlobSpec {
            n: 600,
            dim: 16,
            centers: 6,
            spread: 1.0,
            box_half_width: 10.0,
            seed,
        }
    }
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    // Box-Muller; u1 in (0, 1] keeps the log finite
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
}

/// Points are spread round-robin over the blobs (sizes differ by at most one).
pub fn gaussian_blobs(spec: &BlobSpec) -> (DenseMatrix, Vec<usize>) {
    let mut rng = rng_with(spec.seed, &[0xB10B]);
    let centers: Vec<Vec<f64>> = (0..spec.centers)
        .map(|_| {
            (0..spec.dim)
                .map(|_| rng.random_range(-spec.box_half_width..spec.box_half_width))
                .collect()
        })
        .collect();
    let mut m = DenseMatrix::zeros(spec.n, spec.dim);
    let mut labels = Vec::with_capacity(spec.n);
    for i in 0..spec.n {
        let c = i % spec.centers.max(1);
        for (v, mu) in m.row_mut(i).iter_mut().zip(&centers[c]) {
            *v = mu + spec.spread * standard_normal(&mut rng);
        }
        labels.push(c);
    }
    (m, labels)
}
