use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use super::ClusterError;
use crate::matrix::{mean_of, sq_dist, DenseMatrix};
use crate::rng::{rng, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult {
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    pub sse: f64,
    pub iterations: usize,
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance to the nearest chosen center.
pub(crate) fn kmeans_pp(points: &DenseMatrix, k: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    let n = points.rows();
    let mut centers = Vec::with_capacity(k);
    centers.push(points.row(rng.random_range(0..n)).to_vec());
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if *d <= 0.0 {
                    continue;
                }
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points.row(pick).to_vec();
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), &c));
        }
        centers.push(c);
    }
    centers
}

pub(crate) fn nearest_center(x: &[f64], centers: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, center) in centers.iter().enumerate() {
        let d = sq_dist(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd iterations from k-means++ seeds until assignments stop changing or
/// `max_iter` is reached. Empty clusters keep their previous center.
pub fn kmeans(points: &DenseMatrix, k: usize, seed: u64, max_iter: usize) -> Result<KmeansResult, ClusterError> {
    if k == 0 {
        return Err(ClusterError::TooFewClusters(0));
    }
    if k > points.rows() {
        return Err(ClusterError::TooManyClusters { k, n: points.rows() });
    }
    let mut rng = rng(seed);
    let mut centers = kmeans_pp(points, k, &mut rng);
    let n = points.rows();
    let mut assignments = vec![usize::MAX; n];
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let (c, _) = nearest_center(points.row(i), &centers);
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assignments[i] == c).collect();
            if !members.is_empty() {
                *center = mean_of(points, members);
            }
        }
    }
    let sse = (0..n)
        .map(|i| sq_dist(points.row(i), &centers[assignments[i]]))
        .sum();
    Ok(KmeansResult {
        assignments,
        centers,
        sse,
        iterations,
    })
}
