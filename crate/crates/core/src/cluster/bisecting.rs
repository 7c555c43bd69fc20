use alloc::vec;
use alloc::vec::Vec;

use super::kmeans::kmeans;
use super::{check_input, finish_distance_model, relabel_by_first_appearance, Algorithm, ClusterError, ClusterModel, FitInfo};
use crate::matrix::{mean_of, sq_dist, DenseMatrix};
use crate::rng::derive_seed;

const ATTEMPTS: usize = 5;
const LLOYD_ITERS: usize = 300;

fn sse(points: &DenseMatrix, members: &[usize]) -> f64 {
    let c = mean_of(points, members.iter().copied());
    members.iter().map(|&i| sq_dist(points.row(i), &c)).sum()
}

/// Repeatedly splits the cluster with the largest SSE in two with 2-means.
/// The first split uses `seed` itself, so `k = 2` matches `kmeans(points, 2, seed)`.
pub fn fit_bisecting_kmeans(points: &DenseMatrix, k: usize, seed: u64) -> Result<ClusterModel, ClusterError> {
    check_input(points, k)?;
    let n = points.rows();
    let mut labels = vec![0usize; n];
    let mut groups: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut warnings = Vec::new();
    for split in 0..k - 1 {
        let target = (0..groups.len())
            .filter(|&g| groups[g].len() >= 2)
            .map(|g| (g, sse(points, &groups[g])))
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
            .map(|(g, _)| g)
            .ok_or(ClusterError::EmptySplit(0))?;
        let members = groups[target].clone();
        let sub = points.select_rows(&members);
        let mut done = None;
        for attempt in 0..ATTEMPTS {
            let s = if split == 0 && attempt == 0 {
                seed
            } else {
                derive_seed(seed, &[split as u64, attempt as u64])
            };
            let r = kmeans(&sub, 2, s, LLOYD_ITERS)?;
            let ones = r.assignments.iter().filter(|&&a| a == 1).count();
            if ones > 0 && ones < members.len() {
                done = Some(r.assignments);
                break;
            }
            warnings.push(alloc::format!("split {split}: empty side on attempt {attempt}"));
        }
        let halves = done.ok_or(ClusterError::EmptySplit(ATTEMPTS))?;
        let new_id = groups.len();
        let (mut keep, mut moved) = (Vec::new(), Vec::new());
        for (&i, &h) in members.iter().zip(&halves) {
            if h == 0 {
                keep.push(i);
            } else {
                labels[i] = new_id;
                moved.push(i);
            }
        }
        for &i in &keep {
            labels[i] = target;
        }
        groups[target] = keep;
        groups.push(moved);
    }
    let (labels, _) = relabel_by_first_appearance(&labels);
    Ok(finish_distance_model(
        Algorithm::BisectingKmeans,
        points,
        labels,
        k,
        Some(seed),
        FitInfo {
            converged: true,
            iterations: k - 1,
            warnings,
            ..FitInfo::default()
        },
    ))
}
