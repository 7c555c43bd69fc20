//! Agglomerative clustering with Ward linkage, via the nearest-neighbor chain
//! algorithm on cluster centroids.
//!
//! Ward's merge cost between clusters A and B is
//! `|A||B| / (|A| + |B|) * ||c_A - c_B||^2`. It is reducible, so the
//! nearest-neighbor chain yields the same dendrogram as greedy merging while
//! needing only O(n d) memory. The dendrogram is cut by replaying the n - k
//! cheapest merges.

use alloc::vec;
use alloc::vec::Vec;

use super::{check_input, finish_distance_model, relabel_by_first_appearance, Algorithm, ClusterError, ClusterModel, FitInfo};
use crate::matrix::{sq_dist, DenseMatrix};

struct Merge {
    a: usize,
    b: usize,
    cost: f64,
    order: usize,
}

fn ward_cost(size_a: f64, size_b: f64, ca: &[f64], cb: &[f64]) -> f64 {
    size_a * size_b / (size_a + size_b) * sq_dist(ca, cb)
}

fn dendrogram(points: &DenseMatrix, weights: &[f64]) -> Vec<Merge> {
    let n = points.rows();
    let mut centroid: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).to_vec()).collect();
    let mut size: Vec<f64> = weights.to_vec();
    let mut active = vec![true; n];
    let mut n_active = n;
    let mut chain: Vec<usize> = Vec::new();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    while n_active > 1 {
        if chain.is_empty() {
            chain.push(active.iter().position(|a| *a).expect("an active cluster"));
        }
        let top = *chain.last().expect("non-empty chain");
        let prev = if chain.len() >= 2 { Some(chain[chain.len() - 2]) } else { None };
        // nearest active neighbor; prefer the previous chain element on ties so
        // the chain terminates, then the lowest index
        let mut best: Option<(usize, f64)> = prev.map(|p| (p, ward_cost(size[top], size[p], &centroid[top], &centroid[p])));
        for j in 0..n {
            if !active[j] || j == top {
                continue;
            }
            let c = ward_cost(size[top], size[j], &centroid[top], &centroid[j]);
            match best {
                Some((_, bc)) if c >= bc => {}
                _ => best = Some((j, c)),
            }
        }
        let (nn, cost) = best.expect("at least two active clusters");
        if Some(nn) == prev {
            chain.pop();
            chain.pop();
            let (keep, gone) = if top < nn { (top, nn) } else { (nn, top) };
            let total = size[keep] + size[gone];
            let merged: Vec<f64> = centroid[keep]
                .iter()
                .zip(&centroid[gone])
                .map(|(x, y)| (x * size[keep] + y * size[gone]) / total)
                .collect();
            centroid[keep] = merged;
            size[keep] = total;
            active[gone] = false;
            n_active -= 1;
            merges.push(Merge {
                a: keep,
                b: gone,
                cost,
                order: merges.len(),
            });
        } else {
            chain.push(nn);
        }
    }
    merges
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Ward clustering of (optionally weighted) points into `k` groups. Labels
/// are numbered by first appearance.
pub fn ward_labels(points: &DenseMatrix, weights: Option<&[f64]>, k: usize) -> Vec<usize> {
    let n = points.rows();
    let unit = vec![1.0; n];
    let weights = weights.unwrap_or(&unit);
    let mut merges = dendrogram(points, weights);
    merges.sort_by(|x, y| {
        x.cost
            .partial_cmp(&y.cost)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(x.order.cmp(&y.order))
    });
    let mut parent: Vec<usize> = (0..n).collect();
    for m in merges.iter().take(n.saturating_sub(k)) {
        let (ra, rb) = (find(&mut parent, m.a), find(&mut parent, m.b));
        if ra != rb {
            parent[ra.max(rb)] = ra.min(rb);
        }
    }
    let roots: Vec<usize> = (0..n).map(|i| find(&mut parent, i)).collect();
    relabel_by_first_appearance(&roots).0
}

/// Deterministic; no seed involved.
pub fn fit_hierarchical(points: &DenseMatrix, k: usize) -> Result<ClusterModel, ClusterError> {
    check_input(points, k)?;
    let labels = ward_labels(points, None, k);
    Ok(finish_distance_model(
        Algorithm::Hierarchical,
        points,
        labels,
        k,
        None,
        FitInfo {
            converged: true,
            ..FitInfo::default()
        },
    ))
}
