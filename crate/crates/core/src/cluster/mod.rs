//! Clustering algorithms over dense feature rows.
//!
//! Every fitted model carries hard assignments, per-cluster centers and, for
//! each point, a ranked list of its most likely clusters. RAG retrieval reads
//! that list through [`top_clusters`].
//!
//! Affinity scores are posterior responsibilities for the Gaussian mixture and
//! negative Euclidean distance to the cluster center for the others. For the
//! distance-scored models the point's own cluster always leads its list (Ward
//! and BIRCH clusters are not Voronoi cells, so the nearest center is not
//! always the assigned one); the rest of the list is sorted by score.

mod birch;
mod bisecting;
mod gmm;
mod kmeans;
mod random;
pub mod synthetic;
mod ward;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::matrix::{dist, mean_of, DenseMatrix};

pub use birch::{fit_birch, BirchConfig};
pub use bisecting::fit_bisecting_kmeans;
pub use gmm::{fit_gmm, GmmConfig};
pub use kmeans::{kmeans, KmeansResult};
pub use random::random_assignment;
pub use ward::{fit_hierarchical, ward_labels};

/// How many ranked clusters each point keeps.
pub const AFFINITY_DEPTH: usize = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClusterError {
    #[error("need at least 2 clusters, got k = {0}")]
    TooFewClusters(usize),
    #[error("k = {k} exceeds the number of points ({n})")]
    TooManyClusters { k: usize, n: usize },
    #[error("feature matrix has no columns")]
    NoFeatures,
    #[error("feature matrix has a non-finite entry")]
    NonFinite,
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("BIRCH produced {leaves} subclusters, fewer than k = {k}; lower the threshold")]
    ThresholdTooLarge { leaves: usize, k: usize },
    #[error("bisection kept producing an empty side after {0} attempts")]
    EmptySplit(usize),
    #[error("requested top {m} clusters but only {available} are ranked")]
    DepthExceeded { m: usize, available: usize },
    #[error("document index {0} out of range")]
    BadIndex(usize),
    #[error("cluster {0} has no members")]
    EmptyCluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Gmm,
    Hierarchical,
    Birch,
    BisectingKmeans,
    Random,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] = [
        Algorithm::Gmm,
        Algorithm::Hierarchical,
        Algorithm::Birch,
        Algorithm::BisectingKmeans,
        Algorithm::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Gmm => "gmm",
            Algorithm::Hierarchical => "hierarchical",
            Algorithm::Birch => "birch",
            Algorithm::BisectingKmeans => "bisecting_kmeans",
            Algorithm::Random => "random",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl core::str::FromStr for Algorithm {
    type Err = ClusterError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "gmm" => Ok(Algorithm::Gmm),
            "hierarchical" | "ward" => Ok(Algorithm::Hierarchical),
            "birch" => Ok(Algorithm::Birch),
            "bisecting_kmeans" | "bisecting-kmeans" | "bisecting" => Ok(Algorithm::BisectingKmeans),
            "random" => Ok(Algorithm::Random),
            other => Err(ClusterError::Config(alloc::format!("unknown algorithm `{other}`"))),
        }
    }
}

/// Fit diagnostics. Only the mixture model fills the likelihood trace.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub converged: bool,
    pub iterations: usize,
    /// Mean per-point log-likelihood after each EM iteration.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub log_likelihood: Vec<f64>,
    /// Iterations after which a component was reseeded (the likelihood may
    /// drop there).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reseeded_at: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: Option<u64>,
    pub assignments: Vec<usize>,
    pub centers: Vec<Vec<f64>>,
    /// Per point: `(cluster, score)` pairs, best first.
    pub affinity: Vec<Vec<(usize, f64)>>,
    #[serde(default)]
    pub info: FitInfo,
}

impl ClusterModel {
    pub fn n_points(&self) -> usize {
        self.assignments.len()
    }

    /// Indices of the points assigned to `cluster`, ascending.
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0usize; self.k];
        for &c in &self.assignments {
            sizes[c] += 1;
        }
        sizes
    }

    /// Sum of squared distances of every point to its cluster center.
    pub fn sse(&self, points: &DenseMatrix) -> f64 {
        self.assignments
            .iter()
            .enumerate()
            .map(|(i, &c)| crate::matrix::sq_dist(points.row(i), &self.centers[c]))
            .sum()
    }
}

/// The `m` most likely clusters for point `doc`, best first.
pub fn top_clusters(model: &ClusterModel, doc: usize, m: usize) -> Result<Vec<usize>, ClusterError> {
    let ranked = model.affinity.get(doc).ok_or(ClusterError::BadIndex(doc))?;
    if m > ranked.len() {
        return Err(ClusterError::DepthExceeded {
            m,
            available: ranked.len(),
        });
    }
    Ok(ranked[..m].iter().map(|(c, _)| *c).collect())
}

/// The `m` clusters whose centers are nearest to an out-of-sample point,
/// nearest first.
pub fn nearest_clusters(model: &ClusterModel, x: &[f64], m: usize) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = model
        .centers
        .iter()
        .enumerate()
        .map(|(c, center)| (c, -dist(x, center)))
        .collect();
    rank(&mut scored);
    scored.into_iter().take(m).map(|(c, _)| c).collect()
}

pub(crate) fn check_input(points: &DenseMatrix, k: usize) -> Result<(), ClusterError> {
    if k < 2 {
        return Err(ClusterError::TooFewClusters(k));
    }
    if k > points.rows() {
        return Err(ClusterError::TooManyClusters { k, n: points.rows() });
    }
    if points.cols() == 0 {
        return Err(ClusterError::NoFeatures);
    }
    if !points.is_finite() {
        return Err(ClusterError::NonFinite);
    }
    Ok(())
}

/// Sort `(cluster, score)` by descending score, ties to the lower cluster id.
pub(crate) fn rank(scores: &mut [(usize, f64)]) {
    scores.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
}

/// Renumbers labels to 0..k in order of first appearance.
pub(crate) fn relabel_by_first_appearance(labels: &[usize]) -> (Vec<usize>, usize) {
    let mut map: alloc::collections::BTreeMap<usize, usize> = alloc::collections::BTreeMap::new();
    let out = labels
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (out, map.len())
}

pub(crate) fn centers_of(points: &DenseMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
    for (i, &c) in assignments.iter().enumerate() {
        members[c].push(i);
    }
    members
        .into_iter()
        .map(|m| mean_of(points, m))
        .collect()
}

/// Distance-scored affinity: own cluster first, then the nearest other
/// centers, `depth` entries in total.
pub(crate) fn distance_affinity(
    points: &DenseMatrix,
    assignments: &[usize],
    centers: &[Vec<f64>],
    depth: usize,
) -> Vec<Vec<(usize, f64)>> {
    (0..points.rows())
        .map(|i| {
            let own = assignments[i];
            let x = points.row(i);
            let mut others: Vec<(usize, f64)> = centers
                .iter()
                .enumerate()
                .filter(|(c, _)| *c != own)
                .map(|(c, center)| (c, -dist(x, center)))
                .collect();
            rank(&mut others);
            let mut list = Vec::with_capacity(depth);
            list.push((own, -dist(x, &centers[own])));
            list.extend(others.into_iter().take(depth.saturating_sub(1)));
            list
        })
        .collect()
}

/// Shared tail of the distance-based fitters.
pub(crate) fn finish_distance_model(
    algorithm: Algorithm,
    points: &DenseMatrix,
    assignments: Vec<usize>,
    k: usize,
    seed: Option<u64>,
    info: FitInfo,
) -> ClusterModel {
    let centers = centers_of(points, &assignments, k);
    let affinity = distance_affinity(points, &assignments, &centers, AFFINITY_DEPTH.min(k));
    ClusterModel {
        algorithm,
        k,
        seed,
        assignments,
        centers,
        affinity,
        info,
    }
}

/// Algorithm plus its parameters, so sweeps and the pipeline can fit any of
/// them uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algo", rename_all = "snake_case")]
pub enum ClusterSpec {
    Gmm(GmmConfig),
    Hierarchical,
    Birch(BirchConfig),
    BisectingKmeans,
    Random,
}

impl ClusterSpec {
    pub fn default_for(algorithm: Algorithm) -> Self {
        match algorithm {
            Algorithm::Gmm => ClusterSpec::Gmm(GmmConfig::default()),
            Algorithm::Hierarchical => ClusterSpec::Hierarchical,
            Algorithm::Birch => ClusterSpec::Birch(BirchConfig::default()),
            Algorithm::BisectingKmeans => ClusterSpec::BisectingKmeans,
            Algorithm::Random => ClusterSpec::Random,
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            ClusterSpec::Gmm(_) => Algorithm::Gmm,
            ClusterSpec::Hierarchical => Algorithm::Hierarchical,
            ClusterSpec::Birch(_) => Algorithm::Birch,
            ClusterSpec::BisectingKmeans => Algorithm::BisectingKmeans,
            ClusterSpec::Random => Algorithm::Random,
        }
    }

    pub fn fit(&self, points: &DenseMatrix, k: usize, seed: u64) -> Result<ClusterModel, ClusterError> {
        match self {
            ClusterSpec::Gmm(cfg) => fit_gmm(points, k, cfg, seed),
            ClusterSpec::Hierarchical => fit_hierarchical(points, k),
            ClusterSpec::Birch(cfg) => fit_birch(points, k, cfg),
            ClusterSpec::BisectingKmeans => fit_bisecting_kmeans(points, k, seed),
            ClusterSpec::Random => random_assignment(points, k, seed),
        }
    }
}
