//! Cluster-quality metrics (homogeneity, NMI, silhouette) and sweep reports.
//!
//! Entropies use natural logs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::cluster::{Algorithm, ClusterError, ClusterSpec};
use crate::matrix::{dist, DenseMatrix};
use crate::rng::rng_with;

/// Silhouette is sampled above this many points.
pub const SILHOUETTE_FULL_LIMIT: usize = 10_000;
pub const SILHOUETTE_DEFAULT_SAMPLE: usize = 2_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("no points")]
    Empty,
    #[error("silhouette needs at least 2 clusters")]
    SingleCluster,
    #[error("sample size must be positive")]
    BadSample,
    #[error(transparent)]
    Cluster(#[from] ClusterError),
}

fn entropy_of(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * libm::log(p)
        })
        .sum()
}

struct Contingency {
    n: f64,
    joint: BTreeMap<(usize, usize), usize>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

fn dense_ids<T: Ord>(xs: &[T]) -> (Vec<usize>, usize) {
    let mut map: BTreeMap<&T, usize> = BTreeMap::new();
    let ids = xs
        .iter()
        .map(|x| {
            let next = map.len();
            *map.entry(x).or_insert(next)
        })
        .collect();
    (ids, map.len())
}

fn contingency<T: Ord, U: Ord>(a: &[T], b: &[U]) -> Result<Contingency, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let (ia, ka) = dense_ids(a);
    let (ib, kb) = dense_ids(b);
    let mut joint = BTreeMap::new();
    let (mut rows, mut cols) = (vec![0; ka], vec![0; kb]);
    for (x, y) in ia.into_iter().zip(ib) {
        *joint.entry((x, y)).or_insert(0) += 1;
        rows[x] += 1;
        cols[y] += 1;
    }
    Ok(Contingency {
        n: a.len() as f64,
        joint,
        rows,
        cols,
    })
}

impl Contingency {
    fn mutual_information(&self) -> f64 {
        let n = self.n;
        self.joint
            .iter()
            .map(|(&(r, c), &nij)| {
                let nij = nij as f64;
                nij / n * libm::log(n * nij / (self.rows[r] as f64 * self.cols[c] as f64))
            })
            .sum::<f64>()
            .max(0.0)
    }
}

/// 1 - H(true | pred) / H(true); 1.0 when the true labels are constant.
pub fn homogeneity<T: Ord, U: Ord>(truth: &[T], pred: &[U]) -> Result<f64, MetricError> {
    let t = contingency(truth, pred)?;
    let h_true = entropy_of(t.rows.iter().copied(), t.n);
    if h_true == 0.0 {
        return Ok(1.0);
    }
    // H(true | pred) = H(true) - I(true; pred)
    let h = 1.0 - (h_true - t.mutual_information()) / h_true;
    Ok(h.clamp(0.0, 1.0))
}

/// Mutual information over the arithmetic mean of the two entropies.
/// Two constant labelings agree perfectly (1.0); one constant side gives 0.
pub fn nmi<T: Ord, U: Ord>(u: &[T], v: &[U]) -> Result<f64, MetricError> {
    let t = contingency(u, v)?;
    let hu = entropy_of(t.rows.iter().copied(), t.n);
    let hv = entropy_of(t.cols.iter().copied(), t.n);
    if hu == 0.0 && hv == 0.0 {
        return Ok(1.0);
    }
    if hu == 0.0 || hv == 0.0 {
        return Ok(0.0);
    }
    Ok((t.mutual_information() / ((hu + hv) / 2.0)).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SilhouettePoint {
    pub a: f64,
    pub b: f64,
    pub s: f64,
}

fn silhouette_point(points: &DenseMatrix, labels: &[usize], k: usize, sizes: &[usize], i: usize) -> SilhouettePoint {
    let own = labels[i];
    if sizes[own] <= 1 {
        return SilhouettePoint { a: 0.0, b: 0.0, s: 0.0 };
    }
    let mut sums = vec![0.0; k];
    let x = points.row(i);
    for (j, &l) in labels.iter().enumerate() {
        if j != i {
            sums[l] += dist(x, points.row(j));
        }
    }
    let a = sums[own] / (sizes[own] - 1) as f64;
    let b = (0..k)
        .filter(|&c| c != own && sizes[c] > 0)
        .map(|c| sums[c] / sizes[c] as f64)
        .fold(f64::INFINITY, f64::min);
    let m = a.max(b);
    let s = if m > 0.0 { (b - a) / m } else { 0.0 };
    SilhouettePoint { a, b, s }
}

fn prepare(points: &DenseMatrix, labels: &[usize]) -> Result<(Vec<usize>, usize, Vec<usize>), MetricError> {
    if points.rows() != labels.len() {
        return Err(MetricError::LengthMismatch(points.rows(), labels.len()));
    }
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    let (ids, k) = dense_ids(labels);
    if k < 2 {
        return Err(MetricError::SingleCluster);
    }
    let mut sizes = vec![0; k];
    for &l in &ids {
        sizes[l] += 1;
    }
    Ok((ids, k, sizes))
}

/// Per-point silhouette values over Euclidean distance.
pub fn silhouette_samples(points: &DenseMatrix, labels: &[usize]) -> Result<Vec<SilhouettePoint>, MetricError> {
    let (ids, k, sizes) = prepare(points, labels)?;
    Ok((0..points.rows())
        .map(|i| silhouette_point(points, &ids, k, &sizes, i))
        .collect())
}

/// Sample size used when none is given: everything up to 10,000 points,
/// 2,000 sampled points beyond that.
pub fn default_silhouette_sample(n: usize) -> Option<usize> {
    (n > SILHOUETTE_FULL_LIMIT).then_some(SILHOUETTE_DEFAULT_SAMPLE)
}

/// Mean silhouette. With `sample_size`, the mean runs over a seeded uniform
/// sample of points while distances still use every point.
pub fn silhouette(points: &DenseMatrix, labels: &[usize], sample_size: Option<usize>, seed: u64) -> Result<f64, MetricError> {
    let (ids, k, sizes) = prepare(points, labels)?;
    let n = points.rows();
    let chosen: Vec<usize> = match sample_size {
        Some(0) => return Err(MetricError::BadSample),
        Some(m) if m < n => {
            let mut idx = sample(&mut rng_with(seed, &[0x5111]), n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    };
    let total: f64 = chosen
        .iter()
        .map(|&i| silhouette_point(points, &ids, k, &sizes, i).s)
        .sum();
    Ok(total / chosen.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterQualityReport {
    pub feature: String,
    pub algorithm: Algorithm,
    pub k: usize,
    pub seed: u64,
    /// Absent when no gold labels were supplied.
    pub homogeneity: Option<f64>,
    pub nmi: Option<f64>,
    pub silhouette: f64,
}

/// One feature representation to sweep over, e.g. `tfidf:512` or `embedding`.
pub struct SweepFeatures<'a> {
    pub name: String,
    pub points: &'a DenseMatrix,
}

pub struct SweepPlan<'a> {
    pub features: Vec<SweepFeatures<'a>>,
    pub specs: Vec<ClusterSpec>,
    pub ks: Vec<usize>,
    pub seeds: Vec<u64>,
    /// Gold classes aligned with the feature rows.
    pub gold: Option<&'a [usize]>,
    pub silhouette_sample: Option<usize>,
}

/// Fits every (features, algorithm, k, seed) combination. A random baseline is
/// added for every k when the plan lacks one. Rows come back sorted.
pub fn sweep(plan: &SweepPlan<'_>) -> Result<Vec<ClusterQualityReport>, MetricError> {
    let mut specs = plan.specs.clone();
    if !specs.iter().any(|s| s.algorithm() == Algorithm::Random) {
        specs.push(ClusterSpec::Random);
    }
    let mut out = Vec::new();
    for f in &plan.features {
        if let Some(g) = plan.gold {
            if g.len() != f.points.rows() {
                return Err(MetricError::LengthMismatch(g.len(), f.points.rows()));
            }
        }
        let sample = plan.silhouette_sample.or_else(|| default_silhouette_sample(f.points.rows()));
        for spec in &specs {
            for &k in &plan.ks {
                for &seed in &plan.seeds {
                    let model = spec.fit(f.points, k, seed)?;
                    let (h, m) = match plan.gold {
                        Some(g) => (Some(homogeneity(g, &model.assignments)?), Some(nmi(g, &model.assignments)?)),
                        None => (None, None),
                    };
                    out.push(ClusterQualityReport {
                        feature: f.name.clone(),
                        algorithm: spec.algorithm(),
                        k,
                        seed,
                        homogeneity: h,
                        nmi: m,
                        silhouette: silhouette(f.points, &model.assignments, sample, seed)?,
                    });
                }
            }
        }
    }
    out.sort_by(|a, b| {
        (&a.feature, a.algorithm as u8, a.k, a.seed).cmp(&(&b.feature, b.algorithm as u8, b.k, b.seed))
    });
    Ok(out)
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

pub fn reports_to_csv(rows: &[ClusterQualityReport]) -> String {
    let mut s = String::from("feature,algorithm,k,seed,homogeneity,nmi,silhouette\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{:.4}\n",
            r.feature,
            r.algorithm,
            r.k,
            r.seed,
            cell(r.homogeneity),
            cell(r.nmi),
            r.silhouette
        ));
    }
    s
}

pub fn reports_to_markdown(rows: &[ClusterQualityReport]) -> String {
    let mut s = String::from("| Features | Algorithm | Clusters | Homogeneity | NMI | Silhouette | Seed |\n");
    s.push_str("|---|---|---:|---:|---:|---:|---:|\n");
    for r in rows {
        s.push_str(&format!(
            "| {} | {} | {} | {} | {} | {:.4} | {} |\n",
            r.feature,
            r.algorithm,
            r.k,
            cell(r.homogeneity),
            cell(r.nmi),
            r.silhouette,
            r.seed
        ));
    }
    s
}
