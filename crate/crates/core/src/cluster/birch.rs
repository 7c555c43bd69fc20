//! BIRCH: points are streamed into a CF-tree of subclusters bounded by a
//! radius threshold, then the leaf subclusters are grouped with weighted Ward.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::ward::ward_labels;
use super::{check_input, finish_distance_model, Algorithm, ClusterError, ClusterModel, FitInfo};
use crate::matrix::{dot, sq_dist, DenseMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirchConfig {
    pub branching: usize,
    pub threshold: f64,
}

impl Default for BirchConfig {
    fn default() -> Self {
        BirchConfig {
            branching: 50,
            threshold: 0.5,
        }
    }
}

/// Clustering feature: count, linear sum, sum of squared norms.
#[derive(Debug, Clone)]
struct Cf {
    n: f64,
    ls: Vec<f64>,
    ss: f64,
}

impl Cf {
    fn empty(d: usize) -> Self {
        Cf { n: 0.0, ls: vec![0.0; d], ss: 0.0 }
    }

    fn of(x: &[f64]) -> Self {
        Cf { n: 1.0, ls: x.to_vec(), ss: dot(x, x) }
    }

    fn add_point(&mut self, x: &[f64]) {
        self.n += 1.0;
        for (a, v) in self.ls.iter_mut().zip(x) {
            *a += v;
        }
        self.ss += dot(x, x);
    }

    fn add(&mut self, o: &Cf) {
        self.n += o.n;
        for (a, v) in self.ls.iter_mut().zip(&o.ls) {
            *a += v;
        }
        self.ss += o.ss;
    }

    fn centroid(&self) -> Vec<f64> {
        self.ls.iter().map(|v| v / self.n).collect()
    }

    /// Radius the subcluster would have after absorbing `x`.
    fn radius_with(&self, x: &[f64]) -> f64 {
        let n = self.n + 1.0;
        let ls: Vec<f64> = self.ls.iter().zip(x).map(|(a, b)| a + b).collect();
        let ss = self.ss + dot(x, x);
        let r2 = ss / n - dot(&ls, &ls) / (n * n);
        libm::sqrt(r2.max(0.0))
    }
}

#[derive(Clone, Copy)]
enum Kind {
    Leaf,
    Inner,
}

struct Node {
    kind: Kind,
    /// Subcluster ids for leaves, node ids for inner nodes.
    entries: Vec<usize>,
}

struct Tree {
    subs: Vec<Cf>,
    nodes: Vec<Node>,
    node_cf: Vec<Cf>,
    root: usize,
    branching: usize,
    threshold: f64,
    dim: usize,
}

impl Tree {
    fn new(dim: usize, cfg: &BirchConfig) -> Self {
        Tree {
            subs: Vec::new(),
            nodes: vec![Node { kind: Kind::Leaf, entries: Vec::new() }],
            node_cf: vec![Cf::empty(dim)],
            root: 0,
            branching: cfg.branching,
            threshold: cfg.threshold,
            dim,
        }
    }

    fn entry_cf(&self, node: usize, e: usize) -> &Cf {
        match self.nodes[node].kind {
            Kind::Leaf => &self.subs[e],
            Kind::Inner => &self.node_cf[e],
        }
    }

    fn closest_entry(&self, node: usize, x: &[f64]) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (pos, &e) in self.nodes[node].entries.iter().enumerate() {
            let d = sq_dist(x, &self.entry_cf(node, e).centroid());
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((pos, d));
            }
        }
        best.map(|(p, _)| p)
    }

    /// Inserts `x` and returns the id of the subcluster that absorbed it.
    fn insert(&mut self, x: &[f64]) -> usize {
        let mut path = vec![self.root];
        let mut node = self.root;
        while let Kind::Inner = self.nodes[node].kind {
            let pos = self.closest_entry(node, x).expect("inner nodes are never empty");
            node = self.nodes[node].entries[pos];
            path.push(node);
        }
        let sub = match self.closest_entry(node, x) {
            Some(pos) if self.subs[self.nodes[node].entries[pos]].radius_with(x) <= self.threshold => {
                let s = self.nodes[node].entries[pos];
                self.subs[s].add_point(x);
                s
            }
            _ => {
                self.subs.push(Cf::of(x));
                let s = self.subs.len() - 1;
                self.nodes[node].entries.push(s);
                s
            }
        };
        for &p in &path {
            self.node_cf[p].add_point(x);
        }
        for depth in (0..path.len()).rev() {
            let node = path[depth];
            if self.nodes[node].entries.len() <= self.branching {
                break;
            }
            let sibling = self.split(node);
            if depth == 0 {
                let mut cf = self.node_cf[node].clone();
                cf.add(&self.node_cf[sibling]);
                self.nodes.push(Node { kind: Kind::Inner, entries: vec![node, sibling] });
                self.node_cf.push(cf);
                self.root = self.nodes.len() - 1;
            } else {
                self.nodes[path[depth - 1]].entries.push(sibling);
            }
        }
        sub
    }

    /// Splits an overfull node around its farthest pair of entries; the node
    /// keeps one half and the new sibling's id is returned.
    fn split(&mut self, node: usize) -> usize {
        let entries = core::mem::take(&mut self.nodes[node].entries);
        let cents: Vec<Vec<f64>> = entries.iter().map(|&e| self.entry_cf(node, e).centroid()).collect();
        let (mut a, mut b, mut far) = (0, 1, -1.0);
        for i in 0..cents.len() {
            for j in i + 1..cents.len() {
                let d = sq_dist(&cents[i], &cents[j]);
                if d > far {
                    (a, b, far) = (i, j, d);
                }
            }
        }
        let (mut left, mut right) = (Vec::new(), Vec::new());
        let (mut lcf, mut rcf) = (Cf::empty(self.dim), Cf::empty(self.dim));
        for (i, &e) in entries.iter().enumerate() {
            let to_left = i == a || (i != b && sq_dist(&cents[i], &cents[a]) <= sq_dist(&cents[i], &cents[b]));
            let cf = self.entry_cf(node, e).clone();
            if to_left {
                left.push(e);
                lcf.add(&cf);
            } else {
                right.push(e);
                rcf.add(&cf);
            }
        }
        let kind = self.nodes[node].kind;
        self.nodes[node].entries = left;
        self.node_cf[node] = lcf;
        self.nodes.push(Node { kind, entries: right });
        self.node_cf.push(rcf);
        self.nodes.len() - 1
    }
}

pub fn fit_birch(points: &DenseMatrix, k: usize, cfg: &BirchConfig) -> Result<ClusterModel, ClusterError> {
    check_input(points, k)?;
    if cfg.branching < 2 {
        return Err(ClusterError::Config(format!("branching must be at least 2, got {}", cfg.branching)));
    }
    if cfg.threshold.is_nan() || cfg.threshold <= 0.0 {
        return Err(ClusterError::Config(format!("threshold must be positive, got {}", cfg.threshold)));
    }
    let mut tree = Tree::new(points.cols(), cfg);
    let owner: Vec<usize> = points.iter_rows().map(|x| tree.insert(x)).collect();
    let leaves = tree.subs.len();
    if leaves < k {
        return Err(ClusterError::ThresholdTooLarge { leaves, k });
    }
    let cents: Vec<Vec<f64>> = tree.subs.iter().map(Cf::centroid).collect();
    let weights: Vec<f64> = tree.subs.iter().map(|c| c.n).collect();
    let sub_labels = ward_labels(&DenseMatrix::from_rows(&cents).expect("equal widths"), Some(&weights), k);
    let mut labels: Vec<usize> = owner.iter().map(|&s| sub_labels[s]).collect();
    labels = super::relabel_by_first_appearance(&labels).0;
    Ok(finish_distance_model(
        Algorithm::Birch,
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
