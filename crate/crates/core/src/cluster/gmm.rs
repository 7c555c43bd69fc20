//! Diagonal-covariance Gaussian mixture fitted by EM.
//!
//! Variances are floored at `reg_covar` rather than having it added: the
//! floored update is the exact maximizer of the EM objective over the feasible
//! set, which keeps the log-likelihood non-decreasing between iterations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_pp, nearest_center};
use super::{check_input, rank, Algorithm, ClusterError, ClusterModel, FitInfo, AFFINITY_DEPTH};
use crate::matrix::DenseMatrix;
use crate::rng::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GmmInit {
    KmeansPlusPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub covariance: Covariance,
    pub reg_covar: f64,
    pub max_iter: usize,
    /// Convergence threshold on the change of mean log-likelihood.
    pub tol: f64,
    pub init: GmmInit,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            covariance: Covariance::Diagonal,
            reg_covar: 1e-6,
            max_iter: 200,
            tol: 1e-4,
            init: GmmInit::KmeansPlusPlus,
        }
    }
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + libm::log(v.iter().map(|x| libm::exp(x - max)).sum::<f64>())
}

/// Writes log responsibilities into `resp` and returns the mean log-likelihood.
fn e_step(points: &DenseMatrix, p: &Params, resp: &mut [Vec<f64>]) -> f64 {
    let k = p.weights.len();
    let consts: Vec<f64> = (0..k)
        .map(|c| {
            let log_det: f64 = p.vars[c].iter().map(|v| libm::log(*v)).sum();
            libm::log(p.weights[c]) - 0.5 * (points.cols() as f64 * LN_2PI + log_det)
        })
        .collect();
    let mut total = 0.0;
    for (i, r) in resp.iter_mut().enumerate() {
        let x = points.row(i);
        for c in 0..k {
            let maha: f64 = x
                .iter()
                .zip(&p.means[c])
                .zip(&p.vars[c])
                .map(|((xv, m), v)| (xv - m) * (xv - m) / v)
                .sum();
            r[c] = consts[c] - 0.5 * maha;
        }
        let lse = log_sum_exp(r);
        for v in r.iter_mut() {
            *v = libm::exp(*v - lse);
        }
        total += lse;
    }
    total / points.rows() as f64
}

/// Returns the components whose mass collapsed.
fn m_step(points: &DenseMatrix, resp: &[Vec<f64>], reg: f64, p: &mut Params) -> Vec<usize> {
    let (n, d, k) = (points.rows(), points.cols(), p.weights.len());
    let mut degenerate = Vec::new();
    for c in 0..k {
        let nk: f64 = resp.iter().map(|r| r[c]).sum();
        if nk < 10.0 * f64::EPSILON * n as f64 {
            degenerate.push(c);
            continue;
        }
        let mut mean = vec![0.0; d];
        for (i, r) in resp.iter().enumerate() {
            for (m, x) in mean.iter_mut().zip(points.row(i)) {
                *m += r[c] * x;
            }
        }
        for m in &mut mean {
            *m /= nk;
        }
        let mut var = vec![0.0; d];
        for (i, r) in resp.iter().enumerate() {
            for ((v, x), m) in var.iter_mut().zip(points.row(i)).zip(&mean) {
                *v += r[c] * (x - m) * (x - m);
            }
        }
        for v in &mut var {
            *v = (*v / nk).max(reg);
        }
        p.weights[c] = nk / n as f64;
        p.means[c] = mean;
        p.vars[c] = var;
    }
    degenerate
}

/// Moves each collapsed component onto the point farthest from its nearest
/// healthy mean.
fn reseed(points: &DenseMatrix, p: &mut Params, degenerate: &[usize], reg: f64) {
    let d = points.cols();
    let healthy: Vec<Vec<f64>> = (0..p.means.len())
        .filter(|c| !degenerate.contains(c))
        .map(|c| p.means[c].clone())
        .collect();
    let mut taken: Vec<usize> = Vec::new();
    for &c in degenerate {
        let far = (0..points.rows())
            .filter(|i| !taken.contains(i))
            .map(|i| {
                let dist = if healthy.is_empty() {
                    0.0
                } else {
                    nearest_center(points.row(i), &healthy).1
                };
                (i, dist)
            })
            .fold((0usize, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
            .0;
        taken.push(far);
        p.means[c] = points.row(far).to_vec();
        p.vars[c] = vec![reg.max(1e-3); d];
        p.weights[c] = 1.0 / points.rows() as f64;
    }
    let total: f64 = p.weights.iter().sum();
    for w in &mut p.weights {
        *w /= total;
    }
}

fn init_params(points: &DenseMatrix, k: usize, cfg: &GmmConfig, seed: u64) -> Params {
    let (n, d) = (points.rows(), points.cols());
    let seeds = kmeans_pp(points, k, &mut rng(seed));
    let labels: Vec<usize> = (0..n).map(|i| nearest_center(points.row(i), &seeds).0).collect();
    let mut resp = vec![vec![0.0; k]; n];
    for (r, &l) in resp.iter_mut().zip(&labels) {
        r[l] = 1.0;
    }
    let mut p = Params {
        weights: vec![1.0 / k as f64; k],
        means: seeds,
        vars: vec![vec![1.0; d]; k],
    };
    let degenerate = m_step(points, &resp, cfg.reg_covar, &mut p);
    if !degenerate.is_empty() {
        reseed(points, &mut p, &degenerate, cfg.reg_covar);
    }
    p
}

pub fn fit_gmm(points: &DenseMatrix, k: usize, cfg: &GmmConfig, seed: u64) -> Result<ClusterModel, ClusterError> {
    check_input(points, k)?;
    if cfg.reg_covar.is_nan() || cfg.reg_covar < 1e-10 {
        return Err(ClusterError::Config(format!("reg_covar must be >= 1e-10, got {}", cfg.reg_covar)));
    }
    if cfg.max_iter == 0 {
        return Err(ClusterError::Config("max_iter must be positive".into()));
    }
    let n = points.rows();
    let mut p = init_params(points, k, cfg, seed);
    let mut resp = vec![vec![0.0; k]; n];
    let mut info = FitInfo::default();
    let mut prev = e_step(points, &p, &mut resp);
    info.log_likelihood.push(prev);
    for iter in 1..=cfg.max_iter {
        let degenerate = m_step(points, &resp, cfg.reg_covar, &mut p);
        if !degenerate.is_empty() {
            reseed(points, &mut p, &degenerate, cfg.reg_covar);
            info.reseeded_at.push(iter);
            info.warnings
                .push(format!("iteration {iter}: reseeded {} degenerate component(s)", degenerate.len()));
        }
        let ll = e_step(points, &p, &mut resp);
        info.log_likelihood.push(ll);
        info.iterations = iter;
        if degenerate.is_empty() && (ll - prev).abs() < cfg.tol {
            info.converged = true;
            break;
        }
        prev = ll;
    }
    if !info.converged {
        log::warn!("gmm did not converge in {} iterations", cfg.max_iter);
        info.warnings
            .push(format!("did not converge within {} iterations", cfg.max_iter));
    }

    let depth = AFFINITY_DEPTH.min(k);
    let mut assignments = Vec::with_capacity(n);
    let mut affinity = Vec::with_capacity(n);
    for r in &resp {
        let mut scored: Vec<(usize, f64)> = r.iter().copied().enumerate().collect();
        rank(&mut scored);
        assignments.push(scored[0].0);
        scored.truncate(depth);
        affinity.push(scored);
    }
    let centers = p.means;
    Ok(ClusterModel {
        algorithm: Algorithm::Gmm,
        k,
        seed: Some(seed),
        assignments,
        centers,
        affinity,
        info,
    })
}
