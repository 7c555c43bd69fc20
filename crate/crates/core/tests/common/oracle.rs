//! Brute-force reference implementations used to check the metric code.
//! Everything here works straight from the textbook definitions, with
//! explicit count tables and full distance matrices.

#![allow(dead_code)]

/// Relabels to 0..m in order of first appearance.
pub fn compact(xs: &[usize]) -> (Vec<usize>, usize) {
    let mut seen: Vec<usize> = Vec::new();
    let out = xs
        .iter()
        .map(|x| match seen.iter().position(|s| s == x) {
            Some(p) => p,
            None => {
                seen.push(*x);
                seen.len() - 1
            }
        })
        .collect();
    (out, seen.len())
}

pub fn table(a: &[usize], b: &[usize]) -> Vec<Vec<f64>> {
    let (a, ka) = compact(a);
    let (b, kb) = compact(b);
    let mut t = vec![vec![0.0; kb]; ka];
    for (x, y) in a.iter().zip(&b) {
        t[*x][*y] += 1.0;
    }
    t
}

fn h(ps: impl Iterator<Item = f64>) -> f64 {
    ps.filter(|p| *p > 0.0).map(|p| -p * p.ln()).sum()
}

/// sum over (c,k) of -n_ck/n * ln(n_ck / n_k)
pub fn conditional_entropy(truth: &[usize], pred: &[usize]) -> f64 {
    let t = table(truth, pred);
    let n = truth.len() as f64;
    let kb = t.first().map_or(0, Vec::len);
    let mut s = 0.0;
    for col in 0..kb {
        let nk: f64 = t.iter().map(|r| r[col]).sum();
        for row in &t {
            let nck = row[col];
            if nck > 0.0 {
                s -= nck / n * (nck / nk).ln();
            }
        }
    }
    s
}

pub fn entropy(xs: &[usize]) -> f64 {
    let (c, k) = compact(xs);
    let n = xs.len() as f64;
    let mut counts = vec![0.0; k];
    for x in c {
        counts[x] += 1.0;
    }
    h(counts.into_iter().map(|c| c / n))
}

pub fn homogeneity(truth: &[usize], pred: &[usize]) -> f64 {
    let ht = entropy(truth);
    if ht == 0.0 {
        return 1.0;
    }
    1.0 - conditional_entropy(truth, pred) / ht
}

pub fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let t = table(a, b);
    let n = a.len() as f64;
    let rows: Vec<f64> = t.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..t[0].len()).map(|j| t.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, r) in t.iter().enumerate() {
        for (j, &nij) in r.iter().enumerate() {
            if nij > 0.0 {
                let pij = nij / n;
                mi += pij * (pij / ((rows[i] / n) * (cols[j] / n))).ln();
            }
        }
    }
    mi
}

/// MI over the arithmetic mean of the entropies.
pub fn nmi(a: &[usize], b: &[usize]) -> f64 {
    let (ha, hb) = (entropy(a), entropy(b));
    if ha == 0.0 && hb == 0.0 {
        return 1.0;
    }
    if ha == 0.0 || hb == 0.0 {
        return 0.0;
    }
    mutual_information(a, b) / ((ha + hb) / 2.0)
}

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean silhouette from the full pairwise distance matrix; points alone in
/// their cluster score 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| euclid(&points[i], &points[j])).collect()).collect();
    let mut clusters: Vec<usize> = labels.to_vec();
    clusters.sort_unstable();
    clusters.dedup();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d[i][j]).sum::<f64>() / own.len() as f64;
        let mut b = f64::INFINITY;
        for &c in &clusters {
            if c == labels[i] {
                continue;
            }
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            let m = other.iter().map(|&j| d[i][j]).sum::<f64>() / other.len() as f64;
            b = b.min(m);
        }
        let s = if a.max(b) > 0.0 { (b - a) / a.max(b) } else { 0.0 };
        total += s;
    }
    total / n as f64
}

/// Jaccard over token lists, deduplicated by linear scan.
pub fn jaccard(a: &[String], b: &[String]) -> f64 {
    let mut ua: Vec<&String> = Vec::new();
    for x in a {
        if !ua.contains(&x) {
            ua.push(x);
        }
    }
    let mut ub: Vec<&String> = Vec::new();
    for x in b {
        if !ub.contains(&x) {
            ub.push(x);
        }
    }
    let inter = ua.iter().filter(|x| ub.contains(x)).count();
    let union = ua.len() + ub.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Lowercased alphanumeric runs.
pub fn words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}
