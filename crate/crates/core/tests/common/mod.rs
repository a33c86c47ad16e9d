//! Slow, obviously-correct reference implementations used as test oracles.
//! Nothing here calls into the library's numerical code.
#![allow(dead_code)]

/// Unbiased sample covariance, computed entry by entry.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len();
    let dim = rows[0].len();
    let mean: Vec<f64> = (0..dim).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut cov = vec![vec![0.0; dim]; dim];
    for a in 0..dim {
        for b in 0..dim {
            let s: f64 = rows.iter().map(|r| (r[a] - mean[a]) * (r[b] - mean[b])).sum();
            cov[a][b] = s / (n as f64 - 1.0);
        }
    }
    cov
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns
/// eigenpairs sorted by decreasing eigenvalue; vectors are unit length.
pub fn jacobi_eigen(matrix: &[Vec<f64>]) -> Vec<(f64, Vec<f64>)> {
    let m = matrix.len();
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut v: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    for _sweep in 0..100 {
        let off: f64 = (0..m).flat_map(|i| (0..m).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..m {
            for q in p + 1..m {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for row in a.iter_mut() {
                    let (akp, akq) = (row[p], row[q]);
                    row[p] = c * akp - s * akq;
                    row[q] = s * akp + c * akq;
                }
                let (row_p, row_q) = (a[p].clone(), a[q].clone());
                for (kk, (apk, aqk)) in row_p.into_iter().zip(row_q).enumerate() {
                    a[p][kk] = c * apk - s * aqk;
                    a[q][kk] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let vkp = row[p];
                    let vkq = row[q];
                    row[p] = c * vkp - s * vkq;
                    row[q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..m).map(|j| (a[j][j], (0..m).map(|i| v[i][j]).collect())).collect();
    pairs.sort_by(|x, y| y.0.total_cmp(&x.0));
    pairs
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Optimal k-means inertia by enumerating every assignment of `points` to
/// `k` labels (k^n of them; keep n small).
pub fn brute_force_kmeans_inertia(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let dim = points[0].len();
    let total = k.pow(n as u32);
    let mut best = f64::INFINITY;
    for code in 0..total {
        let mut c = code;
        let mut labels = vec![0; n];
        for l in labels.iter_mut() {
            *l = c % k;
            c /= k;
        }
        let mut inertia = 0.0;
        for cluster in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&labels).filter(|(_, &l)| l == cluster).map(|(p, _)| p).collect();
            if members.is_empty() {
                continue;
            }
            let centroid: Vec<f64> =
                (0..dim).map(|j| members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64).collect();
            inertia += members.iter().map(|p| squared_distance(p, &centroid)).sum::<f64>();
        }
        best = best.min(inertia);
    }
    best
}

/// Left step integral of `count(d > t) / k` over a uniform grid on [0, 1].
pub fn step_integral(ds: &[f64], step: f64) -> f64 {
    let cells = (1.0 / step).round() as usize;
    (0..cells)
        .map(|i| {
            let t = i as f64 * step;
            step * ds.iter().filter(|&&d| d > t).count() as f64 / ds.len() as f64
        })
        .sum()
}

/// Euclidean distance from the normalized counts to uniform.
pub fn distance_to_uniform(counts: [usize; 3]) -> f64 {
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| (c as f64 / n as f64 - 1.0 / 3.0).powi(2)).sum::<f64>().sqrt()
}

/// Whether two 2-D point sets can be split by a line. Scans candidate
/// normal directions; a hit proves separability.
pub fn linearly_separable(a: &[[f64; 2]], b: &[[f64; 2]]) -> bool {
    const DIRECTIONS: usize = 3600;
    (0..DIRECTIONS).any(|i| {
        let angle = std::f64::consts::PI * i as f64 / DIRECTIONS as f64;
        let (c, s) = (angle.cos(), angle.sin());
        let proj = |p: &[f64; 2]| c * p[0] + s * p[1];
        let (a_lo, a_hi) = a.iter().map(proj).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        let (b_lo, b_hi) = b.iter().map(proj).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
        a_hi < b_lo || b_hi < a_lo
    })
}
