//! t-SNE with an exact O(n²) gradient for small inputs and a Barnes-Hut
//! quadtree approximation for large ones.

use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// Inputs above this size use the Barnes-Hut approximation under
/// [`TsneMethod::Auto`].
pub const EXACT_MAX_N: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TsneMethod {
    #[default]
    Auto,
    Exact,
    BarnesHut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// `None` means `n / 12`.
    pub learning_rate: Option<f64>,
    pub theta: f64,
    pub method: TsneMethod,
}

impl Default for TsneParams {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            seed: 42,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: None,
            theta: 0.5,
            method: TsneMethod::Auto,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TsneResult {
    pub embedding: Array2<f64>,
    /// `(iteration, KL divergence)` for the final iterations after early
    /// exaggeration has ended. Exact under the exact method; uses the
    /// tree-estimated normalization under Barnes-Hut.
    pub kl_trace: Vec<(usize, f64)>,
    pub method: TsneMethod,
}

const KL_TRACE_LEN: usize = 50;
const MIN_GAIN: f64 = 0.01;

/// Row-compressed symmetric joint probabilities.
struct SparseP {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

pub fn tsne(vectors: ArrayView2<'_, f64>, params: &TsneParams) -> Result<TsneResult> {
    let n = vectors.nrows();
    if n < 4 {
        return Err(Error::param(format!("t-SNE needs at least 4 points, got {n}")));
    }
    let max_perplexity = (n - 1) as f64 / 3.0;
    if !(params.perplexity >= 1.0 && params.perplexity <= max_perplexity) {
        return Err(Error::param(format!(
            "perplexity {} outside [1, {max_perplexity:.3}] for n={n}",
            params.perplexity
        )));
    }
    if params.iterations == 0 {
        return Err(Error::param("t-SNE needs at least one iteration"));
    }
    if !(0.0..=1.0).contains(&params.theta) {
        return Err(Error::param(format!("theta must be in [0, 1], got {}", params.theta)));
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("t-SNE input contains non-finite values".into()));
    }

    let method = match params.method {
        TsneMethod::Auto if n <= EXACT_MAX_N => TsneMethod::Exact,
        TsneMethod::Auto => TsneMethod::BarnesHut,
        m => m,
    };

    let mut rng = stream_rng(params.seed, Stream::Tsne);
    let init = Normal::new(0.0, 1e-4).expect("valid normal");
    let mut y = Array2::from_shape_fn((n, 2), |_| init.sample(&mut rng));

    let learning_rate = params.learning_rate.unwrap_or(n as f64 / 12.0);
    let kl_from = params.iterations.saturating_sub(KL_TRACE_LEN).max(params.exaggeration_iterations);

    let mut kl_trace = Vec::new();
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut grad = Array2::<f64>::zeros((n, 2));

    let exact_p = (method == TsneMethod::Exact).then(|| exact_affinities(vectors, params.perplexity));
    let sparse_p = (method == TsneMethod::BarnesHut).then(|| sparse_affinities(vectors, params.perplexity));

    for iter in 0..params.iterations {
        let exaggeration =
            if iter < params.exaggeration_iterations { params.early_exaggeration } else { 1.0 };
        let momentum = if iter < params.exaggeration_iterations { 0.5 } else { 0.8 };
        let want_kl = iter >= kl_from;

        let kl = match (&exact_p, &sparse_p) {
            (Some(p), _) => exact_gradient(p, &y, exaggeration, &mut grad, want_kl),
            (_, Some(p)) => bh_gradient(p, &y, exaggeration, params.theta, &mut grad, want_kl),
            _ => unreachable!(),
        };
        if let Some(kl) = kl {
            kl_trace.push((iter, kl));
        }

        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) { *gain + 0.2 } else { *gain * 0.8 };
            if *gain < MIN_GAIN {
                *gain = MIN_GAIN;
            }
            *u = momentum * *u - learning_rate * *gain * g;
        }
        y += &update;
        let mean = y.mean_axis(ndarray::Axis(0)).expect("n >= 4");
        y -= &mean;

        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("t-SNE diverged at iteration {iter}")));
        }
    }

    Ok(TsneResult { embedding: y, kl_trace, method })
}

/// Precision search for one row: returns conditional probabilities whose
/// entropy matches `ln(perplexity)`. `dist` holds squared distances to the
/// candidate neighbours.
fn conditional_row(dist: &[f64], perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let min_d = dist.iter().copied().fold(f64::INFINITY, f64::min);
    let mut beta = 1.0;
    let mut lo = f64::NEG_INFINITY;
    let mut hi = f64::INFINITY;
    let mut p = vec![0.0; dist.len()];
    for _ in 0..200 {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (pj, &d) in p.iter_mut().zip(dist) {
            let shifted = d - min_d;
            *pj = (-beta * shifted).exp();
            sum += *pj;
            weighted += shifted * *pj;
        }
        let entropy = sum.ln() + beta * weighted / sum;
        let diff = entropy - target;
        p.iter_mut().for_each(|v| *v /= sum);
        if diff.abs() < 1e-5 {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
        } else {
            hi = beta;
            beta = if lo.is_finite() { (beta + lo) / 2.0 } else { beta / 2.0 };
        }
    }
    p
}

fn squared_distances(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

fn exact_affinities(x: ArrayView2<'_, f64>, perplexity: f64) -> Array2<f64> {
    let n = x.nrows();
    let d = squared_distances(x);
    let mut p = Array2::<f64>::zeros((n, n));
    for i in 0..n {
        let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| d[[i, j]]).collect();
        let row = conditional_row(&others, perplexity);
        for (slot, j) in (0..n).filter(|&j| j != i).enumerate() {
            p[[i, j]] = row[slot];
        }
    }
    let sym = (&p + &p.t()) / (2.0 * n as f64);
    sym.mapv(|v| v.max(1e-12))
}

fn sparse_affinities(x: ArrayView2<'_, f64>, perplexity: f64) -> SparseP {
    let n = x.nrows();
    let k = ((3.0 * perplexity).floor() as usize).clamp(1, n - 1);
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    let mut scratch: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        scratch.clear();
        for j in (0..n).filter(|&j| j != i) {
            let d: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            scratch.push((d, j));
        }
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        scratch.select_nth_unstable_by(k - 1, cmp);
        let neighbours = &mut scratch[..k];
        neighbours.sort_by(cmp);
        let dist: Vec<f64> = neighbours.iter().map(|e| e.0).collect();
        let cond = conditional_row(&dist, perplexity);
        rows.push(neighbours.iter().zip(cond).map(|(e, p)| (e.1, p)).collect());
    }

    // Symmetrize: P_ij = (p_j|i + p_i|j) / 2n over the union of neighbour lists.
    let mut sym: Vec<std::collections::BTreeMap<usize, f64>> = vec![Default::default(); n];
    let norm = 2.0 * n as f64;
    for (i, row) in rows.iter().enumerate() {
        for &(j, p) in row {
            *sym[i].entry(j).or_insert(0.0) += p / norm;
            *sym[j].entry(i).or_insert(0.0) += p / norm;
        }
    }
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::new();
    let mut vals = Vec::new();
    offsets.push(0);
    for row in sym {
        for (j, p) in row {
            cols.push(j);
            vals.push(p);
        }
        offsets.push(cols.len());
    }
    SparseP { offsets, cols, vals }
}

fn exact_gradient(
    p: &Array2<f64>,
    y: &Array2<f64>,
    exaggeration: f64,
    grad: &mut Array2<f64>,
    want_kl: bool,
) -> Option<f64> {
    let n = y.nrows();
    let mut num = Array2::<f64>::zeros((n, n));
    let mut z = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            num[[i, j]] = q;
            num[[j, i]] = q;
            z += 2.0 * q;
        }
    }
    grad.fill(0.0);
    for i in 0..n {
        let (mut gx, mut gy) = (0.0, 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = num[[i, j]];
            let mult = (exaggeration * p[[i, j]] - q / z) * q;
            gx += mult * (y[[i, 0]] - y[[j, 0]]);
            gy += mult * (y[[i, 1]] - y[[j, 1]]);
        }
        grad[[i, 0]] = 4.0 * gx;
        grad[[i, 1]] = 4.0 * gy;
    }
    want_kl.then(|| {
        let mut kl = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let pij = p[[i, j]];
                    let qij = (num[[i, j]] / z).max(1e-300);
                    kl += pij * (pij / qij).ln();
                }
            }
        }
        kl
    })
}

#[derive(Debug, Clone)]
struct QuadNode {
    center: [f64; 2],
    half_width: f64,
    mass: f64,
    com: [f64; 2],
    children: Option<[usize; 4]>,
    points: Vec<usize>,
}

struct QuadTree {
    nodes: Vec<QuadNode>,
}

impl QuadTree {
    const MAX_DEPTH: usize = 48;

    fn build(y: &Array2<f64>) -> Self {
        let (mut min, mut max) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for row in y.rows() {
            for d in 0..2 {
                min[d] = min[d].min(row[d]);
                max[d] = max[d].max(row[d]);
            }
        }
        let center = [(min[0] + max[0]) / 2.0, (min[1] + max[1]) / 2.0];
        let half_width = ((max[0] - min[0]).max(max[1] - min[1]) / 2.0).max(1e-12) * (1.0 + 1e-9);
        let mut tree = QuadTree {
            nodes: vec![QuadNode { center, half_width, mass: 0.0, com: [0.0; 2], children: None, points: Vec::new() }],
        };
        for i in 0..y.nrows() {
            tree.insert(0, i, [y[[i, 0]], y[[i, 1]]], y, 0);
        }
        tree
    }

    fn quadrant(node: &QuadNode, p: [f64; 2]) -> usize {
        usize::from(p[0] > node.center[0]) + 2 * usize::from(p[1] > node.center[1])
    }

    fn insert(&mut self, idx: usize, i: usize, p: [f64; 2], y: &Array2<f64>, depth: usize) {
        let node = &mut self.nodes[idx];
        let m = node.mass;
        node.com = [(node.com[0] * m + p[0]) / (m + 1.0), (node.com[1] * m + p[1]) / (m + 1.0)];
        node.mass = m + 1.0;

        if let Some(children) = node.children {
            let q = Self::quadrant(node, p);
            self.insert(children[q], i, p, y, depth + 1);
            return;
        }
        if node.points.is_empty() || depth >= Self::MAX_DEPTH {
            node.points.push(i);
            return;
        }
        // Split the leaf and push its resident points down one level.
        let residents = std::mem::take(&mut node.points);
        let (c, hw) = (node.center, node.half_width / 2.0);
        let first = self.nodes.len();
        for q in 0..4 {
            let cx = if q & 1 == 1 { c[0] + hw } else { c[0] - hw };
            let cy = if q & 2 == 2 { c[1] + hw } else { c[1] - hw };
            self.nodes.push(QuadNode {
                center: [cx, cy],
                half_width: hw,
                mass: 0.0,
                com: [0.0; 2],
                children: None,
                points: Vec::new(),
            });
        }
        let children = [first, first + 1, first + 2, first + 3];
        self.nodes[idx].children = Some(children);
        for r in residents {
            let rp = [y[[r, 0]], y[[r, 1]]];
            let q = Self::quadrant(&self.nodes[idx], rp);
            self.insert(children[q], r, rp, y, depth + 1);
        }
        let q = Self::quadrant(&self.nodes[idx], p);
        self.insert(children[q], i, p, y, depth + 1);
    }

    /// Accumulates the unnormalized repulsive force on point `i` and its
    /// contribution to the normalization sum Z.
    fn repulsion(&self, i: usize, y: &Array2<f64>, theta: f64, force: &mut [f64; 2], z: &mut f64) {
        let p = [y[[i, 0]], y[[i, 1]]];
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            if node.mass == 0.0 {
                continue;
            }
            match node.children {
                None => {
                    for &j in &node.points {
                        if j == i {
                            continue;
                        }
                        let (dx, dy) = (p[0] - y[[j, 0]], p[1] - y[[j, 1]]);
                        let q = 1.0 / (1.0 + dx * dx + dy * dy);
                        *z += q;
                        force[0] += q * q * dx;
                        force[1] += q * q * dy;
                    }
                }
                Some(children) => {
                    let (dx, dy) = (p[0] - node.com[0], p[1] - node.com[1]);
                    let dist2 = dx * dx + dy * dy;
                    let width = 2.0 * node.half_width;
                    if width * width < theta * theta * dist2 {
                        let q = 1.0 / (1.0 + dist2);
                        *z += node.mass * q;
                        force[0] += node.mass * q * q * dx;
                        force[1] += node.mass * q * q * dy;
                    } else {
                        // Reverse push keeps quadrant 0 first on pop.
                        stack.extend(children.iter().rev());
                    }
                }
            }
        }
    }
}

fn bh_gradient(
    p: &SparseP,
    y: &Array2<f64>,
    exaggeration: f64,
    theta: f64,
    grad: &mut Array2<f64>,
    want_kl: bool,
) -> Option<f64> {
    let n = y.nrows();
    let tree = QuadTree::build(y);
    let mut rep = vec![[0.0f64; 2]; n];
    let mut z = 0.0;
    for (i, r) in rep.iter_mut().enumerate() {
        tree.repulsion(i, y, theta, r, &mut z);
    }
    let mut kl = 0.0;
    for i in 0..n {
        let (mut ax, mut ay) = (0.0, 0.0);
        for idx in p.offsets[i]..p.offsets[i + 1] {
            let j = p.cols[idx];
            let pij = p.vals[idx];
            let dx = y[[i, 0]] - y[[j, 0]];
            let dy = y[[i, 1]] - y[[j, 1]];
            let q = 1.0 / (1.0 + dx * dx + dy * dy);
            ax += exaggeration * pij * q * dx;
            ay += exaggeration * pij * q * dy;
            if want_kl {
                kl += pij * (pij / (q / z).max(1e-300)).ln();
            }
        }
        grad[[i, 0]] = 4.0 * (ax - rep[i][0] / z);
        grad[[i, 1]] = 4.0 * (ay - rep[i][1] / z);
    }
    want_kl.then_some(kl)
}
