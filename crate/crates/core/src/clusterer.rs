//! Lloyd's k-means with k-means++ seeding, in Euclidean or spherical
//! (cosine) geometry.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

pub const DEFAULT_K: usize = 50;
pub const DEFAULT_MAX_ITER: usize = 300;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            other => Err(Error::param(format!("unknown metric {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansParams {
    pub k: usize,
    pub metric: Metric,
    pub seed: u64,
    pub max_iter: usize,
    /// Convergence threshold on the summed squared centroid shift, relative
    /// to the mean per-feature variance of the input.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self { k: DEFAULT_K, metric: Metric::Euclidean, seed: 42, max_iter: DEFAULT_MAX_ITER, tol: DEFAULT_TOL }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    #[serde(with = "matrix_rows")]
    centroids: Array2<f64>,
    metric: Metric,
    k: usize,
    seed: u64,
    inertia: f64,
    iterations_run: usize,
    converged: bool,
    /// Inertia after every assignment step, ending with the returned
    /// assignment's inertia.
    #[serde(skip)]
    inertia_history: Vec<f64>,
}

/// Cluster id per row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    cluster_of: Vec<usize>,
}

impl Assignment {
    pub fn new(cluster_of: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(bad) = cluster_of.iter().find(|&&c| c >= k) {
            return Err(Error::param(format!("cluster id {bad} out of range for k={k}")));
        }
        Ok(Self { cluster_of })
    }

    pub fn cluster_of(&self) -> &[usize] {
        &self.cluster_of
    }

    pub fn len(&self) -> usize {
        self.cluster_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cluster_of.is_empty()
    }

    pub fn sizes(&self, k: usize) -> Vec<usize> {
        let mut sizes = vec![0; k];
        for &c in &self.cluster_of {
            sizes[c] += 1;
        }
        sizes
    }
}

impl ClusterModel {
    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn inertia(&self) -> f64 {
        self.inertia
    }

    pub fn iterations_run(&self) -> usize {
        self.iterations_run
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn inertia_history(&self) -> &[f64] {
        &self.inertia_history
    }

    /// Nearest centroid per row; ties go to the lowest cluster index.
    pub fn assign(&self, vectors: ArrayView2<'_, f64>) -> Result<Assignment> {
        if vectors.ncols() != self.centroids.ncols() {
            return Err(Error::param(format!(
                "centroids have dimension {}, got {}",
                self.centroids.ncols(),
                vectors.ncols()
            )));
        }
        let prepared = prepare(vectors, self.metric)?;
        let (cluster_of, _) = nearest_all(prepared.view(), self.centroids.view());
        Ok(Assignment { cluster_of })
    }
}

fn squared_distance(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Under the cosine metric rows are unit-normalized, so squared Euclidean
/// distance equals `2(1 − cos)` and one code path serves both metrics.
fn prepare(vectors: ArrayView2<'_, f64>, metric: Metric) -> Result<Array2<f64>> {
    let mut out = vectors.to_owned();
    if metric == Metric::Cosine {
        for (i, mut row) in out.rows_mut().into_iter().enumerate() {
            let norm = row.dot(&row).sqrt();
            if norm == 0.0 {
                return Err(Error::Value(format!("row {i} is a zero vector under the cosine metric")));
            }
            row /= norm;
        }
    }
    Ok(out)
}

fn nearest(point: ArrayView1<'_, f64>, centroids: ArrayView2<'_, f64>) -> (usize, f64) {
    let mut best = (0usize, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn nearest_all(points: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>) -> (Vec<usize>, Vec<f64>) {
    points.rows().into_iter().map(|p| nearest(p, centroids)).unzip()
}

fn inertia_of(points: ArrayView2<'_, f64>, centroids: ArrayView2<'_, f64>, labels: &[usize]) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &c)| squared_distance(points.row(i), centroids.row(c)))
        .sum()
}

fn kmeans_plus_plus<R: Rng>(points: ArrayView2<'_, f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    chosen.push(rng.random_range(0..n));
    let mut closest: Vec<f64> =
        points.rows().into_iter().map(|p| squared_distance(p, points.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in closest.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` just above the final partial sum.
            pick.unwrap_or_else(|| closest.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Every point coincides with a chosen centre; take any unused row.
            let unused: Vec<usize> = (0..n).filter(|i| !chosen.contains(i)).collect();
            unused[rng.random_range(0..unused.len())]
        };
        chosen.push(next);
        for (i, p) in points.rows().into_iter().enumerate() {
            closest[i] = closest[i].min(squared_distance(p, points.row(next)));
        }
    }
    points.select(Axis(0), &chosen)
}

/// Give every empty cluster the point farthest from its current centroid,
/// moving that point into the empty cluster. Returns whether any cluster was
/// repaired.
fn repair_empty_clusters(
    points: ArrayView2<'_, f64>,
    centroids: &mut Array2<f64>,
    labels: &mut [usize],
) -> bool {
    let k = centroids.nrows();
    let mut sizes = vec![0usize; k];
    for &c in labels.iter() {
        sizes[c] += 1;
    }
    let mut repaired = false;
    for empty in 0..k {
        if sizes[empty] != 0 {
            continue;
        }
        let donor = labels
            .iter()
            .enumerate()
            .filter(|(_, &c)| sizes[c] > 1)
            .map(|(i, &c)| (i, squared_distance(points.row(i), centroids.row(c))))
            .fold(None, |best: Option<(usize, f64)>, cand| match best {
                Some(b) if b.1 >= cand.1 => Some(b),
                _ => Some(cand),
            });
        let Some((point, _)) = donor else { break };
        sizes[labels[point]] -= 1;
        sizes[empty] += 1;
        labels[point] = empty;
        centroids.row_mut(empty).assign(&points.row(point));
        repaired = true;
    }
    repaired
}

fn update_centroids(
    points: ArrayView2<'_, f64>,
    labels: &[usize],
    previous: &Array2<f64>,
    metric: Metric,
) -> Array2<f64> {
    let (k, dim) = previous.dim();
    let mut sums = Array2::<f64>::zeros((k, dim));
    let mut counts = vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        let mut row = sums.row_mut(c);
        row += &points.row(i);
        counts[c] += 1;
    }
    for (c, (mut row, &count)) in sums.rows_mut().into_iter().zip(&counts).enumerate() {
        if count == 0 {
            row.assign(&previous.row(c));
            continue;
        }
        row /= count as f64;
        if metric == Metric::Cosine {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            } else {
                row.assign(&previous.row(c));
            }
        }
    }
    // The mean is optimal in exact arithmetic; rounding (notably the cosine
    // re-normalization) can still nudge a cluster's cost up by an ulp. Keep
    // the previous centroid in that case so inertia never increases.
    let mut cost_new = vec![0.0; k];
    let mut cost_old = vec![0.0; k];
    for (i, &c) in labels.iter().enumerate() {
        cost_new[c] += squared_distance(points.row(i), sums.row(c));
        cost_old[c] += squared_distance(points.row(i), previous.row(c));
    }
    for c in 0..k {
        if cost_new[c] > cost_old[c] {
            sums.row_mut(c).assign(&previous.row(c));
        }
    }
    sums
}

/// Fit k-means. The returned assignment is consistent with
/// [`ClusterModel::assign`] on the same input whenever the run converged.
pub fn fit_kmeans(vectors: ArrayView2<'_, f64>, params: &KMeansParams) -> Result<(ClusterModel, Assignment)> {
    let KMeansParams { k, metric, seed, max_iter, tol } = *params;
    let n = vectors.nrows();
    if k == 0 || n < k {
        return Err(Error::param(format!("k-means needs 1 <= k <= n, got k={k}, n={n}")));
    }
    if max_iter == 0 {
        return Err(Error::param("max_iter must be at least 1"));
    }
    if tol.is_nan() || tol < 0.0 {
        return Err(Error::param(format!("tol must be non-negative, got {tol}")));
    }
    if vectors.ncols() == 0 {
        return Err(Error::param("k-means input has zero columns"));
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("k-means input contains non-finite values".into()));
    }

    let points = prepare(vectors, metric)?;
    let points = points.view();
    let mut rng = stream_rng(seed, Stream::KMeans);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);

    let feature_variance = points.var_axis(Axis(0), 0.0).mean().unwrap_or(0.0);
    let shift_tol = tol * feature_variance;

    let (mut labels, _) = nearest_all(points, centroids.view());
    let mut history = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        iterations += 1;
        repair_empty_clusters(points, &mut centroids, &mut labels);
        history.push(inertia_of(points, centroids.view(), &labels));

        let updated = update_centroids(points, &labels, &centroids, metric);
        let shift: f64 = (&updated - &centroids).mapv(|v| v * v).sum();
        centroids = updated;
        labels = nearest_all(points, centroids.view()).0;

        let sizes = Assignment { cluster_of: labels.clone() }.sizes(k);
        if shift <= shift_tol && sizes.iter().all(|&s| s > 0) {
            converged = true;
            break;
        }
    }
    if !converged {
        repair_empty_clusters(points, &mut centroids, &mut labels);
    }
    let inertia = inertia_of(points, centroids.view(), &labels);
    history.push(inertia);

    let model = ClusterModel {
        centroids,
        metric,
        k,
        seed,
        inertia,
        iterations_run: iterations,
        converged,
        inertia_history: history,
    };
    Ok((model, Assignment { cluster_of: labels }))
}

mod matrix_rows {
    use ndarray::Array2;
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(D::Error::custom("ragged centroid rows"));
        }
        let n = rows.len();
        Array2::from_shape_vec((n, cols), rows.into_iter().flatten().collect()).map_err(D::Error::custom)
    }
}

/// Mean of each cluster's members; handy for checking recovered centres.
pub fn cluster_means(vectors: ArrayView2<'_, f64>, assignment: &Assignment, k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, vectors.ncols()));
    let sizes = assignment.sizes(k);
    for (i, &c) in assignment.cluster_of().iter().enumerate() {
        let mut row = sums.row_mut(c);
        row += &vectors.row(i);
    }
    for (c, &s) in sizes.iter().enumerate() {
        if s > 0 {
            let mut row = sums.row_mut(c);
            row /= s as f64;
        }
    }
    sums
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn params(k: usize) -> KMeansParams {
        KMeansParams { k, ..KMeansParams::default() }
    }

    fn two_blobs(seed: u64) -> (Array2<f64>, [[f64; 2]; 2]) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = Array2::zeros((20, 2));
        for i in 0..20 {
            let base = if i < 10 { 0.0 } else { 100.0 };
            x[[i, 0]] = base + noise.sample(&mut rng);
            x[[i, 1]] = base + noise.sample(&mut rng);
        }
        let mut means = [[0.0; 2]; 2];
        for i in 0..20 {
            for j in 0..2 {
                means[i / 10][j] += x[[i, j]] / 10.0;
            }
        }
        (x, means)
    }

    #[test]
    fn k_equals_n_gives_zero_inertia() {
        let x = array![[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [-3.0, 2.0], [9.0, -1.0]];
        let (model, assignment) = fit_kmeans(x.view(), &params(5)).unwrap();
        assert_eq!(model.inertia(), 0.0);
        let mut ids = assignment.cluster_of().to_vec();
        ids.sort();
        assert_eq!(ids, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn two_blobs_are_separated() {
        let (x, means) = two_blobs(3);
        let (model, assignment) = fit_kmeans(x.view(), &params(2)).unwrap();
        let a = assignment.cluster_of();
        assert!(a[..10].iter().all(|&c| c == a[0]));
        assert!(a[10..].iter().all(|&c| c == a[10]));
        assert_ne!(a[0], a[10]);
        for (blob, mean) in means.iter().enumerate() {
            let c = model.centroids().row(a[blob * 10]);
            let dist = ((c[0] - mean[0]).powi(2) + (c[1] - mean[1]).powi(2)).sqrt();
            assert!(dist < 1.0, "blob {blob} centroid off by {dist}");
        }
    }

    #[test]
    fn assign_properties() {
        let (x, _) = two_blobs(5);
        let (model, assignment) = fit_kmeans(x.view(), &params(4)).unwrap();
        assert!(model.converged());
        assert_eq!(model.assign(x.view()).unwrap(), assignment);
        let own = model.assign(model.centroids().view()).unwrap();
        assert_eq!(own.cluster_of(), &[0, 1, 2, 3]);
        assert!(matches!(model.assign(Array2::zeros((1, 3)).view()), Err(Error::Param(_))));
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let model = ClusterModel {
            centroids: array![[-1.0, 0.0], [0.0, 5.0], [0.0, 7.0], [1.0, 0.0]],
            metric: Metric::Euclidean,
            k: 4,
            seed: 0,
            inertia: 0.0,
            iterations_run: 0,
            converged: true,
            inertia_history: vec![],
        };
        let a = model.assign(array![[0.0, 0.0]].view()).unwrap();
        assert_eq!(a.cluster_of(), &[0]);
    }

    #[test]
    fn errors() {
        let x = array![[1.0], [2.0]];
        assert!(matches!(fit_kmeans(x.view(), &params(3)), Err(Error::Param(_))));
        assert!(matches!(fit_kmeans(x.view(), &params(0)), Err(Error::Param(_))));
        let bad_iter = KMeansParams { max_iter: 0, ..params(1) };
        assert!(matches!(fit_kmeans(x.view(), &bad_iter), Err(Error::Param(_))));
        let cos = KMeansParams { metric: Metric::Cosine, ..params(1) };
        let zero = array![[1.0, 0.0], [0.0, 0.0]];
        assert!(matches!(fit_kmeans(zero.view(), &cos), Err(Error::Value(_))));
    }

    #[test]
    fn cosine_centroids_are_unit_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Array2::from_shape_fn((60, 4), |_| rng.random_range(-1.0..1.0));
        let p = KMeansParams { metric: Metric::Cosine, ..params(5) };
        let (model, _) = fit_kmeans(x.view(), &p).unwrap();
        for c in model.centroids().rows() {
            assert!((c.dot(&c) - 1.0).abs() < 1e-12);
        }
        let h = model.inertia_history();
        assert!(h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12));
    }

    #[test]
    fn duplicate_points_keep_all_clusters_non_empty() {
        // Six copies of one point and two others: k=4 forces the
        // coincident-centre and empty-cluster paths.
        let x = array![[0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        let (model, assignment) = fit_kmeans(x.view(), &params(4)).unwrap();
        assert!(assignment.sizes(4).iter().all(|&s| s > 0));
        assert!(model.inertia().is_finite());
    }

    #[test]
    fn json_contains_centroids() {
        let (x, _) = two_blobs(2);
        let (model, _) = fit_kmeans(x.view(), &params(2)).unwrap();
        let json = serde_json::to_value(&model).unwrap();
        assert_eq!(json["k"], 2);
        assert_eq!(json["metric"], "euclidean");
        assert_eq!(json["centroids"].as_array().unwrap().len(), 2);
        let back: ClusterModel = serde_json::from_value(json).unwrap();
        assert_eq!(back.centroids(), model.centroids());
    }
}
