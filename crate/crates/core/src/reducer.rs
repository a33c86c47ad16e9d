//! Principal component analysis used to shrink embeddings before clustering.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_COMPONENTS: usize = 30;

/// Mean vector plus orthonormal principal axes (one per row of
/// `components`), sorted by decreasing explained variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "PcaModelRepr", try_from = "PcaModelRepr")]
pub struct PcaModel {
    mean: Array1<f64>,
    components: Array2<f64>,
    explained_variance: Array1<f64>,
}

#[derive(Serialize, Deserialize)]
struct PcaModelRepr {
    mean: Vec<f64>,
    components: Vec<Vec<f64>>,
    explained_variance: Vec<f64>,
}

impl From<PcaModel> for PcaModelRepr {
    fn from(m: PcaModel) -> Self {
        PcaModelRepr {
            mean: m.mean.to_vec(),
            components: m.components.rows().into_iter().map(|r| r.to_vec()).collect(),
            explained_variance: m.explained_variance.to_vec(),
        }
    }
}

impl TryFrom<PcaModelRepr> for PcaModel {
    type Error = Error;

    fn try_from(r: PcaModelRepr) -> Result<Self> {
        let dim = r.mean.len();
        let rows = r.components.len();
        if rows != r.explained_variance.len() || r.components.iter().any(|c| c.len() != dim) {
            return Err(Error::format("PCA model arrays have inconsistent shapes"));
        }
        let flat: Vec<f64> = r.components.into_iter().flatten().collect();
        Ok(PcaModel {
            mean: Array1::from(r.mean),
            components: Array2::from_shape_vec((rows, dim), flat)
                .map_err(|e| Error::format(e.to_string()))?,
            explained_variance: Array1::from(r.explained_variance),
        })
    }
}

impl PcaModel {
    pub fn mean(&self) -> &Array1<f64> {
        &self.mean
    }

    pub fn components(&self) -> &Array2<f64> {
        &self.components
    }

    pub fn explained_variance(&self) -> &Array1<f64> {
        &self.explained_variance
    }

    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    /// Project rows onto the principal axes: `row ↦ components · (row − mean)`.
    pub fn transform(&self, vectors: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if vectors.ncols() != self.input_dim() {
            return Err(Error::param(format!(
                "PCA model expects dimension {}, got {}",
                self.input_dim(),
                vectors.ncols()
            )));
        }
        let centered = &vectors - &self.mean;
        Ok(centered.dot(&self.components.t()))
    }

    /// Map reduced coordinates back to the input space.
    pub fn inverse_transform(&self, reduced: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if reduced.ncols() != self.n_components() {
            return Err(Error::param(format!(
                "expected {} reduced columns, got {}",
                self.n_components(),
                reduced.ncols()
            )));
        }
        Ok(reduced.dot(&self.components) + &self.mean)
    }
}

/// Largest component count `fit_pca` accepts for an `n × dim` input.
pub fn max_components(n: usize, dim: usize) -> usize {
    n.saturating_sub(1).min(dim)
}

/// Clamp a requested component count into the valid range. The message is
/// set when the request had to shrink.
pub fn clamp_components(requested: usize, n: usize, dim: usize) -> (usize, Option<String>) {
    let max = max_components(n, dim);
    if requested > max {
        let msg = format!("PCA components clamped from {requested} to {max} (n={n}, dim={dim})");
        (max, Some(msg))
    } else {
        (requested, None)
    }
}

/// Fit PCA on the rows of `vectors` with the unbiased `(n − 1)` covariance.
///
/// The eigenproblem is solved on whichever of the `dim × dim` covariance and
/// the `n × n` Gram matrix is smaller. Each component's sign is fixed so
/// that its largest-magnitude entry is positive.
pub fn fit_pca(vectors: ArrayView2<'_, f64>, n_components: usize) -> Result<PcaModel> {
    let (n, dim) = vectors.dim();
    if n < 2 {
        return Err(Error::InsufficientData(format!("PCA needs at least 2 rows, got {n}")));
    }
    let max = max_components(n, dim);
    if n_components == 0 || n_components > max {
        return Err(Error::param(format!(
            "n_components={n_components} outside 1..={max} for n={n}, dim={dim}"
        )));
    }
    if vectors.iter().any(|v| !v.is_finite()) {
        return Err(Error::Value("PCA input contains non-finite values".into()));
    }

    let mean = vectors.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &vectors - &mean;
    let scale = (n - 1) as f64;

    let (values, mut axes) = if dim <= n {
        let cov = centered.t().dot(&centered) / scale;
        let (values, vecs) = sorted_eigen(&cov, n_components);
        // Eigenvector columns become component rows.
        (values, vecs.reversed_axes())
    } else {
        let gram = centered.dot(&centered.t()) / scale;
        let (values, vecs) = sorted_eigen(&gram, n_components);
        // v = Xcᵀu has squared norm (n − 1)λ; orthonormalization below
        // rescales it and also covers λ ≈ 0.
        (values, vecs.t().dot(&centered))
    };

    orthonormalize_rows(&mut axes);
    for mut row in axes.rows_mut() {
        let pivot = row
            .iter()
            .copied()
            .enumerate()
            .fold((0usize, 0.0f64), |best, (i, v)| if v.abs() > best.1.abs() { (i, v) } else { best });
        if pivot.1 < 0.0 {
            row.mapv_inplace(|v| -v);
        }
    }

    Ok(PcaModel {
        mean,
        components: axes,
        explained_variance: values.mapv(|v| v.max(0.0)),
    })
}

/// Top-`count` eigenpairs of a symmetric matrix, descending by eigenvalue.
/// Eigenvectors are returned as columns.
fn sorted_eigen(matrix: &Array2<f64>, count: usize) -> (Array1<f64>, Array2<f64>) {
    let size = matrix.nrows();
    let m = DMatrix::from_fn(size, size, |i, j| matrix[[i, j]]);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..size).collect();
    // Stable sort keeps equal eigenvalues in solver order, which is
    // deterministic for a given input.
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = Array1::from_iter(order[..count].iter().map(|&i| eig.eigenvalues[i]));
    let vecs = Array2::from_shape_fn((size, count), |(r, c)| eig.eigenvectors[(r, order[c])]);
    (values, vecs)
}

/// Modified Gram-Schmidt over rows. Rows that collapse to (numerically) zero
/// are replaced by the next standard basis vector that survives
/// orthogonalization, so the result is always orthonormal.
fn orthonormalize_rows(rows: &mut Array2<f64>) {
    let (count, dim) = rows.dim();
    let mut basis_candidate = 0usize;
    for i in 0..count {
        let original_norm = rows.row(i).dot(&rows.row(i)).sqrt();
        let mut v = rows.row(i).to_owned();
        project_out(&mut v, rows, i);
        let norm = v.dot(&v).sqrt();
        if norm > 1e-10 * original_norm.max(f64::MIN_POSITIVE) && norm > 1e-150 {
            rows.row_mut(i).assign(&(v / norm));
            continue;
        }
        loop {
            assert!(basis_candidate < dim, "cannot complete an orthonormal basis");
            let mut e = Array1::zeros(dim);
            e[basis_candidate] = 1.0;
            basis_candidate += 1;
            project_out(&mut e, rows, i);
            let norm = e.dot(&e).sqrt();
            if norm > 1e-6 {
                rows.row_mut(i).assign(&(e / norm));
                break;
            }
        }
    }
}

fn project_out(v: &mut Array1<f64>, rows: &Array2<f64>, upto: usize) {
    for j in 0..upto {
        let r = rows.row(j);
        let coef = v.dot(&r);
        v.scaled_add(-coef, &r);
    }
}

/// Scale each row to unit Euclidean norm.
pub fn normalize_rows(vectors: &mut Array2<f64>) -> Result<()> {
    for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 {
            return Err(Error::Value(format!("row {i} is the zero vector and cannot be normalized")));
        }
        row /= norm;
    }
    Ok(())
}
