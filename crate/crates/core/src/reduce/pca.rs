use ndarray::{s, Array1, Array2, ArrayView2};

use super::{require_samples, LabeledMatrix, Method, ReductionModel, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, center_rows, column_mean, numerical_rank, orthonormalize_columns, sym_eigen_desc};

/// Principal subspace of a data matrix: orthonormal directions of the
/// total scatter with the coordinates of the training rows.
pub(crate) struct Subspace {
    pub center: Array1<f64>,
    /// `d × k`, orthonormal columns.
    pub basis: Array2<f64>,
    /// `n × k` coordinates of the centered rows.
    pub coords: Array2<f64>,
    /// Scatter eigenvalues (sums of squares, not variances), non-increasing.
    pub scatter: Vec<f64>,
    pub total_scatter: f64,
}

/// Leading principal directions of the rows of `x`, keeping the first
/// `keep(scatter_spectrum, rank)` of them. Uses the `n × n` Gram matrix
/// when `d > n`.
pub(crate) fn principal_subspace(x: ArrayView2<'_, f64>, keep: impl Fn(&[f64], usize) -> usize) -> Subspace {
    let (n, d) = x.dim();
    let center = column_mean(x);
    let xc = center_rows(x, &center);
    let gram_route = d > n;
    let (values, vectors) = if gram_route {
        sym_eigen_desc(xc.dot(&xc.t()).view())
    } else {
        sym_eigen_desc(xc.t().dot(&xc).view())
    };
    let rank = numerical_rank(&values);
    let k = keep(&values, rank).min(rank);
    let total_scatter = values.iter().filter(|&&v| v > 0.0).sum();
    let scatter = values[..k].to_vec();

    let (basis, coords) = if gram_route {
        // v = Xcᵀ u / sqrt(λ), coordinates Xc v = u sqrt(λ)
        let u = vectors.slice(s![.., ..k]).to_owned();
        let mut basis = xc.t().dot(&u);
        for (j, mut col) in basis.columns_mut().into_iter().enumerate() {
            let inv = 1.0 / values[j].sqrt();
            col.mapv_inplace(|v| v * inv);
        }
        orthonormalize_columns(&mut basis);
        let mut coords = u;
        for (j, mut col) in coords.columns_mut().into_iter().enumerate() {
            let sv = values[j].sqrt();
            col.mapv_inplace(|v| v * sv);
        }
        // the sign convention applies to the input-space basis
        for j in 0..k {
            let mut col = basis.column(j).to_vec();
            if canonical_sign(&mut col) {
                basis.column_mut(j).mapv_inplace(|v| -v);
                coords.column_mut(j).mapv_inplace(|v| -v);
            }
        }
        (basis, coords)
    } else {
        let basis = vectors.slice(s![.., ..k]).to_owned();
        let coords = xc.dot(&basis);
        (basis, coords)
    };
    Subspace {
        center,
        basis,
        coords,
        scatter,
        total_scatter,
    }
}

/// Smallest count of leading eigenvalues reaching `fraction` of the total
/// positive mass.
pub(crate) fn components_for_fraction(values: &[f64], fraction: f64) -> usize {
    let total: f64 = values.iter().filter(|&&v| v > 0.0).sum();
    let target = fraction * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, &v) in values.iter().enumerate() {
        acc += v.max(0.0);
        if acc >= target {
            return i + 1;
        }
    }
    values.len()
}

/// PCA keeping the fewest components that explain at least `variance_kept`
/// of the total variance.
pub fn fit_pca(x: &LabeledMatrix, variance_kept: f64) -> Result<ReductionModel> {
    require_samples(x, 2)?;
    if !(variance_kept > 0.0 && variance_kept <= 1.0) {
        return Err(Error::Config(format!("variance_kept {variance_kept} outside (0, 1]")));
    }
    let sub = principal_subspace(x.values(), |values, _| components_for_fraction(values, variance_kept));
    if sub.total_scatter <= 0.0 || sub.basis.ncols() == 0 {
        return Err(Error::DegenerateData("zero total variance".into()));
    }
    let denom = (x.n_samples() - 1) as f64;
    Ok(ReductionModel {
        format_version: MODEL_FORMAT_VERSION,
        method: Method::Pca,
        input_dim: x.dim(),
        output_dim: sub.basis.ncols(),
        center: sub.center.to_vec(),
        basis: Some(sub.basis),
        eigenvalues: sub.scatter.iter().map(|v| v / denom).collect(),
        kernel_data: None,
        dcv_params: None,
        fitted_embedding: sub.coords,
    })
}
