use ndarray::{s, Array1, Array2};

use super::pca::principal_subspace;
use super::{require_samples, LabeledMatrix, Method, ReductionModel, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, sym_eigen_desc, EIG_REL_TOL};

/// Scatter matrices of the rows of `coords` grouped by class:
/// `(within, between, class means)`.
pub(crate) fn scatter_matrices(
    coords: &Array2<f64>,
    x: &LabeledMatrix,
) -> (Array2<f64>, Array2<f64>, Vec<Array1<f64>>) {
    let k = coords.ncols();
    let overall = coords.mean_axis(ndarray::Axis(0)).unwrap_or_else(|| Array1::zeros(k));
    let mut within = Array2::zeros((k, k));
    let mut between = Array2::zeros((k, k));
    let mut means = Vec::new();
    for rows in x.class_index().values() {
        let block = coords.select(ndarray::Axis(0), rows);
        let mean = block.mean_axis(ndarray::Axis(0)).expect("class is non-empty");
        let centered = &block - &mean.view().insert_axis(ndarray::Axis(0));
        within = within + centered.t().dot(&centered);
        let diff = (&mean - &overall).insert_axis(ndarray::Axis(1));
        between = between + diff.dot(&diff.t()) * rows.len() as f64;
        means.push(mean);
    }
    (within, between, means)
}

/// Fisher LDA after projecting onto the span of the centered data.
///
/// Directions solve `Sb v = λ (Sw + regularization·I) v`; each basis
/// column is scaled to unit length. The output has `C - 1` components.
pub fn fit_lda(x: &LabeledMatrix, regularization: f64) -> Result<ReductionModel> {
    if !(regularization >= 0.0 && regularization.is_finite()) {
        return Err(Error::Config(format!(
            "regularization must be >= 0, got {regularization}"
        )));
    }
    let index = x.class_index();
    if index.len() < 2 {
        return Err(Error::UndefinedBetweenScatter);
    }
    if let Some((class, rows)) = index.iter().find(|(_, r)| r.len() < 2) {
        return Err(Error::InvalidInput(format!(
            "LDA needs at least 2 samples per class; {class} has {}",
            rows.len()
        )));
    }
    require_samples(x, 3)?;
    let sub = principal_subspace(x.values(), |_, rank| rank);
    if sub.basis.ncols() == 0 {
        return Err(Error::DegenerateData("zero total variance".into()));
    }
    let (within, between, _) = scatter_matrices(&sub.coords, x);
    let r = within.nrows();
    let regularized = &within + &(Array2::<f64>::eye(r) * regularization);

    // M^{-1/2} from the eigendecomposition of the regularized scatter
    let (m_vals, m_vecs) = sym_eigen_desc(regularized.view());
    let largest = m_vals[0];
    let smallest = m_vals[r - 1];
    if !(smallest > EIG_REL_TOL * largest) {
        return Err(Error::Singular(format!(
            "smallest regularized within-class eigenvalue {smallest:e} vs largest {largest:e}"
        )));
    }
    let inv_sqrt = Array2::from_shape_fn((r, r), |(i, j)| {
        (0..r)
            .map(|k| m_vecs[[i, k]] * m_vecs[[j, k]] / m_vals[k].sqrt())
            .sum::<f64>()
    });
    let whitened = inv_sqrt.dot(&between).dot(&inv_sqrt);
    let (ratios, w) = sym_eigen_desc(whitened.view());
    let out = (index.len() - 1).min(r);
    let mut directions = inv_sqrt.dot(&w.slice(s![.., ..out]));
    let mut basis = sub.basis.dot(&directions);
    for j in 0..out {
        let norm = basis.column(j).dot(&basis.column(j)).sqrt();
        let mut col = basis.column(j).to_vec();
        let sign = if canonical_sign(&mut col) { -1.0 } else { 1.0 };
        basis.column_mut(j).mapv_inplace(|v| sign * v / norm);
        directions.column_mut(j).mapv_inplace(|v| sign * v / norm);
    }
    Ok(ReductionModel {
        format_version: MODEL_FORMAT_VERSION,
        method: Method::Lda,
        input_dim: x.dim(),
        output_dim: out,
        center: sub.center.to_vec(),
        basis: Some(basis),
        eigenvalues: ratios[..out].to_vec(),
        kernel_data: None,
        dcv_params: None,
        fitted_embedding: sub.coords.dot(&directions),
    })
}
