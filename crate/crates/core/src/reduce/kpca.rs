use ndarray::{Array2, Axis};

use super::{require_samples, KernelData, LabeledMatrix, Method, ReductionModel, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::linalg::{sym_eigen_desc, EIG_REL_TOL};

/// Kernel PCA on the double-centered kernel matrix.
pub fn fit_kpca(x: &LabeledMatrix, kernel: KernelSpec, n_components: usize) -> Result<ReductionModel> {
    require_samples(x, 2)?;
    kernel.validate()?;
    let n = x.n_samples();
    if n_components == 0 || n_components > n - 1 {
        return Err(Error::Config(format!(
            "n_components must be in 1..={}, got {n_components}",
            n - 1
        )));
    }
    let k = kernel.gram(x.values());
    let column_means = k.mean_axis(Axis(0)).expect("n >= 2").to_vec();
    let total_mean = column_means.iter().sum::<f64>() / n as f64;
    // K is symmetric, so row means equal column means
    let centered = Array2::from_shape_fn((n, n), |(i, j)| {
        k[[i, j]] - column_means[i] - column_means[j] + total_mean
    });
    let (values, vectors) = sym_eigen_desc(centered.view());
    let largest = values[0].max(0.0);
    let mut dual = Array2::zeros((n, n_components));
    let mut embedding = Array2::zeros((n, n_components));
    for (c, &lambda) in values.iter().enumerate().take(n_components) {
        if !(lambda > EIG_REL_TOL * largest) {
            return Err(Error::Rank(format!(
                "component {} has non-positive kernel eigenvalue {lambda:e}",
                c + 1
            )));
        }
        let u = vectors.column(c);
        dual.column_mut(c).assign(&u.mapv(|v| v / lambda.sqrt()));
        embedding.column_mut(c).assign(&u.mapv(|v| v * lambda.sqrt()));
    }
    Ok(ReductionModel {
        format_version: MODEL_FORMAT_VERSION,
        method: Method::Kpca,
        input_dim: x.dim(),
        output_dim: n_components,
        center: x.values().mean_axis(Axis(0)).expect("n >= 2").to_vec(),
        basis: None,
        eigenvalues: values[..n_components].to_vec(),
        kernel_data: Some(KernelData {
            kernel,
            training: x.values().to_owned(),
            dual_coefficients: dual,
            column_means,
            total_mean,
        }),
        dcv_params: None,
        fitted_embedding: embedding,
    })
}
