//! Discriminant Common Vectors.
//!
//! Within the span of the centered training data, the within-class scatter
//! splits into a range space and its complement. Projecting a class onto
//! the complement removes its within-class variation and leaves one common
//! vector per class; the final directions are the principal components of
//! those common vectors. In `Exact` mode the complement is the true null
//! space (requires more dimensions than samples); in `PseudoNull` mode the
//! range space is the smallest leading eigenspace of the within-class
//! scatter holding `fraction` of its eigenvalue mass, and samples of a class
//! only approximately collapse.

use ndarray::{s, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::lda::scatter_matrices;
use super::pca::{components_for_fraction, principal_subspace};
use super::{DcvParams, LabeledMatrix, Method, ReductionModel, MODEL_FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, numerical_rank, orthonormalize_columns, sym_eigen_desc, EIG_REL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DcvMode {
    /// Null space of the within-class scatter, by numerical rank.
    Exact,
    /// Complement of the leading within-class eigenspace holding `fraction`
    /// of the within-class eigenvalue mass.
    PseudoNull { fraction: f64 },
}

pub fn fit_dcv(x: &LabeledMatrix, mode: DcvMode) -> Result<ReductionModel> {
    if let DcvMode::PseudoNull { fraction } = mode {
        if !(fraction > 0.0 && fraction < 1.0) {
            return Err(Error::Config(format!(
                "DCV variance fraction {fraction} outside (0, 1)"
            )));
        }
    }
    let index = x.class_index();
    if index.len() < 2 {
        return Err(Error::UndefinedBetweenScatter);
    }
    let n_classes = index.len();

    let sub = principal_subspace(x.values(), |_, rank| rank);
    let t = sub.basis.ncols();
    if t == 0 {
        return Err(Error::DegenerateData("zero total variance".into()));
    }
    let (within, _, class_means) = scatter_matrices(&sub.coords, x);
    let (w_vals, w_vecs) = sym_eigen_desc(within.view());
    // within-class rank is judged against the total scatter, so classes that
    // are exact repeats have an empty range space
    let within_rank = rank_against(&w_vals, sub.scatter[0]);
    let range_dim = match mode {
        DcvMode::Exact => within_rank,
        DcvMode::PseudoNull { fraction } => {
            if within_rank == 0 {
                0
            } else {
                components_for_fraction(&w_vals, fraction)
            }
        }
    };
    if range_dim >= t {
        let fraction = match mode {
            DcvMode::Exact => 1.0,
            DcvMode::PseudoNull { fraction } => fraction,
        };
        return Err(Error::EmptyNullSpace { fraction });
    }
    let null = w_vecs.slice(s![.., range_dim..]).to_owned();
    let null_dim = t - range_dim;

    // common vectors, one row per class, centered over classes
    let mut common = Array2::zeros((n_classes, null_dim));
    for (c, mean) in class_means.iter().enumerate() {
        common.row_mut(c).assign(&null.t().dot(mean));
    }
    let common_mean = common.mean_axis(Axis(0)).expect("at least two classes");
    let common = &common - &common_mean.view().insert_axis(Axis(0));

    // principal directions of the common vectors via their C x C Gram matrix
    let (g_vals, g_vecs) = sym_eigen_desc(common.dot(&common.t()).view());
    let out = numerical_rank(&g_vals).min(n_classes - 1);
    if out == 0 {
        return Err(Error::DegenerateData("all common vectors coincide".into()));
    }
    let mut directions = common.t().dot(&g_vecs.slice(s![.., ..out]));
    for (j, mut col) in directions.columns_mut().into_iter().enumerate() {
        let inv = 1.0 / g_vals[j].sqrt();
        col.mapv_inplace(|v| v * inv);
    }
    orthonormalize_columns(&mut directions);

    // null-space coordinates -> span coordinates -> input space
    let mut in_span = null.dot(&directions);
    let mut basis = sub.basis.dot(&in_span);
    orthonormalize_columns(&mut basis);
    for j in 0..out {
        let mut col = basis.column(j).to_vec();
        if canonical_sign(&mut col) {
            basis.column_mut(j).mapv_inplace(|v| -v);
            in_span.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    Ok(ReductionModel {
        format_version: MODEL_FORMAT_VERSION,
        method: Method::Dcv,
        input_dim: x.dim(),
        output_dim: out,
        center: sub.center.to_vec(),
        basis: Some(basis),
        eigenvalues: g_vals[..out].to_vec(),
        kernel_data: None,
        dcv_params: Some(DcvParams {
            mode,
            range_dim,
            null_dim,
        }),
        fitted_embedding: sub.coords.dot(&in_span),
    })
}

fn rank_against(values: &[f64], reference: f64) -> usize {
    values.iter().take_while(|&&v| v > EIG_REL_TOL * reference).count()
}
