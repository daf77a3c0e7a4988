//! Dimensionality reduction of HoG feature matrices: PCA, kernel PCA, LDA
//! and Discriminant Common Vectors.
//!
//! Every method works from `n × n` Gram matrices when the feature dimension
//! exceeds the sample count, which is the normal regime here (a few
//! hundred radiographs against thousands of HoG features). Basis vectors
//! and dual vectors are sign-normalized so that their largest-magnitude
//! entry is positive, which makes fitted models byte-stable.

mod dcv;
mod kpca;
mod lda;
mod pca;

use std::collections::BTreeMap;
use std::fmt;
use std::io;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;

pub use dcv::{fit_dcv, DcvMode};
pub use kpca::fit_kpca;
pub use lda::fit_lda;
pub use pca::fit_pca;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Pca,
    Kpca,
    Lda,
    Dcv,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Pca, Method::Kpca, Method::Lda, Method::Dcv];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Pca => "pca",
            Method::Kpca => "kpca",
            Method::Lda => "lda",
            Method::Dcv => "dcv",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown reduction method {s:?}")))
    }
}

/// Feature rows with their sample ids and class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMatrix {
    ids: Vec<String>,
    labels: Vec<ClassLabel>,
    values: Array2<f64>,
}

impl LabeledMatrix {
    pub fn new(ids: Vec<String>, labels: Vec<ClassLabel>, values: Array2<f64>) -> Result<Self> {
        if ids.len() != values.nrows() || labels.len() != values.nrows() {
            return Err(Error::Shape {
                expected: values.nrows(),
                actual: ids.len().min(labels.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature matrix contains non-finite values".into()));
        }
        Ok(Self { ids, labels, values })
    }

    /// Rows labeled with generated ids `0, 1, ...`.
    pub fn from_rows(labels: Vec<ClassLabel>, values: Array2<f64>) -> Result<Self> {
        let ids = (0..values.nrows()).map(|i| i.to_string()).collect();
        Self::new(ids, labels, values)
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.labels
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn n_samples(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    pub fn class_index(&self) -> BTreeMap<ClassLabel, Vec<usize>> {
        let mut index: BTreeMap<ClassLabel, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            index.entry(l).or_default().push(i);
        }
        index
    }

    pub fn classes(&self) -> Vec<ClassLabel> {
        self.class_index().into_keys().collect()
    }

    pub fn select(&self, rows: &[usize]) -> LabeledMatrix {
        LabeledMatrix {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            labels: rows.iter().map(|&i| self.labels[i]).collect(),
            values: self.values.select(Axis(0), rows),
        }
    }

    /// Same ids and labels with new row values (e.g. an embedding).
    pub fn with_values(&self, values: Array2<f64>) -> Result<LabeledMatrix> {
        LabeledMatrix::new(self.ids.clone(), self.labels.clone(), values)
    }
}

/// Everything needed to project new points with a fitted kernel PCA.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelData {
    pub kernel: KernelSpec,
    #[serde(with = "crate::serde_matrix::rows")]
    pub training: Array2<f64>,
    /// Eigenvectors of the centered kernel matrix scaled by `1/sqrt(eigenvalue)`.
    #[serde(with = "crate::serde_matrix::rows")]
    pub dual_coefficients: Array2<f64>,
    /// Column means of the uncentered training kernel matrix.
    pub column_means: Vec<f64>,
    pub total_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcvParams {
    pub mode: DcvMode,
    /// Dimension of the retained within-class range space.
    pub range_dim: usize,
    /// Dimension of the (pseudo-)null space the common vectors live in.
    pub null_dim: usize,
}

/// A fitted projection. Linear methods map `x` to `basisᵀ (x - center)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionModel {
    pub format_version: u32,
    pub method: Method,
    pub input_dim: usize,
    pub output_dim: usize,
    pub center: Vec<f64>,
    /// `input_dim × output_dim`, one array per input dimension.
    #[serde(with = "crate::serde_matrix::rows_opt", default)]
    pub basis: Option<Array2<f64>>,
    /// Spectrum of the retained components (variances for PCA, Fisher
    /// ratios for LDA, common-vector scatter for DCV, kernel eigenvalues
    /// for KPCA).
    pub eigenvalues: Vec<f64>,
    #[serde(default)]
    pub kernel_data: Option<KernelData>,
    #[serde(default)]
    pub dcv_params: Option<DcvParams>,
    /// Embedding of the training rows as produced by the fitting route.
    #[serde(with = "crate::serde_matrix::rows")]
    pub fitted_embedding: Array2<f64>,
}

impl ReductionModel {
    pub fn project(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let m = self.project_rows(x.insert_axis(Axis(0)))?;
        Ok(m.row(0).to_owned())
    }

    pub fn project_rows(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim {
            return Err(Error::Shape {
                expected: self.input_dim,
                actual: x.ncols(),
            });
        }
        if let Some(basis) = &self.basis {
            let center = ArrayView1::from(&self.center);
            let centered = &x - &center.insert_axis(Axis(0));
            return Ok(centered.dot(basis));
        }
        let kd = self
            .kernel_data
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("model has neither basis nor kernel data".into()))?;
        let mut k = kd.kernel.matrix(x, kd.training.view());
        for mut row in k.axis_iter_mut(Axis(0)) {
            let row_mean = row.mean().unwrap_or(0.0);
            for (v, cm) in row.iter_mut().zip(&kd.column_means) {
                *v += kd.total_mean - row_mean - cm;
            }
        }
        Ok(k.dot(&kd.dual_coefficients))
    }

    pub fn project_matrix(&self, x: &LabeledMatrix) -> Result<LabeledMatrix> {
        x.with_values(self.project_rows(x.values())?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: ReductionModel = serde_json::from_str(s)?;
        if model.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "unsupported model format version {}",
                model.format_version
            )));
        }
        if model.center.len() != model.input_dim {
            return Err(Error::Shape {
                expected: model.input_dim,
                actual: model.center.len(),
            });
        }
        Ok(model)
    }
}

/// One row of a point-cloud export.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRow {
    pub sample_id: String,
    /// Class name, with a `TS` suffix for test samples.
    pub label: String,
    pub is_test: bool,
    pub coords: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub method: Method,
    pub n_components: usize,
    pub rows: Vec<PointRow>,
    pub warnings: Vec<String>,
}

impl PointCloud {
    pub fn legend_labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.rows.iter().map(|r| r.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// CSV `sample_id,label,split,c1,...,cn` of the rows selected by `keep`.
    pub fn write_csv(&self, writer: impl io::Write, keep: impl Fn(&PointRow) -> bool) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "label".into(), "split".into()];
        header.extend((1..=self.n_components).map(|i| format!("c{i}")));
        wtr.write_record(&header)?;
        for row in self.rows.iter().filter(|r| keep(r)) {
            let mut record = vec![
                row.sample_id.clone(),
                row.label.clone(),
                if row.is_test { "test" } else { "train" }.to_string(),
            ];
            record.extend(row.coords.iter().map(|v| v.to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Ratio of mean inter-class to mean intra-class Euclidean distance
    /// over the rows selected by `keep`. `None` when either mean is
    /// undefined or the intra-class mean is zero.
    pub fn separability(&self, keep: impl Fn(&PointRow) -> bool) -> Option<f64> {
        let rows: Vec<&PointRow> = self.rows.iter().filter(|r| keep(r)).collect();
        let class = |r: &PointRow| r.label.trim_end_matches("TS").to_string();
        let (mut inter, mut n_inter, mut intra, mut n_intra) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..rows.len() {
            for j in i + 1..rows.len() {
                let d = rows[i]
                    .coords
                    .iter()
                    .zip(&rows[j].coords)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                if class(rows[i]) == class(rows[j]) {
                    intra += d;
                    n_intra += 1;
                } else {
                    inter += d;
                    n_inter += 1;
                }
            }
        }
        if n_inter == 0 || n_intra == 0 || intra == 0.0 {
            return None;
        }
        Some((inter / n_inter as f64) / (intra / n_intra as f64))
    }
}

/// Leading `n` components of already-embedded train (and optional test)
/// rows, for plotting. Asking for more components than the model has
/// truncates and records a warning.
pub fn top_components(
    model: &ReductionModel,
    train_embedded: &LabeledMatrix,
    test_embedded: Option<&LabeledMatrix>,
    n: usize,
) -> Result<PointCloud> {
    let mut warnings = Vec::new();
    let kept = if model.output_dim < n {
        warnings.push(format!(
            "{} model has {} components, {n} requested; exporting {}",
            model.method, model.output_dim, model.output_dim
        ));
        model.output_dim
    } else {
        n
    };
    let mut rows = Vec::new();
    for (m, is_test) in std::iter::once((train_embedded, false)).chain(test_embedded.map(|t| (t, true))) {
        if m.dim() != model.output_dim {
            return Err(Error::Shape {
                expected: model.output_dim,
                actual: m.dim(),
            });
        }
        for i in 0..m.n_samples() {
            let label = if is_test {
                format!("{}TS", m.labels()[i])
            } else {
                m.labels()[i].to_string()
            };
            rows.push(PointRow {
                sample_id: m.ids()[i].clone(),
                label,
                is_test,
                coords: m.values().row(i).iter().take(kept).copied().collect(),
            });
        }
    }
    Ok(PointCloud {
        method: model.method,
        n_components: kept,
        rows,
        warnings,
    })
}

pub(crate) fn require_samples(x: &LabeledMatrix, min: usize) -> Result<()> {
    if x.n_samples() < min {
        return Err(Error::InvalidInput(format!(
            "at least {min} samples are required, got {}",
            x.n_samples()
        )));
    }
    Ok(())
}
