//! Classical chest X-ray screening pipeline: normalized radiographs are
//! described with cell-level HoG histograms, reduced with PCA, kernel PCA,
//! LDA or Discriminant Common Vectors, and classified with a one-vs-one SVM.
//! The `evalstats` and `experiments` modules provide the cross-validated
//! evaluation harness (fold-level t intervals, paired comparisons, one-way
//! ANOVA over disease stage).

// negated float comparisons are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod dataset;
pub mod descriptor;
pub mod error;
pub mod evalstats;
pub mod experiments;
pub mod kernel;
pub mod linalg;
pub mod reduce;
pub(crate) mod serde_matrix;

pub use error::{Error, Result};
