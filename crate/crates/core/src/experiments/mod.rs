//! The four evaluation experiments: reduction comparison on a hold-out
//! split, the HoG cell-size sweep, per-class-configuration scores and
//! stage-wise early detection.
//!
//! Every run is a pure function of its [`ExperimentSpec`]: it writes the
//! resolved spec, the partition, per-fold predictions and a JSON plus text
//! report under the output directory, and reruns produce identical bytes.

mod runs;

use std::fmt;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::classifier::{fit_multiclass, SvmConfig};
use crate::dataset::synthetic::SyntheticSpec;
use crate::dataset::{balance_subsample, ClassLabel, FoldPlan, Grid, Manifest, ManifestEntry, IMAGE_SIDE};
use crate::descriptor::{
    crop_to_cells, hog_descriptor, hog_descriptors, CellNormalization, HogConfig, OrientationRange,
};
use crate::error::{Error, Result};
use crate::evalstats::{confusion, ConfusionMatrix};
use crate::reduce::{fit_dcv, DcvMode, LabeledMatrix};

pub use runs::{
    fit_reduction, kpca_gamma, run_cellsize_sweep, run_early_detection, run_reduction_compare, run_soa_configs,
    CellSizeReport, EarlyReport, MethodExport, PairComparison, ReductionCompareReport, SizeSummary, SoaReport, SoaRow,
    StageRow,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    ReductionCompare,
    CellSizeSweep,
    SoaConfigs,
    EarlyDetection,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 4] = [
        ExperimentId::ReductionCompare,
        ExperimentId::CellSizeSweep,
        ExperimentId::SoaConfigs,
        ExperimentId::EarlyDetection,
    ];

    /// Command-line name.
    pub fn cli_name(self) -> &'static str {
        match self {
            ExperimentId::ReductionCompare => "reduce-compare",
            ExperimentId::CellSizeSweep => "cellsize",
            ExperimentId::SoaConfigs => "soa",
            ExperimentId::EarlyDetection => "early",
        }
    }

    pub fn from_cli_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.cli_name() == name)
            .ok_or_else(|| Error::Config(format!("unknown experiment {name:?}")))
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassConfig {
    CovidVsNormal,
    CovidVsPneumonia,
    CovidVsPneumoniaVsNormal,
    AllFour,
}

impl ClassConfig {
    pub fn classes(self) -> Vec<ClassLabel> {
        use ClassLabel::*;
        match self {
            ClassConfig::CovidVsNormal => vec![Covid19, Normal],
            ClassConfig::CovidVsPneumonia => vec![Covid19, PneumoniaNonCovid],
            ClassConfig::CovidVsPneumoniaVsNormal => vec![Covid19, PneumoniaNonCovid, Normal],
            ClassConfig::AllFour => ClassLabel::ALL.to_vec(),
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ClassConfig::CovidVsNormal => "COVID-19/Normal",
            ClassConfig::CovidVsPneumonia => "COVID-19/Pneumonia",
            ClassConfig::CovidVsPneumoniaVsNormal => "COVID-19/Pneumonia/Normal",
            ClassConfig::AllFour => "COVID-19/Pneumonia/Infiltration/Normal",
        }
    }

    /// Short tag used in output paths.
    pub fn tag(self) -> &'static str {
        match self {
            ClassConfig::CovidVsNormal => "covid-normal",
            ClassConfig::CovidVsPneumonia => "covid-pneumonia",
            ClassConfig::CovidVsPneumoniaVsNormal => "covid-pneumonia-normal",
            ClassConfig::AllFour => "all-four",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSource {
    /// Manifest CSV; relative image paths resolve against its directory.
    Manifest { path: PathBuf },
    /// Generated grating corpus.
    Synthetic(SyntheticSpec),
}

/// Cell sizes to evaluate plus the histogram settings shared by all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogGrid {
    pub cell_sizes: Vec<usize>,
    pub n_bins: usize,
    pub orientation_range: OrientationRange,
    pub cell_normalization: CellNormalization,
}

impl Default for HogGrid {
    fn default() -> Self {
        let base = HogConfig::default();
        Self {
            cell_sizes: vec![4, 8, 16, 32],
            n_bins: base.n_bins,
            orientation_range: base.orientation_range,
            cell_normalization: base.cell_normalization,
        }
    }
}

impl HogGrid {
    pub fn config(&self, cell_size: usize) -> HogConfig {
        HogConfig {
            cell_size,
            n_bins: self.n_bins,
            orientation_range: self.orientation_range,
            cell_normalization: self.cell_normalization,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReductionParams {
    /// Variance fraction retained by PCA.
    pub pca_variance: f64,
    pub kpca_components: usize,
    /// RBF gamma for kernel PCA; `None` sets the bandwidth to the median
    /// pairwise distance of the training rows.
    pub kpca_gamma: Option<f64>,
    pub lda_regularization: f64,
    /// Within-class eigenvalue mass assigned to the DCV range space.
    pub dcv_fraction: f64,
    /// Components written to point-cloud exports.
    pub export_components: usize,
}

impl Default for ReductionParams {
    fn default() -> Self {
        Self {
            pca_variance: 0.95,
            kpca_components: 3,
            kpca_gamma: None,
            lda_regularization: 1e-3,
            dcv_fraction: 0.8,
            export_components: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentId,
    pub dataset: DatasetSource,
    /// Seeds every random choice; there is no implicit default.
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Draw this many samples per class before running.
    #[serde(default)]
    pub balance_per_class: Option<usize>,
    #[serde(default)]
    pub hog: HogGrid,
    #[serde(default)]
    pub reduction: ReductionParams,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    /// Cell size of the reduction comparison.
    #[serde(default = "default_reduction_cell")]
    pub reduction_cell_size: usize,
    /// Cell size used by the configuration and early-detection runs.
    #[serde(default = "default_selected_cell")]
    pub selected_cell_size: usize,
    #[serde(default = "default_positive")]
    pub positive_class: ClassLabel,
    #[serde(default = "default_soa_configs")]
    pub soa_configs: Vec<ClassConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_k() -> usize {
    10
}
fn default_train_fraction() -> f64 {
    0.6
}
fn default_reduction_cell() -> usize {
    4
}
fn default_selected_cell() -> usize {
    16
}
fn default_positive() -> ClassLabel {
    ClassLabel::Covid19
}
fn default_soa_configs() -> Vec<ClassConfig> {
    vec![
        ClassConfig::CovidVsNormal,
        ClassConfig::CovidVsPneumonia,
        ClassConfig::CovidVsPneumoniaVsNormal,
    ]
}

impl ExperimentSpec {
    /// Spec with every optional field at its default.
    pub fn new(experiment: ExperimentId, dataset: DatasetSource, seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            experiment,
            dataset,
            seed,
            output_dir: output_dir.into(),
            balance_per_class: None,
            hog: HogGrid::default(),
            reduction: ReductionParams::default(),
            svm: SvmConfig::default(),
            k: default_k(),
            train_fraction: default_train_fraction(),
            reduction_cell_size: default_reduction_cell(),
            selected_cell_size: default_selected_cell(),
            positive_class: default_positive(),
            soa_configs: default_soa_configs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.svm.validate()?;
        if self.k < 2 {
            return Err(Error::Config(format!("k must be at least 2, got {}", self.k)));
        }
        if self.hog.cell_sizes.is_empty() {
            return Err(Error::Config("hog.cell_sizes is empty".into()));
        }
        for &c in self
            .hog
            .cell_sizes
            .iter()
            .chain([&self.reduction_cell_size, &self.selected_cell_size])
        {
            self.hog.config(c).validate()?;
        }
        let r = &self.reduction;
        if !(r.dcv_fraction > 0.0 && r.dcv_fraction < 1.0) {
            return Err(Error::Config(format!(
                "reduction.dcv_fraction {} outside (0, 1)",
                r.dcv_fraction
            )));
        }
        if !(r.pca_variance > 0.0 && r.pca_variance <= 1.0) {
            return Err(Error::Config(format!(
                "reduction.pca_variance {} outside (0, 1]",
                r.pca_variance
            )));
        }
        if let DatasetSource::Manifest { path } = &self.dataset {
            if !path.is_file() {
                return Err(Error::Config(format!("manifest {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

/// A manifest together with the means of producing its images.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub manifest: Manifest,
    synthetic: Option<SyntheticSpec>,
}

impl Corpus {
    pub fn open(source: &DatasetSource, balance_per_class: Option<usize>, seed: u64) -> Result<Self> {
        let (manifest, synthetic) = match source {
            DatasetSource::Manifest { path } => (Manifest::read_csv(path)?, None),
            DatasetSource::Synthetic(spec) => (spec.manifest()?, Some(spec.clone())),
        };
        let manifest = match balance_per_class {
            Some(n) => balance_subsample(&manifest, n, seed)?,
            None => manifest,
        };
        Ok(Self { manifest, synthetic })
    }

    pub fn restrict(&self, classes: &[ClassLabel]) -> Self {
        Self {
            manifest: self.manifest.restrict(classes),
            synthetic: self.synthetic.clone(),
        }
    }

    pub fn image(&self, entry: &ManifestEntry) -> Result<Grid> {
        if let Some(spec) = &self.synthetic {
            return spec.image_for(entry);
        }
        load_image(&self.manifest.resolve_path(entry))
    }

    /// One feature matrix per configuration, rows in manifest order. Images
    /// whose sides are not multiples of a cell size are center-cropped to
    /// whole cells for that configuration.
    pub fn features(&self, configs: &[HogConfig]) -> Result<Vec<LabeledMatrix>> {
        let entries = self.manifest.entries();
        let describe = |e: &ManifestEntry| -> Result<Vec<Vec<f64>>> {
            let image = self.image(e)?;
            if configs
                .iter()
                .all(|c| image.nrows() % c.cell_size == 0 && image.ncols() % c.cell_size == 0)
            {
                return Ok(hog_descriptors(image.view(), configs)?
                    .into_iter()
                    .map(|fv| fv.values)
                    .collect());
            }
            configs
                .iter()
                .map(|c| Ok(hog_descriptor(crop_to_cells(image.view(), c.cell_size), c)?.values))
                .collect()
        };
        #[cfg(feature = "parallel")]
        let rows: Vec<Vec<Vec<f64>>> = {
            use rayon::prelude::*;
            entries.par_iter().map(describe).collect::<Result<_>>()?
        };
        #[cfg(not(feature = "parallel"))]
        let rows: Vec<Vec<Vec<f64>>> = entries.iter().map(describe).collect::<Result<_>>()?;

        let ids: Vec<String> = entries.iter().map(|e| e.sample_id.clone()).collect();
        let labels: Vec<ClassLabel> = entries.iter().map(|e| e.class_label).collect();
        (0..configs.len())
            .map(|c| {
                let dim = rows.first().map_or(0, |r| r[c].len());
                let mut values = Array2::zeros((rows.len(), dim));
                for (i, r) in rows.iter().enumerate() {
                    if r[c].len() != dim {
                        return Err(Error::Shape {
                            expected: dim,
                            actual: r[c].len(),
                        });
                    }
                    values.row_mut(i).assign(&ndarray::ArrayView1::from(&r[c]));
                }
                LabeledMatrix::new(ids.clone(), labels.clone(), values)
            })
            .collect()
    }
}

/// Reads a normalized store file as is; other formats are decoded and
/// normalized to the standard side length.
fn load_image(path: &Path) -> Result<Grid> {
    #[cfg(feature = "io")]
    {
        crate::dataset::ingest_image(path, (IMAGE_SIDE, IMAGE_SIDE))
    }
    #[cfg(not(feature = "io"))]
    {
        Err(Error::Ingestion {
            path: path.to_path_buf(),
            reason: format!("image decoding to {IMAGE_SIDE}x{IMAGE_SIDE} needs the `io` feature"),
        })
    }
}

/// Held-out predictions of one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub sample_ids: Vec<String>,
    pub truth: Vec<ClassLabel>,
    pub predicted: Vec<ClassLabel>,
    pub confusion: ConfusionMatrix,
    pub svm_converged: bool,
}

impl FoldOutcome {
    pub fn predictions_csv(&self) -> Result<Vec<u8>> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record(["sample_id", "true", "pred"])?;
        for ((id, t), p) in self.sample_ids.iter().zip(&self.truth).zip(&self.predicted) {
            wtr.write_record([id.as_str(), t.as_str(), p.as_str()])?;
        }
        wtr.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

/// DCV (pseudo-null space) followed by a one-vs-one SVM, evaluated on every
/// fold of `plan`. Rows of `x` are matched to folds by sample id.
pub fn cross_validate(
    x: &LabeledMatrix,
    plan: &FoldPlan,
    dcv_fraction: f64,
    svm: &SvmConfig,
    positive: ClassLabel,
) -> Result<Vec<FoldOutcome>> {
    let folds: Vec<usize> = (0..plan.k).collect();
    let run_fold = |&fold: &usize| -> Result<FoldOutcome> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, id) in x.ids().iter().enumerate() {
            match plan.fold_of(id) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => return Err(Error::Pairing(format!("sample {id:?} has no fold assignment"))),
            }
        }
        if test.is_empty() {
            return Err(Error::Split(format!("fold {fold} has no test samples")));
        }
        let train = x.select(&train);
        let test = x.select(&test);
        let model = fit_dcv(&train, DcvMode::PseudoNull { fraction: dcv_fraction })?;
        let train_z = train.with_values(model.fitted_embedding.clone())?;
        let svm_model = fit_multiclass(&train_z, svm)?;
        let test_z = model.project_rows(test.values())?;
        let predicted = svm_model.predict_rows(test_z.view())?;
        Ok(FoldOutcome {
            fold,
            confusion: confusion(test.labels(), &predicted, positive)?,
            sample_ids: test.ids().to_vec(),
            truth: test.labels().to_vec(),
            predicted,
            svm_converged: svm_model.converged(),
        })
    };
    #[cfg(feature = "parallel")]
    let outcomes = {
        use rayon::prelude::*;
        folds.par_iter().map(run_fold).collect::<Result<Vec<_>>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes = folds.iter().map(run_fold).collect::<Result<Vec<_>>>()?;
    for o in &outcomes {
        if !o.svm_converged {
            log::warn!("fold {}: SVM stopped at its iteration budget", o.fold);
        }
    }
    Ok(outcomes)
}

/// Files of a run, keyed by path relative to the output directory.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct RunOutputs {
    pub files: Vec<(PathBuf, Vec<u8>)>,
}

impl RunOutputs {
    pub fn add(&mut self, rel: impl Into<PathBuf>, bytes: impl Into<Vec<u8>>) {
        self.files.push((rel.into(), bytes.into()));
    }

    pub fn get(&self, rel: impl AsRef<Path>) -> Option<&[u8]> {
        self.files
            .iter()
            .find(|(p, _)| p == rel.as_ref())
            .map(|(_, b)| b.as_slice())
    }

    pub fn write_to(&self, dir: &Path) -> Result<()> {
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(&path, bytes)?;
        }
        Ok(())
    }
}

/// Result of one experiment run: the report rendered as text plus every
/// output file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub summary: String,
    pub outputs: RunOutputs,
}

pub fn fold_plan_csv(plan: &FoldPlan) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    plan.write_csv(&mut buf)?;
    Ok(buf)
}

/// Run the experiment named in `spec` and write its outputs under
/// `spec.output_dir`.
pub fn run(spec: &ExperimentSpec) -> Result<RunResult> {
    spec.validate()?;
    let mut result = match spec.experiment {
        ExperimentId::ReductionCompare => run_reduction_compare(spec)?,
        ExperimentId::CellSizeSweep => run_cellsize_sweep(spec)?,
        ExperimentId::SoaConfigs => run_soa_configs(spec)?,
        ExperimentId::EarlyDetection => run_early_detection(spec)?,
    };
    result.outputs.add("spec.json", spec.to_json()?);
    result.outputs.write_to(&spec.output_dir)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_round_trip_and_defaults() {
        let spec = ExperimentSpec::new(
            ExperimentId::CellSizeSweep,
            DatasetSource::Synthetic(SyntheticSpec::default()),
            7,
            "out",
        );
        let back: ExperimentSpec = serde_json::from_str(&spec.to_json().unwrap()).unwrap();
        assert_eq!(back, spec);
        let minimal: ExperimentSpec = serde_json::from_str(
            r#"{"experiment": "soa_configs", "seed": 3, "dataset": {"kind": "synthetic", "per_class": 12}}"#,
        )
        .unwrap();
        assert_eq!(minimal.k, 10);
        assert_eq!(minimal.soa_configs.len(), 3);
        let err = serde_json::from_str::<ExperimentSpec>(
            r#"{"experiment": "soa_configs", "dataset": {"kind": "synthetic"}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("seed"));
        let err = serde_json::from_str::<ExperimentSpec>(
            r#"{"experiment": "soa_configs", "seed": 1, "dataset": {"kind": "synthetic"}, "hog": {"cells": [4]}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("cells"));
    }

    #[test]
    fn experiment_names() {
        for e in ExperimentId::ALL {
            assert_eq!(ExperimentId::from_cli_name(e.cli_name()).unwrap(), e);
        }
        assert!(ExperimentId::from_cli_name("nope").is_err());
    }
}
