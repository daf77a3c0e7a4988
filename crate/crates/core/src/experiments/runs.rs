use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    cross_validate, fold_plan_csv, ClassConfig, Corpus, ExperimentSpec, FoldOutcome, ReductionParams, RunOutputs,
    RunResult,
};
use crate::dataset::{holdout_split, stratified_kfold, ClassLabel, CovidStage};
use crate::error::{Error, Result};
use crate::evalstats::{
    fold_summary, oneway_anova, paired_compare, percent, render_table, scores, AnovaResult, ComparisonResult,
    ConfusionMatrix, ScoreName, ScoreSummary, Scores,
};
use crate::kernel::{median_distance_gamma, KernelSpec};
use crate::reduce::{
    fit_dcv, fit_kpca, fit_lda, fit_pca, top_components, DcvMode, LabeledMatrix, Method, ReductionModel,
};

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn rows_by_id(x: &LabeledMatrix, ids: impl IntoIterator<Item = String>) -> Result<LabeledMatrix> {
    let index: BTreeMap<&str, usize> = x.ids().iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
    let rows = ids
        .into_iter()
        .map(|id| {
            index
                .get(id.as_str())
                .copied()
                .ok_or_else(|| Error::InvalidInput(format!("no feature row for sample {id:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(x.select(&rows))
}

fn require_classes(corpus: &Corpus, classes: &[ClassLabel], what: &str) -> Result<()> {
    let present = corpus.manifest.classes();
    if let Some(missing) = classes.iter().find(|c| !present.contains(c)) {
        return Err(Error::InvalidInput(format!(
            "{what} needs class {missing}, absent from the dataset"
        )));
    }
    Ok(())
}

fn write_fold_predictions(outputs: &mut RunOutputs, dir: &str, outcomes: &[FoldOutcome]) -> Result<()> {
    for o in outcomes {
        outputs.add(format!("{dir}/fold{:02}.csv", o.fold), o.predictions_csv()?);
    }
    Ok(())
}

fn aggregate(outcomes: &[FoldOutcome], positive: ClassLabel) -> Result<ConfusionMatrix> {
    outcomes
        .iter()
        .try_fold(ConfusionMatrix::empty(positive), |acc, o| acc.merge(&o.confusion))
}

/// Explicit KPCA gamma, or the median-distance rule over the rows of `x`.
pub fn kpca_gamma(x: &LabeledMatrix, params: &ReductionParams) -> Result<f64> {
    match params.kpca_gamma {
        Some(g) => Ok(g),
        None => median_distance_gamma(x.values()),
    }
}

/// Fit one reduction method with the experiment parameters; KPCA uses an
/// RBF kernel.
pub fn fit_reduction(x: &LabeledMatrix, method: Method, params: &ReductionParams) -> Result<ReductionModel> {
    match method {
        Method::Pca => fit_pca(x, params.pca_variance),
        Method::Kpca => fit_kpca(
            x,
            KernelSpec::Rbf {
                gamma: kpca_gamma(x, params)?,
            },
            params.kpca_components,
        ),
        Method::Lda => fit_lda(x, params.lda_regularization),
        Method::Dcv => fit_dcv(
            x,
            DcvMode::PseudoNull {
                fraction: params.dcv_fraction,
            },
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodExport {
    pub method: Method,
    pub output_dim: usize,
    pub exported_components: usize,
    pub train_file: String,
    pub test_file: String,
    /// Mean inter-class over mean intra-class distance in the exported space.
    pub separability_train: Option<f64>,
    pub separability_test: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReductionCompareReport {
    pub cell_size: usize,
    pub feature_dim: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub kpca_gamma: f64,
    pub methods: Vec<MethodExport>,
}

impl ReductionCompareReport {
    pub fn render(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.4}"));
        let mut rows = vec![["method", "components", "separability train", "separability test"]
            .map(String::from)
            .to_vec()];
        for m in &self.methods {
            rows.push(vec![
                m.method.to_string(),
                format!("{}/{}", m.exported_components, m.output_dim),
                fmt(m.separability_train),
                fmt(m.separability_test),
            ]);
        }
        let mut out = format!(
            "Reduction comparison: cell size {}, {} features, {} train / {} test\n\n",
            self.cell_size, self.feature_dim, self.train_size, self.test_size
        );
        out.push_str(&render_table(&rows));
        for m in &self.methods {
            for w in &m.warnings {
                out.push_str(&format!("warning: {w}\n"));
            }
        }
        out
    }
}

/// Fit all four reductions on a stratified hold-out split and export the
/// leading components of the train and test embeddings.
pub fn run_reduction_compare(spec: &ExperimentSpec) -> Result<RunResult> {
    let corpus = Corpus::open(&spec.dataset, spec.balance_per_class, spec.seed)?;
    require_classes(&corpus, &ClassLabel::ALL, "the reduction comparison")?;
    let (train_m, test_m) = holdout_split(&corpus.manifest, spec.train_fraction, spec.seed)?;
    let config = spec.hog.config(spec.reduction_cell_size);
    let features = corpus.features(&[config])?.remove(0);
    let train = rows_by_id(&features, train_m.entries().iter().map(|e| e.sample_id.clone()))?;
    let test = rows_by_id(&features, test_m.entries().iter().map(|e| e.sample_id.clone()))?;
    let params = &spec.reduction;
    let gamma = kpca_gamma(&train, params)?;

    let mut outputs = RunOutputs::default();
    let mut split = csv::Writer::from_writer(Vec::new());
    split.write_record(["sample_id", "label", "split"])?;
    for e in corpus.manifest.entries() {
        let side = if test_m.get(&e.sample_id).is_some() {
            "test"
        } else {
            "train"
        };
        split.write_record([e.sample_id.as_str(), e.class_label.as_str(), side])?;
    }
    outputs.add("split.csv", split.into_inner().map_err(|e| Error::Io(e.into_error()))?);

    let mut methods = Vec::new();
    for method in Method::ALL {
        let model = fit_reduction(&train, method, params)?;
        let train_z = train.with_values(model.fitted_embedding.clone())?;
        let test_z = model.project_matrix(&test)?;
        let cloud = top_components(&model, &train_z, Some(&test_z), params.export_components)?;
        let train_file = format!("points/{}_train.csv", method.as_str());
        let test_file = format!("points/{}_test.csv", method.as_str());
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf, |r| !r.is_test)?;
        outputs.add(&train_file, buf);
        let mut buf = Vec::new();
        cloud.write_csv(&mut buf, |r| r.is_test)?;
        outputs.add(&test_file, buf);
        methods.push(MethodExport {
            method,
            output_dim: model.output_dim,
            exported_components: cloud.n_components,
            train_file,
            test_file,
            separability_train: cloud.separability(|r| !r.is_test),
            separability_test: cloud.separability(|r| r.is_test),
            warnings: cloud.warnings.clone(),
        });
    }
    let report = ReductionCompareReport {
        cell_size: config.cell_size,
        feature_dim: features.dim(),
        train_size: train.n_samples(),
        test_size: test.n_samples(),
        kpca_gamma: gamma,
        methods,
    };
    let summary = report.render();
    outputs.add("report.json", json_bytes(&report)?);
    outputs.add("report.txt", summary.clone());
    Ok(RunResult { summary, outputs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub cell_size: usize,
    pub score: ScoreName,
    /// Summary over the folds where the score is defined; `None` when fewer
    /// than two are.
    pub summary: Option<ScoreSummary>,
    pub undefined_folds: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub cell_sizes: (usize, usize),
    pub score: ScoreName,
    pub result: Option<ComparisonResult>,
    pub notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSizeReport {
    pub positive_class: ClassLabel,
    pub k: usize,
    pub cell_sizes: Vec<usize>,
    pub summaries: Vec<SizeSummary>,
    pub comparisons: Vec<PairComparison>,
    pub warnings: Vec<String>,
}

const SWEEP_SCORES: [ScoreName; 2] = [ScoreName::Precision, ScoreName::Recall];

impl CellSizeReport {
    pub fn summary_for(&self, cell_size: usize, score: ScoreName) -> Option<&ScoreSummary> {
        self.summaries
            .iter()
            .find(|s| s.cell_size == cell_size && s.score == score)
            .and_then(|s| s.summary.as_ref())
    }

    pub fn render(&self) -> String {
        let mut avg = vec![vec!["cell size".to_string(), "precision".into(), "recall".into()]];
        for &c in &self.cell_sizes {
            let mut row = vec![c.to_string()];
            for score in SWEEP_SCORES {
                row.push(
                    self.summary_for(c, score)
                        .map_or_else(|| "undefined".to_string(), |s| s.display()),
                );
            }
            avg.push(row);
        }
        let mut cmp = vec![vec!["sizes".to_string(), "precision".into(), "recall".into()]];
        let mut pairs: Vec<(usize, usize)> = self.comparisons.iter().map(|c| c.cell_sizes).collect();
        pairs.dedup();
        for pair in pairs {
            let mut row = vec![format!("{}-{}", pair.0, pair.1)];
            for score in SWEEP_SCORES {
                let cell = self
                    .comparisons
                    .iter()
                    .find(|c| c.cell_sizes == pair && c.score == score)
                    .and_then(|c| c.result.as_ref())
                    .map_or_else(
                        || "undefined".to_string(),
                        |r| format!("{}{}", r.display(), if r.significant { " *" } else { "" }),
                    );
                row.push(cell);
            }
            cmp.push(row);
        }
        let mut out = format!(
            "Cell-size sweep: {}-fold, positive class {}\n\nAverage scores (mean [95% CI])\n",
            self.k, self.positive_class
        );
        out.push_str(&render_table(&avg));
        out.push_str("\nComparison across sizes (* significant at 0.05)\n");
        out.push_str(&render_table(&cmp));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

fn per_fold(outcomes: &[FoldOutcome], score: ScoreName) -> Vec<Option<f64>> {
    outcomes.iter().map(|o| scores(&o.confusion).get(score)).collect()
}

fn convergence_warnings(tag: &str, outcomes: &[FoldOutcome]) -> Vec<String> {
    outcomes
        .iter()
        .filter(|o| !o.svm_converged)
        .map(|o| format!("{tag} fold {}: SVM stopped at its iteration budget", o.fold))
        .collect()
}

/// DCV + SVM for every cell size over one shared fold plan, with
/// fold-paired comparisons between all size pairs.
pub fn run_cellsize_sweep(spec: &ExperimentSpec) -> Result<RunResult> {
    let corpus = Corpus::open(&spec.dataset, spec.balance_per_class, spec.seed)?;
    let plan = stratified_kfold(&corpus.manifest, spec.k, spec.seed)?;
    let sizes = spec.hog.cell_sizes.clone();
    let configs: Vec<_> = sizes.iter().map(|&c| spec.hog.config(c)).collect();
    let features = corpus.features(&configs)?;
    let positive = spec.positive_class;

    let mut outputs = RunOutputs::default();
    outputs.add("folds.csv", fold_plan_csv(&plan)?);
    let mut fold_scores: BTreeMap<(usize, ScoreName), Vec<Option<f64>>> = BTreeMap::new();
    let mut summaries = Vec::new();
    let mut warnings = Vec::new();
    for (&cell, x) in sizes.iter().zip(&features) {
        let outcomes = cross_validate(x, &plan, spec.reduction.dcv_fraction, &spec.svm, positive)?;
        write_fold_predictions(&mut outputs, &format!("predictions/cell{cell:02}"), &outcomes)?;
        warnings.extend(convergence_warnings(&format!("cell {cell}"), &outcomes));
        for score in SWEEP_SCORES {
            let values = per_fold(&outcomes, score);
            let defined: Vec<f64> = values.iter().flatten().copied().collect();
            let undefined_folds: Vec<usize> = (0..values.len()).filter(|&f| values[f].is_none()).collect();
            let summary = if defined.len() >= 2 {
                Some(fold_summary(score.as_str(), &defined)?)
            } else {
                None
            };
            summaries.push(SizeSummary {
                cell_size: cell,
                score,
                summary,
                undefined_folds,
            });
            fold_scores.insert((cell, score), values);
        }
    }

    let mut comparisons = Vec::new();
    for (i, &a) in sizes.iter().enumerate() {
        for &b in &sizes[i + 1..] {
            for score in SWEEP_SCORES {
                let (va, vb) = (&fold_scores[&(a, score)], &fold_scores[&(b, score)]);
                let (pa, pb): (Vec<f64>, Vec<f64>) =
                    va.iter().zip(vb).filter_map(|(x, y)| Some(((*x)?, (*y)?))).unzip();
                let (result, notice) = if pa.len() >= 2 {
                    let names = (a.to_string(), b.to_string());
                    (
                        Some(paired_compare((&names.0, &names.1), score.as_str(), &pa, &pb)?),
                        None,
                    )
                } else {
                    (
                        None,
                        Some(format!("fewer than 2 folds with {score} defined for both sizes")),
                    )
                };
                comparisons.push(PairComparison {
                    cell_sizes: (a, b),
                    score,
                    result,
                    notice,
                });
            }
        }
    }
    let report = CellSizeReport {
        positive_class: positive,
        k: plan.k,
        cell_sizes: sizes,
        summaries,
        comparisons,
        warnings,
    };
    let summary = report.render();
    outputs.add("report.json", json_bytes(&report)?);
    outputs.add("report.txt", summary.clone());
    Ok(RunResult { summary, outputs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoaRow {
    pub config: ClassConfig,
    pub name: String,
    pub classes: Vec<ClassLabel>,
    pub n_samples: usize,
    pub confusion: ConfusionMatrix,
    pub per_fold: Vec<ConfusionMatrix>,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoaReport {
    pub cell_size: usize,
    pub k: usize,
    pub positive_class: ClassLabel,
    pub rows: Vec<SoaRow>,
    pub warnings: Vec<String>,
}

impl SoaReport {
    pub fn render(&self) -> String {
        let mut rows = vec![vec!["configuration".to_string()]];
        rows[0].extend(ScoreName::ALL.iter().map(|s| s.to_string()));
        for r in &self.rows {
            let mut row = vec![r.name.clone()];
            row.extend(ScoreName::ALL.iter().map(|&s| percent(r.scores.get(s))));
            rows.push(row);
        }
        let mut out = format!(
            "Class configurations: cell size {}, {}-fold, positive class {} (scores in %)\n\n",
            self.cell_size, self.k, self.positive_class
        );
        out.push_str(&render_table(&rows));
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        out
    }
}

/// DCV + SVM cross-validated separately on each class configuration.
pub fn run_soa_configs(spec: &ExperimentSpec) -> Result<RunResult> {
    let corpus = Corpus::open(&spec.dataset, spec.balance_per_class, spec.seed)?;
    for &cfg in &spec.soa_configs {
        require_classes(&corpus, &cfg.classes(), cfg.display_name())?;
    }
    let config = spec.hog.config(spec.selected_cell_size);
    let features = corpus.features(&[config])?.remove(0);
    let positive = spec.positive_class;

    let mut outputs = RunOutputs::default();
    let mut folds = csv::Writer::from_writer(Vec::new());
    folds.write_record(["config", "sample_id", "fold"])?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &cfg in &spec.soa_configs {
        let sub = corpus.restrict(&cfg.classes());
        let plan = stratified_kfold(&sub.manifest, spec.k, spec.seed)?;
        for (id, fold) in &plan.assignment {
            folds.write_record([cfg.tag(), id.as_str(), &fold.to_string()])?;
        }
        let x = rows_by_id(&features, sub.manifest.entries().iter().map(|e| e.sample_id.clone()))?;
        let outcomes = cross_validate(&x, &plan, spec.reduction.dcv_fraction, &spec.svm, positive)?;
        write_fold_predictions(&mut outputs, &format!("predictions/{}", cfg.tag()), &outcomes)?;
        warnings.extend(convergence_warnings(cfg.tag(), &outcomes));
        let total = aggregate(&outcomes, positive)?;
        rows.push(SoaRow {
            config: cfg,
            name: cfg.display_name().to_string(),
            classes: cfg.classes(),
            n_samples: x.n_samples(),
            confusion: total,
            per_fold: outcomes.iter().map(|o| o.confusion).collect(),
            scores: scores(&total),
        });
    }
    outputs.add("folds.csv", folds.into_inner().map_err(|e| Error::Io(e.into_error()))?);
    let report = SoaReport {
        cell_size: config.cell_size,
        k: spec.k,
        positive_class: positive,
        rows,
        warnings,
    };
    let summary = report.render();
    outputs.add("report.json", json_bytes(&report)?);
    outputs.add("report.txt", summary.clone());
    Ok(RunResult { summary, outputs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRow {
    pub stage: CovidStage,
    pub size: usize,
    pub detected: usize,
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyReport {
    pub cell_size: usize,
    pub k: usize,
    pub stages: Vec<StageRow>,
    /// COVID-19 samples without an onset offset.
    pub excluded: Vec<String>,
    pub anova: Option<AnovaResult>,
    pub notices: Vec<String>,
}

pub const NO_STAGED_NOTICE: &str = "no staged COVID samples";

impl EarlyReport {
    pub fn render(&self) -> String {
        let mut rows = vec![["stage", "n", "detected", "rate"].map(String::from).to_vec()];
        for s in &self.stages {
            rows.push(vec![
                s.stage.to_string(),
                s.size.to_string(),
                s.detected.to_string(),
                s.rate.map_or_else(|| "-".to_string(), |r| format!("{r:.4}")),
            ]);
        }
        let mut out = format!(
            "Early detection: cell size {}, {}-fold out-of-fold COVID-19 predictions\n\n",
            self.cell_size, self.k
        );
        out.push_str(&render_table(&rows));
        out.push_str(&format!("excluded (no offset): {}\n", self.excluded.len()));
        if let Some(a) = &self.anova {
            out.push('\n');
            out.push_str(&a.render());
        }
        for n in &self.notices {
            out.push_str(&format!("notice: {n}\n"));
        }
        out
    }
}

/// Out-of-fold COVID-19 detection grouped by onset stage, with a one-way
/// ANOVA over the per-sample detection indicator.
pub fn run_early_detection(spec: &ExperimentSpec) -> Result<RunResult> {
    let corpus = Corpus::open(&spec.dataset, spec.balance_per_class, spec.seed)?;
    let plan = stratified_kfold(&corpus.manifest, spec.k, spec.seed)?;
    let config = spec.hog.config(spec.selected_cell_size);
    let features = corpus.features(&[config])?.remove(0);
    let covid = ClassLabel::Covid19;
    let outcomes = cross_validate(&features, &plan, spec.reduction.dcv_fraction, &spec.svm, covid)?;

    let mut outputs = RunOutputs::default();
    outputs.add("folds.csv", fold_plan_csv(&plan)?);
    write_fold_predictions(&mut outputs, "predictions", &outcomes)?;

    let mut groups: BTreeMap<CovidStage, Vec<f64>> = CovidStage::ALL.iter().map(|&s| (s, Vec::new())).collect();
    let mut excluded = Vec::new();
    for o in &outcomes {
        for ((id, &truth), &pred) in o.sample_ids.iter().zip(&o.truth).zip(&o.predicted) {
            if truth != covid {
                continue;
            }
            let entry = corpus.manifest.get(id).expect("fold samples come from the manifest");
            match entry.stage() {
                Some(stage) => groups
                    .get_mut(&stage)
                    .expect("all stages")
                    .push(f64::from(u8::from(pred == covid))),
                None => excluded.push(id.clone()),
            }
        }
    }
    excluded.sort();
    let stages: Vec<StageRow> = groups
        .iter()
        .map(|(&stage, g)| StageRow {
            stage,
            size: g.len(),
            detected: g.iter().filter(|&&v| v > 0.0).count(),
            rate: (!g.is_empty()).then(|| g.iter().sum::<f64>() / g.len() as f64),
        })
        .collect();
    let mut notices = Vec::new();
    let staged: usize = stages.iter().map(|s| s.size).sum();
    let anova = if staged == 0 {
        notices.push(NO_STAGED_NOTICE.to_string());
        None
    } else if let Some(small) = stages.iter().find(|s| s.size < 2) {
        notices.push(format!(
            "ANOVA skipped: stage {} has {} sample(s), at least 2 are needed",
            small.stage, small.size
        ));
        None
    } else {
        let names: Vec<String> = groups.keys().map(|s| s.to_string()).collect();
        let input: Vec<(&str, &[f64])> = names
            .iter()
            .map(String::as_str)
            .zip(groups.values().map(Vec::as_slice))
            .collect();
        Some(oneway_anova(&input)?)
    };
    if !excluded.is_empty() {
        notices.push(format!("{} COVID-19 sample(s) without offset excluded", excluded.len()));
    }
    let report = EarlyReport {
        cell_size: config.cell_size,
        k: plan.k,
        stages,
        excluded,
        anova,
        notices,
    };
    let summary = report.render();
    outputs.add("report.json", json_bytes(&report)?);
    outputs.add("report.txt", summary.clone());
    Ok(RunResult { summary, outputs })
}
