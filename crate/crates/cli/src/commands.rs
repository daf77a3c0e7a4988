use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use hogscreen::classifier::{fit_multiclass, SvmConfig};
use hogscreen::dataset::{balance_subsample, ingest_image, store, Manifest, ManifestEntry, IMAGE_SIDE};
use hogscreen::descriptor::{hog_descriptor, FeatureTable, HogConfig};
use hogscreen::experiments::{self, fit_reduction, DatasetSource, ExperimentId, ExperimentSpec, ReductionParams};
use hogscreen::reduce::{top_components, LabeledMatrix, Method};

use crate::layers::{absolute, collect, resolve, Flags};
use crate::Common;

pub const SPEC_FILE: &str = "spec.json";
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const INGEST_LOG: &str = "ingest_log.csv";
pub const IMAGES_DIR: &str = "images";
pub const FEATURES_FILE: &str = "features.csv";
pub const REDUCTION_MODEL_FILE: &str = "reduction_model.json";
pub const SVM_MODEL_FILE: &str = "svm_model.json";
pub const COMPONENTS_FILE: &str = "components.csv";

/// Outcome of a subcommand that ran to completion without an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Complete,
    /// Some requested outputs could not be produced.
    Failed,
}

/// Leaves files whose content is already `bytes` untouched.
fn write_if_changed(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    if std::fs::read(path).is_ok_and(|old| old == bytes) {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn write_spec<T: Serialize>(out: &Path, spec: &T) -> anyhow::Result<()> {
    let json = serde_json::to_string_pretty(spec)? + "\n";
    write_if_changed(&out.join(SPEC_FILE), json.as_bytes())
}

fn csv_bytes(rows: impl IntoIterator<Item = Vec<String>>) -> anyhow::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row)?;
    }
    Ok(w.into_inner()?)
}

fn default_size() -> usize {
    IMAGE_SIDE
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSpec {
    pub manifest: PathBuf,
    pub out: PathBuf,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default)]
    pub balance_per_class: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

pub fn ingest(
    common: &Common,
    manifest: Option<PathBuf>,
    size: Option<usize>,
    balance_per_class: Option<usize>,
    seed: Option<u64>,
) -> anyhow::Result<Status> {
    let flags = Flags::default()
        .set("manifest", manifest.as_deref().map(absolute).transpose()?)
        .set("out", common.out.as_deref().map(absolute).transpose()?)
        .set("size", size)
        .set("balance_per_class", balance_per_class)
        .set("seed", seed);
    let spec: IngestSpec = resolve(collect(&[common.config.as_deref()], flags.into_map())?)?;
    if spec.size == 0 {
        bail!("size must be positive");
    }

    let mut manifest = Manifest::read_csv(&spec.manifest)?;
    if let Some(n) = spec.balance_per_class {
        let Some(seed) = spec.seed else {
            bail!("balancing draws a random subsample: pass --seed");
        };
        manifest = balance_subsample(&manifest, n, seed)?;
    }
    let out = &spec.out;
    std::fs::create_dir_all(out.join(IMAGES_DIR))?;

    let results: Vec<anyhow::Result<PathBuf>> = manifest
        .entries()
        .par_iter()
        .map(|entry| {
            let grid = ingest_image(&manifest.resolve_path(entry), (spec.size, spec.size))?;
            let rel = Path::new(IMAGES_DIR).join(store::file_name(&entry.sample_id));
            write_if_changed(&out.join(&rel), &store::encode_grid(&grid))?;
            Ok(rel)
        })
        .collect();

    let mut stored = Vec::new();
    let mut log = vec![["sample_id", "source", "status", "detail"].map(String::from).to_vec()];
    for (entry, result) in manifest.entries().iter().zip(results) {
        let source = manifest.resolve_path(entry).display().to_string();
        match result {
            Ok(rel) => {
                log.push(vec![
                    entry.sample_id.clone(),
                    source,
                    "ok".into(),
                    rel.display().to_string(),
                ]);
                stored.push(ManifestEntry {
                    image_path: rel,
                    ..entry.clone()
                });
            }
            Err(e) => log.push(vec![entry.sample_id.clone(), source, "failed".into(), format!("{e:#}")]),
        }
    }
    let failures = manifest.len() - stored.len();
    let mut buf = Vec::new();
    Manifest::new(stored)?.write_csv(&mut buf)?;
    write_if_changed(&out.join(MANIFEST_FILE), &buf)?;
    write_if_changed(&out.join(INGEST_LOG), &csv_bytes(log)?)?;
    write_spec(out, &spec)?;

    eprintln!(
        "ingested {} of {} images into {}",
        manifest.len() - failures,
        manifest.len(),
        out.display()
    );
    if manifest.is_empty() {
        log::warn!("the manifest lists no samples");
    } else if failures == manifest.len() {
        log::error!("every image failed; see {INGEST_LOG}");
        return Ok(Status::Failed);
    } else if failures > 0 {
        log::warn!("{failures} image(s) failed and were left out; see {INGEST_LOG}");
    }
    Ok(Status::Complete)
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractSpec {
    pub store: PathBuf,
    pub out: PathBuf,
    #[serde(default)]
    pub hog: HogConfig,
    /// Image side assumed for the header of an empty store.
    #[serde(default = "default_size")]
    pub size: usize,
}

pub fn extract(
    common: &Common,
    store_dir: Option<PathBuf>,
    cell: Option<usize>,
    bins: Option<usize>,
) -> anyhow::Result<Status> {
    let flags = Flags::default()
        .set("store", store_dir.as_deref().map(absolute).transpose()?)
        .set("out", common.out.as_deref().map(absolute).transpose()?)
        .set("hog.cell_size", cell)
        .set("hog.n_bins", bins);
    let spec: ExtractSpec = resolve(collect(&[common.config.as_deref()], flags.into_map())?)?;
    spec.hog.validate()?;

    let manifest = Manifest::read_csv(spec.store.join(MANIFEST_FILE))?;
    let features: Vec<anyhow::Result<_>> = manifest
        .entries()
        .par_iter()
        .map(|entry| {
            let path = manifest.resolve_path(entry);
            if !store::is_store_file(&path) {
                bail!("{} is not a normalized store image", path.display());
            }
            let grid = store::read_grid(&path)?;
            let fv = hog_descriptor(grid.view(), &spec.hog).with_context(|| format!("sample {}", entry.sample_id))?;
            Ok((grid.dim(), fv))
        })
        .collect();
    let features = features.into_iter().collect::<anyhow::Result<Vec<_>>>()?;

    let (rows, cols) = features.first().map_or((spec.size, spec.size), |(dim, _)| *dim);
    let mut table = FeatureTable::empty(spec.hog, rows, cols)?;
    for (entry, (dim, fv)) in manifest.entries().iter().zip(&features) {
        if *dim != (rows, cols) {
            bail!(
                "sample {} is {}x{}, the store is {rows}x{cols}",
                entry.sample_id,
                dim.0,
                dim.1
            );
        }
        table.push(&entry.sample_id, entry.class_label, entry.offset_days, fv)?;
    }
    std::fs::create_dir_all(&spec.out)?;
    table.save(&spec.out.join(FEATURES_FILE))?;
    write_spec(&spec.out, &spec)?;
    if table.is_empty() {
        log::warn!("the store holds no images; wrote a header-only feature file");
    }
    eprintln!(
        "extracted {} descriptors of length {} into {}",
        table.len(),
        table.meta.dim,
        spec.out.join(FEATURES_FILE).display()
    );
    Ok(Status::Complete)
}

pub fn experiment(
    common: &Common,
    name: &str,
    spec_file: Option<PathBuf>,
    seed: Option<u64>,
) -> anyhow::Result<Status> {
    let id = ExperimentId::from_cli_name(name)?;
    let flags = Flags::default()
        .set("experiment", Some(id))
        .set("seed", seed)
        .set("output_dir", common.out.as_deref().map(absolute).transpose()?);
    let merged = collect(&[spec_file.as_deref(), common.config.as_deref()], flags.into_map())?;
    if merged.get("seed").is_none_or(|s| s.is_null()) {
        bail!("a seed is required: pass --seed or set `seed` in the --spec file");
    }
    let mut spec: ExperimentSpec = resolve(merged)?;
    spec.output_dir = absolute(&spec.output_dir)?;
    if let DatasetSource::Manifest { path } = &mut spec.dataset {
        *path = absolute(path)?;
    }
    let result = experiments::run(&spec)?;
    println!("{}", result.summary.trim_end());
    eprintln!(
        "wrote {} files to {}",
        result.outputs.files.len(),
        spec.output_dir.display()
    );
    Ok(Status::Complete)
}

fn default_method() -> Method {
    Method::Dcv
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExportSpec {
    pub features: PathBuf,
    pub out: PathBuf,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub reduction: ReductionParams,
    #[serde(default)]
    pub svm: SvmConfig,
}

pub fn export_components(
    common: &Common,
    features: Option<PathBuf>,
    method: Option<String>,
    components: Option<usize>,
) -> anyhow::Result<Status> {
    let flags = Flags::default()
        .set("features", features.as_deref().map(absolute).transpose()?)
        .set("out", common.out.as_deref().map(absolute).transpose()?)
        .set("method", method)
        .set("reduction.export_components", components);
    let spec: ExportSpec = resolve(collect(&[common.config.as_deref()], flags.into_map())?)?;
    spec.svm.validate()?;

    let table = FeatureTable::load(&spec.features)?;
    let x = LabeledMatrix::new(table.sample_ids, table.labels, table.values)?;
    let model = fit_reduction(&x, spec.method, &spec.reduction)?;
    let embedded = x.with_values(model.fitted_embedding.clone())?;
    let cloud = top_components(&model, &embedded, None, spec.reduction.export_components)?;
    let svm = fit_multiclass(&embedded, &spec.svm)?;
    let predicted = svm.predict_rows(embedded.values())?;
    let correct = predicted.iter().zip(x.labels()).filter(|(p, t)| p == t).count();

    std::fs::create_dir_all(&spec.out)?;
    write_if_changed(
        &spec.out.join(REDUCTION_MODEL_FILE),
        (model.to_json()? + "\n").as_bytes(),
    )?;
    write_if_changed(&spec.out.join(SVM_MODEL_FILE), (svm.to_json()? + "\n").as_bytes())?;
    let mut buf = Vec::new();
    cloud.write_csv(&mut buf, |_| true)?;
    write_if_changed(&spec.out.join(COMPONENTS_FILE), &buf)?;
    write_spec(&spec.out, &spec)?;

    for w in &cloud.warnings {
        log::warn!("{w}");
    }
    if !svm.converged() {
        log::warn!("an SVM stopped at its iteration budget");
    }
    println!(
        "{}: {} -> {} components; SVM over {} classes fits {correct}/{} training samples",
        spec.method,
        model.input_dim,
        model.output_dim,
        svm.classes.len(),
        x.n_samples()
    );
    Ok(Status::Complete)
}
