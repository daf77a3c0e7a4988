//! Browser bindings. Each exported function has a plain Rust twin
//! returning `Result<_, String>` so the logic is testable off-wasm; the
//! exports only convert errors.

use ndarray::{Array2, ArrayView1};
use wasm_bindgen::prelude::*;

use hogscreen::classifier::{fit_binary_svm, SvmConfig};
use hogscreen::dataset::synthetic::SyntheticSpec;
use hogscreen::dataset::ClassLabel;
use hogscreen::descriptor::{hog_descriptor, CellNormalization, HogConfig, OrientationRange};
use hogscreen::experiments::{fit_reduction, ReductionParams};
use hogscreen::kernel::KernelSpec;
use hogscreen::reduce::{top_components, LabeledMatrix, Method};

/// Components per point of [`reduced_cloud`].
pub const CLOUD_COMPONENTS: usize = 3;

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn class_at(index: usize) -> Result<ClassLabel, String> {
    ClassLabel::ALL
        .get(index)
        .copied()
        .ok_or_else(|| format!("class index {index} outside 0..{}", ClassLabel::ALL.len()))
}

fn corpus(per_class: usize, side: usize, seed: u32) -> SyntheticSpec {
    SyntheticSpec {
        per_class,
        side,
        seed: seed.into(),
        ..SyntheticSpec::default()
    }
}

/// Row-major `side × side` grating image of class `class_index`, values in
/// `[0, 1]`.
pub fn grating(class_index: usize, sample: usize, side: usize, seed: u32) -> Result<Vec<f64>, String> {
    let spec = corpus(sample + 1, side, seed);
    spec.validate().map_err(err)?;
    Ok(spec.image(class_at(class_index)?, sample).into_raw_vec_and_offset().0)
}

/// Unit-norm orientation histograms of every cell, cells in row-major
/// order, `n_bins` values each.
pub fn hog_histograms(
    pixels: &[f64],
    rows: usize,
    cols: usize,
    cell_size: usize,
    n_bins: usize,
    signed: bool,
) -> Result<Vec<f64>, String> {
    let image = Array2::from_shape_vec((rows, cols), pixels.to_vec()).map_err(err)?;
    let config = HogConfig {
        cell_size,
        n_bins,
        orientation_range: if signed {
            OrientationRange::Signed360
        } else {
            OrientationRange::Unsigned180
        },
        cell_normalization: CellNormalization::L2Unit,
    };
    Ok(hog_descriptor(image.view(), &config).map_err(err)?.values)
}

/// Leading components of a synthetic four-class corpus reduced by
/// `method` (`pca`, `kpca`, `lda` or `dcv`): one `(class index, c1, c2, c3)`
/// row per sample, missing components as zero.
pub fn reduced_cloud(
    method: &str,
    per_class: usize,
    side: usize,
    cell_size: usize,
    seed: u32,
) -> Result<Vec<f64>, String> {
    let method: Method = parse_method(method)?;
    let spec = corpus(per_class, side, seed);
    let manifest = spec.manifest().map_err(err)?;
    let config = HogConfig::default().with_cell_size(cell_size);
    let mut rows = Vec::new();
    for entry in manifest.entries() {
        let image = spec.image_for(entry).map_err(err)?;
        rows.extend(hog_descriptor(image.view(), &config).map_err(err)?.values);
    }
    let n = manifest.len();
    let values = Array2::from_shape_vec((n, rows.len() / n), rows).map_err(err)?;
    let ids = manifest.entries().iter().map(|e| e.sample_id.clone()).collect();
    let labels: Vec<ClassLabel> = manifest.entries().iter().map(|e| e.class_label).collect();
    let x = LabeledMatrix::new(ids, labels.clone(), values).map_err(err)?;
    let model = fit_reduction(&x, method, &ReductionParams::default()).map_err(err)?;
    let embedded = x.with_values(model.fitted_embedding.clone()).map_err(err)?;
    let cloud = top_components(&model, &embedded, None, CLOUD_COMPONENTS).map_err(err)?;
    let mut out = Vec::with_capacity(n * (CLOUD_COMPONENTS + 1));
    for (row, label) in cloud.rows.iter().zip(&labels) {
        out.push(label.index() as f64);
        out.extend((0..CLOUD_COMPONENTS).map(|k| row.coords.get(k).copied().unwrap_or(0.0)));
    }
    Ok(out)
}

fn parse_method(name: &str) -> Result<Method, String> {
    Method::ALL
        .into_iter()
        .find(|m| m.as_str() == name)
        .ok_or_else(|| format!("unknown method {name:?}"))
}

/// Decision values of a two-class SVM on a `resolution × resolution` grid
/// over the unit square (row `r` at `y = r / (resolution - 1)`). `points`
/// holds `(x, y)` pairs; label 0 is the positive side. `gamma <= 0`
/// selects the linear kernel.
pub fn svm_surface(points: &[f64], labels: &[u8], c: f64, gamma: f64, resolution: usize) -> Result<Vec<f64>, String> {
    if points.len() != 2 * labels.len() {
        return Err(format!("{} coordinates for {} labels", points.len(), labels.len()));
    }
    if resolution < 2 {
        return Err("resolution must be at least 2".into());
    }
    let classes = labels
        .iter()
        .map(|&l| match l {
            0 => Ok(ClassLabel::Covid19),
            1 => Ok(ClassLabel::Normal),
            other => Err(format!("label {other} is neither 0 nor 1")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let x = LabeledMatrix::from_rows(
        classes,
        Array2::from_shape_vec((labels.len(), 2), points.to_vec()).map_err(err)?,
    )
    .map_err(err)?;
    let config = SvmConfig {
        kernel: if gamma > 0.0 {
            KernelSpec::Rbf { gamma }
        } else {
            KernelSpec::Linear
        },
        c,
        ..SvmConfig::default()
    };
    let machine = fit_binary_svm(&x, &config).map_err(err)?;
    let step = 1.0 / (resolution - 1) as f64;
    let mut out = Vec::with_capacity(resolution * resolution);
    for r in 0..resolution {
        for col in 0..resolution {
            let p = [col as f64 * step, r as f64 * step];
            out.push(machine.decision_value(ArrayView1::from(&p)));
        }
    }
    Ok(out)
}

#[wasm_bindgen(js_name = grating)]
pub fn grating_js(class_index: usize, sample: usize, side: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    grating(class_index, sample, side, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hogHistograms)]
pub fn hog_histograms_js(
    pixels: &[f64],
    rows: usize,
    cols: usize,
    cell_size: usize,
    n_bins: usize,
    signed: bool,
) -> Result<Vec<f64>, JsError> {
    hog_histograms(pixels, rows, cols, cell_size, n_bins, signed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = reducedCloud)]
pub fn reduced_cloud_js(
    method: &str,
    per_class: usize,
    side: usize,
    cell_size: usize,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    reduced_cloud(method, per_class, side, cell_size, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = svmSurface)]
pub fn svm_surface_js(
    points: &[f64],
    labels: &[u8],
    c: f64,
    gamma: f64,
    resolution: usize,
) -> Result<Vec<f64>, JsError> {
    svm_surface(points, labels, c, gamma, resolution).map_err(|e| JsError::new(&e))
}
