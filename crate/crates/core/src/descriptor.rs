//! Histogram of Oriented Gradients without block normalization: the
//! descriptor is the row-major concatenation of per-cell orientation
//! histograms, so its length is `(rows * cols) / cell_size^2 * n_bins`.

use std::f64::consts::PI;
use std::fmt;
use std::io;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataset::ClassLabel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrientationRange {
    /// Orientations folded into `[0, 180)` degrees.
    Unsigned180,
    /// Orientations in `[0, 360)` degrees.
    Signed360,
}

impl OrientationRange {
    pub fn span(self) -> f64 {
        match self {
            OrientationRange::Unsigned180 => PI,
            OrientationRange::Signed360 => 2.0 * PI,
        }
    }

    /// Fold an `atan2` angle into the range.
    pub fn fold(self, angle: f64) -> f64 {
        let span = self.span();
        let mut a = angle.rem_euclid(span);
        if a >= span {
            a = 0.0;
        }
        a
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellNormalization {
    None,
    /// Each cell histogram scaled to unit L2 norm; empty cells stay zero.
    L2Unit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HogConfig {
    pub cell_size: usize,
    pub n_bins: usize,
    pub orientation_range: OrientationRange,
    pub cell_normalization: CellNormalization,
}

impl Default for HogConfig {
    fn default() -> Self {
        Self {
            cell_size: 16,
            n_bins: 9,
            orientation_range: OrientationRange::Unsigned180,
            cell_normalization: CellNormalization::L2Unit,
        }
    }
}

impl HogConfig {
    pub fn with_cell_size(self, cell_size: usize) -> Self {
        Self { cell_size, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cell_size == 0 {
            return Err(Error::Config("cell_size must be positive".into()));
        }
        if self.n_bins < 2 {
            return Err(Error::Config(format!("n_bins must be >= 2, got {}", self.n_bins)));
        }
        Ok(())
    }

    /// Identifier binding feature vectors to the configuration that
    /// produced them.
    pub fn digest(&self) -> String {
        let range = match self.orientation_range {
            OrientationRange::Unsigned180 => "u180",
            OrientationRange::Signed360 => "s360",
        };
        let norm = match self.cell_normalization {
            CellNormalization::None => "none",
            CellNormalization::L2Unit => "l2",
        };
        format!("hog-c{}-b{}-{range}-{norm}", self.cell_size, self.n_bins)
    }
}

impl fmt::Display for HogConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.digest())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub config_digest: String,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn feature_dim(config: &HogConfig, rows: usize, cols: usize) -> Result<usize> {
    config.validate()?;
    let cell = config.cell_size;
    if rows == 0 || cols == 0 || !rows.is_multiple_of(cell) || !cols.is_multiple_of(cell) {
        return Err(Error::Config(format!(
            "image {rows}x{cols} is not a multiple of cell size {cell}"
        )));
    }
    Ok((rows * cols) / (cell * cell) * config.n_bins)
}

/// Per-pixel gradient magnitude and folded orientation (radians).
#[derive(Debug, Clone)]
pub struct Gradients {
    pub magnitude: Array2<f64>,
    pub orientation: Array2<f64>,
}

fn derivative(len: usize, at: impl Fn(usize) -> f64, i: usize) -> f64 {
    if len < 2 {
        0.0
    } else if i == 0 {
        at(1) - at(0)
    } else if i == len - 1 {
        at(len - 1) - at(len - 2)
    } else {
        (at(i + 1) - at(i - 1)) / 2.0
    }
}

/// Central differences in the interior, one-sided at the borders.
/// `gx` runs along columns and `gy` along rows.
pub fn compute_gradients(image: ArrayView2<'_, f64>, range: OrientationRange) -> Gradients {
    let (rows, cols) = image.dim();
    let mut magnitude = Array2::zeros((rows, cols));
    let mut orientation = Array2::zeros((rows, cols));
    for r in 0..rows {
        for c in 0..cols {
            let gx = derivative(cols, |j| image[[r, j]], c);
            let gy = derivative(rows, |i| image[[i, c]], r);
            magnitude[[r, c]] = gx.hypot(gy);
            orientation[[r, c]] = range.fold(gy.atan2(gx));
        }
    }
    Gradients { magnitude, orientation }
}

/// Cell histograms from precomputed gradients. Each pixel votes its
/// magnitude into the two bins whose centers bracket its orientation,
/// linearly weighted and wrapping around the range.
pub fn cell_histograms(gradients: &Gradients, config: &HogConfig) -> Result<Vec<f64>> {
    let (rows, cols) = gradients.magnitude.dim();
    let dim = feature_dim(config, rows, cols)?;
    let n_bins = config.n_bins;
    let cell = config.cell_size;
    let cells_per_row = cols / cell;
    let bin_width = config.orientation_range.span() / n_bins as f64;

    let mut hist = vec![0.0; dim];
    for r in 0..rows {
        let cell_row = r / cell;
        for c in 0..cols {
            let m = gradients.magnitude[[r, c]];
            if m == 0.0 {
                continue;
            }
            let pos = gradients.orientation[[r, c]] / bin_width - 0.5;
            let lo = pos.floor();
            let frac = pos - lo;
            let lo = (lo as i64).rem_euclid(n_bins as i64) as usize;
            let hi = (lo + 1) % n_bins;
            let base = (cell_row * cells_per_row + c / cell) * n_bins;
            hist[base + lo] += m * (1.0 - frac);
            hist[base + hi] += m * frac;
        }
    }
    if config.cell_normalization == CellNormalization::L2Unit {
        for h in hist.chunks_exact_mut(n_bins) {
            let norm = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                h.iter_mut().for_each(|v| *v /= norm);
            }
        }
    }
    Ok(hist)
}

pub fn hog_descriptor(image: ArrayView2<'_, f64>, config: &HogConfig) -> Result<FeatureVector> {
    let (rows, cols) = image.dim();
    feature_dim(config, rows, cols)?;
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("image contains non-finite values".into()));
    }
    let gradients = compute_gradients(image, config.orientation_range);
    Ok(FeatureVector {
        values: cell_histograms(&gradients, config)?,
        config_digest: config.digest(),
    })
}

/// Descriptors of several configurations sharing one orientation range,
/// computing the gradients once.
pub fn hog_descriptors(image: ArrayView2<'_, f64>, configs: &[HogConfig]) -> Result<Vec<FeatureVector>> {
    let mut by_range: Vec<(OrientationRange, Gradients)> = Vec::new();
    configs
        .iter()
        .map(|config| {
            let (rows, cols) = image.dim();
            feature_dim(config, rows, cols)?;
            let gradients = match by_range.iter().position(|(r, _)| *r == config.orientation_range) {
                Some(i) => &by_range[i].1,
                None => {
                    by_range.push((
                        config.orientation_range,
                        compute_gradients(image, config.orientation_range),
                    ));
                    &by_range.last().expect("just pushed").1
                }
            };
            Ok(FeatureVector {
                values: cell_histograms(gradients, config)?,
                config_digest: config.digest(),
            })
        })
        .collect()
}

/// Centered window of `image` whose sides are the largest multiples of
/// `cell_size`; border rows and columns that do not fill a whole cell are
/// dropped evenly from both sides.
pub fn crop_to_cells(image: ArrayView2<'_, f64>, cell_size: usize) -> ArrayView2<'_, f64> {
    let (rows, cols) = image.dim();
    let (r, c) = (rows / cell_size * cell_size, cols / cell_size * cell_size);
    let (r0, c0) = ((rows - r) / 2, (cols - c) / 2);
    image.slice_move(ndarray::s![r0..r0 + r, c0..c0 + c])
}

/// Sidecar metadata of a feature-matrix file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub config: HogConfig,
    pub config_digest: String,
    pub image_rows: usize,
    pub image_cols: usize,
    pub dim: usize,
}

/// A feature matrix with one descriptor row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub meta: FeatureMeta,
    pub sample_ids: Vec<String>,
    pub labels: Vec<ClassLabel>,
    pub offsets: Vec<Option<u32>>,
    pub values: Array2<f64>,
}

impl FeatureTable {
    pub fn empty(config: HogConfig, image_rows: usize, image_cols: usize) -> Result<Self> {
        let dim = feature_dim(&config, image_rows, image_cols)?;
        Ok(Self {
            meta: FeatureMeta {
                config,
                config_digest: config.digest(),
                image_rows,
                image_cols,
                dim,
            },
            sample_ids: Vec::new(),
            labels: Vec::new(),
            offsets: Vec::new(),
            values: Array2::zeros((0, dim)),
        })
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn push(&mut self, sample_id: &str, label: ClassLabel, offset: Option<u32>, fv: &FeatureVector) -> Result<()> {
        if fv.config_digest != self.meta.config_digest {
            return Err(Error::Config(format!(
                "feature vector built with {} does not match table {}",
                fv.config_digest, self.meta.config_digest
            )));
        }
        if fv.len() != self.meta.dim {
            return Err(Error::Shape {
                expected: self.meta.dim,
                actual: fv.len(),
            });
        }
        self.values
            .push_row(ndarray::ArrayView1::from(&fv.values))
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        self.sample_ids.push(sample_id.to_string());
        self.labels.push(label);
        self.offsets.push(offset);
        Ok(())
    }

    pub fn write_csv(&self, writer: impl io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["sample_id".to_string(), "label".into(), "offset".into()];
        header.extend((0..self.meta.dim).map(|i| format!("f{i}")));
        wtr.write_record(&header)?;
        let mut record = Vec::with_capacity(self.meta.dim + 3);
        for (i, id) in self.sample_ids.iter().enumerate() {
            record.clear();
            record.push(id.clone());
            record.push(self.labels[i].to_string());
            record.push(self.offsets[i].map(|o| o.to_string()).unwrap_or_default());
            record.extend(self.values.row(i).iter().map(|v| v.to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(reader: impl io::Read, meta: FeatureMeta) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let width = rdr.headers()?.len();
        if width != meta.dim + 3 {
            return Err(Error::Shape {
                expected: meta.dim + 3,
                actual: width,
            });
        }
        let mut table = Self::empty(meta.config, meta.image_rows, meta.image_cols)?;
        if table.meta != meta {
            return Err(Error::Config("feature sidecar does not match its configuration".into()));
        }
        let mut flat = Vec::new();
        for record in rdr.records() {
            let record = record?;
            table.sample_ids.push(record[0].to_string());
            table.labels.push(record[1].parse()?);
            table.offsets.push(match &record[2] {
                "" => None,
                s => Some(
                    s.parse()
                        .map_err(|_| Error::InvalidInput(format!("bad offset {s:?}")))?,
                ),
            });
            for v in record.iter().skip(3) {
                flat.push(
                    v.parse::<f64>()
                        .map_err(|_| Error::InvalidInput(format!("bad feature {v:?}")))?,
                );
            }
        }
        table.values = Array2::from_shape_vec((table.sample_ids.len(), meta.dim), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(table)
    }

    /// Writes `path` and its sidecar `path.meta.json`.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)?;
        let meta = serde_json::to_string_pretty(&self.meta)?;
        std::fs::write(meta_path(path), meta + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let meta: FeatureMeta = serde_json::from_slice(&std::fs::read(meta_path(path))?)?;
        Self::read_csv(std::fs::File::open(path)?, meta)
    }
}

pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    path.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crop_keeps_whole_cells_centered() {
        let image = Array2::from_shape_fn((400, 400), |(r, c)| (r * 1000 + c) as f64);
        let cropped = crop_to_cells(image.view(), 32);
        assert_eq!(cropped.dim(), (384, 384));
        assert_eq!(cropped[[0, 0]], (8 * 1000 + 8) as f64);
        assert_eq!(crop_to_cells(image.view(), 16).dim(), (400, 400));
    }

    fn cfg(cell: usize, bins: usize) -> HogConfig {
        HogConfig {
            cell_size: cell,
            n_bins: bins,
            ..HogConfig::default()
        }
    }

    #[test]
    fn dimension_formula() {
        assert_eq!(feature_dim(&cfg(16, 9), 400, 400).unwrap(), 5625);
        assert_eq!(feature_dim(&cfg(400, 9), 400, 400).unwrap(), 9);
        assert_eq!(feature_dim(&cfg(4, 9), 400, 400).unwrap(), 90000);
        assert!(matches!(feature_dim(&cfg(3, 9), 400, 400), Err(Error::Config(_))));
        assert!(matches!(feature_dim(&cfg(4, 1), 400, 400), Err(Error::Config(_))));
    }

    #[test]
    fn constant_image_has_zero_descriptor() {
        let img = Array2::from_elem((32, 32), 0.37);
        let g = compute_gradients(img.view(), OrientationRange::Unsigned180);
        assert!(g.magnitude.iter().all(|&m| m == 0.0));
        let fv = hog_descriptor(img.view(), &cfg(8, 9)).unwrap();
        assert_eq!(fv.len(), 16 * 9);
        assert!(fv.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn horizontal_ramp_gradients() {
        let img = Array2::from_shape_fn((5, 5), |(_, c)| c as f64);
        let g = compute_gradients(img.view(), OrientationRange::Unsigned180);
        for r in 0..5 {
            for c in 0..5 {
                assert_eq!(g.magnitude[[r, c]], 1.0);
                assert_eq!(g.orientation[[r, c]], 0.0);
            }
        }
        let t = img.t().to_owned();
        let gt = compute_gradients(t.view(), OrientationRange::Unsigned180);
        assert_eq!(gt.magnitude, g.magnitude.t());
        assert!(gt.orientation.iter().all(|&o| (o - PI / 2.0).abs() < 1e-15));
    }

    #[test]
    fn vertical_step_edge_votes_around_zero() {
        // 8x8, cell 4, step between columns 3 and 4. Brute force: pixels in
        // columns 3 and 4 carry gx = 0.5, gy = 0, orientation 0; with bin
        // centers at 10, 30, ..., 170 degrees the vote splits evenly between
        // bins 0 and 8.
        let img = Array2::from_shape_fn((8, 8), |(_, c)| if c >= 4 { 1.0 } else { 0.0 });
        let config = HogConfig {
            cell_normalization: CellNormalization::None,
            ..cfg(4, 9)
        };
        let fv = hog_descriptor(img.view(), &config).unwrap();
        let mut expected = vec![0.0; 4 * 9];
        for cell in 0..4 {
            expected[cell * 9] = 4.0 * 0.5 * 0.5;
            expected[cell * 9 + 8] = 4.0 * 0.5 * 0.5;
        }
        assert_eq!(fv.values, expected);
    }

    #[test]
    fn signed_range_distinguishes_direction() {
        let up = Array2::from_shape_fn((4, 4), |(r, _)| r as f64);
        let down = up.mapv(|v| -v);
        let signed = HogConfig {
            orientation_range: OrientationRange::Signed360,
            cell_normalization: CellNormalization::None,
            ..cfg(4, 4)
        };
        // bins of 90 degrees centered at 45, 135, 225, 315
        let a = hog_descriptor(up.view(), &signed).unwrap().values;
        let b = hog_descriptor(down.view(), &signed).unwrap().values;
        assert_eq!(a, vec![8.0, 8.0, 0.0, 0.0]);
        assert_eq!(b, vec![0.0, 0.0, 8.0, 8.0]);
        let unsigned = HogConfig {
            orientation_range: OrientationRange::Unsigned180,
            ..signed
        };
        assert_eq!(
            hog_descriptor(up.view(), &unsigned).unwrap().values,
            hog_descriptor(down.view(), &unsigned).unwrap().values
        );
    }

    #[test]
    fn fold_stays_in_range() {
        for r in [OrientationRange::Unsigned180, OrientationRange::Signed360] {
            for a in [-PI, -1e-300, -0.0, 0.0, 1.0, PI, 3.0 * PI] {
                let f = r.fold(a);
                assert!(f >= 0.0 && f < r.span(), "{r:?} {a} -> {f}");
            }
        }
    }

    #[test]
    fn l2_cells_have_unit_norm() {
        let img = Array2::from_shape_fn((16, 16), |(r, c)| ((r * 31 + c * 17) % 11) as f64 / 10.0);
        let fv = hog_descriptor(img.view(), &cfg(8, 9)).unwrap();
        for h in fv.values.chunks(9) {
            let n = h.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(n == 0.0 || (n - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shared_gradients_match_single_descriptors() {
        let img = Array2::from_shape_fn((32, 32), |(r, c)| ((r * c) % 7) as f64 / 7.0);
        let configs = [cfg(4, 9), cfg(8, 6), cfg(16, 12), cfg(32, 9)];
        let many = hog_descriptors(img.view(), &configs).unwrap();
        for (c, fv) in configs.iter().zip(&many) {
            assert_eq!(fv, &hog_descriptor(img.view(), c).unwrap());
        }
    }

    #[test]
    fn mismatched_table_row_is_rejected() {
        let mut t = FeatureTable::empty(cfg(8, 9), 16, 16).unwrap();
        let fv = hog_descriptor(Array2::zeros((16, 16)).view(), &cfg(4, 9)).unwrap();
        assert!(matches!(
            t.push("a", ClassLabel::Normal, None, &fv),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn feature_csv_round_trip() {
        let config = cfg(8, 9);
        let mut t = FeatureTable::empty(config, 16, 16).unwrap();
        let img = Array2::from_shape_fn((16, 16), |(r, c)| ((r + 2 * c) % 5) as f64 / 5.0);
        let fv = hog_descriptor(img.view(), &config).unwrap();
        t.push("a", ClassLabel::Covid19, Some(4), &fv).unwrap();
        t.push("b", ClassLabel::Normal, None, &fv).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,label,offset,f0,f1,"));
        assert!(text.lines().next().unwrap().ends_with(",f35"));
        let back = FeatureTable::read_csv(buf.as_slice(), t.meta.clone()).unwrap();
        assert_eq!(back, t);
    }
}
