//! Labeled radiograph corpora: manifests, class balancing, and the
//! deterministic hold-out and stratified k-fold partitions used by the
//! experiments.

#[cfg(feature = "io")]
mod ingest;
#[cfg(feature = "io")]
pub mod store;
pub mod synthetic;

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[cfg(feature = "io")]
pub use ingest::{ingest_image, resize_bilinear};

/// Side length of the normalized radiographs.
pub const IMAGE_SIDE: usize = 400;

/// A normalized grayscale image, row-major, values in `[0, 1]`.
pub type Grid = Array2<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "covid")]
    Covid19,
    #[serde(rename = "pneumonia")]
    PneumoniaNonCovid,
    #[serde(rename = "infiltration")]
    InfiltrationNonCovid,
    #[serde(rename = "normal")]
    Normal,
}

impl ClassLabel {
    /// All classes in their fixed order. This order breaks every tie in the
    /// crate (vote ties, class pair orientation, report rows).
    pub const ALL: [ClassLabel; 4] = [
        ClassLabel::Covid19,
        ClassLabel::PneumoniaNonCovid,
        ClassLabel::InfiltrationNonCovid,
        ClassLabel::Normal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Covid19 => "covid",
            ClassLabel::PneumoniaNonCovid => "pneumonia",
            ClassLabel::InfiltrationNonCovid => "infiltration",
            ClassLabel::Normal => "normal",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ClassLabel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Manifest(format!("unknown class label {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovidStage {
    Early,
    Mid,
    Late,
}

impl CovidStage {
    pub const ALL: [CovidStage; 3] = [CovidStage::Early, CovidStage::Mid, CovidStage::Late];

    pub fn as_str(self) -> &'static str {
        match self {
            CovidStage::Early => "early",
            CovidStage::Mid => "mid",
            CovidStage::Late => "late",
        }
    }
}

impl fmt::Display for CovidStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stage of a COVID-19 image from the days elapsed since symptom onset:
/// `<= 3` early, `(3, 10]` mid, `> 10` late.
pub fn stage_of(offset_days: u32) -> CovidStage {
    match offset_days {
        0..=3 => CovidStage::Early,
        4..=10 => CovidStage::Mid,
        _ => CovidStage::Late,
    }
}

/// One normalized radiograph with its metadata.
#[derive(Debug, Clone)]
pub struct ImageSample {
    pub sample_id: String,
    pub patient_id: String,
    pub class_label: ClassLabel,
    pub offset_days: Option<u32>,
    pub pixels: Grid,
}

impl ImageSample {
    pub fn new(
        sample_id: impl Into<String>,
        patient_id: impl Into<String>,
        class_label: ClassLabel,
        offset_days: Option<u32>,
        pixels: Grid,
    ) -> Result<Self> {
        if pixels.dim() != (IMAGE_SIDE, IMAGE_SIDE) {
            return Err(Error::InvalidInput(format!(
                "image must be {IMAGE_SIDE}x{IMAGE_SIDE}, got {:?}",
                pixels.dim()
            )));
        }
        if pixels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidInput("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            sample_id: sample_id.into(),
            patient_id: patient_id.into(),
            class_label,
            offset_days,
            pixels,
        })
    }

    pub fn stage(&self) -> Option<CovidStage> {
        match self.class_label {
            ClassLabel::Covid19 => self.offset_days.map(stage_of),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    pub patient_id: String,
    pub class_label: ClassLabel,
    pub offset_days: Option<u32>,
    pub image_path: PathBuf,
    pub source: String,
}

impl ManifestEntry {
    pub fn stage(&self) -> Option<CovidStage> {
        match self.class_label {
            ClassLabel::Covid19 => self.offset_days.map(stage_of),
            _ => None,
        }
    }
}

/// An ordered list of corpus entries with unique sample ids.
///
/// Relative image paths are resolved against `base_dir`, normally the
/// directory holding the manifest file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    entries: Vec<ManifestEntry>,
    base_dir: Option<PathBuf>,
}

impl Manifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if e.sample_id.is_empty() {
                return Err(Error::Manifest("empty sample_id".into()));
            }
            if !seen.insert(e.sample_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate sample_id {:?}", e.sample_id)));
            }
        }
        Ok(Self {
            entries,
            base_dir: None,
        })
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = Some(dir.into());
        self
    }

    pub fn base_dir(&self) -> Option<&Path> {
        self.base_dir.as_deref()
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, sample_id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.sample_id == sample_id)
    }

    pub fn resolve_path(&self, entry: &ManifestEntry) -> PathBuf {
        match &self.base_dir {
            Some(dir) if entry.image_path.is_relative() => dir.join(&entry.image_path),
            _ => entry.image_path.clone(),
        }
    }

    /// Classes present, in the fixed class order.
    pub fn classes(&self) -> Vec<ClassLabel> {
        let present: BTreeSet<_> = self.entries.iter().map(|e| e.class_label).collect();
        present.into_iter().collect()
    }

    pub fn class_counts(&self) -> BTreeMap<ClassLabel, usize> {
        let mut counts = BTreeMap::new();
        for e in &self.entries {
            *counts.entry(e.class_label).or_insert(0) += 1;
        }
        counts
    }

    /// Entries of the given classes, original order kept.
    pub fn restrict(&self, classes: &[ClassLabel]) -> Manifest {
        self.filter(|e| classes.contains(&e.class_label))
    }

    pub fn filter(&self, mut keep: impl FnMut(&ManifestEntry) -> bool) -> Manifest {
        Manifest {
            entries: self.entries.iter().filter(|e| keep(e)).cloned().collect(),
            base_dir: self.base_dir.clone(),
        }
    }

    /// Sample ids of one class sorted lexicographically, so that seeded
    /// selections do not depend on the manifest row order.
    fn sorted_ids(&self, class: ClassLabel) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .entries
            .iter()
            .filter(|e| e.class_label == class)
            .map(|e| e.sample_id.as_str())
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let manifest = Self::from_reader(file)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(manifest.with_base_dir(base))
    }

    pub fn from_reader(reader: impl io::Read) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        let expected = [
            "sample_id",
            "patient_id",
            "class_label",
            "offset_days",
            "image_path",
            "source",
        ];
        if headers.iter().ne(expected.iter().copied()) {
            return Err(Error::Manifest(format!(
                "header must be `{}`, got `{}`",
                expected.join(","),
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut entries = Vec::new();
        for (line, record) in rdr.records().enumerate() {
            let record = record?;
            let field = |i: usize| record.get(i).unwrap_or("");
            let class_label = field(2)
                .parse()
                .map_err(|e| Error::Manifest(format!("row {}: {e}", line + 1)))?;
            let offset_days = match field(3) {
                "" => None,
                s => Some(s.parse::<u32>().map_err(|_| {
                    Error::Manifest(format!(
                        "row {}: offset_days {s:?} is not a non-negative integer",
                        line + 1
                    ))
                })?),
            };
            entries.push(ManifestEntry {
                sample_id: field(0).to_string(),
                patient_id: field(1).to_string(),
                class_label,
                offset_days,
                image_path: PathBuf::from(field(4)),
                source: field(5).to_string(),
            });
        }
        Self::new(entries)
    }

    pub fn write_csv(&self, writer: impl io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record([
            "sample_id",
            "patient_id",
            "class_label",
            "offset_days",
            "image_path",
            "source",
        ])?;
        for e in &self.entries {
            let offset = e.offset_days.map(|o| o.to_string()).unwrap_or_default();
            wtr.write_record([
                e.sample_id.as_str(),
                e.patient_id.as_str(),
                e.class_label.as_str(),
                offset.as_str(),
                &e.image_path.to_string_lossy(),
                e.source.as_str(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Randomly sub-sample every class present down to `per_class` entries.
///
/// The result is ordered by class, then by sample id. Classes already at
/// `per_class` keep all their entries.
pub fn balance_subsample(manifest: &Manifest, per_class: usize, seed: u64) -> Result<Manifest> {
    if per_class == 0 {
        return Err(Error::InvalidInput("per_class must be positive".into()));
    }
    let counts = manifest.class_counts();
    if let Some((&class, &available)) = counts.iter().find(|(_, &n)| n < per_class) {
        return Err(Error::InsufficientSamples {
            class,
            available,
            required: per_class,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = HashSet::new();
    for class in manifest.classes() {
        let ids = manifest.sorted_ids(class);
        if ids.len() == per_class {
            keep.extend(ids);
            continue;
        }
        keep.extend(
            rand::seq::index::sample(&mut rng, ids.len(), per_class)
                .into_iter()
                .map(|i| ids[i]),
        );
    }
    let mut entries: Vec<ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| keep.contains(e.sample_id.as_str()))
        .cloned()
        .collect();
    entries.sort_by(|a, b| (a.class_label, &a.sample_id).cmp(&(b.class_label, &b.sample_id)));
    Ok(Manifest {
        entries,
        base_dir: manifest.base_dir.clone(),
    })
}

/// Assignment of every sample to one of `k` test folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldPlan {
    pub fn fold_of(&self, sample_id: &str) -> Option<usize> {
        self.assignment.get(sample_id).copied()
    }

    /// Row indices of `manifest` as `(train, test)` for one fold.
    pub fn split_indices(&self, manifest: &Manifest, fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, e) in manifest.entries().iter().enumerate() {
            match self.fold_of(&e.sample_id) {
                Some(f) if f == fold => test.push(i),
                Some(_) => train.push(i),
                None => {
                    return Err(Error::Pairing(format!(
                        "sample {:?} has no fold assignment",
                        e.sample_id
                    )))
                }
            }
        }
        Ok((train, test))
    }

    pub fn write_csv(&self, writer: impl io::Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["sample_id", "fold"])?;
        for (id, fold) in &self.assignment {
            wtr.write_record([id.as_str(), &fold.to_string()])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(reader: impl io::Read, seed: u64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut assignment = BTreeMap::new();
        for row in rdr.deserialize() {
            let (id, fold): (String, usize) = row?;
            assignment.insert(id, fold);
        }
        let k = assignment.values().max().map_or(0, |m| m + 1);
        Ok(Self { k, seed, assignment })
    }
}

/// Stratified k-fold partition: within each class the shuffled samples are
/// dealt round-robin, continuing the deal across classes so that total fold
/// sizes also stay within one of each other.
pub fn stratified_kfold(manifest: &Manifest, k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::InvalidInput("k must be positive".into()));
    }
    for (&class, &available) in &manifest.class_counts() {
        if available < k {
            return Err(Error::Stratification { class, available, k });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = BTreeMap::new();
    let mut start = 0;
    for class in manifest.classes() {
        let mut ids = manifest.sorted_ids(class);
        ids.shuffle(&mut rng);
        for (i, id) in ids.iter().enumerate() {
            assignment.insert(id.to_string(), (start + i) % k);
        }
        start = (start + ids.len()) % k;
    }
    Ok(FoldPlan { k, seed, assignment })
}

/// Per-class train size: `train_fraction * n` rounded half up.
pub fn holdout_train_size(train_fraction: f64, class_size: usize) -> usize {
    (train_fraction * class_size as f64 + 0.5).floor() as usize
}

/// Stratified random split into `(train, test)`. Both sides keep the
/// original row order.
pub fn holdout_split(manifest: &Manifest, train_fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_ids = HashSet::new();
    for class in manifest.classes() {
        let mut ids = manifest.sorted_ids(class);
        let n_train = holdout_train_size(train_fraction, ids.len());
        if n_train == 0 || n_train == ids.len() {
            return Err(Error::Split(format!(
                "class {class} with {} samples leaves an empty side at fraction {train_fraction}",
                ids.len()
            )));
        }
        ids.shuffle(&mut rng);
        train_ids.extend(ids.into_iter().take(n_train));
    }
    let train = manifest.filter(|e| train_ids.contains(e.sample_id.as_str()));
    let test = manifest.filter(|e| !train_ids.contains(e.sample_id.as_str()));
    Ok((train, test))
}
