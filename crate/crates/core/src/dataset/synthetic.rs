//! Generated corpora of oriented sinusoidal gratings with additive Gaussian
//! noise. Each class has its own dominant orientation, so the classes are
//! separable by gradient-orientation statistics while every image differs
//! in phase, period, exact angle and noise.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ClassLabel, Grid, Manifest, ManifestEntry, IMAGE_SIDE};
use crate::error::{Error, Result};

pub const SOURCE_TAG: &str = "synthetic";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: Vec<ClassLabel>,
    pub per_class: usize,
    pub side: usize,
    /// Standard deviation of the additive noise, in intensity units.
    pub noise_sd: f64,
    /// Uniform jitter of the grating angle, in degrees.
    pub angle_jitter_deg: f64,
    pub period_range: (f64, f64),
    /// Classes rendered as constant black images.
    pub blank_classes: Vec<ClassLabel>,
    /// Largest symptom-onset offset given to COVID-19 samples, or `None`
    /// to leave them unstaged.
    pub max_offset_days: Option<u32>,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: ClassLabel::ALL.to_vec(),
            per_class: 80,
            side: IMAGE_SIDE,
            noise_sd: 0.1,
            angle_jitter_deg: 5.0,
            period_range: (16.0, 32.0),
            blank_classes: Vec::new(),
            max_offset_days: Some(20),
            seed: 0,
        }
    }
}

/// Dominant grating angle of a class, in degrees.
pub fn class_angle(class: ClassLabel) -> f64 {
    45.0 * class.index() as f64
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() || self.per_class == 0 || self.side == 0 {
            return Err(Error::Config("synthetic corpus must be non-empty".into()));
        }
        let (lo, hi) = self.period_range;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config(format!("invalid period range ({lo}, {hi})")));
        }
        if !(self.noise_sd >= 0.0 && self.angle_jitter_deg >= 0.0) {
            return Err(Error::Config("noise and jitter must be non-negative".into()));
        }
        Ok(())
    }

    pub fn sample_id(class: ClassLabel, i: usize) -> String {
        format!("syn-{}-{i:04}", class.as_str())
    }

    fn rng_for(&self, class: ClassLabel, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((class.index() as u64) << 32) | i as u64);
        rng
    }

    /// Manifest of the corpus; image paths are relative `<id>.npy` names.
    pub fn manifest(&self) -> Result<Manifest> {
        self.validate()?;
        let mut entries = Vec::new();
        for &class in &self.classes {
            for i in 0..self.per_class {
                let offset_days = match (class, self.max_offset_days) {
                    (ClassLabel::Covid19, Some(max)) => Some(self.rng_for(class, i).random_range(0..=max)),
                    _ => None,
                };
                let sample_id = Self::sample_id(class, i);
                entries.push(ManifestEntry {
                    image_path: format!("{sample_id}.npy").into(),
                    patient_id: format!("pat-{}-{i:04}", class.as_str()),
                    sample_id,
                    class_label: class,
                    offset_days,
                    source: SOURCE_TAG.to_string(),
                });
            }
        }
        Manifest::new(entries)
    }

    /// Image of the `i`-th sample of `class`; independent of generation order.
    pub fn image(&self, class: ClassLabel, i: usize) -> Grid {
        let n = self.side;
        if self.blank_classes.contains(&class) {
            return Grid::zeros((n, n));
        }
        let mut rng = self.rng_for(class, i);
        // the first draw is reserved for the offset
        let _ = rng.random::<u32>();
        let jitter = if self.angle_jitter_deg > 0.0 {
            rng.random_range(-self.angle_jitter_deg..=self.angle_jitter_deg)
        } else {
            0.0
        };
        let angle = (class_angle(class) + jitter).to_radians();
        let (lo, hi) = self.period_range;
        let period = if hi > lo { rng.random_range(lo..hi) } else { lo };
        let phase = rng.random_range(0.0..2.0 * PI);
        let noise = Normal::new(0.0, self.noise_sd).expect("validated noise");
        let (s, c) = angle.sin_cos();
        Grid::from_shape_fn((n, n), |(r, col)| {
            let t = (col as f64 * c + r as f64 * s) * 2.0 * PI / period + phase;
            let v = 0.5 + 0.35 * t.sin() + noise.sample(&mut rng);
            v.clamp(0.0, 1.0)
        })
    }

    /// Image for a manifest entry produced by [`SyntheticSpec::manifest`].
    pub fn image_for(&self, entry: &ManifestEntry) -> Result<Grid> {
        let index = entry
            .sample_id
            .rsplit('-')
            .next()
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&i| i < self.per_class && self.classes.contains(&entry.class_label))
            .ok_or_else(|| Error::Manifest(format!("{} is not a sample of this synthetic corpus", entry.sample_id)))?;
        Ok(self.image(entry.class_label, index))
    }
}
