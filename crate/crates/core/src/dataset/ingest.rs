use std::path::Path;

use image::DynamicImage;
use ndarray::Array2;

use super::{store, Grid};
use crate::error::{Error, Result};

const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Decode an image file into a `[0, 1]` grayscale grid of `target` size
/// `(rows, cols)`.
///
/// Color inputs are reduced to BT.601 luminance, values are divided by the
/// maximum of the input bit depth and the result is resampled bilinearly.
/// Files of the normalized store (`.npy`) are read back losslessly.
pub fn ingest_image(path: &Path, target: (usize, usize)) -> Result<Grid> {
    let fail = |reason: String| Error::Ingestion {
        path: path.to_path_buf(),
        reason,
    };
    if target.0 == 0 || target.1 == 0 {
        return Err(fail("target size must be non-zero".into()));
    }
    let grid = if store::is_store_file(path) {
        store::read_grid(path).map_err(|e| fail(e.to_string()))?
    } else {
        let img = image::ImageReader::open(path)
            .map_err(|e| fail(e.to_string()))?
            .with_guessed_format()
            .map_err(|e| fail(e.to_string()))?
            .decode()
            .map_err(|e| fail(e.to_string()))?;
        luminance(&img)
    };
    if grid.is_empty() {
        return Err(fail("image has a zero dimension".into()));
    }
    let out = resize_bilinear(&grid, target);
    Ok(out.mapv(|v| v.clamp(0.0, 1.0)))
}

fn luminance(img: &DynamicImage) -> Grid {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let from_channels = |channels: usize, max: f64, data: &dyn Fn(usize) -> f64| {
        Array2::from_shape_fn((h, w), |(r, c)| {
            let base = (r * w + c) * channels;
            if channels < 3 {
                data(base) / max
            } else {
                (0..3).map(|k| LUMA_WEIGHTS[k] * data(base + k)).sum::<f64>() / max
            }
        })
    };
    match img {
        DynamicImage::ImageLuma8(b) => from_channels(1, 255.0, &|i| b.as_raw()[i] as f64),
        DynamicImage::ImageLumaA8(b) => from_channels(2, 255.0, &|i| b.as_raw()[i] as f64),
        DynamicImage::ImageRgb8(b) => from_channels(3, 255.0, &|i| b.as_raw()[i] as f64),
        DynamicImage::ImageRgba8(b) => from_channels(4, 255.0, &|i| b.as_raw()[i] as f64),
        DynamicImage::ImageLuma16(b) => from_channels(1, 65535.0, &|i| b.as_raw()[i] as f64),
        DynamicImage::ImageLumaA16(b) => from_channels(2, 65535.0, &|i| b.as_raw()[i] as f64),
        DynamicImage::ImageRgb16(b) => from_channels(3, 65535.0, &|i| b.as_raw()[i] as f64),
        DynamicImage::ImageRgba16(b) => from_channels(4, 65535.0, &|i| b.as_raw()[i] as f64),
        other => {
            let rgb = other.to_rgb32f();
            from_channels(3, 1.0, &|i| rgb.as_raw()[i] as f64)
        }
    }
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
/// Resampling to the same size is the identity.
pub fn resize_bilinear(src: &Grid, (rows, cols): (usize, usize)) -> Grid {
    let (in_rows, in_cols) = src.dim();
    if (in_rows, in_cols) == (rows, cols) {
        return src.clone();
    }
    let taps = |n_out: usize, n_in: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, pos - lo as f64)
            })
            .collect()
    };
    let row_taps = taps(rows, in_rows);
    let col_taps = taps(cols, in_cols);
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let (r0, r1, wr) = row_taps[r];
        let (c0, c1, wc) = col_taps[c];
        let top = src[[r0, c0]] * (1.0 - wc) + src[[r0, c1]] * wc;
        let bottom = src[[r1, c0]] * (1.0 - wc) + src[[r1, c1]] * wc;
        top * (1.0 - wr) + bottom * wr
    })
}
