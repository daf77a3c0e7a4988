//! Lossless on-disk form of normalized images: NumPy `.npy` (format 1.0),
//! little-endian `f64`, C order, two dimensions.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::Grid;
use crate::error::{Error, Result};

const MAGIC: &[u8] = b"\x93NUMPY";

pub const EXTENSION: &str = "npy";

pub fn is_store_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == EXTENSION)
}

/// File name of a sample inside the store; characters outside
/// `[A-Za-z0-9._-]` are replaced by `_`.
pub fn file_name(sample_id: &str) -> String {
    let safe: String = sample_id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || "._-".contains(c) {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{safe}.{EXTENSION}")
}

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let (rows, cols) = grid.dim();
    let mut header = format!("{{'descr': '<f8', 'fortran_order': False, 'shape': ({rows}, {cols}), }}");
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64
    let unpadded = MAGIC.len() + 4 + header.len() + 1;
    header.extend(std::iter::repeat_n(' ', (64 - unpadded % 64) % 64));
    header.push('\n');

    let mut out = Vec::with_capacity(10 + header.len() + rows * cols * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in grid.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<Grid> {
    let bad = |msg: &str| Error::InvalidInput(format!("npy: {msg}"));
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(bad("missing magic"));
    }
    let (header_len, header_start) = match bytes[6] {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 if bytes.len() >= 12 => (
            u32::from_le_bytes([bytes[8], bytes[9], bytes[10], bytes[11]]) as usize,
            12,
        ),
        _ => return Err(bad("unsupported version")),
    };
    let data_start = header_start + header_len;
    let header = bytes
        .get(header_start..data_start)
        .and_then(|h| std::str::from_utf8(h).ok())
        .ok_or_else(|| bad("truncated header"))?;
    if !header.contains("'descr': '<f8'") || !header.contains("'fortran_order': False") {
        return Err(bad("only little-endian f64 in C order is supported"));
    }
    let shape = header
        .split("'shape': (")
        .nth(1)
        .and_then(|s| s.split(')').next())
        .ok_or_else(|| bad("missing shape"))?;
    let dims: Vec<usize> = shape
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad("bad shape")))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(bad("expected two dimensions"));
    };
    let data = &bytes[data_start..];
    if data.len() != rows * cols * 8 {
        return Err(bad("data length does not match shape"));
    }
    let values = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Array2::from_shape_vec((rows, cols), values).map_err(|e| bad(&e.to_string()))
}

pub fn write_grid(path: &Path, grid: &Grid) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_grid(grid))?;
    Ok(())
}

pub fn read_grid(path: &Path) -> Result<Grid> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_grid(&bytes)
}
