//! Artifact writers: binary rasters, 16-bit PGM and colormapped PNG
//! previews, CSV tables and JSON lines.
//!
//! Raster layout (little endian): magic `PHRS`, `u32` version (1), `u64`
//! rows, `u64` cols, `f64` pitch in meters, then `rows·cols` `f64` values
//! in row-major order.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::Serialize;

use crate::error::{HarnessError, Result};

const MAGIC: &[u8; 4] = b"PHRS";
const VERSION: u32 = 1;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

pub fn write_raster(path: &Path, values: &Array2<f64>, pitch: f64) -> Result<()> {
    let (rows, cols) = values.dim();
    let mut bytes = Vec::with_capacity(32 + rows * cols * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(rows as u64).to_le_bytes());
    bytes.extend_from_slice(&(cols as u64).to_le_bytes());
    bytes.extend_from_slice(&pitch.to_le_bytes());
    for v in values.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut w = create(path)?;
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}

/// Reads a raster written by [`write_raster`]: `(values, pitch)`.
pub fn read_raster(path: &Path) -> Result<(Array2<f64>, f64)> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| HarnessError::io(path, e))?;
    let bad = |what: &str| {
        HarnessError::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("malformed raster: {what}"),
            ),
        )
    };
    if bytes.len() < 32 || &bytes[..4] != MAGIC {
        return Err(bad("missing header"));
    }
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().expect("8 bytes"));
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(bad("unsupported version"));
    }
    let (rows, cols) = (u64_at(8) as usize, u64_at(16) as usize);
    let pitch = f64::from_bits(u64_at(24));
    let count = rows.checked_mul(cols).ok_or_else(|| bad("size overflow"))?;
    if bytes.len() != 32 + count * 8 {
        return Err(bad("length does not match dimensions"));
    }
    let data = bytes[32..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let values = Array2::from_shape_vec((rows, cols), data).map_err(|_| bad("shape"))?;
    Ok((values, pitch))
}

fn range(values: &Array2<f64>) -> (f64, f64) {
    values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(*v), hi.max(*v))
        })
}

/// Binary 16-bit PGM, linearly stretched from the minimum to the maximum.
pub fn write_pgm16(path: &Path, values: &Array2<f64>) -> Result<()> {
    let (rows, cols) = values.dim();
    let (lo, hi) = range(values);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = format!("P5\n{cols} {rows}\n65535\n").into_bytes();
    for v in values.iter() {
        let level = if v.is_finite() {
            ((v - lo) / span * 65535.0).round() as u16
        } else {
            0
        };
        bytes.extend_from_slice(&level.to_be_bytes());
    }
    let mut w = create(path)?;
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| HarnessError::io(path, e))
}

// Blue for negative, white at zero, red for positive.
fn diverging(t: f64) -> [u8; 3] {
    let t = t.clamp(-1.0, 1.0);
    let fade = (255.0 * (1.0 - t.abs())).round() as u8;
    if t < 0.0 {
        [fade, fade, 255]
    } else {
        [255, fade, fade]
    }
}

/// 8-bit RGB preview with a diverging colormap symmetric about zero.
pub fn write_png_preview(path: &Path, values: &Array2<f64>) -> Result<()> {
    let (rows, cols) = values.dim();
    let (lo, hi) = range(values);
    let scale = lo.abs().max(hi.abs());
    let scale = if scale > 0.0 { scale } else { 1.0 };
    let mut pixels = Vec::with_capacity(rows * cols * 3);
    for v in values.iter() {
        pixels.extend_from_slice(&diverging(if v.is_finite() { v / scale } else { 0.0 }));
    }
    let img = image::RgbImage::from_raw(cols as u32, rows as u32, pixels).expect("buffer size");
    let mut w = create(path)?;
    img.write_to(&mut w, image::ImageFormat::Png)
        .map_err(|source| HarnessError::Image {
            path: path.to_path_buf(),
            source,
        })?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

/// Raster plus, when `previews` is set, PGM and PNG renderings, all named
/// `<dir>/<stem>.*`.
pub fn write_grid(
    dir: &Path,
    stem: &str,
    values: &Array2<f64>,
    pitch: f64,
    previews: bool,
) -> Result<()> {
    write_raster(&dir.join(format!("{stem}.phr")), values, pitch)?;
    if previews {
        write_pgm16(&dir.join(format!("{stem}.pgm")), values)?;
        write_png_preview(&dir.join(format!("{stem}.png")), values)?;
    }
    Ok(())
}

pub fn write_csv<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn write_jsonl<S: Serialize>(path: &Path, rows: &[S]) -> Result<()> {
    let mut w = create(path)?;
    for row in rows {
        let line = serde_json::to_string(row).map_err(|e| HarnessError::io(path, e.into()))?;
        writeln!(w, "{line}").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}
