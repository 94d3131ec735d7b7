//! Reading user-supplied glyph images laid out as `<writer>/<label>.<ext>`.

use std::path::{Path, PathBuf};

use fidel_core::{AlphabetGrid, GlyphImage, Tensor};
use image::imageops::FilterType;
use image::{GrayImage, Luma};

use crate::error::{Error, Result};

#[derive(Debug, Default)]
pub struct IngestReport {
    pub samples: Vec<GlyphImage>,
    /// Files that could not be used, one message each.
    pub warnings: Vec<String>,
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        out.push(entry.map_err(|e| Error::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

/// Grayscale, padded with background to a square, bilinearly resampled to
/// `canvas` and scaled to `[0, 1]` (0 = ink).
pub fn normalize(img: &GrayImage, canvas: usize) -> Tensor<f32> {
    let side = img.width().max(img.height()).max(1);
    let mut square = GrayImage::from_pixel(side, side, Luma([255]));
    image::imageops::overlay(
        &mut square,
        img,
        ((side - img.width()) / 2) as i64,
        ((side - img.height()) / 2) as i64,
    );
    let c = canvas as u32;
    let resized = if side == c {
        square
    } else {
        image::imageops::resize(&square, c, c, FilterType::Triangle)
    };
    Tensor::new(&[canvas, canvas, 1], resized.pixels().map(|p| p.0[0] as f32 / 255.0).collect()).expect("sized")
}

/// Decodes and normalizes one image file.
pub fn load_image(path: &Path, canvas: usize) -> Result<Tensor<f32>> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::format("image", 0, format!("{}: {other}", path.display())),
    })?;
    Ok(normalize(&img.to_luma8(), canvas))
}

/// Reads every `<writer>/<label>.<ext>` image under `root`.
///
/// Undecodable files and names that are not a label number are reported as
/// warnings and skipped. A label outside the grid is a validation error.
pub fn ingest_directory(root: &Path, grid: &AlphabetGrid, canvas: usize) -> Result<IngestReport> {
    let mut report = IngestReport::default();
    for writer_dir in sorted_entries(root)? {
        if !writer_dir.is_dir() {
            report
                .warnings
                .push(format!("{}: not a writer directory, skipped", writer_dir.display()));
            continue;
        }
        let writer = writer_dir.file_name().expect("entry").to_string_lossy().into_owned();
        for file in sorted_entries(&writer_dir)? {
            let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let Ok(label) = stem.parse::<u32>() else {
                report.warnings.push(format!("{}: file name is not a label number, skipped", file.display()));
                continue;
            };
            if label == 0 || label > grid.num_labels() as u32 {
                return Err(fidel_core::Error::Validation(format!(
                    "{}: label out of range: {label} (expected 1..={})",
                    file.display(),
                    grid.num_labels()
                ))
                .into());
            }
            match load_image(&file, canvas) {
                Ok(pixels) => report.samples.push(GlyphImage::new(pixels, writer.clone(), label as u16)?),
                Err(e) => report.warnings.push(format!("{}: {e}", file.display())),
            }
        }
    }
    if report.samples.is_empty() {
        report.warnings.push(format!("{}: no images found", root.display()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_pads_and_scales() {
        let mut img = GrayImage::from_pixel(4, 2, Luma([0]));
        img.put_pixel(0, 0, Luma([255]));
        let t = normalize(&img, 4);
        assert_eq!(t.shape(), &[4, 4, 1]);
        // rows 0 and 3 are padding
        assert!(t.data()[..4].iter().all(|&v| v == 1.0));
        assert!(t.data()[12..].iter().all(|&v| v == 1.0));
        assert_eq!(t.get(&[1, 0, 0]), 1.0);
        assert_eq!(t.get(&[1, 1, 0]), 0.0);
    }

    #[test]
    fn resampling_keeps_range() {
        let img = GrayImage::from_fn(50, 37, |x, y| Luma([((x * 7 + y * 3) % 256) as u8]));
        let t = normalize(&img, 32);
        assert!(t.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
