//! Seeded rotation, salt-and-pepper noise and shrink transforms, and the
//! per-class expansion of a split to fixed image counts.
//!
//! Resampling is bilinear with pixel centers on integer coordinates;
//! anything sampled from outside the canvas reads as background.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glyph::{GlyphImage, SplitKind, BACKGROUND};
use crate::rng::{domain, RngStream};
use crate::tensor::Tensor;

pub const MAX_ROTATION_DEG: f64 = 15.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn get(&self, split: SplitKind) -> usize {
        match split {
            SplitKind::Train => self.train,
            SplitKind::Val => self.val,
            SplitKind::Test => self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentationSpec {
    /// Closed interval, degrees.
    pub rotation_deg: [f64; 2],
    pub noise_density: f64,
    /// Closed interval of shrink factors.
    pub shrink: [f64; 2],
    pub per_class: SplitCounts,
    pub seed: u64,
}

impl Default for AugmentationSpec {
    fn default() -> Self {
        Self {
            rotation_deg: [-15.0, 15.0],
            noise_density: 0.02,
            shrink: [0.70, 0.87],
            per_class: SplitCounts {
                train: 4500,
                val: 800,
                test: 400,
            },
            seed: 0,
        }
    }
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        let [rlo, rhi] = self.rotation_deg;
        if !(rlo <= rhi && rlo >= -MAX_ROTATION_DEG && rhi <= MAX_ROTATION_DEG) {
            return Err(Error::Validation(format!(
                "rotation interval [{rlo}, {rhi}] must lie within [-15, 15]"
            )));
        }
        let [slo, shi] = self.shrink;
        if !(slo <= shi && slo > 0.0 && shi <= 1.0) {
            return Err(Error::Validation(format!(
                "shrink interval [{slo}, {shi}] must lie within (0, 1]"
            )));
        }
        if !(0.0..=1.0).contains(&self.noise_density) {
            return Err(Error::Validation(format!(
                "noise density {} must lie within [0, 1]",
                self.noise_density
            )));
        }
        Ok(())
    }
}

/// One applied transform with its drawn parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "lowercase")]
pub enum Transform {
    Rotate(f64),
    Shrink(f64),
    Noise(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformLog {
    pub class: u16,
    pub source_writer: String,
    /// Empty for originals.
    pub transforms: Vec<Transform>,
}

#[derive(Debug, Clone, Default)]
pub struct AugmentedSplit {
    pub images: Vec<GlyphImage>,
    pub log: Vec<TransformLog>,
}

#[inline]
fn read(px: &[f32], s: usize, r: isize, c: isize) -> f32 {
    if r < 0 || c < 0 || r >= s as isize || c >= s as isize {
        BACKGROUND
    } else {
        px[r as usize * s + c as usize]
    }
}

/// Bilinear sample at fractional `(row, col)`.
pub(crate) fn sample_bilinear(px: &[f32], s: usize, row: f64, col: f64) -> f32 {
    let r0 = libm::floor(row);
    let c0 = libm::floor(col);
    let fr = (row - r0) as f32;
    let fc = (col - c0) as f32;
    let (r0, c0) = (r0 as isize, c0 as isize);
    let top = read(px, s, r0, c0) * (1.0 - fc) + read(px, s, r0, c0 + 1) * fc;
    let bottom = read(px, s, r0 + 1, c0) * (1.0 - fc) + read(px, s, r0 + 1, c0 + 1) * fc;
    (top * (1.0 - fr) + bottom * fr).clamp(0.0, 1.0)
}

/// Rotates by `degrees` about the canvas center and then translates by
/// `(shift_row, shift_col)` pixels.
pub(crate) fn affine(img: &GlyphImage, degrees: f64, shift_row: f64, shift_col: f64) -> GlyphImage {
    let s = img.canvas();
    let center = (s as f64 - 1.0) / 2.0;
    let theta = degrees * core::f64::consts::PI / 180.0;
    let (sin, cos) = (libm::sin(theta), libm::cos(theta));
    let src = img.pixels.data();
    let mut out = Tensor::full(&[s, s, 1], BACKGROUND);
    for (idx, v) in out.data_mut().iter_mut().enumerate() {
        let y = (idx / s) as f64 - center - shift_row;
        let x = (idx % s) as f64 - center - shift_col;
        // inverse rotation maps each output pixel back into the source
        let sx = cos * x + sin * y + center;
        let sy = -sin * x + cos * y + center;
        *v = sample_bilinear(src, s, sy, sx);
    }
    GlyphImage {
        pixels: out,
        writer: img.writer.clone(),
        label: img.label,
    }
}

pub fn rotate(img: &GlyphImage, degrees: f64) -> Result<GlyphImage> {
    if !(degrees.abs() <= MAX_ROTATION_DEG) {
        return Err(Error::Validation(format!(
            "rotation {degrees} degrees outside [-15, 15]"
        )));
    }
    Ok(affine(img, degrees, 0.0, 0.0))
}

/// Salt-and-pepper noise. Returns the image and the number of pixels that
/// were selected (each set to 0 or 1 with equal probability).
pub fn add_noise(img: &GlyphImage, density: f64, rng: &mut RngStream) -> Result<(GlyphImage, usize)> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::Validation(format!("noise density {density} outside [0, 1]")));
    }
    let mut out = img.clone();
    let mut hits = 0;
    if density == 0.0 {
        return Ok((out, 0));
    }
    for v in out.pixels.data_mut() {
        if rng.bernoulli(density) {
            *v = if rng.bernoulli(0.5) { 1.0 } else { 0.0 };
            hits += 1;
        }
    }
    Ok((out, hits))
}

/// Bilinear downscale to `round(S * factor)` pixels, centered on a fresh
/// background canvas of the original size.
pub fn shrink(img: &GlyphImage, factor: f64) -> Result<GlyphImage> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(Error::Validation(format!("shrink factor {factor} outside (0, 1]")));
    }
    let s = img.canvas();
    let inner = (libm::round(s as f64 * factor) as usize).clamp(1, s);
    let offset = (s - inner) / 2;
    let step = s as f64 / inner as f64;
    let src = img.pixels.data();
    let mut out = Tensor::full(&[s, s, 1], BACKGROUND);
    let dst = out.data_mut();
    for i in 0..inner {
        let sy = (i as f64 + 0.5) * step - 0.5;
        for j in 0..inner {
            let sx = (j as f64 + 0.5) * step - 0.5;
            dst[(i + offset) * s + j + offset] = sample_bilinear(src, s, sy, sx);
        }
    }
    Ok(GlyphImage {
        pixels: out,
        writer: img.writer.clone(),
        label: img.label,
    })
}

fn augment_one(src: &GlyphImage, spec: &AugmentationSpec, rng: &mut RngStream) -> Result<(GlyphImage, Vec<Transform>)> {
    let mut use_rotate = rng.bernoulli(0.5);
    let mut use_shrink = rng.bernoulli(0.5);
    let mut use_noise = rng.bernoulli(0.5);
    if !(use_rotate || use_shrink || use_noise) {
        match rng.below(3) {
            0 => use_rotate = true,
            1 => use_shrink = true,
            _ => use_noise = true,
        }
    }
    let mut img = src.clone();
    let mut applied = Vec::with_capacity(3);
    if use_rotate {
        let deg = rng.uniform_in(spec.rotation_deg[0], spec.rotation_deg[1]);
        img = rotate(&img, deg)?;
        applied.push(Transform::Rotate(deg));
    }
    if use_shrink {
        let f = rng.uniform_in(spec.shrink[0], spec.shrink[1]);
        img = shrink(&img, f)?;
        applied.push(Transform::Shrink(f));
    }
    if use_noise {
        img = add_noise(&img, spec.noise_density, rng)?.0;
        applied.push(Transform::Noise(spec.noise_density));
    }
    Ok((img, applied))
}

/// Expands every class to exactly `target_per_class` images.
///
/// Originals come first and count toward the target; the remainder cycles
/// through the originals, applying each transform independently with
/// probability one half (at least one). Every class draws from its own
/// stream, keyed by split and label.
pub fn augment_split(
    samples: &[GlyphImage],
    spec: &AugmentationSpec,
    target_per_class: usize,
    split: SplitKind,
) -> Result<AugmentedSplit> {
    spec.validate()?;
    let mut classes: BTreeMap<u16, Vec<&GlyphImage>> = BTreeMap::new();
    for s in samples {
        classes.entry(s.label).or_default().push(s);
    }
    let mut out = AugmentedSplit::default();
    for (&label, sources) in &classes {
        if sources.len() > target_per_class {
            return Err(Error::Config(format!(
                "class {label} already has {} images, more than the target {target_per_class}",
                sources.len()
            )));
        }
        for &s in sources {
            out.images.push(s.clone());
            out.log.push(TransformLog {
                class: label,
                source_writer: s.writer.clone(),
                transforms: Vec::new(),
            });
        }
        let mut rng = RngStream::new(spec.seed, domain::AUGMENT | split.tag() << 32 | label as u64);
        for k in 0..target_per_class - sources.len() {
            let src = sources[k % sources.len()];
            let (img, transforms) = augment_one(src, spec, &mut rng)?;
            out.images.push(img);
            out.log.push(TransformLog {
                class: label,
                source_writer: src.writer.clone(),
                transforms,
            });
        }
    }
    Ok(out)
}

/// Like [`augment_split`], but fails when a class in `expected` has no
/// source image at all.
pub fn augment_split_checked(
    samples: &[GlyphImage],
    expected: impl IntoIterator<Item = u16>,
    spec: &AugmentationSpec,
    target_per_class: usize,
    split: SplitKind,
) -> Result<AugmentedSplit> {
    for label in expected {
        if !samples.iter().any(|s| s.label == label) {
            return Err(Error::Config(format!(
                "class {label} has no source images in the {} split",
                split.name()
            )));
        }
    }
    augment_split(samples, spec, target_per_class, split)
}
