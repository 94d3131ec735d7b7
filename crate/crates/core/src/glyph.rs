//! Labeled glyph images, target derivation and writer-disjoint splitting.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::AlphabetGrid;
use crate::rng::{domain, RngStream};
use crate::tensor::Tensor;

/// Ink is 0.0, background is 1.0.
pub const BACKGROUND: f32 = 1.0;
pub const DEFAULT_CANVAS: usize = 32;

/// A single-character image of shape `[S, S, 1]` with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GlyphImage {
    pub pixels: Tensor<f32>,
    pub writer: String,
    pub label: u16,
}

impl GlyphImage {
    pub fn new(pixels: Tensor<f32>, writer: impl Into<String>, label: u16) -> Result<Self> {
        match *pixels.shape() {
            [h, w, 1] if h == w => {}
            _ => {
                let s = pixels.shape().first().copied().unwrap_or(0);
                return Err(Error::dim("GlyphImage", pixels.shape(), &[s, s, 1]));
            }
        }
        if let Some(v) = pixels.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("pixel value {v} outside [0, 1]")));
        }
        Ok(Self {
            pixels,
            writer: writer.into(),
            label,
        })
    }

    pub fn blank(canvas: usize, writer: impl Into<String>, label: u16) -> Self {
        Self {
            pixels: Tensor::full(&[canvas, canvas, 1], BACKGROUND),
            writer: writer.into(),
            label,
        }
    }

    pub fn canvas(&self) -> usize {
        self.pixels.shape()[0]
    }

    /// Sum of `1 - pixel`.
    pub fn ink_mass(&self) -> f64 {
        self.pixels.data().iter().map(|&p| 1.0 - p as f64).sum()
    }
}

/// `(label, row, col)` targets for the three heads, all 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LabelTriple {
    pub label: u16,
    pub row: u16,
    pub col: u16,
}

pub fn derive_targets(label: u16, grid: &AlphabetGrid) -> Result<LabelTriple> {
    let (row, col) = grid.label_to_grid(label)?;
    Ok(LabelTriple { label, row, col })
}

/// Zeros except a one at `index - 1`.
pub fn one_hot(index: usize, size: usize) -> Result<Tensor<f32>> {
    if index == 0 || index > size {
        return Err(Error::Validation(format!("one-hot index {index} outside 1..={size}")));
    }
    let mut t = Tensor::zeros(&[size]);
    t.data_mut()[index - 1] = 1.0;
    Ok(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitKind {
    Train,
    Val,
    Test,
}

impl SplitKind {
    pub const ALL: [SplitKind; 3] = [SplitKind::Train, SplitKind::Val, SplitKind::Test];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Train => "train",
            SplitKind::Val => "val",
            SplitKind::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == s)
    }

    pub(crate) fn tag(self) -> u64 {
        self as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRatio {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitRatio {
    pub const DEFAULT: SplitRatio = SplitRatio { train: 9, val: 2, test: 1 };

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Debug, Clone, Default)]
pub struct Splits {
    pub train: Vec<GlyphImage>,
    pub val: Vec<GlyphImage>,
    pub test: Vec<GlyphImage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct WriterPartition {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

/// Partitions distinct writers by seeded shuffle. With exactly
/// `ratio.total()` writers the split is exact; with more, the validation and
/// test shares are `floor(n * r / total)` and the rest goes to training.
pub fn partition_writers(writers: &BTreeSet<String>, ratio: SplitRatio, seed: u64) -> Result<WriterPartition> {
    let n = writers.len();
    if ratio.train == 0 || n < ratio.total() {
        return Err(Error::Config(format!(
            "need at least {} distinct writers for a {}:{}:{} split, found {n}",
            ratio.total(),
            ratio.train,
            ratio.val,
            ratio.test
        )));
    }
    let mut order: Vec<String> = writers.iter().cloned().collect();
    RngStream::new(seed, domain::SPLIT).shuffle(&mut order);
    let n_val = (n * ratio.val / ratio.total()).max(ratio.val.min(1));
    let n_test = (n * ratio.test / ratio.total()).max(ratio.test.min(1));
    let mut rest = order.split_off(n - n_val - n_test);
    let test = rest.split_off(n_val);
    let mut p = WriterPartition { train: order, val: rest, test };
    p.train.sort();
    p.val.sort();
    p.test.sort();
    Ok(p)
}

/// Splits samples so that every writer lands in exactly one split. The
/// writer partition is global and therefore applies identically to every
/// label.
pub fn split_by_writer(samples: Vec<GlyphImage>, ratio: SplitRatio, seed: u64) -> Result<(Splits, WriterPartition)> {
    let writers: BTreeSet<String> = samples.iter().map(|s| s.writer.clone()).collect();
    let partition = partition_writers(&writers, ratio, seed)?;
    let mut splits = Splits::default();
    for s in samples {
        if partition.train.binary_search(&s.writer).is_ok() {
            splits.train.push(s);
        } else if partition.val.binary_search(&s.writer).is_ok() {
            splits.val.push(s);
        } else {
            splits.test.push(s);
        }
    }
    Ok((splits, partition))
}

/// Images stacked as `[N, S, S, 1]` with one target triple per image.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorDataset {
    pub canvas: usize,
    pub images: Vec<f32>,
    pub targets: Vec<LabelTriple>,
}

impl TensorDataset {
    pub fn from_glyphs(glyphs: &[GlyphImage], grid: &AlphabetGrid) -> Result<Self> {
        let canvas = glyphs.first().map_or(DEFAULT_CANVAS, GlyphImage::canvas);
        let mut images = Vec::with_capacity(glyphs.len() * canvas * canvas);
        let mut targets = Vec::with_capacity(glyphs.len());
        for g in glyphs {
            if g.canvas() != canvas {
                return Err(Error::dim("TensorDataset", &[canvas, canvas, 1], g.pixels.shape()));
            }
            images.extend_from_slice(g.pixels.data());
            targets.push(derive_targets(g.label, grid)?);
        }
        Ok(Self { canvas, images, targets })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        let n = self.canvas * self.canvas;
        &self.images[i * n..(i + 1) * n]
    }

    /// Gathers the given sample indices into a `[B, S, S, 1]` batch.
    pub fn batch<T: crate::Scalar>(&self, indices: &[usize]) -> (Tensor<T>, Vec<LabelTriple>) {
        let n = self.canvas * self.canvas;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend(self.image(i).iter().map(|&v| T::from_f64(v as f64)));
        }
        let images = Tensor::new(&[indices.len(), self.canvas, self.canvas, 1], data).expect("sized above");
        (images, indices.iter().map(|&i| self.targets[i]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn one_hot_positions() {
        assert_eq!(one_hot(1, 9).unwrap().data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let last = one_hot(9, 9).unwrap();
        assert_eq!(last.data()[8], 1.0);
        assert_eq!(last.sum(), 1.0);
        assert!(one_hot(0, 9).is_err());
        assert!(one_hot(10, 9).is_err());
    }

    #[test]
    fn targets_follow_grid() {
        let g = AlphabetGrid::default_grid();
        assert_eq!(derive_targets(13, &g).unwrap(), LabelTriple { label: 13, row: 2, col: 6 });
        assert_eq!(derive_targets(1, &g).unwrap(), LabelTriple { label: 1, row: 1, col: 1 });
        assert_eq!(derive_targets(20, &g).unwrap(), LabelTriple { label: 20, row: 3, col: 6 });
        assert!(derive_targets(300, &g).is_err());
    }

    fn fixture(writers: usize, labels: u16) -> Vec<GlyphImage> {
        let mut v = vec![];
        for w in 0..writers {
            for l in 1..=labels {
                v.push(GlyphImage::blank(4, format!("w{w:02}"), l));
            }
        }
        v
    }

    #[test]
    fn twelve_writers_split_nine_two_one() {
        let (splits, p) = split_by_writer(fixture(12, 3), SplitRatio::DEFAULT, 7).unwrap();
        assert_eq!((p.train.len(), p.val.len(), p.test.len()), (9, 2, 1));
        assert_eq!((splits.train.len(), splits.val.len(), splits.test.len()), (27, 6, 3));
        let (_, again) = split_by_writer(fixture(12, 3), SplitRatio::DEFAULT, 7).unwrap();
        assert_eq!(p, again);
    }

    #[test]
    fn too_few_writers() {
        let err = split_by_writer(fixture(11, 1), SplitRatio::DEFAULT, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn rejects_out_of_range_pixels() {
        let t = Tensor::full(&[2, 2, 1], 1.5f32);
        assert!(GlyphImage::new(t, "w".to_string(), 1).is_err());
    }
}
