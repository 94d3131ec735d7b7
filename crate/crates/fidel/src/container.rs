//! Dataset containers and manifests.
//!
//! Layout: `"AMCR"`, `u16` version, `u32` header length, JSON header, then
//! the payload arrays, little-endian: pixels as `u8` (`value / 255` on
//! load), then `labels`, `rows`, `cols` and `writers` as `u16`. The header
//! records the split, canvas, record count, dtype tags, each array's byte
//! offset and length within the payload, the writer table and the dataset
//! manifest.

use std::path::{Path, PathBuf};

use fidel_core::augment::{AugmentationSpec, SplitCounts};
use fidel_core::glyph::{SplitKind, TensorDataset};
use fidel_core::{AlphabetGrid, GlyphImage, LabelTriple, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{read_file, read_text, write_file, Error, Result};
use crate::framing;

pub const MAGIC: &[u8; 4] = b"AMCR";
pub const VERSION: u16 = 1;
const WHAT: &str = "container";

pub const GRID_FILE: &str = "grid.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn container_path(dir: &Path, split: SplitKind) -> PathBuf {
    dir.join(format!("{}.amcr", split.name()))
}

/// Provenance of a prepared dataset, shared by its split containers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub canvas: usize,
    pub num_labels: u16,
    pub num_rows: u16,
    pub num_cols: u16,
    /// Records per split.
    pub counts: SplitCounts,
    /// How the dataset was produced: `synth`, `ingest` or `augment`.
    pub source: String,
    pub augmentation: Option<AugmentationSpec>,
    /// SHA-256 of the compact JSON form of `augmentation`.
    pub augmentation_digest: Option<String>,
    pub seed: u64,
    /// Seconds since the Unix epoch; absent in deterministic mode.
    pub created_unix: Option<u64>,
    /// SHA-256 of the grid file text.
    pub grid_digest: String,
}

impl DatasetManifest {
    pub fn new(grid: &AlphabetGrid, canvas: usize, counts: SplitCounts, source: &str, seed: u64) -> Self {
        Self {
            canvas,
            num_labels: grid.num_labels(),
            num_rows: grid.num_rows(),
            num_cols: grid.num_cols(),
            counts,
            source: source.into(),
            augmentation: None,
            augmentation_digest: None,
            seed,
            created_unix: None,
            grid_digest: grid_digest(grid),
        }
    }

    pub fn with_augmentation(mut self, spec: &AugmentationSpec) -> Self {
        let json = serde_json::to_vec(spec).expect("spec serializes");
        self.augmentation_digest = Some(framing::sha256_hex(&json));
        self.augmentation = Some(spec.clone());
        self
    }

    /// Stamps the creation time from `SOURCE_DATE_EPOCH` when set, else from
    /// the system clock if `clock` is true. Without either the field stays
    /// empty and the output is reproducible.
    pub fn stamped(mut self, clock: bool) -> Self {
        let from_env = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok());
        self.created_unix = from_env.or_else(|| {
            clock
                .then(|| std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).ok())
                .flatten()
                .map(|d| d.as_secs())
        });
        self
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn grid_digest(grid: &AlphabetGrid) -> String {
    framing::sha256_hex(grid.to_file_string().as_bytes())
}

/// One split in stored form.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitData {
    pub split: SplitKind,
    pub canvas: usize,
    /// `count * canvas * canvas` quantized pixels.
    pub pixels: Vec<u8>,
    pub labels: Vec<u16>,
    pub rows: Vec<u16>,
    pub cols: Vec<u16>,
    /// Index into `writer_names` per record.
    pub writers: Vec<u16>,
    pub writer_names: Vec<String>,
}

pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

impl SplitData {
    pub fn from_glyphs(split: SplitKind, canvas: usize, glyphs: &[GlyphImage], grid: &AlphabetGrid) -> Result<Self> {
        let mut writer_names: Vec<String> = glyphs.iter().map(|g| g.writer.clone()).collect();
        writer_names.sort();
        writer_names.dedup();
        if writer_names.len() > u16::MAX as usize {
            return Err(Error::Usage(format!("{} writers exceed the container limit", writer_names.len())));
        }
        let mut data = SplitData {
            split,
            canvas,
            pixels: Vec::with_capacity(glyphs.len() * canvas * canvas),
            labels: Vec::with_capacity(glyphs.len()),
            rows: Vec::with_capacity(glyphs.len()),
            cols: Vec::with_capacity(glyphs.len()),
            writers: Vec::with_capacity(glyphs.len()),
            writer_names,
        };
        for g in glyphs {
            if g.canvas() != canvas {
                return Err(fidel_core::Error::Dimension {
                    op: "SplitData::from_glyphs",
                    left: g.pixels.shape().to_vec(),
                    right: vec![canvas, canvas, 1],
                }
                .into());
            }
            let t = fidel_core::glyph::derive_targets(g.label, grid)?;
            data.pixels.extend(g.pixels.data().iter().map(|&v| quantize(v)));
            data.labels.push(t.label);
            data.rows.push(t.row);
            data.cols.push(t.col);
            let w = data.writer_names.binary_search(&g.writer).expect("collected above");
            data.writers.push(w as u16);
        }
        Ok(data)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn image_values(&self, i: usize) -> impl Iterator<Item = f32> + '_ {
        let n = self.canvas * self.canvas;
        self.pixels[i * n..(i + 1) * n].iter().map(|&p| p as f32 / 255.0)
    }

    pub fn to_glyphs(&self) -> Vec<GlyphImage> {
        (0..self.len())
            .map(|i| GlyphImage {
                pixels: Tensor::new(&[self.canvas, self.canvas, 1], self.image_values(i).collect()).expect("sized"),
                writer: self.writer_names[self.writers[i] as usize].clone(),
                label: self.labels[i],
            })
            .collect()
    }

    pub fn to_dataset(&self) -> TensorDataset {
        TensorDataset {
            canvas: self.canvas,
            images: (0..self.len()).flat_map(|i| self.image_values(i)).collect(),
            targets: (0..self.len())
                .map(|i| LabelTriple {
                    label: self.labels[i],
                    row: self.rows[i],
                    col: self.cols[i],
                })
                .collect(),
        }
    }

    /// Every stored `(row, col)` must be the grid cell of its label.
    pub fn check_targets(&self, grid: &AlphabetGrid) -> Result<()> {
        for i in 0..self.len() {
            let cell = grid.label_to_grid(self.labels[i])?;
            if cell != (self.rows[i], self.cols[i]) {
                return Err(fidel_core::Error::Validation(format!(
                    "record {i}: label {} sits at {:?} but is stored with ({}, {})",
                    self.labels[i], cell, self.rows[i], self.cols[i]
                ))
                .into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ArrayEntry {
    name: String,
    dtype: String,
    offset: u64,
    len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    split: String,
    canvas: usize,
    count: usize,
    arrays: Vec<ArrayEntry>,
    writers: Vec<String>,
    manifest: DatasetManifest,
}

const U16_ARRAYS: [&str; 4] = ["labels", "rows", "cols", "writers"];

pub fn encode_container(data: &SplitData, manifest: &DatasetManifest) -> Result<Vec<u8>> {
    let n = data.len();
    let expected = manifest.counts.get(data.split);
    if expected != n {
        return Err(fidel_core::Error::Validation(format!(
            "manifest declares {expected} {} records but the split holds {n}",
            data.split.name()
        ))
        .into());
    }
    let px = n * data.canvas * data.canvas;
    if data.pixels.len() != px || [&data.rows, &data.cols, &data.writers].iter().any(|a| a.len() != n) {
        return Err(fidel_core::Error::Validation("split arrays have inconsistent lengths".into()).into());
    }
    let mut payload = Vec::with_capacity(px + 8 * n);
    let mut arrays = vec![ArrayEntry {
        name: "pixels".into(),
        dtype: "u8".into(),
        offset: 0,
        len: px as u64,
    }];
    payload.extend_from_slice(&data.pixels);
    for (name, values) in U16_ARRAYS.iter().zip([&data.labels, &data.rows, &data.cols, &data.writers]) {
        arrays.push(ArrayEntry {
            name: name.to_string(),
            dtype: "u16".into(),
            offset: payload.len() as u64,
            len: 2 * n as u64,
        });
        for v in values {
            payload.extend_from_slice(&v.to_le_bytes());
        }
    }
    let header = Header {
        split: data.split.name().into(),
        canvas: data.canvas,
        count: n,
        arrays,
        writers: data.writer_names.clone(),
        manifest: manifest.clone(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    Ok(framing::encode(MAGIC, VERSION, &header, &payload))
}

pub fn decode_container(bytes: &[u8]) -> Result<(DatasetManifest, SplitData)> {
    let frame = framing::decode(bytes, MAGIC, VERSION, WHAT)?;
    let header: Header = framing::parse_header(frame.header, WHAT)?;
    let at = framing::PRELUDE as u64;
    let split = SplitKind::parse(&header.split)
        .ok_or_else(|| Error::format(WHAT, at, format!("unknown split {:?}", header.split)))?;
    let n = header.count;
    let find = |name: &str, dtype: &str, len: u64| -> Result<&[u8]> {
        let e = header
            .arrays
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::format(WHAT, at, format!("missing array {name:?}")))?;
        if e.dtype != dtype || e.len != len {
            return Err(Error::format(
                WHAT,
                at,
                format!("array {name:?} is {} x {} bytes, expected {dtype} x {len}", e.dtype, e.len),
            ));
        }
        framing::slice(&frame, e.offset, e.len, WHAT, name)
    };
    let pixels = find("pixels", "u8", (n * header.canvas * header.canvas) as u64)?.to_vec();
    let mut u16s = Vec::with_capacity(4);
    for name in U16_ARRAYS {
        let raw = find(name, "u16", 2 * n as u64)?;
        u16s.push(raw.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect::<Vec<u16>>());
    }
    let writers = u16s.pop().expect("four arrays");
    if let Some(&w) = writers.iter().find(|&&w| w as usize >= header.writers.len()) {
        return Err(Error::format(WHAT, at, format!("writer index {w} outside the writer table")));
    }
    let cols = u16s.pop().expect("four arrays");
    let rows = u16s.pop().expect("four arrays");
    let labels = u16s.pop().expect("four arrays");
    if header.manifest.counts.get(split) != n {
        return Err(Error::format(
            WHAT,
            at,
            format!("manifest declares {} records, header {n}", header.manifest.counts.get(split)),
        ));
    }
    Ok((
        header.manifest,
        SplitData {
            split,
            canvas: header.canvas,
            pixels,
            labels,
            rows,
            cols,
            writers,
            writer_names: header.writers,
        },
    ))
}

pub fn write_container(path: &Path, data: &SplitData, manifest: &DatasetManifest) -> Result<()> {
    write_file(path, &encode_container(data, manifest)?)
}

pub fn read_container(path: &Path) -> Result<(DatasetManifest, SplitData)> {
    decode_container(&read_file(path)?)
}

/// Writes every split container, the standalone manifest and the grid file
/// into `dir`.
pub fn write_dataset(dir: &Path, splits: &[SplitData], manifest: &DatasetManifest, grid: &AlphabetGrid) -> Result<()> {
    for s in splits {
        s.check_targets(grid)?;
        write_container(&container_path(dir, s.split), s, manifest)?;
    }
    write_file(&dir.join(MANIFEST_FILE), manifest.to_json().as_bytes())?;
    write_file(&dir.join(GRID_FILE), grid.to_file_string().as_bytes())
}

/// Loads `grid.csv` from a dataset directory.
pub fn read_grid(dir: &Path) -> Result<AlphabetGrid> {
    Ok(fidel_core::grid::load_grid(&read_text(&dir.join(GRID_FILE))?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use fidel_core::RngStream;

    fn sample(n: usize, seed: u64) -> (SplitData, DatasetManifest, AlphabetGrid) {
        let grid = AlphabetGrid::default_grid();
        let mut rng = RngStream::new(seed, 0);
        let glyphs: Vec<GlyphImage> = (0..n)
            .map(|i| {
                let px = Tensor::from_fn(&[32, 32, 1], |_| rng.uniform() as f32);
                GlyphImage::new(px, format!("w{}", i % 5), rng.below(265) as u16 + 1).unwrap()
            })
            .collect();
        let data = SplitData::from_glyphs(SplitKind::Val, 32, &glyphs, &grid).unwrap();
        let counts = SplitCounts { train: 0, val: n, test: 0 };
        (data, DatasetManifest::new(&grid, 32, counts, "test", seed), grid)
    }

    #[test]
    fn round_trip_is_byte_exact() {
        let (data, manifest, grid) = sample(100, 1);
        let bytes = encode_container(&data, &manifest).unwrap();
        assert_eq!(&bytes[..4], b"AMCR");
        let (m2, d2) = decode_container(&bytes).unwrap();
        assert_eq!(m2, manifest);
        assert_eq!(d2, data);
        d2.check_targets(&grid).unwrap();
        assert_eq!(encode_container(&d2, &m2).unwrap(), bytes);
        // re-quantizing decoded pixels is the identity
        let again = SplitData::from_glyphs(SplitKind::Val, 32, &d2.to_glyphs(), &grid).unwrap();
        assert_eq!(again, data);
    }

    #[test]
    fn truncation_is_a_format_error() {
        let (data, manifest, _) = sample(10, 2);
        let bytes = encode_container(&data, &manifest).unwrap();
        for cut in [0, 3, 5, 9, 40, bytes.len() - 1] {
            match decode_container(&bytes[..cut]) {
                Err(Error::Format { offset, .. }) => assert!(offset <= cut as u64),
                other => panic!("cut {cut}: expected a format error, got {other:?}"),
            }
        }
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let (data, mut manifest, _) = sample(4, 3);
        manifest.counts.val = 5;
        assert!(encode_container(&data, &manifest).is_err());
    }

    #[test]
    fn inconsistent_targets_are_detected() {
        let (mut data, _, grid) = sample(4, 4);
        data.rows[2] = data.rows[2] % 34 + 1;
        assert!(data.check_targets(&grid).is_err());
    }
}
