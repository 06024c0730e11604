//! Datasets: synthetic generators, the IDX image/label format and
//! deterministic train/test splitting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fmt::fmt17;
use crate::numstats::RngStream;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Per-feature affine map applied to the raw values: `x = (raw - shift) * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }
}

/// Row-major feature matrix with labels in `[0, classes)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    dim: usize,
    classes: usize,
    normalization: Normalization,
}

impl Dataset {
    pub fn new(features: Vec<f64>, labels: Vec<usize>, dim: usize, classes: usize) -> Result<Self> {
        Self::with_normalization(features, labels, dim, classes, Normalization::identity(dim))
    }

    pub fn with_normalization(
        features: Vec<f64>,
        labels: Vec<usize>,
        dim: usize,
        classes: usize,
        normalization: Normalization,
    ) -> Result<Self> {
        if dim == 0 || labels.is_empty() {
            return Err(Error::domain("a dataset needs at least one row and one feature"));
        }
        if features.len() != labels.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * dim,
                got: features.len(),
            });
        }
        if normalization.shift.len() != dim || normalization.scale.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: normalization.shift.len().min(normalization.scale.len()),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::InvalidLabel { label: bad, classes });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("feature values must be finite"));
        }
        Ok(Self {
            features,
            labels,
            dim,
            classes,
            normalization,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    /// Always false: datasets hold at least one row.
    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn normalization(&self) -> &Normalization {
        &self.normalization
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.features.chunks(self.dim).map(<[f64]>::to_vec).collect()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::domain(format!("row {i} out of range for {} rows", self.len())));
            }
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self::with_normalization(features, labels, self.dim, self.classes, self.normalization.clone())
    }

    /// Feature columns `x0..x{d-1}` followed by `label`.
    pub fn to_csv(&self) -> String {
        let mut out: String = (0..self.dim).map(|j| format!("x{j},")).collect();
        out.push_str("label\n");
        for i in 0..self.len() {
            for v in self.row(i) {
                out.push_str(&fmt17(*v));
                out.push(',');
            }
            out.push_str(&format!("{}\n", self.labels[i]));
        }
        out
    }
}

/// Two interleaved unit half-circles: class 0 on `(cos t, sin t)` and class 1
/// on `(1 - cos t, 0.5 - sin t)`, `t` evenly spaced on `[0, π]`, plus
/// isotropic Gaussian jitter.
pub fn gen_two_moons(n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if n < 2 || !n.is_multiple_of(2) {
        return Err(Error::domain(format!("two-moons needs an even n >= 2, got {n}")));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::domain("noise_std must be nonnegative"));
    }
    let half = n / 2;
    let mut rng = RngStream::new(seed, 0);
    let mut features = Vec::with_capacity(2 * n);
    let mut labels = Vec::with_capacity(n);
    let step = if half > 1 { std::f64::consts::PI / (half - 1) as f64 } else { 0.0 };
    for class in 0..2 {
        for k in 0..half {
            let t = k as f64 * step;
            let (x, y) = if class == 0 {
                (t.cos(), t.sin())
            } else {
                (1.0 - t.cos(), 0.5 - t.sin())
            };
            features.push(x + noise_std * rng.std_normal());
            features.push(y + noise_std * rng.std_normal());
            labels.push(class);
        }
    }
    Dataset::new(features, labels, 2, 2)
}

/// `per_center` isotropic Gaussian points around each center; class = center index.
pub fn gen_blobs(centers: &[Vec<f64>], per_center: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    if centers.len() < 2 || per_center == 0 {
        return Err(Error::domain("blobs need at least two centers and one point per center"));
    }
    if !(noise_std >= 0.0) {
        return Err(Error::domain("noise_std must be nonnegative"));
    }
    let dim = centers[0].len();
    if let Some(c) = centers.iter().find(|c| c.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: c.len(),
        });
    }
    let mut rng = RngStream::new(seed, 0);
    let mut features = Vec::with_capacity(centers.len() * per_center * dim);
    let mut labels = Vec::with_capacity(centers.len() * per_center);
    for (class, c) in centers.iter().enumerate() {
        for _ in 0..per_center {
            for &v in c {
                features.push(v + noise_std * rng.std_normal());
            }
            labels.push(class);
        }
    }
    Dataset::new(features, labels, dim, centers.len())
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    match bytes.get(offset..offset + 4) {
        Some(b) => Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]])),
        None => Err(Error::parse(bytes.len(), format!("truncated header: missing {what}"))),
    }
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if magic != expected {
        return Err(Error::parse(0, format!("bad magic 0x{magic:08x}, expected 0x{expected:08x}")));
    }
    Ok(())
}

fn payload(bytes: &[u8], start: usize, len: usize) -> Result<&[u8]> {
    let end = start
        .checked_add(len)
        .ok_or_else(|| Error::parse(start, "declared payload size overflows"))?;
    if bytes.len() < end {
        return Err(Error::parse(
            bytes.len(),
            format!("truncated payload: expected {len} bytes from offset {start}"),
        ));
    }
    if bytes.len() > end {
        return Err(Error::parse(end, format!("{} trailing bytes", bytes.len() - end)));
    }
    Ok(&bytes[start..end])
}

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = be_u32(bytes, 4, "image count")? as usize;
    let rows = be_u32(bytes, 8, "row count")? as usize;
    let cols = be_u32(bytes, 12, "column count")? as usize;
    let len = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::parse(4, "declared image size overflows"))?;
    let pixels = payload(bytes, 16, len)?.to_vec();
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels,
    })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = be_u32(bytes, 4, "label count")? as usize;
    Ok(payload(bytes, 8, count)?.to_vec())
}

/// Builds a dataset from in-memory IDX files, scaling pixels by 1/255.
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let img = parse_idx_images(images)?;
    let lab = parse_idx_labels(labels)?;
    if img.count != lab.len() {
        return Err(Error::parse(
            4,
            format!("label count {} does not match image count {}", lab.len(), img.count),
        ));
    }
    let dim = img.rows * img.cols;
    if img.count == 0 || dim == 0 {
        return Err(Error::parse(4, "IDX files hold no data"));
    }
    let features = img.pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let labels: Vec<usize> = lab.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().copied().max().unwrap_or(0) + 1;
    let normalization = Normalization {
        shift: vec![0.0; dim],
        scale: vec![1.0 / 255.0; dim],
    };
    Dataset::with_normalization(features, labels, dim, classes, normalization)
}

pub fn read_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    dataset_from_idx(&images, &labels)
}

/// Encodes `dataset` as IDX images (`rows × cols`, values quantized from
/// `[0, 1]` to bytes) and labels.
pub fn encode_idx(dataset: &Dataset, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != dataset.dim() {
        return Err(Error::DimensionMismatch {
            expected: dataset.dim(),
            got: rows * cols,
        });
    }
    let n = u32::try_from(dataset.len()).map_err(|_| Error::domain("too many rows for IDX"))?;
    let mut images = Vec::with_capacity(16 + dataset.features().len());
    for v in [IDX_IMAGES_MAGIC, n, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(dataset.features().iter().map(|&x| (x.clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + dataset.len());
    labels.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&n.to_be_bytes());
    for &l in dataset.labels() {
        labels.push(u8::try_from(l).map_err(|_| Error::domain(format!("label {l} does not fit a byte")))?);
    }
    Ok((images, labels))
}

pub fn write_idx(dataset: &Dataset, rows: usize, cols: usize, images_path: &Path, labels_path: &Path) -> Result<()> {
    let (images, labels) = encode_idx(dataset, rows, cols)?;
    std::fs::write(images_path, images)?;
    std::fs::write(labels_path, labels)?;
    Ok(())
}

/// Seeded shuffle split. The first `max_n` shuffled rows (all when `None`)
/// are divided into train and test parts by `train_fraction`; both parts are
/// returned in original row order and the test part keeps every `stride`-th
/// row. Empty parts come back as `None`.
pub fn split_and_subsample(
    dataset: &Dataset,
    train_fraction: f64,
    max_n: Option<usize>,
    stride: usize,
    seed: u64,
) -> Result<(Option<Dataset>, Option<Dataset>)> {
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::domain(format!("train_fraction must lie in [0,1], got {train_fraction}")));
    }
    if stride == 0 {
        return Err(Error::domain("stride must be at least 1"));
    }
    let mut idx: Vec<usize> = (0..dataset.len()).collect();
    RngStream::new(seed, 0).shuffle(&mut idx);
    let n = max_n.map_or(idx.len(), |m| m.min(idx.len()));
    if n == 0 {
        return Err(Error::domain("empty split: max_n is 0"));
    }
    idx.truncate(n);
    let n_train = (train_fraction * n as f64).round() as usize;
    let mut train = idx[..n_train].to_vec();
    let mut test = idx[n_train..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    let test: Vec<usize> = test.into_iter().step_by(stride).collect();
    let part = |ix: &[usize]| -> Result<Option<Dataset>> {
        if ix.is_empty() {
            Ok(None)
        } else {
            dataset.subset(ix).map(Some)
        }
    };
    Ok((part(&train)?, part(&test)?))
}
