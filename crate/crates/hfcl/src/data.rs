//! Dataset ingestion and sharding.
//!
//! Reads image/label pairs from big-endian IDX files, splits them IID
//! across clients, and tracks the exact number of channel symbols each
//! shard costs to transmit (one symbol per input pixel plus one per label
//! entry). Symbol arithmetic is integer-exact throughout.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::seeds::{self, domain};

/// Magic number opening an IDX image file (unsigned byte, 3 dimensions).
pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
/// Magic number opening an IDX label file (unsigned byte, 1 dimension).
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Number of classes for digit labels.
pub const NUM_CLASSES: usize = 10;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: bad IDX magic {got:#010x}, expected {expected:#010x}")]
    BadMagic { path: String, got: u32, expected: u32 },
    #[error("{path}: file truncated (needed {needed} bytes, found {found})")]
    Truncated {
        path: String,
        needed: usize,
        found: usize,
    },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("label value {0} outside 0..=9")]
    BadLabel(u8),
    #[error("shard mixes sample shapes: {0}x{1} vs {2}x{3}")]
    MixedShapes(usize, usize, usize, usize),
    #[error("cannot split {samples} samples across {clients} clients")]
    BadPartition { samples: usize, clients: usize },
    #[error("shard must contain at least one sample")]
    EmptyShard,
    #[error("cannot average-pool odd dimensions {0}x{1}")]
    OddDimensions(usize, usize),
    #[error("label vector must be one-hot")]
    NotOneHot,
    #[error("symbol count overflows 64-bit arithmetic")]
    SymbolOverflow,
}

/// One input/label pair.
///
/// The input is a `rows x cols` matrix stored row-major with values in
/// `[0, 1]`; the label is a one-hot column vector (length = class count).
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    input: Vec<f64>,
    rows: usize,
    cols: usize,
    label: Vec<f64>,
}

impl Sample {
    /// Builds a sample from a flat row-major input and a one-hot label.
    pub fn new(input: Vec<f64>, rows: usize, cols: usize, label: Vec<f64>) -> Result<Self, DataError> {
        assert_eq!(input.len(), rows * cols, "input length must equal rows*cols");
        let ones = label.iter().filter(|&&v| v == 1.0).count();
        let zeros = label.iter().filter(|&&v| v == 0.0).count();
        if ones != 1 || ones + zeros != label.len() {
            return Err(DataError::NotOneHot);
        }
        Ok(Self { input, rows, cols, label })
    }

    /// Builds a sample from a class index, one-hot encoded over `classes`.
    pub fn from_class(input: Vec<f64>, rows: usize, cols: usize, class: usize, classes: usize) -> Result<Self, DataError> {
        assert!(class < classes);
        let mut label = vec![0.0; classes];
        label[class] = 1.0;
        Self::new(input, rows, cols, label)
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }

    pub fn label(&self) -> &[f64] {
        &self.label
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Index of the 1 in the label vector.
    pub fn class(&self) -> usize {
        self.label
            .iter()
            .position(|&v| v == 1.0)
            .expect("label is one-hot by construction")
    }

    /// Channel symbols needed to transmit this sample: one per input entry
    /// plus one per label entry.
    pub fn symbols(&self) -> u64 {
        (self.input.len() + self.label.len()) as u64
    }

    /// Replaces the input values, keeping shape and label. Used by the
    /// channel model when corrupting transmitted datasets.
    pub(crate) fn with_input(&self, input: Vec<f64>) -> Sample {
        assert_eq!(input.len(), self.input.len());
        Sample {
            input,
            rows: self.rows,
            cols: self.cols,
            label: self.label.clone(),
        }
    }

    /// 2x2 average pooling, halving each dimension.
    pub fn downsample_half(&self) -> Result<Sample, DataError> {
        if self.rows % 2 != 0 || self.cols % 2 != 0 {
            return Err(DataError::OddDimensions(self.rows, self.cols));
        }
        let (r2, c2) = (self.rows / 2, self.cols / 2);
        let mut pooled = vec![0.0; r2 * c2];
        for r in 0..r2 {
            for c in 0..c2 {
                let a = self.input[(2 * r) * self.cols + 2 * c];
                let b = self.input[(2 * r) * self.cols + 2 * c + 1];
                let d = self.input[(2 * r + 1) * self.cols + 2 * c];
                let e = self.input[(2 * r + 1) * self.cols + 2 * c + 1];
                pooled[r * c2 + c] = (a + b + d + e) / 4.0;
            }
        }
        Ok(Sample {
            input: pooled,
            rows: r2,
            cols: c2,
            label: self.label.clone(),
        })
    }
}

/// One client's local dataset plus its exact transmission cost.
#[derive(Debug, Clone, PartialEq)]
pub struct Shard {
    client_id: usize,
    samples: Vec<Sample>,
    symbol_count: u64,
}

impl Shard {
    /// Builds a shard, validating uniform sample shapes and precomputing
    /// the symbol count.
    pub fn new(client_id: usize, samples: Vec<Sample>) -> Result<Self, DataError> {
        let symbol_count = symbol_count(&samples)?;
        Ok(Self { client_id, samples, symbol_count })
    }

    pub fn client_id(&self) -> usize {
        self.client_id
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Total symbols to transmit the whole shard.
    pub fn symbol_count(&self) -> u64 {
        self.symbol_count
    }

    /// Symbols per sample (uniform across the shard).
    pub fn symbols_per_sample(&self) -> u64 {
        self.samples[0].symbols()
    }

    pub(crate) fn with_samples(&self, samples: Vec<Sample>) -> Result<Shard, DataError> {
        Shard::new(self.client_id, samples)
    }
}

/// Symbols needed for `count` samples of `rows x cols` inputs with
/// `label_len`-entry labels, checked against overflow.
pub fn symbols_for(count: u64, rows: u64, cols: u64, label_len: u64) -> Result<u64, DataError> {
    let per_sample = rows
        .checked_mul(cols)
        .and_then(|p| p.checked_add(label_len))
        .ok_or(DataError::SymbolOverflow)?;
    count.checked_mul(per_sample).ok_or(DataError::SymbolOverflow)
}

/// Exact symbol count for a nonempty, shape-uniform sample list.
pub fn symbol_count(samples: &[Sample]) -> Result<u64, DataError> {
    let first = samples.first().ok_or(DataError::EmptyShard)?;
    for s in samples {
        if s.rows != first.rows || s.cols != first.cols || s.label.len() != first.label.len() {
            return Err(DataError::MixedShapes(first.rows, first.cols, s.rows, s.cols));
        }
    }
    symbols_for(
        samples.len() as u64,
        first.rows as u64,
        first.cols as u64,
        first.label.len() as u64,
    )
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated {
            path: path.display().to_string(),
            needed: end,
            found: bytes.len(),
        });
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Loads an IDX image/label file pair into samples.
///
/// Pixels are scaled to `[0, 1]`; labels become one-hot vectors over the
/// ten digit classes.
pub fn load_idx(image_path: impl AsRef<Path>, label_path: impl AsRef<Path>) -> Result<Vec<Sample>, DataError> {
    let image_path = image_path.as_ref();
    let label_path = label_path.as_ref();

    let img_bytes = read_file(image_path)?;
    let magic = read_be_u32(&img_bytes, 0, image_path)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(DataError::BadMagic {
            path: image_path.display().to_string(),
            got: magic,
            expected: IDX_IMAGE_MAGIC,
        });
    }
    let count = read_be_u32(&img_bytes, 4, image_path)? as usize;
    let rows = read_be_u32(&img_bytes, 8, image_path)? as usize;
    let cols = read_be_u32(&img_bytes, 12, image_path)? as usize;
    let needed = 16 + count * rows * cols;
    if img_bytes.len() < needed {
        return Err(DataError::Truncated {
            path: image_path.display().to_string(),
            needed,
            found: img_bytes.len(),
        });
    }

    let lbl_bytes = read_file(label_path)?;
    let magic = read_be_u32(&lbl_bytes, 0, label_path)?;
    if magic != IDX_LABEL_MAGIC {
        return Err(DataError::BadMagic {
            path: label_path.display().to_string(),
            got: magic,
            expected: IDX_LABEL_MAGIC,
        });
    }
    let label_count = read_be_u32(&lbl_bytes, 4, label_path)? as usize;
    if label_count != count {
        return Err(DataError::CountMismatch {
            images: count,
            labels: label_count,
        });
    }
    let needed = 8 + count;
    if lbl_bytes.len() < needed {
        return Err(DataError::Truncated {
            path: label_path.display().to_string(),
            needed,
            found: lbl_bytes.len(),
        });
    }

    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * rows * cols;
        let pixels: Vec<f64> = img_bytes[start..start + rows * cols]
            .iter()
            .map(|&b| f64::from(b) / 255.0)
            .collect();
        let digit = lbl_bytes[8 + i];
        if digit > 9 {
            return Err(DataError::BadLabel(digit));
        }
        samples.push(Sample::from_class(pixels, rows, cols, digit as usize, NUM_CLASSES)?);
    }
    Ok(samples)
}

/// Seeded disjoint train/validation subsample: shuffles the index space
/// and takes the first `train_n` samples for training and the next
/// `val_n` for validation.
pub fn split_train_validation(
    samples: &[Sample],
    train_n: usize,
    val_n: usize,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>), DataError> {
    if train_n == 0 || val_n == 0 || train_n + val_n > samples.len() {
        return Err(DataError::BadPartition {
            samples: samples.len(),
            clients: train_n + val_n,
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = seeds::stream_rng(seed, &[domain::SUBSAMPLE]);
    order.shuffle(&mut rng);
    let train = order[..train_n].iter().map(|&i| samples[i].clone()).collect();
    let val = order[train_n..train_n + val_n].iter().map(|&i| samples[i].clone()).collect();
    Ok((train, val))
}

/// Splits samples IID across `clients` shards: seeded shuffle, then equal
/// contiguous split with the remainder going to the last shard. Client ids
/// are 1-based.
pub fn partition_iid(samples: &[Sample], clients: usize, seed: u64) -> Result<Vec<Shard>, DataError> {
    if clients == 0 || clients > samples.len() {
        return Err(DataError::BadPartition {
            samples: samples.len(),
            clients,
        });
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = seeds::stream_rng(seed, &[domain::PARTITION]);
    order.shuffle(&mut rng);

    let base = samples.len() / clients;
    let mut shards = Vec::with_capacity(clients);
    let mut cursor = 0;
    for k in 1..=clients {
        let take = if k == clients { samples.len() - cursor } else { base };
        let chunk: Vec<Sample> = order[cursor..cursor + take]
            .iter()
            .map(|&i| samples[i].clone())
            .collect();
        cursor += take;
        shards.push(Shard::new(k, chunk)?);
    }
    Ok(shards)
}
