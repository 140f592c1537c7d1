//! Test and demo fixtures: a valid-IDX file writer and a deterministic
//! synthetic digit-style dataset.
//!
//! The synthetic generator renders ten fixed per-class glyphs (seeded
//! low-frequency masks) and perturbs each sample with a random shift,
//! intensity jitter, and salt-and-pepper pixel noise. The result is a
//! learnable 10-class image problem with enough within-class variation
//! that channel corruption shows up as an accuracy loss.

use std::fs;
use std::io;
use std::path::Path;

use rand::Rng;

use crate::seeds::{self, domain};

/// Writes an IDX image/label file pair. Each image is `rows * cols` raw
/// bytes; labels are one byte each.
pub fn write_idx(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    images: &[Vec<u8>],
    rows: u32,
    cols: u32,
    labels: &[u8],
) -> io::Result<()> {
    assert_eq!(images.len(), labels.len(), "image/label counts must match");
    for img in images {
        assert_eq!(img.len(), (rows * cols) as usize, "image size must be rows*cols");
    }

    let mut img_bytes = Vec::with_capacity(16 + images.len() * (rows * cols) as usize);
    img_bytes.extend_from_slice(&crate::data::IDX_IMAGE_MAGIC.to_be_bytes());
    img_bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    img_bytes.extend_from_slice(&rows.to_be_bytes());
    img_bytes.extend_from_slice(&cols.to_be_bytes());
    for img in images {
        img_bytes.extend_from_slice(img);
    }
    fs::write(image_path, img_bytes)?;

    let mut lbl_bytes = Vec::with_capacity(8 + labels.len());
    lbl_bytes.extend_from_slice(&crate::data::IDX_LABEL_MAGIC.to_be_bytes());
    lbl_bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lbl_bytes.extend_from_slice(labels);
    fs::write(label_path, lbl_bytes)?;
    Ok(())
}

/// A generated image set with its labels.
pub struct SyntheticSet {
    pub images: Vec<Vec<u8>>,
    pub labels: Vec<u8>,
    pub rows: u32,
    pub cols: u32,
}

const GLYPH_COARSE: usize = 7;
const SHIFT_MAX: i32 = 4;
const PIXEL_NOISE_PROB: f64 = 0.3;

fn class_glyph(seed: u64, class: usize, rows: usize, cols: usize) -> Vec<u8> {
    let mut rng = seeds::stream_rng(seed, &[domain::FIXTURE, 1, class as u64]);
    // Low-frequency boolean mask upsampled to full resolution.
    let coarse: Vec<bool> = (0..GLYPH_COARSE * GLYPH_COARSE)
        .map(|_| rng.random::<f64>() < 0.4)
        .collect();
    let mut glyph = vec![0u8; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            let cr = r * GLYPH_COARSE / rows;
            let cc = c * GLYPH_COARSE / cols;
            if coarse[cr * GLYPH_COARSE + cc] {
                glyph[r * cols + c] = 255;
            }
        }
    }
    glyph
}

/// Generates `count` samples of a deterministic 10-class image problem.
/// Classes cycle `0, 1, ..., 9, 0, ...` so any prefix is nearly balanced.
pub fn synthetic_digits(count: usize, rows: u32, cols: u32, seed: u64) -> SyntheticSet {
    let (r, c) = (rows as usize, cols as usize);
    let glyphs: Vec<Vec<u8>> = (0..10).map(|cls| class_glyph(seed, cls, r, c)).collect();

    let mut images = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % 10;
        let mut rng = seeds::stream_rng(seed, &[domain::FIXTURE, 2, i as u64]);
        let dx = rng.random_range(-SHIFT_MAX..=SHIFT_MAX);
        let dy = rng.random_range(-SHIFT_MAX..=SHIFT_MAX);
        let gain: f64 = rng.random_range(0.7..=1.0);

        let glyph = &glyphs[class];
        let mut img = vec![0u8; r * c];
        for row in 0..r as i32 {
            for col in 0..c as i32 {
                let (sr, sc) = (row - dy, col - dx);
                let value = if sr >= 0 && sr < r as i32 && sc >= 0 && sc < c as i32 {
                    f64::from(glyph[(sr as usize) * c + sc as usize]) * gain
                } else {
                    0.0
                };
                img[(row as usize) * c + col as usize] = value.round() as u8;
            }
        }
        for px in img.iter_mut() {
            if rng.random::<f64>() < PIXEL_NOISE_PROB {
                *px = rng.random_range(0..=255);
            }
        }
        images.push(img);
        labels.push(class as u8);
    }

    SyntheticSet { images, labels, rows, cols }
}

/// Writes a synthetic dataset straight to an IDX file pair.
pub fn write_synthetic_idx(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
    count: usize,
    rows: u32,
    cols: u32,
    seed: u64,
) -> io::Result<()> {
    let set = synthetic_digits(count, rows, cols, seed);
    write_idx(image_path, label_path, &set.images, set.rows, set.cols, &set.labels)
}
