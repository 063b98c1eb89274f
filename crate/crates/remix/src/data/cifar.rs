//! CIFAR-10 binary ingestion and light image augmentation.
//!
//! Each record is one label byte followed by 3072 pixel bytes laid out
//! channel-major (1024 red, 1024 green, 1024 blue, each a row-major 32×32
//! plane). Pixels are scaled to `[0, 1]` and then normalized per channel
//! with the usual fixed constants.

use std::fs;
use std::path::Path;

use rand::Rng;

use crate::data::{Dataset, LabeledSample};
use crate::error::{Error, Result};

pub const CIFAR10_WIDTH: usize = 32;
pub const CIFAR10_HEIGHT: usize = 32;
pub const CIFAR10_CHANNELS: usize = 3;
pub const CIFAR10_RECORD_BYTES: usize = 1 + CIFAR10_CHANNELS * CIFAR10_WIDTH * CIFAR10_HEIGHT;

/// Per-channel normalization constants applied after scaling to `[0, 1]`.
pub const CIFAR10_MEANS: [f64; 3] = [0.4914, 0.4822, 0.4465];
pub const CIFAR10_STDS: [f64; 3] = [0.2470, 0.2435, 0.2616];

pub const CIFAR10_CLASS_NAMES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Training batch files inside a CIFAR-10 binary directory.
const TRAIN_BATCH_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];

/// Load CIFAR-10 binary data. A file path loads that single batch file; a
/// directory path loads the five standard training batches in order.
pub fn load_cifar10_binary(path: &Path) -> Result<Dataset> {
    let mut samples = Vec::new();
    if path.is_dir() {
        for name in TRAIN_BATCH_FILES {
            parse_batch_file(&path.join(name), &mut samples)?;
        }
    } else {
        parse_batch_file(path, &mut samples)?;
    }
    Ok(Dataset {
        samples,
        class_names: CIFAR10_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        feature_shape: vec![CIFAR10_CHANNELS, CIFAR10_HEIGHT, CIFAR10_WIDTH],
    })
}

fn parse_batch_file(path: &Path, samples: &mut Vec<LabeledSample>) -> Result<()> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let plane = CIFAR10_WIDTH * CIFAR10_HEIGHT;
    let mut offset = 0usize;
    while offset < bytes.len() {
        if offset + CIFAR10_RECORD_BYTES > bytes.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: offset as u64,
                message: format!(
                    "partial record: {} bytes left, each record is {CIFAR10_RECORD_BYTES}",
                    bytes.len() - offset
                ),
            });
        }
        let label = bytes[offset] as usize;
        if label >= CIFAR10_CLASS_NAMES.len() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                offset: offset as u64,
                message: format!("label byte {label} outside the valid range 0-9"),
            });
        }
        let pixels = &bytes[offset + 1..offset + CIFAR10_RECORD_BYTES];
        let features = pixels
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let channel = i / plane;
                (b as f64 / 255.0 - CIFAR10_MEANS[channel]) / CIFAR10_STDS[channel]
            })
            .collect();
        samples.push(LabeledSample { features, label });
        offset += CIFAR10_RECORD_BYTES;
    }
    Ok(())
}

/// Mirror a channel-major image left to right.
pub fn flip_horizontal(features: &[f64], width: usize, height: usize) -> Result<Vec<f64>> {
    let channels = check_image_shape(features.len(), width, height)?;
    let mut out = vec![0.0; features.len()];
    for c in 0..channels {
        for y in 0..height {
            let row = (c * height + y) * width;
            for x in 0..width {
                out[row + x] = features[row + (width - 1 - x)];
            }
        }
    }
    Ok(out)
}

/// Zero-pad a channel-major image by `pad` on every side, then crop a
/// window of the original size with its top-left corner at `(dx, dy)` in
/// padded coordinates.
pub fn pad_crop(
    features: &[f64],
    width: usize,
    height: usize,
    pad: usize,
    dx: usize,
    dy: usize,
) -> Result<Vec<f64>> {
    let channels = check_image_shape(features.len(), width, height)?;
    if dx > 2 * pad || dy > 2 * pad {
        return Err(Error::Parameter(format!(
            "crop corner ({dx}, {dy}) outside the padded range 0..={}",
            2 * pad
        )));
    }
    let mut out = vec![0.0; features.len()];
    for c in 0..channels {
        for y in 0..height {
            // Padded row y + dy corresponds to source row y + dy − pad.
            let src_y = (y + dy).checked_sub(pad);
            for x in 0..width {
                let src_x = (x + dx).checked_sub(pad);
                let value = match (src_y, src_x) {
                    (Some(sy), Some(sx)) if sy < height && sx < width => {
                        features[(c * height + sy) * width + sx]
                    }
                    _ => 0.0,
                };
                out[(c * height + y) * width + x] = value;
            }
        }
    }
    Ok(out)
}

/// Standard light augmentation: a fair-coin horizontal flip followed by a
/// `pad`-pixel pad-and-crop at a uniformly random corner. Always consumes
/// one boolean and two corner draws from `rng`.
pub fn augment_image(
    features: &[f64],
    width: usize,
    height: usize,
    pad: usize,
    rng: &mut impl Rng,
) -> Result<Vec<f64>> {
    check_image_shape(features.len(), width, height)?;
    let flip = rng.random_bool(0.5);
    let dx = rng.random_range(0..=2 * pad);
    let dy = rng.random_range(0..=2 * pad);
    let flipped;
    let source = if flip {
        flipped = flip_horizontal(features, width, height)?;
        &flipped
    } else {
        features
    };
    pad_crop(source, width, height, pad, dx, dy)
}

fn check_image_shape(len: usize, width: usize, height: usize) -> Result<usize> {
    let plane = width * height;
    if plane == 0 || len == 0 || !len.is_multiple_of(plane) {
        return Err(Error::Dimension(format!(
            "{len} features do not form {width}×{height} planes"
        )));
    }
    Ok(len / plane)
}
