//! Toy 2D dataset generators and shared dataset plumbing.
//!
//! The generators reproduce the familiar reference shapes: two interleaving
//! moons, two concentric circles, and two Gaussian blobs. All of them are
//! deterministic given the caller's random stream and emit exactly
//! `n_per_class` points per class, class 0 first.

pub mod cifar;

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// One example: a feature vector and its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// A labeled dataset with class names and the logical feature shape
/// (e.g. `[2]` for the toy sets, `[3, 32, 32]` for images).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<LabeledSample>,
    pub class_names: Vec<String>,
    pub feature_shape: Vec<usize>,
}

impl Dataset {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Flattened feature length implied by `feature_shape`.
    pub fn feature_len(&self) -> usize {
        self.feature_shape.iter().product()
    }

    /// Per-class sample counts, indexed by label.
    pub fn class_counts(&self) -> Result<Vec<usize>> {
        let classes = self.num_classes();
        let mut counts = vec![0usize; classes];
        for s in &self.samples {
            *counts.get_mut(s.label).ok_or(Error::ClassIndex {
                index: s.label,
                classes,
            })? += 1;
        }
        Ok(counts)
    }

    /// Check every sample against the declared shape and class count.
    pub fn validate(&self) -> Result<()> {
        if self.class_names.is_empty() {
            return Err(Error::Data("dataset declares no classes".into()));
        }
        let want = self.feature_len();
        for (i, s) in self.samples.iter().enumerate() {
            if s.features.len() != want {
                return Err(Error::Dimension(format!(
                    "sample {i} has {} features, shape implies {want}",
                    s.features.len()
                )));
            }
            if s.label >= self.num_classes() {
                return Err(Error::ClassIndex {
                    index: s.label,
                    classes: self.num_classes(),
                });
            }
            if s.features.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("sample {i} has a non-finite feature")));
            }
        }
        Ok(())
    }
}

fn check_generator_params(n_per_class: usize, noise_sd: f64) -> Result<()> {
    if n_per_class == 0 {
        return Err(Error::Parameter("n_per_class must be at least 1".into()));
    }
    if !noise_sd.is_finite() || noise_sd < 0.0 {
        return Err(Error::Parameter(format!(
            "noise_sd must be finite and nonnegative, got {noise_sd}"
        )));
    }
    Ok(())
}

fn two_class_dataset(samples: Vec<LabeledSample>) -> Dataset {
    Dataset {
        samples,
        class_names: vec!["class0".into(), "class1".into()],
        feature_shape: vec![2],
    }
}

/// Two interleaving half-circles of unit radius, the second offset by
/// `(1, −0.5)`, with Gaussian noise of `noise_sd` per coordinate.
pub fn make_two_moons(
    n_per_class: usize,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    check_generator_params(n_per_class, noise_sd)?;
    let angle = |k: usize| {
        if n_per_class == 1 {
            0.0
        } else {
            PI * k as f64 / (n_per_class - 1) as f64
        }
    };
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for k in 0..n_per_class {
        let t = angle(k);
        samples.push(noisy_point(t.cos(), t.sin(), 0, noise_sd, rng));
    }
    for k in 0..n_per_class {
        let t = angle(k);
        samples.push(noisy_point(1.0 - t.cos(), 0.5 - t.sin(), 1, noise_sd, rng));
    }
    Ok(two_class_dataset(samples))
}

/// Two concentric circles of radius 1.0 (class 0) and 0.5 (class 1) with
/// Gaussian noise of `noise_sd` per coordinate.
pub fn make_two_circles(
    n_per_class: usize,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    check_generator_params(n_per_class, noise_sd)?;
    let angle = |k: usize| TAU * k as f64 / n_per_class as f64;
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for k in 0..n_per_class {
        let t = angle(k);
        samples.push(noisy_point(t.cos(), t.sin(), 0, noise_sd, rng));
    }
    for k in 0..n_per_class {
        let t = angle(k);
        samples.push(noisy_point(0.5 * t.cos(), 0.5 * t.sin(), 1, noise_sd, rng));
    }
    Ok(two_class_dataset(samples))
}

/// Two isotropic Gaussian blobs with standard deviation 0.4 centered at
/// `(−1, −1)` and `(1, 1)`, plus extra Gaussian noise of `noise_sd` per
/// coordinate.
pub fn make_two_blobs(
    n_per_class: usize,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> Result<Dataset> {
    check_generator_params(n_per_class, noise_sd)?;
    const BLOB_SD: f64 = 0.4;
    let mut samples = Vec::with_capacity(2 * n_per_class);
    for (label, center) in [(0usize, -1.0), (1usize, 1.0)] {
        for _ in 0..n_per_class {
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = rng.sample(StandardNormal);
            samples.push(noisy_point(
                center + BLOB_SD * gx,
                center + BLOB_SD * gy,
                label,
                noise_sd,
                rng,
            ));
        }
    }
    Ok(two_class_dataset(samples))
}

fn noisy_point(
    x: f64,
    y: f64,
    label: usize,
    noise_sd: f64,
    rng: &mut impl Rng,
) -> LabeledSample {
    let nx: f64 = rng.sample(StandardNormal);
    let ny: f64 = rng.sample(StandardNormal);
    LabeledSample {
        features: vec![x + noise_sd * nx, y + noise_sd * ny],
        label,
    }
}

/// Export a 2D dataset as `x1,x2,label` CSV rows for external plotting.
pub fn write_xy_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    if dataset.feature_len() != 2 {
        return Err(Error::Parameter(format!(
            "CSV export needs 2D features, shape is {:?}",
            dataset.feature_shape
        )));
    }
    let mut out = String::from("x1,x2,label\n");
    for s in &dataset.samples {
        out.push_str(&format!("{},{},{}\n", s.features[0], s.features[1], s.label));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
