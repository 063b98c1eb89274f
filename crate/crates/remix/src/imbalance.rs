//! Class-imbalanced dataset construction plus the re-weighting and
//! re-sampling machinery built on effective numbers, with deferred
//! (train-plain-first) schedules.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mixing::ClassCounts;

/// Shape of the constructed imbalance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImbalanceKind {
    /// Class sizes decay exponentially from the first class to the last.
    LongTailed,
    /// A fraction `mu` of the classes (the trailing ones) are minority.
    Step,
}

impl std::fmt::Display for ImbalanceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ImbalanceKind::LongTailed => "longtail",
            ImbalanceKind::Step => "step",
        })
    }
}

impl std::str::FromStr for ImbalanceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "longtail" => Ok(ImbalanceKind::LongTailed),
            "step" => Ok(ImbalanceKind::Step),
            other => Err(Error::Parameter(format!("unknown imbalance kind: {other}"))),
        }
    }
}

/// Recipe for building imbalanced class sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImbalanceSpec {
    pub kind: ImbalanceKind,
    /// Imbalance ratio: largest class size over smallest, ≥ 1.
    pub rho: f64,
    /// Minority fraction for the step kind, in (0, 1). Ignored otherwise.
    pub mu: f64,
    /// Number of classes.
    pub classes: usize,
    /// Size of the largest class.
    pub n_max: usize,
}

impl ImbalanceSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Parameter(format!(
                "imbalance needs at least 2 classes, got {}",
                self.classes
            )));
        }
        if self.n_max < 1 {
            return Err(Error::Parameter("n_max must be at least 1".into()));
        }
        if !self.rho.is_finite() || self.rho < 1.0 {
            return Err(Error::Parameter(format!(
                "rho must be finite and at least 1, got {}",
                self.rho
            )));
        }
        if self.kind == ImbalanceKind::Step && !(self.mu > 0.0 && self.mu < 1.0) {
            return Err(Error::Parameter(format!(
                "mu must lie strictly inside (0, 1), got {}",
                self.mu
            )));
        }
        Ok(())
    }

    pub fn sizes(&self) -> Result<ClassCounts> {
        self.validate()?;
        match self.kind {
            ImbalanceKind::LongTailed => long_tailed_sizes(self.n_max, self.classes, self.rho),
            ImbalanceKind::Step => step_sizes(self.n_max, self.classes, self.rho, self.mu),
        }
    }
}

/// Exponentially decaying class sizes: `counts[i] = round(n_max ·
/// rho^(−i/(C−1)))`, clamped to at least 1 sample per class.
pub fn long_tailed_sizes(n_max: usize, classes: usize, rho: f64) -> Result<ClassCounts> {
    validate_size_params(n_max, classes, rho)?;
    let denom = (classes - 1) as f64;
    let counts = (0..classes)
        .map(|i| {
            let size = n_max as f64 * rho.powf(-(i as f64) / denom);
            (size.round() as usize).max(1)
        })
        .collect();
    ClassCounts::new(counts)
}

/// Two-level class sizes: the first `ceil((1−mu)·C)` classes get `n_max`,
/// the remaining `floor(mu·C)` get `round(n_max/rho)` (at least 1).
pub fn step_sizes(n_max: usize, classes: usize, rho: f64, mu: f64) -> Result<ClassCounts> {
    validate_size_params(n_max, classes, rho)?;
    if !(mu > 0.0 && mu < 1.0) {
        return Err(Error::Parameter(format!(
            "mu must lie strictly inside (0, 1), got {mu}"
        )));
    }
    let minority = (mu * classes as f64).floor() as usize;
    let majority = classes - minority;
    let small = ((n_max as f64 / rho).round() as usize).max(1);
    let counts = (0..classes)
        .map(|i| if i < majority { n_max } else { small })
        .collect();
    ClassCounts::new(counts)
}

fn validate_size_params(n_max: usize, classes: usize, rho: f64) -> Result<()> {
    if n_max < 1 {
        return Err(Error::Parameter("n_max must be at least 1".into()));
    }
    if classes < 2 {
        return Err(Error::Parameter(format!(
            "size construction needs at least 2 classes, got {classes}"
        )));
    }
    if !rho.is_finite() || rho < 1.0 {
        return Err(Error::Parameter(format!(
            "rho must be finite and at least 1, got {rho}"
        )));
    }
    Ok(())
}

/// Uniformly subsample `dataset` down to exactly `target` samples per
/// class, then shuffle the result. Deterministic given the stream.
pub fn subsample<R: Rng + ?Sized>(
    dataset: &Dataset,
    target: &ClassCounts,
    rng: &mut R,
) -> Result<Dataset> {
    if target.num_classes() != dataset.num_classes() {
        return Err(Error::Parameter(format!(
            "target covers {} classes but the dataset has {}",
            target.num_classes(),
            dataset.num_classes()
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); dataset.num_classes()];
    for (idx, sample) in dataset.samples.iter().enumerate() {
        by_class[sample.label].push(idx);
    }
    let mut chosen = Vec::with_capacity(target.total());
    for (class, members) in by_class.iter().enumerate() {
        let want = target.get(class)?;
        if members.len() < want {
            return Err(Error::Data(format!(
                "class {class} has {} samples, need {want}",
                members.len()
            )));
        }
        let picks = rand::seq::index::sample(rng, members.len(), want);
        chosen.extend(picks.iter().map(|p| members[p]));
    }
    chosen.shuffle(rng);
    Ok(Dataset {
        samples: chosen.iter().map(|&i| dataset.samples[i].clone()).collect(),
        class_names: dataset.class_names.clone(),
        feature_shape: dataset.feature_shape.clone(),
    })
}

/// Effective number of samples `(1 − beta^n) / (1 − beta)`.
pub fn effective_number(n: usize, beta: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::Parameter("sample count must be at least 1".into()));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Parameter(format!(
            "beta must lie in [0, 1), got {beta}"
        )));
    }
    Ok((1.0 - beta.powi(n as i32)) / (1.0 - beta))
}

/// Per-class re-weighting and re-sampling quantities derived from class
/// counts via effective numbers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub counts: ClassCounts,
    pub beta: f64,
    pub effective_numbers: Vec<f64>,
    /// Per-class loss weights, proportional to inverse effective numbers
    /// and normalized to mean 1.
    pub weights: Vec<f64>,
    /// Class-level draw probabilities such that each individual sample is
    /// drawn with probability proportional to its class's inverse
    /// effective number. Sums to 1.
    pub sample_probs: Vec<f64>,
}

/// Compute a [`ClassProfile`]. `beta` defaults to `(N−1)/N` with `N` the
/// total sample count unless overridden.
pub fn build_profile(counts: &ClassCounts, beta_override: Option<f64>) -> Result<ClassProfile> {
    let total = counts.total();
    let beta = match beta_override {
        Some(b) => {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Parameter(format!(
                    "beta must lie in [0, 1), got {b}"
                )));
            }
            b
        }
        None => (total - 1) as f64 / total as f64,
    };
    let effective_numbers: Vec<f64> = counts
        .as_slice()
        .iter()
        .map(|&n| effective_number(n, beta))
        .collect::<Result<_>>()?;
    let classes = counts.num_classes() as f64;
    let raw_weights: Vec<f64> = effective_numbers.iter().map(|e| 1.0 / e).collect();
    let weight_sum: f64 = raw_weights.iter().sum();
    let weights = raw_weights.iter().map(|w| w * classes / weight_sum).collect();
    let raw_probs: Vec<f64> = counts
        .as_slice()
        .iter()
        .zip(&effective_numbers)
        .map(|(&n, e)| n as f64 / e)
        .collect();
    let prob_sum: f64 = raw_probs.iter().sum();
    let sample_probs = raw_probs.iter().map(|p| p / prob_sum).collect();
    Ok(ClassProfile {
        counts: counts.clone(),
        beta,
        effective_numbers,
        weights,
        sample_probs,
    })
}

impl ClassProfile {
    /// Plain-text key/value report, one line per class.
    pub fn report(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "classes={} total={} beta={}",
            self.counts.num_classes(),
            self.counts.total(),
            self.beta
        );
        for (class, &count) in self.counts.as_slice().iter().enumerate() {
            let _ = writeln!(
                out,
                "class={class} count={count} effective_number={} weight={} sample_prob={}",
                self.effective_numbers[class], self.weights[class], self.sample_probs[class]
            );
        }
        out
    }
}

/// When the countermeasure kicks in and which one it is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeferMode {
    None,
    /// Deferred re-weighting: class weights multiply the loss after the
    /// boundary epoch.
    Drw,
    /// Deferred re-sampling: batches are drawn by `sample_probs` after the
    /// boundary epoch.
    Drs,
}

impl std::fmt::Display for DeferMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DeferMode::None => "none",
            DeferMode::Drw => "drw",
            DeferMode::Drs => "drs",
        })
    }
}

impl std::str::FromStr for DeferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(DeferMode::None),
            "drw" => Ok(DeferMode::Drw),
            "drs" => Ok(DeferMode::Drs),
            other => Err(Error::Parameter(format!("unknown defer mode: {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeferredSchedule {
    pub mode: DeferMode,
    /// First epoch of the deferred phase. Zero means no plain phase at all.
    pub phase_boundary_epoch: usize,
}

/// Training phase of an epoch under a deferred schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Erm,
    Deferred,
}

/// Plain phase iff the mode is `none` or the epoch lies before the
/// boundary.
pub fn schedule_phase(epoch: usize, schedule: &DeferredSchedule) -> Phase {
    if schedule.mode == DeferMode::None || epoch < schedule.phase_boundary_epoch {
        Phase::Erm
    } else {
        Phase::Deferred
    }
}

/// Draws dataset indices class-first: a class by `sample_probs`, then a
/// uniform member of that class. Needs an exclusively owned stream.
#[derive(Debug, Clone)]
pub struct WeightedClassSampler {
    cumulative: Vec<f64>,
    members: Vec<Vec<usize>>,
}

impl WeightedClassSampler {
    pub fn new(profile: &ClassProfile, labels: &[usize]) -> Result<Self> {
        let classes = profile.counts.num_classes();
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes];
        for (idx, &label) in labels.iter().enumerate() {
            if label >= classes {
                return Err(Error::ClassIndex {
                    index: label,
                    classes,
                });
            }
            members[label].push(idx);
        }
        for (class, m) in members.iter().enumerate() {
            if m.len() != profile.counts.get(class)? {
                return Err(Error::Data(format!(
                    "class {class} has {} labeled samples but the profile says {}",
                    m.len(),
                    profile.counts.get(class)?
                )));
            }
        }
        let mut cumulative = Vec::with_capacity(classes);
        let mut acc = 0.0;
        for &p in &profile.sample_probs {
            acc += p;
            cumulative.push(acc);
        }
        // Guard the tail against float drift so every draw lands in range.
        if let Some(last) = cumulative.last_mut() {
            *last = 1.0;
        }
        Ok(WeightedClassSampler {
            cumulative,
            members,
        })
    }

    /// Draw one dataset index.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let class = self.cumulative.partition_point(|&c| c <= u);
        let members = &self.members[class.min(self.members.len() - 1)];
        members[rng.random_range(0..members.len())]
    }
}
