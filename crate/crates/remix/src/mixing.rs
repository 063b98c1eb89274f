//! Pair-mixing operators: mixup, cutmix, manifold mixup, and their
//! imbalance-aware remix variants.
//!
//! All operators interpolate a pair of samples. The plain variants couple
//! the feature factor and the label factor; the remix variants decouple
//! them: when one side of a pair outnumbers the other by at least `kappa`
//! and the draw is lopsided enough (threshold `tau`), the mixed label is
//! handed entirely to the minority side. Everything here is a pure function
//! of its arguments plus an explicitly passed random stream.

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::data::LabeledSample;
use crate::error::{Error, Result};

/// Feature- and label-space mixing factors for one pair.
///
/// Non-remix methods always produce `lambda_y == lambda_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixFactor {
    pub lambda_x: f64,
    pub lambda_y: f64,
}

/// Probability vector over classes; the target emitted by every mixing
/// operator. Hard labels embed as one-hot vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftLabel {
    probs: Vec<f64>,
}

impl SoftLabel {
    /// One-hot label for `class` out of `classes`.
    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return Err(Error::ClassIndex {
                index: class,
                classes,
            });
        }
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Ok(SoftLabel { probs })
    }

    /// Wrap an explicit probability vector. Entries must be finite,
    /// nonnegative, and sum to 1 within 1e-9.
    pub fn from_probs(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Parameter("soft label needs at least one class".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Parameter(
                "soft label entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "soft label entries sum to {sum}, expected 1"
            )));
        }
        Ok(SoftLabel { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn num_classes(&self) -> usize {
        self.probs.len()
    }

    /// True when entries are nonnegative and sum to 1 within 1e-9.
    pub fn is_normalized(&self) -> bool {
        let sum: f64 = self.probs.iter().sum();
        self.probs.iter().all(|p| p.is_finite() && *p >= 0.0) && (sum - 1.0).abs() <= 1e-9
    }
}

/// Per-class sample counts of a training set. Every count is at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounts {
    counts: Vec<usize>,
}

impl ClassCounts {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Parameter("class counts must be nonempty".into()));
        }
        if let Some(i) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Parameter(format!("class {i} has zero samples")));
        }
        Ok(ClassCounts { counts })
    }

    pub fn get(&self, class: usize) -> Result<usize> {
        self.counts.get(class).copied().ok_or(Error::ClassIndex {
            index: class,
            classes: self.counts.len(),
        })
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.counts
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Largest class size divided by smallest, always ≥ 1.
    pub fn imbalance_ratio(&self) -> f64 {
        let max = *self.counts.iter().max().expect("nonempty");
        let min = *self.counts.iter().min().expect("nonempty");
        max as f64 / min as f64
    }
}

/// Axis-aligned rectangle selecting the donor patch of a cutmix pair.
/// The stored rectangle always lies fully inside the image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CutMask {
    pub x0: usize,
    pub y0: usize,
    pub width: usize,
    pub height: usize,
    pub image_w: usize,
    pub image_h: usize,
}

impl CutMask {
    /// Share of image pixels inside the rectangle.
    pub fn masked_fraction(&self) -> f64 {
        (self.width * self.height) as f64 / (self.image_w * self.image_h) as f64
    }

    /// Share of pixels kept from the first image: `1 − masked_fraction`.
    /// Cutmix label mixing must use this value, not the drawn factor.
    pub fn effective_lambda(&self) -> f64 {
        1.0 - self.masked_fraction()
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x0 + self.width && y >= self.y0 && y < self.y0 + self.height
    }
}

/// The six supported mixing methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixMethod {
    Mixup,
    Remix,
    CutMix,
    RemixCutMix,
    ManifoldMixup,
    RemixManifold,
}

impl MixMethod {
    /// Methods that decouple the label factor from the feature factor.
    pub fn is_remix(self) -> bool {
        matches!(
            self,
            MixMethod::Remix | MixMethod::RemixCutMix | MixMethod::RemixManifold
        )
    }

    /// Methods that mix by pasting a rectangular patch.
    pub fn is_cutmix(self) -> bool {
        matches!(self, MixMethod::CutMix | MixMethod::RemixCutMix)
    }

    /// Methods that mix hidden activations instead of inputs.
    pub fn is_manifold(self) -> bool {
        matches!(self, MixMethod::ManifoldMixup | MixMethod::RemixManifold)
    }

    pub fn name(self) -> &'static str {
        match self {
            MixMethod::Mixup => "mixup",
            MixMethod::Remix => "remix",
            MixMethod::CutMix => "cutmix",
            MixMethod::RemixCutMix => "remix_cutmix",
            MixMethod::ManifoldMixup => "manifold_mixup",
            MixMethod::RemixManifold => "remix_manifold",
        }
    }
}

impl std::fmt::Display for MixMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for MixMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixup" => Ok(MixMethod::Mixup),
            "remix" => Ok(MixMethod::Remix),
            "cutmix" => Ok(MixMethod::CutMix),
            "remix_cutmix" => Ok(MixMethod::RemixCutMix),
            "manifold_mixup" => Ok(MixMethod::ManifoldMixup),
            "remix_manifold" => Ok(MixMethod::RemixManifold),
            other => Err(Error::Parameter(format!("unknown mixing method: {other}"))),
        }
    }
}

/// Hyperparameters consumed by [`make_mixed_batch`].
#[derive(Debug, Clone, PartialEq)]
pub struct MixParams {
    /// Beta-distribution concentration for the feature factor draw.
    pub alpha: f64,
    /// Relabeling threshold on the feature factor, in `[0, 1]`. Zero
    /// disables relabeling and the remix methods degenerate to their base
    /// methods.
    pub tau: f64,
    /// Count ratio at which one pair member counts as the majority, ≥ 1.
    pub kappa: f64,
    /// Draw a fresh feature factor per pair instead of once per batch.
    pub per_pair_lambda: bool,
    /// Number of mix-eligible depths for the manifold methods; depth 0 is
    /// the raw input and each hidden activation adds one more.
    pub eligible_layers: usize,
    /// Image extent `(width, height)`, required by the cutmix methods.
    pub image_wh: Option<(usize, usize)>,
}

impl Default for MixParams {
    fn default() -> Self {
        MixParams {
            alpha: 1.0,
            tau: 0.5,
            kappa: 3.0,
            per_pair_lambda: false,
            eligible_layers: 1,
            image_wh: None,
        }
    }
}

impl MixParams {
    pub fn validate(&self, method: MixMethod) -> Result<()> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::Parameter(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Parameter(format!(
                "tau must lie in [0, 1], got {}",
                self.tau
            )));
        }
        if !self.kappa.is_finite() || self.kappa < 1.0 {
            return Err(Error::Parameter(format!(
                "kappa must be finite and at least 1, got {}",
                self.kappa
            )));
        }
        if method.is_cutmix() {
            match self.image_wh {
                Some((w, h)) if w >= 1 && h >= 1 => {}
                Some(_) => {
                    return Err(Error::Parameter(
                        "cutmix image extent must be at least 1x1".into(),
                    ))
                }
                None => {
                    return Err(Error::Parameter(
                        "cutmix methods need an image extent".into(),
                    ))
                }
            }
        }
        if method.is_manifold() && self.eligible_layers == 0 {
            return Err(Error::Parameter(
                "manifold methods need at least one eligible layer".into(),
            ));
        }
        Ok(())
    }
}

/// One premixed training example: mixed features plus a soft target.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExample {
    pub features: Vec<f64>,
    pub label: SoftLabel,
}

/// Instructions for mixing hidden activations during the forward pass.
/// Labels are already final; only the features remain to be mixed, at the
/// recorded depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DeferredMixBatch {
    /// Index pairs into the caller's batch, in emission order.
    pub pairs: Vec<(usize, usize)>,
    /// Feature mixing factor per pair. All entries are equal unless the
    /// per-pair draw option is on.
    pub lambdas: Vec<f64>,
    /// Soft target per pair.
    pub labels: Vec<SoftLabel>,
    /// Mix depth: 0 mixes raw inputs, k mixes the activation after the
    /// k-th linear layer.
    pub layer: usize,
}

/// Output of [`make_mixed_batch`]: either ready-to-train examples or a
/// deferred instruction for the manifold methods.
#[derive(Debug, Clone, PartialEq)]
pub enum MixedBatch {
    Premixed(Vec<MixedExample>),
    Deferred(DeferredMixBatch),
}

/// Draw one feature mixing factor from Beta(alpha, alpha).
pub fn sample_lambda<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    if !alpha.is_finite() || alpha <= 0.0 {
        return Err(Error::Parameter(format!(
            "alpha must be positive and finite, got {alpha}"
        )));
    }
    let beta = Beta::new(alpha, alpha)
        .map_err(|e| Error::Parameter(format!("Beta({alpha}, {alpha}): {e}")))?;
    Ok(beta.sample(rng))
}

/// Elementwise convex combination `lambda_x · x_i + (1 − lambda_x) · x_j`.
///
/// Computed in lerp form so mixing a vector with itself returns it
/// bit-for-bit; the `lambda_x = 1` endpoint is pinned explicitly for the
/// same guarantee.
pub fn mix_features(x_i: &[f64], x_j: &[f64], lambda_x: f64) -> Result<Vec<f64>> {
    if x_i.len() != x_j.len() {
        return Err(Error::Dimension(format!(
            "cannot mix features of lengths {} and {}",
            x_i.len(),
            x_j.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda_x) {
        return Err(Error::Parameter(format!(
            "lambda_x must lie in [0, 1], got {lambda_x}"
        )));
    }
    if lambda_x == 1.0 {
        return Ok(x_i.to_vec());
    }
    Ok(x_i
        .iter()
        .zip(x_j)
        .map(|(a, b)| b + lambda_x * (a - b))
        .collect())
}

/// Mix two hard labels into a soft one: mass `lambda_y` on `y_i` and
/// `1 − lambda_y` on `y_j`. Equal labels collapse to an exact one-hot.
pub fn mix_labels(y_i: usize, y_j: usize, lambda_y: f64, classes: usize) -> Result<SoftLabel> {
    if y_i >= classes {
        return Err(Error::ClassIndex {
            index: y_i,
            classes,
        });
    }
    if y_j >= classes {
        return Err(Error::ClassIndex {
            index: y_j,
            classes,
        });
    }
    if !(0.0..=1.0).contains(&lambda_y) {
        return Err(Error::Parameter(format!(
            "lambda_y must lie in [0, 1], got {lambda_y}"
        )));
    }
    if y_i == y_j {
        return SoftLabel::one_hot(y_i, classes);
    }
    let mut probs = vec![0.0; classes];
    probs[y_i] = lambda_y;
    probs[y_j] = 1.0 - lambda_y;
    Ok(SoftLabel { probs })
}

/// True iff sample counts satisfy `n_i / n_j ≥ kappa`, in real arithmetic.
pub fn is_kappa_majority(n_i: usize, n_j: usize, kappa: f64) -> bool {
    n_i as f64 / n_j as f64 >= kappa
}

/// Label mixing factor of the remix rule.
///
/// Returns 0 when the first pair member is the κ-majority and
/// `lambda_x < tau`; returns 1 when it is the κ-minority and
/// `1 − lambda_x < tau`; otherwise passes `lambda_x` through. The
/// comparisons are exactly these (inclusive ratio bounds, strict
/// threshold), so a tie at `lambda_x == tau` falls through.
pub fn remix_label_factor(lambda_x: f64, n_i: usize, n_j: usize, tau: f64, kappa: f64) -> f64 {
    let ratio = n_i as f64 / n_j as f64;
    if ratio >= kappa && lambda_x < tau {
        0.0
    } else if ratio <= 1.0 / kappa && (1.0 - lambda_x) < tau {
        1.0
    } else {
        lambda_x
    }
}

/// Sample the donor rectangle for a cutmix pair.
///
/// The nominal extent is `round(W·√(1−λ)) × round(H·√(1−λ))`; the rectangle
/// is placed uniformly among all fully in-bounds positions, so the stored
/// mask is never clipped and its area fraction equals the nominal one. In
/// particular `lambda_x = 0` always yields the full-image mask.
pub fn sample_cut_mask<R: Rng + ?Sized>(
    image_w: usize,
    image_h: usize,
    lambda_x: f64,
    rng: &mut R,
) -> Result<CutMask> {
    if image_w == 0 || image_h == 0 {
        return Err(Error::Parameter(format!(
            "image extent must be at least 1x1, got {image_w}x{image_h}"
        )));
    }
    if !(0.0..=1.0).contains(&lambda_x) {
        return Err(Error::Parameter(format!(
            "lambda_x must lie in [0, 1], got {lambda_x}"
        )));
    }
    let side = (1.0 - lambda_x).sqrt();
    let width = ((image_w as f64 * side).round() as usize).min(image_w);
    let height = ((image_h as f64 * side).round() as usize).min(image_h);
    let x0 = rng.random_range(0..=image_w - width);
    let y0 = rng.random_range(0..=image_h - height);
    Ok(CutMask {
        x0,
        y0,
        width,
        height,
        image_w,
        image_h,
    })
}

/// Paste the mask rectangle of `x_j` onto `x_i`.
///
/// Images are flat channel-major tensors (`[C, H, W]` row-major); the
/// feature length must be a multiple of the mask's image area.
pub fn apply_cut_mask(x_i: &[f64], x_j: &[f64], mask: &CutMask) -> Result<Vec<f64>> {
    if x_i.len() != x_j.len() {
        return Err(Error::Dimension(format!(
            "cannot mix images of lengths {} and {}",
            x_i.len(),
            x_j.len()
        )));
    }
    let plane = mask.image_w * mask.image_h;
    if plane == 0 || !x_i.len().is_multiple_of(plane) || x_i.is_empty() {
        return Err(Error::Dimension(format!(
            "feature length {} is not a multiple of the {}x{} image plane",
            x_i.len(),
            mask.image_w,
            mask.image_h
        )));
    }
    let channels = x_i.len() / plane;
    let mut out = x_i.to_vec();
    for c in 0..channels {
        for y in mask.y0..mask.y0 + mask.height {
            let row = c * plane + y * mask.image_w + mask.x0;
            out[row..row + mask.width].copy_from_slice(&x_j[row..row + mask.width]);
        }
    }
    Ok(out)
}

/// Mix one batch of paired samples.
///
/// `pairs` holds index pairs into `samples`. One feature factor is drawn
/// per batch (before the per-pair loop) unless the per-pair option is on.
/// Plain methods reuse the feature factor for labels; remix methods pass it
/// through [`remix_label_factor`] with the pair's class counts. Cutmix
/// methods label with the exact area-based factor of the sampled mask. The
/// manifold methods return a deferred instruction with a uniformly chosen
/// mix depth instead of premixed features.
pub fn make_mixed_batch<R: Rng + ?Sized>(
    samples: &[&LabeledSample],
    pairs: &[(usize, usize)],
    method: MixMethod,
    counts: &ClassCounts,
    params: &MixParams,
    rng: &mut R,
) -> Result<MixedBatch> {
    params.validate(method)?;
    if pairs.is_empty() {
        return Err(Error::Parameter("cannot mix an empty batch".into()));
    }
    for &(i, j) in pairs {
        if i >= samples.len() || j >= samples.len() {
            return Err(Error::Parameter(format!(
                "pair ({i}, {j}) exceeds batch size {}",
                samples.len()
            )));
        }
    }
    let classes = counts.num_classes();
    let batch_lambda = if params.per_pair_lambda {
        None
    } else {
        Some(sample_lambda(params.alpha, rng)?)
    };

    if method.is_manifold() {
        let layer = rng.random_range(0..params.eligible_layers);
        let mut lambdas = Vec::with_capacity(pairs.len());
        let mut labels = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            let lambda_x = match batch_lambda {
                Some(l) => l,
                None => sample_lambda(params.alpha, rng)?,
            };
            let factor = pair_factor(method, lambda_x, samples[i], samples[j], counts, params)?;
            labels.push(mix_labels(
                samples[i].label,
                samples[j].label,
                factor.lambda_y,
                classes,
            )?);
            lambdas.push(factor.lambda_x);
        }
        return Ok(MixedBatch::Deferred(DeferredMixBatch {
            pairs: pairs.to_vec(),
            lambdas,
            labels,
            layer,
        }));
    }

    let mut out = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let lambda_x = match batch_lambda {
            Some(l) => l,
            None => sample_lambda(params.alpha, rng)?,
        };
        let (x_i, x_j) = (&samples[i].features, &samples[j].features);
        let (features, factor) = if method.is_cutmix() {
            let (w, h) = params.image_wh.expect("validated above");
            let mask = sample_cut_mask(w, h, lambda_x, rng)?;
            let factor = pair_factor(
                method,
                mask.effective_lambda(),
                samples[i],
                samples[j],
                counts,
                params,
            )?;
            (apply_cut_mask(x_i, x_j, &mask)?, factor)
        } else {
            let factor = pair_factor(method, lambda_x, samples[i], samples[j], counts, params)?;
            (mix_features(x_i, x_j, lambda_x)?, factor)
        };
        out.push(MixedExample {
            features,
            label: mix_labels(samples[i].label, samples[j].label, factor.lambda_y, classes)?,
        });
    }
    Ok(MixedBatch::Premixed(out))
}

/// Resolve the label factor for one pair given its feature factor (for
/// cutmix methods the area-effective one).
fn pair_factor(
    method: MixMethod,
    lambda_x: f64,
    sample_i: &LabeledSample,
    sample_j: &LabeledSample,
    counts: &ClassCounts,
    params: &MixParams,
) -> Result<MixFactor> {
    let lambda_y = if method.is_remix() {
        let n_i = counts.get(sample_i.label)?;
        let n_j = counts.get(sample_j.label)?;
        remix_label_factor(lambda_x, n_i, n_j, params.tau, params.kappa)
    } else {
        counts.get(sample_i.label)?;
        counts.get(sample_j.label)?;
        lambda_x
    };
    Ok(MixFactor { lambda_x, lambda_y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, stream};
    use proptest::prelude::*;

    fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
        stream_rng(seed, stream::TRAIN_LOOP)
    }

    fn sample(features: Vec<f64>, label: usize) -> LabeledSample {
        LabeledSample { features, label }
    }

    #[test]
    fn sample_lambda_uniform_mean() {
        let mut r = rng(1);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_lambda(1.0, &mut r).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sample_lambda_symmetric_mean_small_alpha() {
        let mut r = rng(2);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_lambda(0.4, &mut r).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sample_lambda_deterministic() {
        let a: Vec<f64> = {
            let mut r = rng(3);
            (0..64).map(|_| sample_lambda(0.7, &mut r).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut r = rng(3);
            (0..64).map(|_| sample_lambda(0.7, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn sample_lambda_rejects_bad_alpha() {
        let mut r = rng(4);
        assert!(sample_lambda(0.0, &mut r).is_err());
        assert!(sample_lambda(-1.0, &mut r).is_err());
        assert!(sample_lambda(f64::NAN, &mut r).is_err());
    }

    #[test]
    fn mix_features_endpoints_exact() {
        let a = vec![0.1, -2.5, 7.0];
        let b = vec![3.3, 0.25, -0.75];
        assert_eq!(mix_features(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mix_features(&a, &b, 0.0).unwrap(), b);
    }

    #[test]
    fn mix_features_midpoint() {
        assert_eq!(
            mix_features(&[2.0, 0.0], &[0.0, 2.0], 0.5).unwrap(),
            vec![1.0, 1.0]
        );
    }

    #[test]
    fn mix_features_rejects_shape_mismatch() {
        let err = mix_features(&[1.0], &[1.0, 2.0], 0.5).unwrap_err();
        assert!(matches!(err, Error::Dimension(_)));
    }

    #[test]
    fn mix_labels_endpoint_and_substitution() {
        let end = mix_labels(0, 1, 0.0, 2).unwrap();
        assert_eq!(end.probs(), &[0.0, 1.0]);

        let soft = mix_labels(0, 1, 0.7, 3).unwrap();
        let expected = [0.7, 0.3, 0.0];
        for (p, e) in soft.probs().iter().zip(expected) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    #[test]
    fn mix_labels_same_class_collapses_to_one_hot() {
        for lambda in [0.0, 0.3, 0.77, 1.0] {
            let soft = mix_labels(2, 2, lambda, 4).unwrap();
            assert_eq!(soft, SoftLabel::one_hot(2, 4).unwrap());
        }
    }

    #[test]
    fn mix_labels_rejects_out_of_range_class() {
        assert!(matches!(
            mix_labels(3, 0, 0.5, 3).unwrap_err(),
            Error::ClassIndex { index: 3, classes: 3 }
        ));
    }

    #[test]
    fn kappa_majority_uses_real_division() {
        assert!(is_kappa_majority(300, 100, 3.0));
        assert!(!is_kappa_majority(299, 100, 3.0));
        assert!(!is_kappa_majority(100, 100, 3.0));
        assert!(is_kappa_majority(5, 2, 2.5));
    }

    #[test]
    fn remix_label_factor_branches() {
        assert_eq!(remix_label_factor(0.3, 5000, 50, 0.5, 3.0), 0.0);
        assert_eq!(remix_label_factor(0.8, 50, 5000, 0.5, 3.0), 1.0);
        assert_eq!(remix_label_factor(0.6, 5000, 50, 0.5, 3.0), 0.6);
    }

    #[test]
    fn remix_label_factor_tau_zero_grid_is_identity() {
        let lambdas: Vec<f64> = (0..=50).map(|k| k as f64 / 50.0).collect();
        let counts = [1usize, 2, 10, 100, 5000];
        let kappas = [1.0, 1.5, 3.0, 10.0];
        for &l in &lambdas {
            for &n_i in &counts {
                for &n_j in &counts {
                    for &k in &kappas {
                        assert_eq!(remix_label_factor(l, n_i, n_j, 0.0, k), l);
                    }
                }
            }
        }
    }

    #[test]
    fn remix_label_factor_tie_at_tau_falls_through() {
        assert_eq!(remix_label_factor(0.5, 5000, 50, 0.5, 3.0), 0.5);
        assert_eq!(remix_label_factor(0.5, 50, 5000, 0.5, 3.0), 0.5);
    }

    #[test]
    fn remix_label_factor_equal_counts_kappa_one_prefers_first_branch() {
        assert_eq!(remix_label_factor(0.3, 100, 100, 0.5, 1.0), 0.0);
        assert_eq!(remix_label_factor(0.9, 100, 100, 0.5, 1.0), 1.0);
        assert_eq!(remix_label_factor(0.5, 100, 100, 0.5, 1.0), 0.5);
    }

    #[test]
    fn cut_mask_lambda_endpoints() {
        let mut r = rng(5);
        let zero = sample_cut_mask(32, 32, 1.0, &mut r).unwrap();
        assert_eq!((zero.width, zero.height), (0, 0));
        assert_eq!(zero.effective_lambda(), 1.0);

        let full = sample_cut_mask(32, 32, 0.0, &mut r).unwrap();
        assert_eq!((full.x0, full.y0, full.width, full.height), (0, 0, 32, 32));
        assert_eq!(full.effective_lambda(), 0.0);
    }

    #[test]
    fn cut_mask_quarter_area_at_three_quarters_lambda() {
        let mut r = rng(6);
        for _ in 0..100 {
            let mask = sample_cut_mask(32, 32, 0.75, &mut r).unwrap();
            assert_eq!((mask.width, mask.height), (16, 16));
            assert_eq!(mask.masked_fraction(), 0.25);
            assert_eq!(mask.effective_lambda(), 0.75);
            assert!(mask.x0 + mask.width <= 32 && mask.y0 + mask.height <= 32);
        }
    }

    #[test]
    fn apply_cut_mask_endpoint_masks() {
        let a: Vec<f64> = (0..16).map(f64::from).collect();
        let b: Vec<f64> = (16..32).map(f64::from).collect();
        let zero = CutMask {
            x0: 0,
            y0: 0,
            width: 0,
            height: 0,
            image_w: 4,
            image_h: 4,
        };
        assert_eq!(apply_cut_mask(&a, &b, &zero).unwrap(), a);
        let full = CutMask {
            x0: 0,
            y0: 0,
            width: 4,
            height: 4,
            image_w: 4,
            image_h: 4,
        };
        assert_eq!(apply_cut_mask(&a, &b, &full).unwrap(), b);
    }

    #[test]
    fn apply_cut_mask_left_column() {
        let a = vec![1.0, 2.0, 3.0, 4.0];
        let b = vec![-1.0, -2.0, -3.0, -4.0];
        let mask = CutMask {
            x0: 0,
            y0: 0,
            width: 1,
            height: 2,
            image_w: 2,
            image_h: 2,
        };
        assert_eq!(apply_cut_mask(&a, &b, &mask).unwrap(), vec![-1.0, 2.0, -3.0, 4.0]);
    }

    #[test]
    fn apply_cut_mask_respects_channels() {
        let plane = 9;
        let a = vec![0.0; 2 * plane];
        let b = vec![1.0; 2 * plane];
        let mask = CutMask {
            x0: 1,
            y0: 1,
            width: 2,
            height: 2,
            image_w: 3,
            image_h: 3,
        };
        let out = apply_cut_mask(&a, &b, &mask).unwrap();
        for c in 0..2 {
            for y in 0..3 {
                for x in 0..3 {
                    let expected = if mask.contains(x, y) { 1.0 } else { 0.0 };
                    assert_eq!(out[c * plane + y * 3 + x], expected);
                }
            }
        }
    }

    #[test]
    fn apply_cut_mask_rejects_bad_shapes() {
        let mask = CutMask {
            x0: 0,
            y0: 0,
            width: 1,
            height: 1,
            image_w: 2,
            image_h: 2,
        };
        assert!(apply_cut_mask(&[0.0; 4], &[0.0; 5], &mask).is_err());
        assert!(apply_cut_mask(&[0.0; 6], &[0.0; 6], &mask).is_err());
    }

    fn two_class_batch() -> (Vec<LabeledSample>, ClassCounts) {
        let samples = vec![
            sample(vec![0.0, 1.0], 0),
            sample(vec![2.0, 3.0], 1),
            sample(vec![-1.0, 0.5], 0),
            sample(vec![4.0, -2.0], 1),
        ];
        let counts = ClassCounts::new(vec![5000, 50]).unwrap();
        (samples, counts)
    }

    #[test]
    fn remix_tau_zero_matches_mixup_bit_for_bit() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let pairs = vec![(0, 1), (1, 2), (2, 3), (3, 0)];
        let params = MixParams {
            tau: 0.0,
            ..MixParams::default()
        };
        let a = make_mixed_batch(&refs, &pairs, MixMethod::Remix, &counts, &params, &mut rng(7))
            .unwrap();
        let b = make_mixed_batch(&refs, &pairs, MixMethod::Mixup, &counts, &params, &mut rng(7))
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn batch_shares_one_lambda_by_default() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let pairs = vec![(0, 1), (2, 3), (0, 3)];
        let mut r = rng(8);
        let expected_lambda = sample_lambda(1.0, &mut rng(8)).unwrap();
        let batch = make_mixed_batch(
            &refs,
            &pairs,
            MixMethod::Mixup,
            &counts,
            &MixParams::default(),
            &mut r,
        )
        .unwrap();
        let MixedBatch::Premixed(examples) = batch else {
            panic!("mixup premixes");
        };
        for (ex, &(i, j)) in examples.iter().zip(&pairs) {
            let expected =
                mix_features(&samples[i].features, &samples[j].features, expected_lambda).unwrap();
            assert_eq!(ex.features, expected);
            assert_eq!(
                ex.label,
                mix_labels(samples[i].label, samples[j].label, expected_lambda, 2).unwrap()
            );
        }
    }

    #[test]
    fn per_pair_lambda_varies_within_batch() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let pairs = vec![(0, 1); 8];
        let params = MixParams {
            per_pair_lambda: true,
            ..MixParams::default()
        };
        let batch =
            make_mixed_batch(&refs, &pairs, MixMethod::Mixup, &counts, &params, &mut rng(9))
                .unwrap();
        let MixedBatch::Premixed(examples) = batch else {
            panic!("mixup premixes");
        };
        let first = examples[0].label.probs()[0];
        assert!(examples.iter().any(|ex| ex.label.probs()[0] != first));
    }

    #[test]
    fn remix_relabels_majority_minority_pair() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let pairs = vec![(0, 1)];
        // Learn the batch lambda from a cloned stream, then check the label
        // obeys the piecewise rule for it.
        let lambda = sample_lambda(1.0, &mut rng(10)).unwrap();
        let params = MixParams::default();
        let batch =
            make_mixed_batch(&refs, &pairs, MixMethod::Remix, &counts, &params, &mut rng(10))
                .unwrap();
        let MixedBatch::Premixed(examples) = batch else {
            panic!("remix premixes");
        };
        let expected_factor = remix_label_factor(lambda, 5000, 50, params.tau, params.kappa);
        assert_eq!(
            examples[0].label,
            mix_labels(0, 1, expected_factor, 2).unwrap()
        );
        if lambda < 0.5 {
            assert_eq!(examples[0].label.probs(), &[0.0, 1.0]);
        }
    }

    #[test]
    fn manifold_batch_defers_with_layer_in_range() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let pairs = vec![(0, 1), (1, 0)];
        let params = MixParams {
            eligible_layers: 3,
            ..MixParams::default()
        };
        for seed in 0..20 {
            let batch = make_mixed_batch(
                &refs,
                &pairs,
                MixMethod::RemixManifold,
                &counts,
                &params,
                &mut rng(seed),
            )
            .unwrap();
            let MixedBatch::Deferred(d) = batch else {
                panic!("manifold defers");
            };
            assert!(d.layer < 3);
            assert_eq!(d.pairs, pairs);
            assert_eq!(d.lambdas.len(), pairs.len());
            assert_eq!(d.labels.len(), pairs.len());
            assert!(d.lambdas.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn self_pairs_reproduce_the_sample() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let batch = make_mixed_batch(
            &refs,
            &[(2, 2)],
            MixMethod::Mixup,
            &counts,
            &MixParams::default(),
            &mut rng(11),
        )
        .unwrap();
        let MixedBatch::Premixed(examples) = batch else {
            panic!("mixup premixes");
        };
        assert_eq!(examples[0].features, samples[2].features);
        assert_eq!(examples[0].label, SoftLabel::one_hot(0, 2).unwrap());
    }

    #[test]
    fn empty_batch_is_rejected() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let err = make_mixed_batch(
            &refs,
            &[],
            MixMethod::Mixup,
            &counts,
            &MixParams::default(),
            &mut rng(12),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn unknown_class_is_rejected() {
        let samples = [sample(vec![0.0], 0), sample(vec![1.0], 2)];
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let counts = ClassCounts::new(vec![10, 10]).unwrap();
        let err = make_mixed_batch(
            &refs,
            &[(0, 1)],
            MixMethod::Mixup,
            &counts,
            &MixParams::default(),
            &mut rng(13),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ClassIndex { index: 2, classes: 2 }));
    }

    #[test]
    fn cutmix_requires_image_extent() {
        let (samples, counts) = two_class_batch();
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let err = make_mixed_batch(
            &refs,
            &[(0, 1)],
            MixMethod::CutMix,
            &counts,
            &MixParams::default(),
            &mut rng(14),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Parameter(_)));
    }

    #[test]
    fn cutmix_labels_use_area_effective_lambda() {
        let plane = 4 * 4;
        let samples = [
            sample(vec![0.0; plane], 0),
            sample(vec![1.0; plane], 1),
        ];
        let refs: Vec<&LabeledSample> = samples.iter().collect();
        let counts = ClassCounts::new(vec![10, 10]).unwrap();
        let params = MixParams {
            image_wh: Some((4, 4)),
            ..MixParams::default()
        };
        let batch = make_mixed_batch(
            &refs,
            &[(0, 1)],
            MixMethod::CutMix,
            &counts,
            &params,
            &mut rng(15),
        )
        .unwrap();
        let MixedBatch::Premixed(examples) = batch else {
            panic!("cutmix premixes");
        };
        let donor_pixels = examples[0].features.iter().filter(|v| **v == 1.0).count();
        let effective = 1.0 - donor_pixels as f64 / plane as f64;
        assert_eq!(examples[0].label.probs()[0], effective);
        assert_eq!(examples[0].label.probs()[1], 1.0 - effective);
    }

    #[test]
    fn class_counts_reject_zero_and_empty() {
        assert!(ClassCounts::new(vec![]).is_err());
        assert!(ClassCounts::new(vec![3, 0, 5]).is_err());
        let counts = ClassCounts::new(vec![100, 10]).unwrap();
        assert_eq!(counts.imbalance_ratio(), 10.0);
        assert_eq!(counts.total(), 110);
    }

    #[test]
    fn soft_label_validation() {
        assert!(SoftLabel::from_probs(vec![0.5, 0.5]).is_ok());
        assert!(SoftLabel::from_probs(vec![0.5, 0.6]).is_err());
        assert!(SoftLabel::from_probs(vec![-0.1, 1.1]).is_err());
        assert!(SoftLabel::from_probs(vec![]).is_err());
        assert!(SoftLabel::one_hot(2, 2).is_err());
    }

    proptest! {
        #[test]
        fn prop_mix_features_idempotent_on_identical_inputs(
            xs in proptest::collection::vec(-1e3f64..1e3, 1..16),
            k in 0usize..=1024,
        ) {
            let lambda = k as f64 / 1024.0;
            prop_assert_eq!(mix_features(&xs, &xs, lambda).unwrap(), xs);
        }

        #[test]
        fn prop_remix_factor_in_three_value_set(
            k in 0usize..=1024,
            n_i in 1usize..5000,
            n_j in 1usize..5000,
            tau_i in 0usize..4,
            kappa_i in 0usize..4,
        ) {
            let lambda = k as f64 / 1024.0;
            let tau = [0.0, 0.25, 0.5, 1.0][tau_i];
            let kappa = [1.0, 1.5, 3.0, 10.0][kappa_i];
            let out = remix_label_factor(lambda, n_i, n_j, tau, kappa);
            prop_assert!(out == 0.0 || out == 1.0 || out == lambda);
        }

        #[test]
        fn prop_remix_swap_symmetry(
            k in 0usize..=1024,
            n_i in 1usize..5000,
            n_j in 1usize..5000,
            tau_i in 0usize..4,
            kappa_i in 0usize..4,
            xs in proptest::collection::vec(-1e3f64..1e3, 2..8),
            ys in proptest::collection::vec(-1e3f64..1e3, 2..8),
        ) {
            // Dyadic lambdas keep 1 − λ exact, so the swapped call sees the
            // true complement.
            let lambda = k as f64 / 1024.0;
            let tau = [0.0, 0.25, 0.5, 1.0][tau_i];
            let kappa = [1.5, 2.0, 3.0, 10.0][kappa_i];
            let a = remix_label_factor(lambda, n_i, n_j, tau, kappa);
            let b = remix_label_factor(1.0 - lambda, n_j, n_i, tau, kappa);
            let complementary = (a == 0.0 && b == 1.0)
                || (a == 1.0 && b == 0.0)
                || (a == lambda && b == 1.0 - lambda);
            prop_assert!(complementary, "a = {a}, b = {b}, lambda = {lambda}");

            let labels_fwd = mix_labels(0, 1, a, 2).unwrap();
            let labels_swp = mix_labels(1, 0, b, 2).unwrap();
            for (p, q) in labels_fwd.probs().iter().zip(labels_swp.probs()) {
                prop_assert!((p - q).abs() <= 1e-12);
            }

            let n = xs.len().min(ys.len());
            let fwd = mix_features(&xs[..n], &ys[..n], lambda).unwrap();
            let swp = mix_features(&ys[..n], &xs[..n], 1.0 - lambda).unwrap();
            for (p, q) in fwd.iter().zip(&swp) {
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs().max(q.abs())));
            }
        }

        #[test]
        fn prop_soft_labels_normalized(
            y_i in 0usize..6,
            y_j in 0usize..6,
            lambda in 0f64..=1.0,
        ) {
            let soft = mix_labels(y_i, y_j, lambda, 6).unwrap();
            prop_assert!(soft.is_normalized());
        }

        #[test]
        fn prop_cut_mask_in_bounds_and_area_law(
            w in 1usize..64,
            h in 1usize..64,
            k in 0usize..=1024,
            seed in 0u64..1000,
        ) {
            let lambda = k as f64 / 1024.0;
            let mask = sample_cut_mask(w, h, lambda, &mut rng(seed)).unwrap();
            prop_assert!(mask.x0 + mask.width <= w);
            prop_assert!(mask.y0 + mask.height <= h);
            let fraction = mask.masked_fraction();
            prop_assert!((0.0..=1.0).contains(&fraction));
            prop_assert_eq!(mask.effective_lambda(), 1.0 - fraction);
            // Rounding each side by at most 1/2 pixel bounds the area error.
            let bound = (2 * w.max(h) + 1) as f64 / (w * h) as f64;
            prop_assert!(
                (fraction - (1.0 - lambda)).abs() <= bound,
                "fraction {fraction}, lambda {lambda}, bound {bound}"
            );
        }
    }
}
