//! Experiment orchestration: build an imbalanced training set, run the
//! chosen mixing method with an optional deferred re-weighting or
//! re-sampling schedule, and evaluate on a balanced held-out set every
//! epoch.
//!
//! One training run is single-threaded and fully determined by its plan.
//! Per epoch the random stream is consumed in a fixed order: the batch
//! order draw (a shuffle, or weighted draws in a deferred re-sampling
//! phase), then per batch any image augmentation draws, then for the
//! mixing methods the pair permutation and the mixing module's own draws.
//! ERM consumes no per-batch randomness beyond augmentation, so mixing
//! methods that degenerate to their base method replay identical streams.

pub mod boundary;
pub mod outputs;
pub mod sweep;

use std::path::PathBuf;

use rand::seq::SliceRandom;

use crate::data::cifar::{augment_image, load_cifar10_binary};
use crate::data::{
    make_two_blobs, make_two_circles, make_two_moons, Dataset, LabeledSample,
};
use crate::error::{Error, Result};
use crate::imbalance::{
    build_profile, schedule_phase, subsample, ClassProfile, DeferMode, DeferredSchedule,
    ImbalanceSpec, Phase, WeightedClassSampler,
};
use crate::mixing::{
    make_mixed_batch, ClassCounts, MixMethod, MixParams, MixedBatch, SoftLabel,
};
use crate::model::{
    backward, backward_deferred, sgd_step, Activation, BatchItem, DeferredPairItem, MlpSpec,
    ModelState, OptimSpec,
};
use crate::par;
use crate::rng::{stream, stream_rng};

/// Training method: plain empirical risk minimization or one of the
/// mixing regularizers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Erm,
    Mixed(MixMethod),
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::Mixed(m) => m.name(),
        }
    }

    pub fn is_remix(self) -> bool {
        matches!(self, Method::Mixed(m) if m.is_remix())
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "erm" {
            Ok(Method::Erm)
        } else {
            Ok(Method::Mixed(s.parse()?))
        }
    }
}

/// Which dataset a plan trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    TwoMoons,
    TwoCircles,
    TwoBlobs,
    Cifar10,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::TwoMoons => "two_moons",
            DatasetKind::TwoCircles => "two_circles",
            DatasetKind::TwoBlobs => "two_blobs",
            DatasetKind::Cifar10 => "cifar10",
        }
    }

    pub fn is_synthetic(self) -> bool {
        !matches!(self, DatasetKind::Cifar10)
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_moons" => Ok(DatasetKind::TwoMoons),
            "two_circles" => Ok(DatasetKind::TwoCircles),
            "two_blobs" => Ok(DatasetKind::TwoBlobs),
            "cifar10" => Ok(DatasetKind::Cifar10),
            other => Err(Error::Parameter(format!("unknown dataset: {other}"))),
        }
    }
}

/// Everything one training run needs: method, mixing knobs, optimizer,
/// schedule, imbalance construction, dataset selection, and seeding.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub method: Method,
    pub alpha: f64,
    pub tau: f64,
    pub kappa: f64,
    /// Draw one feature factor per pair instead of one per batch.
    pub per_pair_lambda: bool,
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: OptimSpec,
    pub deferred: DeferredSchedule,
    pub imbalance: ImbalanceSpec,
    pub dataset: DatasetKind,
    /// Directory with CIFAR-10 binary batches; required for that dataset.
    pub data_dir: Option<PathBuf>,
    /// Balanced per-class pool size generated before subsampling.
    pub n_per_class: usize,
    pub noise_sd: f64,
    /// Per-class size of the balanced held-out evaluation set.
    pub eval_n_per_class: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
}

impl Default for TrainPlan {
    fn default() -> Self {
        TrainPlan {
            method: Method::Mixed(MixMethod::Remix),
            alpha: 1.0,
            tau: 0.5,
            kappa: 3.0,
            per_pair_lambda: false,
            epochs: 200,
            batch_size: 64,
            optim: OptimSpec {
                milestones: vec![(100, 0.1), (150, 0.1)],
                ..OptimSpec::default()
            },
            deferred: DeferredSchedule {
                mode: DeferMode::None,
                phase_boundary_epoch: 100,
            },
            imbalance: ImbalanceSpec {
                kind: crate::imbalance::ImbalanceKind::Step,
                rho: 10.0,
                mu: 0.5,
                classes: 2,
                n_max: 500,
            },
            dataset: DatasetKind::TwoMoons,
            data_dir: None,
            n_per_class: 500,
            noise_sd: 0.1,
            eval_n_per_class: 500,
            hidden: vec![64, 64],
            activation: Activation::Relu,
            seed: 0,
            out_dir: None,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self) -> Result<()> {
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
                "kappa must be at least 1, got {}",
                self.kappa
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Parameter("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Parameter("batch size must be at least 1".into()));
        }
        if self.n_per_class == 0 || self.eval_n_per_class == 0 {
            return Err(Error::Parameter("per-class sizes must be at least 1".into()));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::Parameter(format!(
                "noise_sd must be finite and nonnegative, got {}",
                self.noise_sd
            )));
        }
        if self.hidden.is_empty() {
            return Err(Error::Parameter("at least one hidden layer is required".into()));
        }
        if self.dataset == DatasetKind::Cifar10 && self.data_dir.is_none() {
            return Err(Error::Parameter(
                "cifar10 needs a data directory (--data-dir)".into(),
            ));
        }
        if self.dataset.is_synthetic() && self.imbalance.classes != 2 {
            return Err(Error::Parameter(format!(
                "synthetic datasets have 2 classes, imbalance declares {}",
                self.imbalance.classes
            )));
        }
        if self.imbalance.n_max > self.n_per_class {
            return Err(Error::Parameter(format!(
                "largest class size {} exceeds the per-class pool {}",
                self.imbalance.n_max, self.n_per_class
            )));
        }
        self.optim.validate()?;
        self.imbalance.validate()?;
        Ok(())
    }

    fn mix_params(&self, model: &ModelState, train: &Dataset) -> MixParams {
        let image_wh = if train.feature_shape.len() == 3 {
            Some((train.feature_shape[2], train.feature_shape[1]))
        } else {
            None
        };
        MixParams {
            alpha: self.alpha,
            tau: self.tau,
            kappa: self.kappa,
            per_pair_lambda: self.per_pair_lambda,
            eligible_layers: model.eligible_mix_depths(),
            image_wh,
        }
    }
}

/// Balanced-set evaluation result for one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class_recall: Vec<f64>,
    pub top1: f64,
    /// `confusion[true_class][predicted_class]` counts.
    pub confusion: Vec<Vec<usize>>,
    pub epoch: usize,
}

/// Everything a finished run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedRun {
    pub state: ModelState,
    pub reports: Vec<EvalReport>,
    pub profile: ClassProfile,
    pub train: Dataset,
    pub eval: Dataset,
    pub optimizer_steps: usize,
}

impl TrainedRun {
    pub fn final_report(&self) -> &EvalReport {
        self.reports.last().expect("at least one epoch")
    }
}

/// Index of the largest value, ties broken toward the lower index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Build the imbalanced training set and the balanced evaluation set a
/// plan asks for, along with the training set's class profile.
pub fn build_datasets(plan: &TrainPlan) -> Result<(Dataset, Dataset, ClassProfile)> {
    let sizes = plan.imbalance.sizes()?;
    let (pool, eval) = match plan.dataset {
        DatasetKind::TwoMoons | DatasetKind::TwoCircles | DatasetKind::TwoBlobs => {
            let make = match plan.dataset {
                DatasetKind::TwoMoons => make_two_moons,
                DatasetKind::TwoCircles => make_two_circles,
                _ => make_two_blobs,
            };
            let mut data_rng = stream_rng(plan.seed, stream::TRAIN_DATA);
            let pool = make(plan.n_per_class, plan.noise_sd, &mut data_rng)?;
            let mut eval_rng = stream_rng(plan.seed, stream::EVAL_DATA);
            let eval = make(plan.eval_n_per_class, plan.noise_sd, &mut eval_rng)?;
            (pool, eval)
        }
        DatasetKind::Cifar10 => {
            let dir = plan.data_dir.as_ref().expect("validated");
            let pool = load_cifar10_binary(dir)?;
            let eval = load_cifar10_binary(&dir.join("test_batch.bin"))?;
            (pool, eval)
        }
    };
    if pool.num_classes() != plan.imbalance.classes {
        return Err(Error::Parameter(format!(
            "imbalance declares {} classes but the dataset has {}",
            plan.imbalance.classes,
            pool.num_classes()
        )));
    }
    let mut sub_rng = stream_rng(plan.seed, stream::SUBSAMPLE);
    let train = subsample(&pool, &sizes, &mut sub_rng)?;
    let counts = ClassCounts::new(train.class_counts()?)?;
    let profile = build_profile(&counts, None)?;
    Ok((train, eval, profile))
}

/// Run one full training plan and return the final model plus one
/// evaluation report per epoch.
pub fn run_training(plan: &TrainPlan) -> Result<TrainedRun> {
    plan.validate()?;
    let (train, eval, profile) = build_datasets(plan)?;
    train.validate()?;
    let counts = ClassCounts::new(train.class_counts()?)?;
    let classes = train.num_classes();

    let mut widths = vec![train.feature_len()];
    widths.extend_from_slice(&plan.hidden);
    widths.push(classes);
    let mut state = ModelState::new(&MlpSpec {
        layer_widths: widths,
        activation: plan.activation,
        seed: plan.seed,
    })?;
    let params = plan.mix_params(&state, &train);
    if let Method::Mixed(m) = plan.method {
        params.validate(m)?;
    }

    let labels: Vec<usize> = train.samples.iter().map(|s| s.label).collect();
    let sampler = if plan.deferred.mode == DeferMode::Drs {
        Some(WeightedClassSampler::new(&profile, &labels)?)
    } else {
        None
    };

    let is_image = train.feature_shape.len() == 3;
    let (img_w, img_h) = if is_image {
        (train.feature_shape[2], train.feature_shape[1])
    } else {
        (0, 0)
    };

    let mut rng = stream_rng(plan.seed, stream::TRAIN_LOOP);
    let mut reports = Vec::with_capacity(plan.epochs);
    let mut optimizer_steps = 0usize;
    let mut global_step = 0usize;

    for epoch in 0..plan.epochs {
        let phase = schedule_phase(epoch, &plan.deferred);
        let order: Vec<usize> = match (phase, plan.deferred.mode) {
            (Phase::Deferred, DeferMode::Drs) => {
                let s = sampler.as_ref().expect("built for DRS");
                (0..train.len()).map(|_| s.draw(&mut rng)).collect()
            }
            _ => {
                let mut idx: Vec<usize> = (0..train.len()).collect();
                idx.shuffle(&mut rng);
                idx
            }
        };
        let reweight = phase == Phase::Deferred && plan.deferred.mode == DeferMode::Drw;
        let weight_of = |label: &SoftLabel| -> f64 {
            if reweight {
                label
                    .probs()
                    .iter()
                    .zip(&profile.weights)
                    .map(|(p, w)| p * w)
                    .sum()
            } else {
                1.0
            }
        };

        for (batch_index, batch) in order.chunks(plan.batch_size).enumerate() {
            let fault = |message: String| Error::TrainingFault {
                epoch,
                batch: batch_index,
                message,
            };
            let mut augmented: Vec<LabeledSample> = Vec::new();
            let refs: Vec<&LabeledSample> = if is_image {
                for &i in batch {
                    let s = &train.samples[i];
                    augmented.push(LabeledSample {
                        features: augment_image(&s.features, img_w, img_h, 4, &mut rng)?,
                        label: s.label,
                    });
                }
                augmented.iter().collect()
            } else {
                batch.iter().map(|&i| &train.samples[i]).collect()
            };

            let audit = global_step.is_multiple_of(100);
            let (grads, loss) = match plan.method {
                Method::Erm => {
                    let targets: Vec<SoftLabel> = refs
                        .iter()
                        .map(|s| SoftLabel::one_hot(s.label, classes))
                        .collect::<Result<_>>()?;
                    if audit {
                        audit_labels(&targets).map_err(&fault)?;
                    }
                    let items: Vec<BatchItem> = refs
                        .iter()
                        .zip(&targets)
                        .map(|(s, target)| BatchItem {
                            features: &s.features,
                            target,
                            weight: weight_of(target),
                        })
                        .collect();
                    backward(&state, &items)?
                }
                Method::Mixed(method) => {
                    let mut perm: Vec<usize> = (0..refs.len()).collect();
                    perm.shuffle(&mut rng);
                    let pairs: Vec<(usize, usize)> =
                        perm.into_iter().enumerate().collect();
                    match make_mixed_batch(&refs, &pairs, method, &counts, &params, &mut rng)? {
                        MixedBatch::Premixed(examples) => {
                            if audit {
                                audit_labels(examples.iter().map(|e| &e.label)).map_err(&fault)?;
                            }
                            let items: Vec<BatchItem> = examples
                                .iter()
                                .map(|ex| BatchItem {
                                    features: &ex.features,
                                    target: &ex.label,
                                    weight: weight_of(&ex.label),
                                })
                                .collect();
                            backward(&state, &items)?
                        }
                        MixedBatch::Deferred(deferred) => {
                            if audit {
                                audit_labels(&deferred.labels).map_err(&fault)?;
                            }
                            let items: Vec<DeferredPairItem> = deferred
                                .pairs
                                .iter()
                                .zip(&deferred.lambdas)
                                .zip(&deferred.labels)
                                .map(|((&(i, j), &lambda_x), target)| DeferredPairItem {
                                    features_i: &refs[i].features,
                                    features_j: &refs[j].features,
                                    lambda_x,
                                    target,
                                    weight: weight_of(target),
                                })
                                .collect();
                            backward_deferred(&state, deferred.layer, &items)?
                        }
                    }
                }
            };
            if !loss.is_finite() {
                return Err(fault(format!("non-finite loss {loss}")));
            }
            sgd_step(&mut state, &grads, &plan.optim, epoch).map_err(|e| match e {
                Error::TrainingFault { message, .. } => fault(message),
                other => other,
            })?;
            optimizer_steps += 1;
            global_step += 1;
        }

        let mut report = evaluate(&state, &eval)?;
        report.epoch = epoch;
        reports.push(report);
    }

    Ok(TrainedRun {
        state,
        reports,
        profile,
        train,
        eval,
        optimizer_steps,
    })
}

fn audit_labels<'a, I>(labels: I) -> std::result::Result<(), String>
where
    I: IntoIterator<Item = &'a SoftLabel>,
{
    for (i, label) in labels.into_iter().enumerate() {
        if !label.is_normalized() {
            return Err(format!(
                "label audit: target {i} is not a probability distribution: {:?}",
                label.probs()
            ));
        }
    }
    Ok(())
}

/// Evaluate a model on a labeled set: per-sample argmax predictions (ties
/// toward the lower class index), confusion counts, top-1 accuracy, and
/// per-class recalls. The `epoch` field is left at 0 for the caller.
pub fn evaluate(state: &ModelState, eval_set: &Dataset) -> Result<EvalReport> {
    if eval_set.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    let classes = eval_set.num_classes();
    if state.output_dim() != classes {
        return Err(Error::Dimension(format!(
            "model emits {} classes, dataset declares {}",
            state.output_dim(),
            classes
        )));
    }
    let predictions = par::map(&eval_set.samples, |s| {
        state.forward(&s.features).map(|logits| argmax(&logits))
    });
    let mut confusion = vec![vec![0usize; classes]; classes];
    for (sample, prediction) in eval_set.samples.iter().zip(predictions) {
        let row = confusion.get_mut(sample.label).ok_or(Error::ClassIndex {
            index: sample.label,
            classes,
        })?;
        row[prediction?] += 1;
    }
    let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
    let top1 = correct as f64 / eval_set.len() as f64;
    let per_class_recall = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                confusion[c][c] as f64 / total as f64
            }
        })
        .collect();
    Ok(EvalReport {
        per_class_recall,
        top1,
        confusion,
        epoch: 0,
    })
}
