//! A compact fully connected classifier with manual backpropagation,
//! soft-label weighted cross-entropy, and SGD with momentum, weight decay,
//! and milestone learning-rate decay.
//!
//! Everything runs in `f64` and is deterministic for a fixed seed. The
//! forward pass can be split at any hidden depth and resumed, which is what
//! the manifold mixing methods use to interpolate activations; composition
//! of the two halves reproduces the plain forward pass bit-for-bit because
//! both run the same per-layer code.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mixing::{mix_features, SoftLabel};
use crate::rng::{stream, stream_rng};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output. For relu the
    /// subgradient at exactly zero is taken as 0.
    fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Parameter(format!("unknown activation: {other}"))),
        }
    }
}

/// Architecture recipe: layer widths from input to class count, the hidden
/// nonlinearity, and the initialization seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MlpSpec {
    /// Input width, hidden widths, and finally the class count. At least
    /// one hidden layer.
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
}

impl MlpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 3 {
            return Err(Error::Parameter(format!(
                "need input, at least one hidden, and output widths, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.contains(&0) {
            return Err(Error::Parameter("layer widths must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    /// Row-major `out_dim × in_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    in_dim: usize,
    out_dim: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerBuf {
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl LayerBuf {
    fn zeros(layer: &Layer) -> Self {
        LayerBuf {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

/// Network parameters plus the optimizer's momentum buffers.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    layers: Vec<Layer>,
    velocity: Vec<LayerBuf>,
    activation: Activation,
}

/// Parameter gradients, same shapes as the model's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    layers: Vec<LayerBuf>,
}

impl Gradients {
    pub fn zeros_like(state: &ModelState) -> Self {
        Gradients {
            layers: state.layers.iter().map(LayerBuf::zeros).collect(),
        }
    }

    /// Flat view in the canonical parameter order (per layer: row-major
    /// weights, then bias).
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Scale every entry in place.
    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            for w in &mut l.weights {
                *w *= factor;
            }
            for b in &mut l.bias {
                *b *= factor;
            }
        }
    }
}

impl ModelState {
    /// Initialize from a spec: He-style uniform fan-in scaling for relu,
    /// Xavier for tanh, zero biases, zero momentum.
    pub fn new(spec: &MlpSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream_rng(spec.seed, stream::MODEL_INIT);
        let mut layers = Vec::with_capacity(spec.layer_widths.len() - 1);
        for pair in spec.layer_widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = match spec.activation {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            layers.push(Layer {
                weights,
                bias: vec![0.0; fan_out],
                in_dim: fan_in,
                out_dim: fan_out,
            });
        }
        Ok(Self::assemble(layers, spec.activation))
    }

    /// Build a model from explicit per-layer `(row-major weights, bias)`
    /// pairs. Accepts any chain of at least one layer.
    pub fn from_layers(layers: Vec<(Vec<f64>, Vec<f64>)>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Parameter("model needs at least one layer".into()));
        }
        let mut built = Vec::with_capacity(layers.len());
        for (i, (weights, bias)) in layers.into_iter().enumerate() {
            let out_dim = bias.len();
            if out_dim == 0 || weights.is_empty() || weights.len() % out_dim != 0 {
                return Err(Error::Dimension(format!(
                    "layer {i}: {} weights do not form rows of {} outputs",
                    weights.len(),
                    out_dim
                )));
            }
            let in_dim = weights.len() / out_dim;
            if let Some(prev) = built.last() {
                let prev: &Layer = prev;
                if prev.out_dim != in_dim {
                    return Err(Error::Dimension(format!(
                        "layer {i} expects {in_dim} inputs but layer {} emits {}",
                        i - 1,
                        prev.out_dim
                    )));
                }
            }
            built.push(Layer {
                weights,
                bias,
                in_dim,
                out_dim,
            });
        }
        Ok(Self::assemble(built, activation))
    }

    fn assemble(layers: Vec<Layer>, activation: Activation) -> Self {
        let velocity = layers.iter().map(LayerBuf::zeros).collect();
        ModelState {
            layers,
            velocity,
            activation,
        }
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of linear layers.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").out_dim
    }

    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.input_dim()];
        widths.extend(self.layers.iter().map(|l| l.out_dim));
        widths
    }

    /// Depths at which activations may be mixed: the raw input (0) and
    /// every hidden activation; the output is never mixed.
    pub fn eligible_mix_depths(&self) -> usize {
        self.layers.len()
    }

    /// Read-only view of one layer's `(weights, bias)`.
    pub fn layer(&self, index: usize) -> Result<(&[f64], &[f64])> {
        let l = self
            .layers
            .get(index)
            .ok_or_else(|| Error::Parameter(format!("no layer {index}")))?;
        Ok((&l.weights, &l.bias))
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// All parameters in canonical order (per layer: row-major weights,
    /// then bias).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    /// Overwrite all parameters from the canonical flat order.
    pub fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().all(|w| w.is_finite()) && l.bias.iter().all(|b| b.is_finite()))
    }

    /// Affine map of layer `l`, optionally followed by the activation.
    fn apply_layer(&self, l: usize, input: &[f64], activate: bool) -> Vec<f64> {
        let layer = &self.layers[l];
        let mut out = Vec::with_capacity(layer.out_dim);
        for r in 0..layer.out_dim {
            let row = &layer.weights[r * layer.in_dim..(r + 1) * layer.in_dim];
            let mut z = layer.bias[r];
            for (w, x) in row.iter().zip(input) {
                z += w * x;
            }
            out.push(if activate { self.activation.apply(z) } else { z });
        }
        out
    }

    /// Activations of layers `from..to` starting from `input` (which must
    /// have the width of depth `from`). Entry 0 is the input; the last
    /// entry is the depth-`to` value (logits when `to` is the layer count).
    fn forward_acts(&self, input: &[f64], from: usize, to: usize) -> Result<Vec<Vec<f64>>> {
        let widths = self.layer_widths();
        if input.len() != widths[from] {
            return Err(Error::Dimension(format!(
                "expected {} features at depth {from}, got {}",
                widths[from],
                input.len()
            )));
        }
        let last = self.layers.len();
        let mut acts = Vec::with_capacity(to - from + 1);
        acts.push(input.to_vec());
        for l in from..to {
            let next = self.apply_layer(l, acts.last().expect("nonempty"), l < last - 1);
            acts.push(next);
        }
        Ok(acts)
    }

    /// Logits for one input.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.resume_from(x, 0)
    }

    /// Run the first `k` layers and return the depth-`k` activation.
    /// Depth 0 returns the input itself.
    pub fn forward_split(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_depth(k)?;
        let acts = self.forward_acts(x, 0, k)?;
        Ok(acts.into_iter().last().expect("nonempty"))
    }

    /// Run layers `k..` on a depth-`k` activation and return logits.
    pub fn resume_from(&self, h: &[f64], k: usize) -> Result<Vec<f64>> {
        self.check_depth(k)?;
        let acts = self.forward_acts(h, k, self.layers.len())?;
        Ok(acts.into_iter().last().expect("nonempty"))
    }

    fn check_depth(&self, k: usize) -> Result<()> {
        if k >= self.layers.len() {
            return Err(Error::Parameter(format!(
                "depth {k} out of range; the model has {} layers and the output is never split",
                self.layers.len()
            )));
        }
        Ok(())
    }

    /// Transposed weight multiply: gradient w.r.t. the input of layer `l`
    /// given the gradient w.r.t. its pre-activation output.
    fn weights_t_mul(&self, l: usize, d: &[f64]) -> Vec<f64> {
        let layer = &self.layers[l];
        let mut out = vec![0.0; layer.in_dim];
        for (row, &dr) in layer.weights.chunks_exact(layer.in_dim).zip(d) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * dr;
            }
        }
        out
    }

    /// Backpropagate from logits along `acts` (as produced by
    /// `forward_acts(.., from, num_layers())`), accumulating into `grads`.
    /// `d` is the loss gradient at the logits. Returns the gradient at the
    /// segment input when requested.
    fn backprop_from_logits(
        &self,
        acts: &[Vec<f64>],
        from: usize,
        mut d: Vec<f64>,
        grads: &mut Gradients,
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        for l in (from..self.layers.len()).rev() {
            let input = &acts[l - from];
            accumulate_layer(&mut grads.layers[l], &d, input);
            if l > from {
                let mut da = self.weights_t_mul(l, &d);
                for (de, ae) in da.iter_mut().zip(input) {
                    *de *= self.activation.derivative_from_output(*ae);
                }
                d = da;
            } else if want_input_grad {
                return Some(self.weights_t_mul(l, &d));
            }
        }
        None
    }

    /// Backpropagate a gradient at the depth-`k` activation down through
    /// layers `0..k` of one pair branch.
    fn backprop_branch(
        &self,
        acts: &[Vec<f64>],
        depth: usize,
        mut d_act: Vec<f64>,
        grads: &mut Gradients,
    ) {
        for l in (0..depth).rev() {
            let output = &acts[l + 1];
            for (de, ae) in d_act.iter_mut().zip(output) {
                *de *= self.activation.derivative_from_output(*ae);
            }
            accumulate_layer(&mut grads.layers[l], &d_act, &acts[l]);
            if l > 0 {
                d_act = self.weights_t_mul(l, &d_act);
            }
        }
    }
}

fn accumulate_layer(buf: &mut LayerBuf, d: &[f64], input: &[f64]) {
    let in_dim = input.len();
    for (r, dr) in d.iter().enumerate() {
        buf.bias[r] += dr;
        let row = &mut buf.weights[r * in_dim..(r + 1) * in_dim];
        for (g, x) in row.iter_mut().zip(input) {
            *g += dr * x;
        }
    }
}

/// Numerically stable log-softmax via max subtraction.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits
        .iter()
        .map(|z| (z - max).exp())
        .sum::<f64>()
        .ln();
    logits.iter().map(|z| z - max - log_sum).collect()
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    log_softmax(logits).iter().map(|l| l.exp()).collect()
}

/// Weighted cross-entropy against a soft target:
/// `−weight · Σ_c target[c] · log softmax(logits)[c]`.
pub fn soft_cross_entropy(logits: &[f64], target: &SoftLabel, sample_weight: f64) -> Result<f64> {
    if logits.len() != target.num_classes() {
        return Err(Error::Dimension(format!(
            "{} logits against {} target classes",
            logits.len(),
            target.num_classes()
        )));
    }
    if !sample_weight.is_finite() || sample_weight < 0.0 {
        return Err(Error::Parameter(format!(
            "sample weight must be finite and nonnegative, got {sample_weight}"
        )));
    }
    let ls = log_softmax(logits);
    let nll: f64 = target
        .probs()
        .iter()
        .zip(&ls)
        .map(|(t, l)| -t * l)
        .sum();
    Ok(sample_weight * nll)
}

/// One premixed training example as the backward pass consumes it.
#[derive(Debug, Clone, Copy)]
pub struct BatchItem<'a> {
    pub features: &'a [f64],
    pub target: &'a SoftLabel,
    pub weight: f64,
}

/// One deferred manifold pair: both raw feature vectors, the feature
/// mixing factor, and the (already mixed) target.
#[derive(Debug, Clone, Copy)]
pub struct DeferredPairItem<'a> {
    pub features_i: &'a [f64],
    pub features_j: &'a [f64],
    pub lambda_x: f64,
    pub target: &'a SoftLabel,
    pub weight: f64,
}

/// Gradients and mean weighted loss of one premixed batch.
pub fn backward(state: &ModelState, batch: &[BatchItem]) -> Result<(Gradients, f64)> {
    if batch.is_empty() {
        return Err(Error::Parameter("cannot take gradients of an empty batch".into()));
    }
    let mut grads = Gradients::zeros_like(state);
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss_sum = 0.0;
    for item in batch {
        let acts = state.forward_acts(item.features, 0, state.num_layers())?;
        let logits = acts.last().expect("nonempty");
        let (loss, mut d) = loss_and_logit_grad(logits, item.target, item.weight)?;
        loss_sum += loss;
        for e in &mut d {
            *e *= inv_b;
        }
        state.backprop_from_logits(&acts, 0, d, &mut grads, false);
    }
    Ok((grads, loss_sum * inv_b))
}

/// Gradients and mean weighted loss of one deferred manifold batch, mixing
/// pair activations at `depth` during the forward pass.
pub fn backward_deferred(
    state: &ModelState,
    depth: usize,
    batch: &[DeferredPairItem],
) -> Result<(Gradients, f64)> {
    if batch.is_empty() {
        return Err(Error::Parameter("cannot take gradients of an empty batch".into()));
    }
    state.check_depth(depth)?;
    let mut grads = Gradients::zeros_like(state);
    let inv_b = 1.0 / batch.len() as f64;
    let mut loss_sum = 0.0;
    for item in batch {
        if !(0.0..=1.0).contains(&item.lambda_x) {
            return Err(Error::Parameter(format!(
                "lambda_x must lie in [0, 1], got {}",
                item.lambda_x
            )));
        }
        let acts_i = state.forward_acts(item.features_i, 0, depth)?;
        let acts_j = state.forward_acts(item.features_j, 0, depth)?;
        let mixed = mix_features(
            acts_i.last().expect("nonempty"),
            acts_j.last().expect("nonempty"),
            item.lambda_x,
        )?;
        let top = state.forward_acts(&mixed, depth, state.num_layers())?;
        let logits = top.last().expect("nonempty");
        let (loss, mut d) = loss_and_logit_grad(logits, item.target, item.weight)?;
        loss_sum += loss;
        for e in &mut d {
            *e *= inv_b;
        }
        let d_mixed = state
            .backprop_from_logits(&top, depth, d, &mut grads, true)
            .expect("input gradient requested");
        if depth > 0 {
            let d_i: Vec<f64> = d_mixed.iter().map(|v| v * item.lambda_x).collect();
            let d_j: Vec<f64> = d_mixed.iter().map(|v| v * (1.0 - item.lambda_x)).collect();
            state.backprop_branch(&acts_i, depth, d_i, &mut grads);
            state.backprop_branch(&acts_j, depth, d_j, &mut grads);
        }
    }
    Ok((grads, loss_sum * inv_b))
}

fn loss_and_logit_grad(
    logits: &[f64],
    target: &SoftLabel,
    weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let loss = soft_cross_entropy(logits, target, weight)?;
    let p = softmax(logits);
    let d = p
        .iter()
        .zip(target.probs())
        .map(|(p, t)| weight * (p - t))
        .collect();
    Ok((loss, d))
}

/// SGD hyperparameters with milestone decay.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimSpec {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// `(epoch, multiplier)` pairs, strictly increasing in epoch. Once an
    /// epoch is reached its multiplier applies for the rest of the run.
    pub milestones: Vec<(usize, f64)>,
}

impl Default for OptimSpec {
    fn default() -> Self {
        OptimSpec {
            learning_rate: 0.1,
            momentum: 0.9,
            weight_decay: 2e-4,
            milestones: Vec::new(),
        }
    }
}

impl OptimSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::Parameter(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Parameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return Err(Error::Parameter(format!(
                "weight decay must be finite and nonnegative, got {}",
                self.weight_decay
            )));
        }
        for pair in self.milestones.windows(2) {
            if pair[0].0 >= pair[1].0 {
                return Err(Error::Parameter(
                    "milestone epochs must be strictly increasing".into(),
                ));
            }
        }
        for &(_, m) in &self.milestones {
            if !(m > 0.0 && m <= 1.0) {
                return Err(Error::Parameter(format!(
                    "milestone multipliers must lie in (0, 1], got {m}"
                )));
            }
        }
        Ok(())
    }

    /// Base rate times the multipliers of every milestone whose epoch has
    /// been reached.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.milestones
            .iter()
            .filter(|(e, _)| *e <= epoch)
            .fold(self.learning_rate, |lr, (_, m)| lr * m)
    }
}

/// One SGD-with-momentum update:
/// `v ← momentum·v + (grad + weight_decay·param)`,
/// `param ← param − lr(epoch)·v`.
pub fn sgd_step(
    state: &mut ModelState,
    grads: &Gradients,
    optim: &OptimSpec,
    epoch: usize,
) -> Result<()> {
    optim.validate()?;
    if grads.layers.len() != state.layers.len() {
        return Err(Error::Dimension(format!(
            "{} gradient layers against {} model layers",
            grads.layers.len(),
            state.layers.len()
        )));
    }
    let lr = optim.learning_rate_at(epoch);
    for ((layer, vel), grad) in state
        .layers
        .iter_mut()
        .zip(&mut state.velocity)
        .zip(&grads.layers)
    {
        if grad.weights.len() != layer.weights.len() || grad.bias.len() != layer.bias.len() {
            return Err(Error::Dimension("gradient shape mismatch".into()));
        }
        for ((w, v), g) in layer.weights.iter_mut().zip(&mut vel.weights).zip(&grad.weights) {
            *v = optim.momentum * *v + (g + optim.weight_decay * *w);
            *w -= lr * *v;
        }
        for ((b, v), g) in layer.bias.iter_mut().zip(&mut vel.bias).zip(&grad.bias) {
            *v = optim.momentum * *v + (g + optim.weight_decay * *b);
            *b -= lr * *v;
        }
    }
    if !state.all_finite() {
        return Err(Error::TrainingFault {
            epoch,
            batch: 0,
            message: "non-finite parameter after optimizer update".into(),
        });
    }
    Ok(())
}
