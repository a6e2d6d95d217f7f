//! Feedforward classifier with a shared rectifier trunk, a softmax class head
//! and a logistic gate head.
//!
//! The gate head predicts the zero-one loss of the class head. Both heads are
//! trained jointly on
//!
//! ```text
//! L = sum_i [ -ln p(y_i = c | x_i) - beta * e_i * ln(o_i) - (1 - e_i) * ln(1 - o_i) ]
//! ```
//!
//! where `e_i` is 1 when the class head misclassifies sample `i` and `beta` is
//! the ratio of correctly classified to misclassified samples in the batch.
//!
//! Dropout uses the inverted convention: kept units are scaled by
//! `1 / (1 - rate)` during masked passes, and deterministic inference is the
//! identity. The deterministic forward pass therefore equals the expectation
//! over masks of each pre-activation.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::rng::RunRng;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("input has {got} features, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("target class {target} out of range for {classes} classes")]
    TargetOutOfRange { target: usize, classes: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
}

/// How dropout masks are drawn during a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForwardMode {
    /// Dropout off.
    Deterministic,
    /// Dropout on, masks drawn from a generator seeded with `seed`.
    McDropout { seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Output {
    pub class_probs: Vec<f64>,
    /// Gate output `o` in (0, 1).
    pub gate: f64,
}

impl Output {
    /// Index of the most probable class, ties to the lowest index.
    pub fn predicted_class(&self) -> usize {
        argmax(&self.class_probs)
    }
}

/// Index of the largest value, ties broken toward the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Dense affine layer, weights stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    inputs: usize,
    outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    /// He-normal initialisation, zero bias.
    fn he_normal<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let std = (2.0 / inputs.max(1) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("finite std");
        let weights = (0..inputs * outputs).map(|_| normal.sample(rng)).collect();
        Dense {
            inputs,
            outputs,
            weights,
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    /// Accumulates `delta ⊗ input` into this layer viewed as a gradient buffer.
    fn accumulate(&mut self, delta: &[f64], input: &[f64]) {
        for ((row, b), &d) in self
            .weights
            .chunks_exact_mut(self.inputs)
            .zip(self.bias.iter_mut())
            .zip(delta)
        {
            if d == 0.0 {
                continue;
            }
            for (w, &v) in row.iter_mut().zip(input) {
                *w += d * v;
            }
            *b += d;
        }
    }

    /// `W^T delta`, added into `out`.
    fn backprop_into(&self, delta: &[f64], out: &mut [f64]) {
        for (row, &d) in self.weights.chunks_exact(self.inputs).zip(delta) {
            if d == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(row) {
                *o += d * w;
            }
        }
    }

    fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(self.bias.iter())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.bias.iter_mut())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub classes: usize,
    pub dropout_rate: f64,
    /// Train the gate head without backpropagating its loss into the trunk.
    pub gate_detached: bool,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, classes: usize) -> Self {
        NetworkConfig {
            input_dim,
            hidden: vec![32, 32],
            classes,
            dropout_rate: 0.3,
            gate_detached: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    trunk: Vec<Dense>,
    class_head: Dense,
    gate_head: Dense,
    dropout_rate: f64,
    gate_detached: bool,
}

/// Intermediate values kept for backpropagation.
struct Trace {
    /// `layer_inputs[l]` is the input to trunk layer `l`; the last entry feeds
    /// both heads.
    layer_inputs: Vec<Vec<f64>>,
    /// Per-unit derivative of activation-then-dropout for each trunk layer.
    unit_scale: Vec<Vec<f64>>,
    output: Output,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JointLoss {
    pub class: f64,
    pub gate: f64,
}

impl JointLoss {
    pub fn total(&self) -> f64 {
        self.class + self.gate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 1e-2,
            batch_size: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    /// Mean class-prediction loss per sample.
    pub class_loss: f64,
    /// Mean oracle-selection loss per sample.
    pub gate_loss: f64,
    /// Fraction of samples with `e = 0` during the masked training passes.
    pub accuracy: f64,
}

/// A mini-batch: features, targets, and the per-sample zero-one losses of the
/// class head.
#[derive(Debug, Clone)]
pub struct Batch<'a> {
    pub inputs: Vec<&'a [f64]>,
    pub targets: Vec<usize>,
    pub errors: Vec<bool>,
}

/// `beta = #{e = 0} / #{e = 1}`, or 1 when no sample is misclassified.
pub fn compute_beta(errors: &[bool]) -> Result<f64, NetError> {
    if errors.is_empty() {
        return Err(NetError::EmptyBatch);
    }
    let wrong = errors.iter().filter(|&&e| e).count();
    if wrong == 0 {
        return Ok(1.0);
    }
    Ok((errors.len() - wrong) as f64 / wrong as f64)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn sample_loss(out: &Output, target: usize, error: bool, beta: f64) -> JointLoss {
    let class = -clamp_prob(out.class_probs[target]).ln();
    let o = clamp_prob(out.gate);
    let gate = if error { -beta * o.ln() } else { -(1.0 - o).ln() };
    JointLoss { class, gate }
}

/// Joint class + gate objective summed over a batch.
pub fn joint_loss(outputs: &[Output], targets: &[usize], errors: &[bool], beta: f64) -> JointLoss {
    assert_eq!(outputs.len(), targets.len());
    assert_eq!(outputs.len(), errors.len());
    outputs
        .iter()
        .zip(targets)
        .zip(errors)
        .fold(JointLoss::default(), |acc, ((out, &t), &e)| {
            let l = sample_loss(out, t, e, beta);
            JointLoss {
                class: acc.class + l.class,
                gate: acc.gate + l.gate,
            }
        })
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Network {
    pub fn new<R: Rng + ?Sized>(config: &NetworkConfig, rng: &mut R) -> Result<Self, NetError> {
        if config.input_dim == 0 {
            return Err(NetError::InvalidConfig("input dimension must be positive".into()));
        }
        if config.classes < 2 {
            return Err(NetError::InvalidConfig("at least two classes required".into()));
        }
        if config.hidden.contains(&0) {
            return Err(NetError::InvalidConfig("hidden widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&config.dropout_rate) {
            return Err(NetError::InvalidConfig(format!(
                "dropout rate {} outside [0, 1)",
                config.dropout_rate
            )));
        }
        let mut trunk = Vec::with_capacity(config.hidden.len());
        let mut width = config.input_dim;
        for &h in &config.hidden {
            trunk.push(Dense::he_normal(width, h, rng));
            width = h;
        }
        Ok(Network {
            trunk,
            class_head: Dense::he_normal(width, config.classes, rng),
            gate_head: Dense::he_normal(width, 1, rng),
            dropout_rate: config.dropout_rate,
            gate_detached: config.gate_detached,
        })
    }

    /// Same shapes and settings, every parameter zero.
    pub fn zeros_like(&self) -> Self {
        let z = |d: &Dense| Dense::zeros(d.inputs, d.outputs);
        Network {
            trunk: self.trunk.iter().map(z).collect(),
            class_head: z(&self.class_head),
            gate_head: z(&self.gate_head),
            dropout_rate: self.dropout_rate,
            gate_detached: self.gate_detached,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.trunk.first().unwrap_or(&self.class_head).inputs
    }

    pub fn classes(&self) -> usize {
        self.class_head.outputs
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn trunk(&self) -> &[Dense] {
        &self.trunk
    }

    pub fn class_head_mut(&mut self) -> &mut Dense {
        &mut self.class_head
    }

    pub fn gate_head_mut(&mut self) -> &mut Dense {
        &mut self.gate_head
    }

    pub fn param_count(&self) -> usize {
        self.params().count()
    }

    /// Parameters in a fixed order: trunk layers, class head, gate head.
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.trunk
            .iter()
            .flat_map(Dense::params)
            .chain(self.class_head.params())
            .chain(self.gate_head.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.trunk
            .iter_mut()
            .flat_map(Dense::params_mut)
            .chain(self.class_head.params_mut())
            .chain(self.gate_head.params_mut())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().copied().collect()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.param_count());
        for (p, v) in self.params_mut().zip(values) {
            *p = *v;
        }
    }

    pub fn forward(&self, x: &[f64], mode: ForwardMode) -> Result<Output, NetError> {
        match mode {
            ForwardMode::Deterministic => self.forward_masked(x, None),
            ForwardMode::McDropout { seed } => {
                let mut rng = RunRng::seed_from_u64(seed);
                self.forward_masked(x, Some(&mut rng))
            }
        }
    }

    /// Forward pass drawing dropout masks from `mask_rng`; `None` disables
    /// dropout.
    pub fn forward_masked(
        &self,
        x: &[f64],
        mask_rng: Option<&mut dyn RngCore>,
    ) -> Result<Output, NetError> {
        self.check_input(x)?;
        Ok(self.trace(x, mask_rng).output)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NetError> {
        if x.len() != self.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn trace(&self, x: &[f64], mut mask_rng: Option<&mut (dyn RngCore + '_)>) -> Trace {
        let keep = 1.0 - self.dropout_rate;
        let masking = self.dropout_rate > 0.0 && mask_rng.is_some();
        let mut layer_inputs = Vec::with_capacity(self.trunk.len() + 1);
        let mut unit_scale = Vec::with_capacity(self.trunk.len());
        let mut h = x.to_vec();
        for layer in &self.trunk {
            let z = layer.apply(&h);
            let mut scale = Vec::with_capacity(z.len());
            let mut a = Vec::with_capacity(z.len());
            for &zj in &z {
                let drop = match mask_rng.as_deref_mut() {
                    Some(rng) if masking => {
                        if rng.random::<f64>() < keep {
                            1.0 / keep
                        } else {
                            0.0
                        }
                    }
                    _ => 1.0,
                };
                let s = if zj > 0.0 { drop } else { 0.0 };
                scale.push(s);
                a.push(zj * s);
            }
            layer_inputs.push(std::mem::replace(&mut h, a));
            unit_scale.push(scale);
        }
        let class_probs = softmax(&self.class_head.apply(&h));
        let gate = sigmoid(self.gate_head.apply(&h)[0]);
        layer_inputs.push(h);
        Trace {
            layer_inputs,
            unit_scale,
            output: Output { class_probs, gate },
        }
    }

    /// Joint loss of a batch with fixed `errors` and `beta`, and its gradient
    /// with respect to every parameter. Masks are drawn per sample, in batch
    /// order, from `mask_rng`.
    pub fn loss_and_gradient(
        &self,
        batch: &Batch<'_>,
        beta: f64,
        mut mask_rng: Option<&mut dyn RngCore>,
    ) -> Result<(JointLoss, Network), NetError> {
        let mut grad = self.zeros_like();
        let mut loss = JointLoss::default();
        for ((&x, &target), &error) in batch.inputs.iter().zip(&batch.targets).zip(&batch.errors) {
            self.check_input(x)?;
            self.check_target(target)?;
            let trace = self.trace(x, mask_rng.as_deref_mut());
            let l = sample_loss(&trace.output, target, error, beta);
            loss.class += l.class;
            loss.gate += l.gate;
            self.backprop(&trace, target, error, beta, &mut grad);
        }
        Ok((loss, grad))
    }

    fn check_target(&self, target: usize) -> Result<(), NetError> {
        if target >= self.classes() {
            return Err(NetError::TargetOutOfRange {
                target,
                classes: self.classes(),
            });
        }
        Ok(())
    }

    fn backprop(&self, trace: &Trace, target: usize, error: bool, beta: f64, grad: &mut Network) {
        let out = &trace.output;
        let head_input = trace.layer_inputs.last().expect("head input");

        // d(-ln p_c)/dz = p - onehot(c); zero where the clamp is active.
        let p_target = out.class_probs[target];
        let class_delta: Vec<f64> = if p_target < PROB_EPS {
            vec![0.0; out.class_probs.len()]
        } else {
            out.class_probs
                .iter()
                .enumerate()
                .map(|(k, &p)| if k == target { p - 1.0 } else { p })
                .collect()
        };

        let o = out.gate;
        let gate_delta = if error {
            if o < PROB_EPS {
                0.0
            } else {
                beta * (o - 1.0)
            }
        } else if o > 1.0 - PROB_EPS {
            0.0
        } else {
            o
        };

        grad.class_head.accumulate(&class_delta, head_input);
        grad.gate_head.accumulate(&[gate_delta], head_input);

        let mut delta = vec![0.0; head_input.len()];
        self.class_head.backprop_into(&class_delta, &mut delta);
        if !self.gate_detached {
            self.gate_head.backprop_into(&[gate_delta], &mut delta);
        }

        for l in (0..self.trunk.len()).rev() {
            for (d, s) in delta.iter_mut().zip(&trace.unit_scale[l]) {
                *d *= s;
            }
            let input = &trace.layer_inputs[l];
            grad.trunk[l].accumulate(&delta, input);
            if l > 0 {
                let mut prev = vec![0.0; input.len()];
                self.trunk[l].backprop_into(&delta, &mut prev);
                delta = prev;
            }
        }
    }

    /// One shuffled pass of mini-batch gradient descent over `(inputs, targets)`.
    ///
    /// For each mini-batch the zero-one errors are recomputed from the current
    /// class head under the same dropout masks used for the update, `beta` is
    /// recomputed from them, and the parameters take one step along the
    /// gradient of the summed joint loss.
    pub fn train_epoch(
        &mut self,
        inputs: &[&[f64]],
        targets: &[usize],
        sgd: &SgdConfig,
        rng: &mut dyn RngCore,
    ) -> Result<EpochStats, NetError> {
        if inputs.is_empty() {
            return Err(NetError::EmptyBatch);
        }
        assert_eq!(inputs.len(), targets.len());
        if sgd.batch_size == 0 {
            return Err(NetError::InvalidConfig("batch size must be positive".into()));
        }
        let mut order: Vec<usize> = (0..inputs.len()).collect();
        order.shuffle(rng);

        let mut totals = JointLoss::default();
        let mut correct = 0usize;
        for chunk in order.chunks(sgd.batch_size) {
            let batch_inputs: Vec<&[f64]> = chunk.iter().map(|&i| inputs[i]).collect();
            let batch_targets: Vec<usize> = chunk.iter().map(|&i| targets[i]).collect();

            // Masks are fixed per batch so the errors and the gradient see the
            // same sub-network.
            let mask_seed = rng.next_u64();
            let mut mask_rng = RunRng::seed_from_u64(mask_seed);
            let mut errors = Vec::with_capacity(chunk.len());
            for (&x, &t) in batch_inputs.iter().zip(&batch_targets) {
                self.check_input(x)?;
                self.check_target(t)?;
                let out = self.trace(x, Some(&mut mask_rng)).output;
                errors.push(out.predicted_class() != t);
            }
            correct += errors.iter().filter(|&&e| !e).count();
            let beta = compute_beta(&errors)?;
            let batch = Batch {
                inputs: batch_inputs,
                targets: batch_targets,
                errors,
            };
            let mut mask_rng = RunRng::seed_from_u64(mask_seed);
            let (loss, grad) = self.loss_and_gradient(&batch, beta, Some(&mut mask_rng))?;
            totals.class += loss.class;
            totals.gate += loss.gate;
            let lr = sgd.learning_rate;
            for (p, g) in self.params_mut().zip(grad.params()) {
                *p -= lr * g;
            }
        }
        let n = inputs.len() as f64;
        Ok(EpochStats {
            class_loss: totals.class / n,
            gate_loss: totals.gate / n,
            accuracy: correct as f64 / n,
        })
    }
}
