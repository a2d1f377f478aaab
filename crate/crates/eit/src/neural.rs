//! Fully connected networks for damage characterization, with manual
//! forward and backward passes in double precision.
//!
//! Three task heads share the same machinery: a softmax classifier for
//! the hole count and two linear-output regressors for radii and center
//! positions. Regression targets are padded to the three-hole maximum and
//! masked, so a two-hole sample contributes nothing to the loss in its
//! empty slot. Training is plain minibatch Adam with an optional early
//! stop on validation loss; everything is deterministic given the seed.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write as IoWrite};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetRecord};
use crate::dense::Mat;
use crate::error::{Error, Result};

/// Which quantity a network predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Count,
    Radius,
    Center,
}

impl Task {
    pub fn output_width(self) -> usize {
        match self {
            Task::Count | Task::Radius => 3,
            Task::Center => 6,
        }
    }

    fn hidden_widths(self) -> [usize; 3] {
        match self {
            Task::Count => [256, 64, 16],
            Task::Radius => [256, 64, 32],
            Task::Center => [256, 128, 32],
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "count" => Ok(Task::Count),
            "radius" => Ok(Task::Radius),
            "center" => Ok(Task::Center),
            other => Err(Error::InvalidConfig(format!(
                "unknown task '{other}', expected count, radius, or center"
            ))),
        }
    }
}

/// Layer widths from input to output, ReLU on every hidden layer, and
/// either a softmax or a bare linear output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub widths: Vec<usize>,
    pub softmax_output: bool,
}

impl Architecture {
    /// The task's standard head on a given input width.
    pub fn for_task(task: Task, input_width: usize) -> Self {
        let mut widths = vec![input_width];
        widths.extend(task.hidden_widths());
        widths.push(task.output_width());
        Self {
            widths,
            softmax_output: matches!(task, Task::Count),
        }
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of weight layers.
    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.iter().any(|&w| w == 0) {
            return Err(Error::InvalidConfig(format!(
                "architecture needs at least two nonzero layer widths, got {:?}",
                self.widths
            )));
        }
        Ok(())
    }
}

/// Weights (fan_in x fan_out per layer) and biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub arch: Architecture,
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

impl Network {
    pub fn n_params(&self) -> usize {
        self.weights
            .iter()
            .map(|w| w.rows() * w.cols())
            .sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Shape consistency with the architecture and finiteness of every
    /// parameter; run on anything loaded from disk.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let l = self.arch.n_layers();
        if self.weights.len() != l || self.biases.len() != l {
            return Err(Error::ShapeMismatch(format!(
                "{} weight and {} bias layers for a {l}-layer architecture",
                self.weights.len(),
                self.biases.len()
            )));
        }
        for i in 0..l {
            if self.weights[i].rows() != self.arch.widths[i]
                || self.weights[i].cols() != self.arch.widths[i + 1]
                || self.biases[i].len() != self.arch.widths[i + 1]
            {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i} shapes do not match widths {:?}",
                    self.arch.widths
                )));
            }
            if self.weights[i].data().iter().any(|v| !v.is_finite())
                || self.biases[i].iter().any(|v| !v.is_finite())
            {
                return Err(Error::InvalidConfig(format!(
                    "layer {i} contains non-finite parameters"
                )));
            }
        }
        Ok(())
    }
}

/// He-scaled Gaussian weights (std sqrt(2/fan_in)) and zero biases.
pub fn init_network(arch: &Architecture, seed: u64) -> Result<Network> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = Vec::new();
    let mut biases = Vec::new();
    for l in 0..arch.n_layers() {
        let fan_in = arch.widths[l];
        let fan_out = arch.widths[l + 1];
        let dist = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).unwrap();
        let data: Vec<f64> = (0..fan_in * fan_out)
            .map(|_| dist.sample(&mut rng))
            .collect();
        weights.push(Mat::from_vec(fan_in, fan_out, data));
        biases.push(vec![0.0; fan_out]);
    }
    Ok(Network {
        arch: arch.clone(),
        weights,
        biases,
    })
}

/// Activations of every layer for a batch, kept for backpropagation.
/// `preacts[l]` holds the pre-activation of layer l, `activations[0]` the
/// input batch, and `activations[l + 1]` layer l's output.
pub struct ForwardCache {
    pub activations: Vec<Mat>,
    pub preacts: Vec<Mat>,
}

impl ForwardCache {
    pub fn output(&self) -> &Mat {
        self.activations.last().unwrap()
    }
}

/// Run a batch (one sample per row) through the network.
pub fn forward_batch(net: &Network, x: &Mat) -> Result<ForwardCache> {
    if x.cols() != net.arch.input_width() {
        return Err(Error::ShapeMismatch(format!(
            "input width {} for a {}-input network",
            x.cols(),
            net.arch.input_width()
        )));
    }
    let l = net.arch.n_layers();
    let mut activations = vec![x.clone()];
    let mut preacts = Vec::with_capacity(l);
    for layer in 0..l {
        let mut z = activations[layer].matmul(&net.weights[layer]);
        for i in 0..z.rows() {
            for (v, b) in z.row_mut(i).iter_mut().zip(&net.biases[layer]) {
                *v += b;
            }
        }
        let a = if layer + 1 < l {
            relu(&z)
        } else if net.arch.softmax_output {
            softmax_rows(&z)
        } else {
            z.clone()
        };
        preacts.push(z);
        activations.push(a);
    }
    Ok(ForwardCache {
        activations,
        preacts,
    })
}

/// Run one sample through the network.
pub fn forward_pass(net: &Network, input: &[f64]) -> Result<Vec<f64>> {
    let x = Mat::from_vec(1, input.len(), input.to_vec());
    let cache = forward_batch(net, &x)?;
    Ok(cache.output().row(0).to_vec())
}

fn relu(z: &Mat) -> Mat {
    let data = z.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
    Mat::from_vec(z.rows(), z.cols(), data)
}

fn softmax_rows(z: &Mat) -> Mat {
    let mut out = z.clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean categorical cross-entropy of probability rows against one-hot
/// target rows.
pub fn cross_entropy(probs: &Mat, targets: &Mat) -> f64 {
    let mut total = 0.0;
    for i in 0..probs.rows() {
        for (p, t) in probs.row(i).iter().zip(targets.row(i)) {
            if *t != 0.0 {
                total -= t * p.max(1e-300).ln();
            }
        }
    }
    total / probs.rows() as f64
}

/// Mean squared error over unmasked output slots only (mask entries are
/// 0 or 1). Zero when nothing is unmasked.
pub fn masked_mse(outputs: &Mat, targets: &Mat, mask: &Mat) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for ((o, t), m) in outputs.data().iter().zip(targets.data()).zip(mask.data()) {
        total += m * (o - t) * (o - t);
        count += m;
    }
    if count == 0.0 {
        0.0
    } else {
        total / count
    }
}

fn loss_value(net: &Network, outputs: &Mat, targets: &Mat, mask: &Mat) -> f64 {
    if net.arch.softmax_output {
        cross_entropy(outputs, targets)
    } else {
        masked_mse(outputs, targets, mask)
    }
}

/// Loss gradients for every weight matrix and bias vector.
pub struct Gradients {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
}

/// Exact backpropagation through the cached forward pass. For the softmax
/// classifier the output-layer delta is (probabilities - one-hot) / batch;
/// for regressors it is the masked MSE derivative.
pub fn backward_pass(
    net: &Network,
    cache: &ForwardCache,
    targets: &Mat,
    mask: &Mat,
) -> Gradients {
    let l = net.arch.n_layers();
    let output = cache.output();
    let batch = output.rows() as f64;

    let mut delta = if net.arch.softmax_output {
        let data = output
            .data()
            .iter()
            .zip(targets.data())
            .map(|(p, t)| (p - t) / batch)
            .collect();
        Mat::from_vec(output.rows(), output.cols(), data)
    } else {
        let count: f64 = mask.data().iter().sum();
        let scale = if count == 0.0 { 0.0 } else { 2.0 / count };
        let data = output
            .data()
            .iter()
            .zip(targets.data())
            .zip(mask.data())
            .map(|((o, t), m)| scale * m * (o - t))
            .collect();
        Mat::from_vec(output.rows(), output.cols(), data)
    };

    let mut grad_w = vec![Mat::zeros(0, 0); l];
    let mut grad_b = vec![Vec::new(); l];
    for layer in (0..l).rev() {
        grad_w[layer] = cache.activations[layer].tr_matmul(&delta);
        let mut db = vec![0.0; delta.cols()];
        for i in 0..delta.rows() {
            for (d, v) in db.iter_mut().zip(delta.row(i)) {
                *d += v;
            }
        }
        grad_b[layer] = db;
        if layer > 0 {
            let upstream = delta.matmul_tr(&net.weights[layer]);
            let z = &cache.preacts[layer - 1];
            let data = upstream
                .data()
                .iter()
                .zip(z.data())
                .map(|(u, zv)| if *zv > 0.0 { *u } else { 0.0 })
                .collect();
            delta = Mat::from_vec(upstream.rows(), upstream.cols(), data);
        }
    }
    Gradients {
        weights: grad_w,
        biases: grad_b,
    }
}

/// Minibatch training settings. `patience` is the early-stopping window
/// on validation loss; `None` (or an empty validation split) trains for
/// the full epoch budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            batch_size: 128,
            learning_rate: 1e-3,
            seed: 0,
            patience: Some(30),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "epochs and batch size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Per-epoch training record. Accuracy fields are populated for the
/// classifier only; validation fields when a validation split exists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub train_accuracy: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Trained network plus its history. `best_epoch` indexes the epoch whose
/// parameters were kept (the last one unless early stopping engaged).
pub struct TrainResult {
    pub network: Network,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Build the input, target, and mask batches for a task. Inputs are the
/// records' unit-normalized reconstruction vectors.
pub fn task_matrices(records: &[&DatasetRecord], task: Task) -> Result<(Mat, Mat, Mat)> {
    if records.is_empty() {
        return Err(Error::InvalidConfig("no records to encode".into()));
    }
    let width = records[0].normalized.len();
    let out = task.output_width();
    let mut x = Mat::zeros(records.len(), width);
    let mut t = Mat::zeros(records.len(), out);
    let mut m = Mat::zeros(records.len(), out);
    for (i, r) in records.iter().enumerate() {
        if r.normalized.len() != width {
            return Err(Error::ShapeMismatch(format!(
                "record {i} has vector length {}, expected {width}",
                r.normalized.len()
            )));
        }
        x.row_mut(i).copy_from_slice(&r.normalized);
        match task {
            Task::Count => {
                t.row_mut(i).copy_from_slice(&r.count_one_hot());
                m.row_mut(i).fill(1.0);
            }
            Task::Radius => {
                let (target, mask) = r.radius_target();
                t.row_mut(i).copy_from_slice(&target);
                for (mv, &flag) in m.row_mut(i).iter_mut().zip(&mask) {
                    *mv = flag as u8 as f64;
                }
            }
            Task::Center => {
                let (target, mask) = r.center_target();
                t.row_mut(i).copy_from_slice(&target);
                let row = m.row_mut(i);
                for (slot, &flag) in mask.iter().enumerate() {
                    row[2 * slot] = flag as u8 as f64;
                    row[2 * slot + 1] = flag as u8 as f64;
                }
            }
        }
    }
    Ok((x, t, m))
}

struct Adam {
    m_w: Vec<Mat>,
    v_w: Vec<Mat>,
    m_b: Vec<Vec<f64>>,
    v_b: Vec<Vec<f64>>,
    step: usize,
    lr: f64,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

impl Adam {
    fn new(net: &Network, lr: f64) -> Self {
        Self {
            m_w: net.weights.iter().map(|w| Mat::zeros(w.rows(), w.cols())).collect(),
            v_w: net.weights.iter().map(|w| Mat::zeros(w.rows(), w.cols())).collect(),
            m_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            v_b: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            step: 0,
            lr,
        }
    }

    fn apply(&mut self, net: &mut Network, grads: &Gradients) {
        self.step += 1;
        let t = self.step as i32;
        let rate = self.lr * (1.0 - ADAM_BETA2.powi(t)).sqrt() / (1.0 - ADAM_BETA1.powi(t));
        for l in 0..net.weights.len() {
            for i in 0..net.weights[l].rows() {
                let w = net.weights[l].row_mut(i);
                let g = grads.weights[l].row(i);
                let m = self.m_w[l].row_mut(i);
                let v = self.v_w[l].row_mut(i);
                for k in 0..w.len() {
                    m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                    v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                    w[k] -= rate * m[k] / (v[k].sqrt() + ADAM_EPS);
                }
            }
            let b = &mut net.biases[l];
            let g = &grads.biases[l];
            let m = &mut self.m_b[l];
            let v = &mut self.v_b[l];
            for k in 0..b.len() {
                m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
                v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
                b[k] -= rate * m[k] / (v[k].sqrt() + ADAM_EPS);
            }
        }
    }
}

fn gather_rows(m: &Mat, indices: &[usize]) -> Mat {
    let mut out = Mat::zeros(indices.len(), m.cols());
    for (dst, &src) in indices.iter().enumerate() {
        out.row_mut(dst).copy_from_slice(m.row(src));
    }
    out
}

fn accuracy(outputs: &Mat, targets: &Mat) -> f64 {
    let mut correct = 0;
    for i in 0..outputs.rows() {
        if argmax(outputs.row(i)) == argmax(targets.row(i)) {
            correct += 1;
        }
    }
    correct as f64 / outputs.rows() as f64
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Train a network on the dataset's training split, validating against
/// its validation split. Deterministic: (dataset, config, initial net)
/// fully determine the result.
pub fn train(
    net: Network,
    dataset: &Dataset,
    task: Task,
    config: &TrainConfig,
) -> Result<TrainResult> {
    config.validate()?;
    net.validate()?;
    let train_records = dataset.subset(&dataset.split.train);
    if train_records.is_empty() {
        return Err(Error::InvalidConfig("training split is empty".into()));
    }
    if net.arch.output_width() != task.output_width()
        || net.arch.softmax_output != matches!(task, Task::Count)
    {
        return Err(Error::ShapeMismatch(format!(
            "network head does not fit the {task:?} task"
        )));
    }
    let (x, t, m) = task_matrices(&train_records, task)?;
    if x.cols() != net.arch.input_width() {
        return Err(Error::ShapeMismatch(format!(
            "records have width {}, network expects {}",
            x.cols(),
            net.arch.input_width()
        )));
    }
    let val_records = dataset.subset(&dataset.split.validation);
    let val = if val_records.is_empty() {
        None
    } else {
        Some(task_matrices(&val_records, task)?)
    };
    let classifier = matches!(task, Task::Count);

    let mut net = net;
    let mut adam = Adam::new(&net, config.learning_rate);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..x.rows()).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Network)> = None;
    let mut stopped_early = false;

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct_weighted = 0.0;
        for batch in order.chunks(config.batch_size) {
            let xb = gather_rows(&x, batch);
            let tb = gather_rows(&t, batch);
            let mb = gather_rows(&m, batch);
            let cache = forward_batch(&net, &xb)?;
            let batch_loss = loss_value(&net, cache.output(), &tb, &mb);
            if !batch_loss.is_finite() {
                return Err(Error::Divergence(epoch));
            }
            loss_sum += batch_loss * batch.len() as f64;
            if classifier {
                correct_weighted += accuracy(cache.output(), &tb) * batch.len() as f64;
            }
            let grads = backward_pass(&net, &cache, &tb, &mb);
            adam.apply(&mut net, &grads);
        }
        let train_loss = loss_sum / x.rows() as f64;
        let train_accuracy = classifier.then(|| correct_weighted / x.rows() as f64);

        let (val_loss, val_accuracy) = match &val {
            Some((xv, tv, mv)) => {
                let cache = forward_batch(&net, xv)?;
                let loss = loss_value(&net, cache.output(), tv, mv);
                if !loss.is_finite() {
                    return Err(Error::Divergence(epoch));
                }
                let acc = classifier.then(|| accuracy(cache.output(), tv));
                (Some(loss), acc)
            }
            None => (None, None),
        };
        history.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            train_accuracy,
            val_accuracy,
        });

        if let (Some(patience), Some(vl)) = (config.patience, val_loss) {
            let improved = best.as_ref().map_or(true, |(b, _, _)| vl < *b);
            if improved {
                best = Some((vl, epoch, net.clone()));
            } else if let Some((_, best_epoch, _)) = &best {
                if epoch - best_epoch >= patience {
                    stopped_early = true;
                    break;
                }
            }
        }
    }

    let (network, best_epoch) = match best {
        Some((_, epoch, snapshot)) => (snapshot, epoch),
        None => {
            let last = history.len().saturating_sub(1);
            (net, last)
        }
    };
    Ok(TrainResult {
        network,
        history,
        best_epoch,
        stopped_early,
    })
}

/// Accuracy and confusion matrix of the count classifier. Confusion rows
/// index the true class, columns the prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierReport {
    pub n: usize,
    pub accuracy: f64,
    pub confusion: [[usize; 3]; 3],
}

pub fn evaluate_classifier(
    net: &Network,
    records: &[&DatasetRecord],
) -> Result<ClassifierReport> {
    let (x, t, _) = task_matrices(records, Task::Count)?;
    let cache = forward_batch(net, &x)?;
    let out = cache.output();
    let mut confusion = [[0usize; 3]; 3];
    let mut correct = 0;
    for i in 0..out.rows() {
        let truth = argmax(t.row(i));
        let pred = argmax(out.row(i));
        confusion[truth][pred] += 1;
        if truth == pred {
            correct += 1;
        }
    }
    Ok(ClassifierReport {
        n: records.len(),
        accuracy: correct as f64 / records.len() as f64,
        confusion,
    })
}

/// Regression quality: masked MSE in the canonical slot order, plus a
/// physical mean deviation computed after optimally assigning prediction
/// slots to true holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorReport {
    pub n_records: usize,
    pub n_holes: usize,
    pub mse: f64,
    /// Radius task: mean |predicted - true| in meters. Center task: mean
    /// Euclidean distance in meters.
    pub mean_deviation: f64,
}

pub fn evaluate_regressor(
    net: &Network,
    records: &[&DatasetRecord],
    task: Task,
) -> Result<RegressorReport> {
    if matches!(task, Task::Count) {
        return Err(Error::InvalidConfig(
            "count is evaluated with evaluate_classifier".into(),
        ));
    }
    let (x, _, _) = task_matrices(records, task)?;
    let cache = forward_batch(net, &x)?;
    let predictions: Vec<Vec<f64>> = (0..records.len())
        .map(|i| cache.output().row(i).to_vec())
        .collect();
    regression_metrics(&predictions, records, task)
}

const SLOT_PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Metrics for precomputed predictions (one output vector per record).
pub fn regression_metrics(
    predictions: &[Vec<f64>],
    records: &[&DatasetRecord],
    task: Task,
) -> Result<RegressorReport> {
    if predictions.len() != records.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions for {} records",
            predictions.len(),
            records.len()
        )));
    }
    let out = task.output_width();
    let mut mse_total = 0.0;
    let mut mse_count = 0.0;
    let mut deviation_total = 0.0;
    let mut n_holes = 0;
    for (pred, record) in predictions.iter().zip(records) {
        if pred.len() != out {
            return Err(Error::ShapeMismatch(format!(
                "prediction width {} for task {task:?}",
                pred.len()
            )));
        }
        let holes = &record.scenario.holes;
        n_holes += holes.len();

        // Canonical-slot masked squared error, matching the training loss.
        match task {
            Task::Radius => {
                let (target, mask) = record.radius_target();
                for i in 0..3 {
                    if mask[i] {
                        mse_total += (pred[i] - target[i]) * (pred[i] - target[i]);
                        mse_count += 1.0;
                    }
                }
            }
            Task::Center => {
                let (target, mask) = record.center_target();
                for slot in 0..3 {
                    if mask[slot] {
                        for j in [2 * slot, 2 * slot + 1] {
                            mse_total += (pred[j] - target[j]) * (pred[j] - target[j]);
                            mse_count += 1.0;
                        }
                    }
                }
            }
            Task::Count => unreachable!(),
        }

        // Deviation after the best assignment of prediction slots to true
        // holes (brute force over the six slot permutations).
        let mut best = f64::INFINITY;
        for perm in &SLOT_PERMUTATIONS {
            let mut cost = 0.0;
            for (i, h) in holes.iter().enumerate() {
                let slot = perm[i];
                cost += match task {
                    Task::Radius => (pred[slot] - h.radius).abs(),
                    Task::Center => {
                        let dx = pred[2 * slot] - h.center.x;
                        let dy = pred[2 * slot + 1] - h.center.y;
                        (dx * dx + dy * dy).sqrt()
                    }
                    Task::Count => unreachable!(),
                };
            }
            best = best.min(cost);
        }
        deviation_total += best;
    }
    Ok(RegressorReport {
        n_records: records.len(),
        n_holes,
        mse: if mse_count == 0.0 {
            0.0
        } else {
            mse_total / mse_count
        },
        mean_deviation: if n_holes == 0 {
            0.0
        } else {
            deviation_total / n_holes as f64
        },
    })
}

/// A trained network bound to its task, as stored on disk (JSON).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub task: Task,
    pub network: Network,
}

pub fn save_network(checkpoint: &Checkpoint, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, checkpoint)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn load_network(path: &Path) -> Result<Checkpoint> {
    let checkpoint: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    checkpoint.network.validate()?;
    Ok(checkpoint)
}
