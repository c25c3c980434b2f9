//! Deep multi-task ordinal regression: a feed-forward network whose early
//! layers are shared by every task and whose later layers and scalar output
//! map are task-specific. The network replaces X·W as the latent scorer; the
//! thresholds and losses are the same as in the shallow model.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiTaskDataset};
use crate::loss::{margin, sigmoid};
use crate::model::{ModelError, ThresholdSet, ThresholdVariant};
use crate::optimizer::{update_thresholds, OptimError, DEFAULT_MIN_GAP};
use crate::serde_arrays;

#[derive(Debug, Error)]
pub enum DeepError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite training loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("input has {found} features, network expects {expected}")]
    InputDimMismatch { expected: usize, found: usize },
    #[error("task index {index} out of range for {num_tasks} tasks")]
    TaskOutOfRange { index: usize, num_tasks: usize },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Layer plan: widths of the shared stack and of each task-specific stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmtorArchitecture {
    pub shared_widths: Vec<usize>,
    pub task_widths: Vec<usize>,
    pub num_tasks: usize,
    pub input_dim: usize,
    pub num_classes: u32,
    /// When false, bias vectors stay at zero and receive no updates.
    pub use_bias: bool,
}

impl DmtorArchitecture {
    pub fn new(
        shared_widths: Vec<usize>,
        task_widths: Vec<usize>,
        num_tasks: usize,
        input_dim: usize,
        num_classes: u32,
    ) -> Result<Self, DeepError> {
        if shared_widths.is_empty() {
            return Err(DeepError::InvalidArchitecture(
                "at least one shared layer is required".into(),
            ));
        }
        if task_widths.is_empty() {
            return Err(DeepError::InvalidArchitecture(
                "at least one task-specific layer is required".into(),
            ));
        }
        Self::with_layers(shared_widths, task_widths, num_tasks, input_dim, num_classes)
    }

    /// Baseline constructor: permits an empty task-specific stack so a
    /// single-task network consists of the shared layers only.
    pub(crate) fn shared_only(
        shared_widths: Vec<usize>,
        input_dim: usize,
        num_classes: u32,
    ) -> Result<Self, DeepError> {
        if shared_widths.is_empty() {
            return Err(DeepError::InvalidArchitecture(
                "at least one shared layer is required".into(),
            ));
        }
        Self::with_layers(shared_widths, Vec::new(), 1, input_dim, num_classes)
    }

    fn with_layers(
        shared_widths: Vec<usize>,
        task_widths: Vec<usize>,
        num_tasks: usize,
        input_dim: usize,
        num_classes: u32,
    ) -> Result<Self, DeepError> {
        if shared_widths.iter().chain(&task_widths).any(|&w| w == 0) {
            return Err(DeepError::InvalidArchitecture(
                "layer widths must be positive".into(),
            ));
        }
        if num_tasks == 0 || input_dim == 0 {
            return Err(DeepError::InvalidArchitecture(
                "num_tasks and input_dim must be positive".into(),
            ));
        }
        if num_classes < 2 {
            return Err(DeepError::InvalidArchitecture(
                "num_classes must be at least 2".into(),
            ));
        }
        Ok(Self {
            shared_widths,
            task_widths,
            num_tasks,
            input_dim,
            num_classes,
            use_bias: true,
        })
    }

    pub fn without_bias(mut self) -> Self {
        self.use_bias = false;
        self
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.shared_widths.len() + self.task_widths.len()
    }

    /// Width feeding each task head: the last task layer, or the last shared
    /// layer when the task stack is empty.
    fn head_input_width(&self) -> usize {
        *self
            .task_widths
            .last()
            .unwrap_or_else(|| self.shared_widths.last().expect("shared stack nonempty"))
    }
}

/// One dense layer, out × in weights plus a bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    #[serde(with = "serde_arrays::array2")]
    pub weights: Array2<f64>,
    #[serde(with = "serde_arrays::array1")]
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn preactivation(&self, input: ArrayView1<'_, f64>) -> Array1<f64> {
        self.weights.dot(&input) + &self.bias
    }
}

/// Task head mapping the last hidden layer to the scalar latent score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputLayer {
    #[serde(with = "serde_arrays::array1")]
    pub weights: Array1<f64>,
    pub bias: f64,
}

/// Trained deep multi-task ordinal regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmtorModel {
    pub shared: Vec<DenseLayer>,
    /// task_specific[t] is task t's private stack.
    pub task_specific: Vec<Vec<DenseLayer>>,
    pub outputs: Vec<OutputLayer>,
    pub thresholds: ThresholdSet,
    pub architecture: DmtorArchitecture,
    pub task_ids: Vec<String>,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

fn relu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        0.0
    }
}

/// Subgradient choice: 0 at exactly 0.
fn relu_mask(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
    /// Pre-activations of shared layers, in order.
    shared_pre: Vec<Array1<f64>>,
    /// Post-activations of shared layers (last one is linear).
    shared_act: Vec<Array1<f64>>,
    task_pre: Vec<Array1<f64>>,
    task_act: Vec<Array1<f64>>,
    score: f64,
}

impl DmtorModel {
    fn check_task(&self, task: usize) -> Result<(), DeepError> {
        if task >= self.task_specific.len() {
            return Err(DeepError::TaskOutOfRange {
                index: task,
                num_tasks: self.task_specific.len(),
            });
        }
        Ok(())
    }

    fn check_input(&self, x: ArrayView1<'_, f64>) -> Result<(), DeepError> {
        if x.len() != self.architecture.input_dim {
            return Err(DeepError::InputDimMismatch {
                expected: self.architecture.input_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    /// Latent score of one instance under task `task`: ReLU shared layers
    /// with a linear final shared layer, ReLU task layers, linear output map.
    pub fn forward(&self, task: usize, x: ArrayView1<'_, f64>) -> Result<f64, DeepError> {
        self.check_task(task)?;
        self.check_input(x)?;
        Ok(self.trace(task, x).score)
    }

    fn trace(&self, task: usize, x: ArrayView1<'_, f64>) -> ForwardTrace {
        let r = self.shared.len();
        let mut shared_pre = Vec::with_capacity(r);
        let mut shared_act = Vec::with_capacity(r);
        let mut current = x.to_owned();
        for (i, layer) in self.shared.iter().enumerate() {
            let pre = layer.preactivation(current.view());
            let act = if i + 1 == r {
                pre.clone()
            } else {
                pre.mapv(relu)
            };
            shared_pre.push(pre);
            shared_act.push(act.clone());
            current = act;
        }
        let mut task_pre = Vec::new();
        let mut task_act = Vec::new();
        for layer in &self.task_specific[task] {
            let pre = layer.preactivation(current.view());
            let act = pre.mapv(relu);
            task_pre.push(pre);
            task_act.push(act.clone());
            current = act;
        }
        let head = &self.outputs[task];
        let score = head.weights.dot(&current) + head.bias;
        ForwardTrace {
            shared_pre,
            shared_act,
            task_pre,
            task_act,
            score,
        }
    }

    pub fn predict(&self, task: usize, x: ArrayView1<'_, f64>) -> Result<u32, DeepError> {
        Ok(crate::eval::predict_score(
            self.forward(task, x)?,
            &self.thresholds,
            task,
        ))
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.task_ids.iter().position(|t| t == id)
    }

    pub fn num_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.architecture.input_dim
    }

    pub fn num_classes(&self) -> u32 {
        self.thresholds.num_classes()
    }

    pub fn num_hidden_layers(&self) -> usize {
        self.shared.len() + self.task_specific.first().map_or(0, Vec::len)
    }

    /// Mean ordinal loss of one task's batch under the current parameters.
    pub fn batch_loss(
        &self,
        task: usize,
        features: ArrayView2<'_, f64>,
        labels: &[u32],
    ) -> Result<f64, DeepError> {
        self.check_task(task)?;
        if labels.is_empty() {
            return Err(DeepError::EmptyBatch);
        }
        let mut total = 0.0;
        for (j, &label) in labels.iter().enumerate() {
            let score = self.forward(task, features.row(j))?;
            total += instance_loss(score, label, &self.thresholds, task);
        }
        Ok(total / labels.len() as f64)
    }
}

fn instance_loss(score: f64, label: u32, thresholds: &ThresholdSet, task: usize) -> f64 {
    let row = thresholds.task_row(task);
    match thresholds.variant() {
        ThresholdVariant::Immediate => {
            let y = label as usize;
            margin(row[y - 1] - score) + margin(score - row[y])
        }
        ThresholdVariant::All => row
            .iter()
            .enumerate()
            .map(|(i, &cut)| {
                let z = if i as u32 + 1 >= label { 1.0 } else { -1.0 };
                margin(z * (score - cut))
            })
            .sum(),
    }
}

/// d loss / d score for one instance.
fn instance_score_grad(score: f64, label: u32, thresholds: &ThresholdSet, task: usize) -> f64 {
    let row = thresholds.task_row(task);
    match thresholds.variant() {
        ThresholdVariant::Immediate => {
            let y = label as usize;
            sigmoid(score - row[y]) - sigmoid(row[y - 1] - score)
        }
        ThresholdVariant::All => row
            .iter()
            .enumerate()
            .map(|(i, &cut)| {
                let z = if i as u32 + 1 >= label { 1.0 } else { -1.0 };
                z * sigmoid(z * (score - cut))
            })
            .sum(),
    }
}

/// Adds this instance's threshold-gradient mass for its task's row.
fn accumulate_threshold_grad(
    score: f64,
    label: u32,
    thresholds: &ThresholdSet,
    task: usize,
    out: &mut Array1<f64>,
) {
    let row = thresholds.task_row(task);
    match thresholds.variant() {
        ThresholdVariant::Immediate => {
            let y = label as usize;
            out[y - 1] += sigmoid(row[y - 1] - score);
            out[y] -= sigmoid(score - row[y]);
        }
        ThresholdVariant::All => {
            for (i, &cut) in row.iter().enumerate() {
                let z = if i as u32 + 1 >= label { 1.0 } else { -1.0 };
                out[i] -= z * sigmoid(z * (score - cut));
            }
        }
    }
}

/// Gradient of one dense layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub d_weights: Array2<f64>,
    pub d_bias: Array1<f64>,
}

impl LayerGradient {
    fn zeros_like(layer: &DenseLayer) -> Self {
        Self {
            d_weights: Array2::zeros(layer.weights.raw_dim()),
            d_bias: Array1::zeros(layer.bias.len()),
        }
    }
}

/// Gradients of the batch-mean loss for everything one task's batch touches:
/// the shared stack, that task's stack, its output head, and its thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGradients {
    pub shared: Vec<LayerGradient>,
    pub task: Vec<LayerGradient>,
    pub output_weights: Array1<f64>,
    pub output_bias: f64,
    /// Gradient for this task's threshold row.
    pub thresholds: Array1<f64>,
    /// Mean loss of the batch, a byproduct of the same pass.
    pub loss: f64,
}

/// Reverse-mode gradients of the batch-mean ordinal loss of one task.
pub fn backward(
    model: &DmtorModel,
    task: usize,
    features: ArrayView2<'_, f64>,
    labels: &[u32],
) -> Result<BatchGradients, DeepError> {
    model.check_task(task)?;
    if labels.is_empty() || features.nrows() == 0 {
        return Err(DeepError::EmptyBatch);
    }
    if features.nrows() != labels.len() {
        return Err(DeepError::ArchitectureMismatch(format!(
            "{} feature rows vs {} labels",
            features.nrows(),
            labels.len()
        )));
    }
    if features.ncols() != model.architecture.input_dim {
        return Err(DeepError::InputDimMismatch {
            expected: model.architecture.input_dim,
            found: features.ncols(),
        });
    }
    let r = model.shared.len();
    let task_stack = &model.task_specific[task];
    let head = &model.outputs[task];
    let mut shared_grads: Vec<LayerGradient> = model
        .shared
        .iter()
        .map(LayerGradient::zeros_like)
        .collect();
    let mut task_grads: Vec<LayerGradient> =
        task_stack.iter().map(LayerGradient::zeros_like).collect();
    let mut d_out_w = Array1::zeros(head.weights.len());
    let mut d_out_b = 0.0;
    let mut d_thresholds = Array1::zeros(model.thresholds.len_per_task());
    let mut total_loss = 0.0;

    for (j, &label) in labels.iter().enumerate() {
        let x = features.row(j);
        let trace = model.trace(task, x);
        total_loss += instance_loss(trace.score, label, &model.thresholds, task);
        accumulate_threshold_grad(
            trace.score,
            label,
            &model.thresholds,
            task,
            &mut d_thresholds,
        );
        let d_score = instance_score_grad(trace.score, label, &model.thresholds, task);

        // output head
        let head_input = trace
            .task_act
            .last()
            .unwrap_or_else(|| trace.shared_act.last().expect("shared stack nonempty"));
        d_out_w.scaled_add(d_score, head_input);
        d_out_b += d_score;
        let mut delta: Array1<f64> = &head.weights * d_score;

        // task-specific stack, reversed: every layer is ReLU
        for (k, layer) in task_stack.iter().enumerate().rev() {
            let masked = &delta * &trace.task_pre[k].mapv(relu_mask);
            let input = if k == 0 {
                &trace.shared_act[r - 1]
            } else {
                &trace.task_act[k - 1]
            };
            accumulate_outer(&mut task_grads[k], &masked, input.view());
            delta = layer.weights.t().dot(&masked);
        }

        // shared stack, reversed: the last shared layer is linear
        for (k, layer) in model.shared.iter().enumerate().rev() {
            let masked = if k + 1 == r {
                delta.clone()
            } else {
                &delta * &trace.shared_pre[k].mapv(relu_mask)
            };
            if k == 0 {
                accumulate_outer(&mut shared_grads[k], &masked, x);
            } else {
                accumulate_outer(&mut shared_grads[k], &masked, trace.shared_act[k - 1].view());
            };
            delta = layer.weights.t().dot(&masked);
        }
    }

    let inv_n = 1.0 / labels.len() as f64;
    for grad in shared_grads.iter_mut().chain(task_grads.iter_mut()) {
        grad.d_weights.mapv_inplace(|v| v * inv_n);
        grad.d_bias.mapv_inplace(|v| v * inv_n);
    }
    d_out_w.mapv_inplace(|v| v * inv_n);
    d_thresholds.mapv_inplace(|v| v * inv_n);
    Ok(BatchGradients {
        shared: shared_grads,
        task: task_grads,
        output_weights: d_out_w,
        output_bias: d_out_b * inv_n,
        thresholds: d_thresholds,
        loss: total_loss * inv_n,
    })
}

fn accumulate_outer(grad: &mut LayerGradient, delta: &Array1<f64>, input: ArrayView1<'_, f64>) {
    for (i, &d) in delta.iter().enumerate() {
        grad.d_weights.row_mut(i).scaled_add(d, &input);
        grad.d_bias[i] += d;
    }
}

/// Mini-batch SGD settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 64,
            epochs: 200,
            seed: 0,
        }
    }
}

impl SgdConfig {
    fn validate(&self) -> Result<(), DeepError> {
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(DeepError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(DeepError::Config(
                "batch_size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

fn glorot_uniform(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

fn init_model(
    arch: &DmtorArchitecture,
    variant: ThresholdVariant,
    task_ids: Vec<String>,
    rng: &mut ChaCha20Rng,
) -> Result<DmtorModel, DeepError> {
    let mut dims = vec![arch.input_dim];
    dims.extend(&arch.shared_widths);
    let shared: Vec<DenseLayer> = dims
        .windows(2)
        .map(|pair| DenseLayer {
            weights: glorot_uniform(rng, pair[1], pair[0]),
            bias: Array1::zeros(pair[1]),
        })
        .collect();
    let shared_out = *arch.shared_widths.last().expect("validated");
    let mut task_specific = Vec::with_capacity(arch.num_tasks);
    for _ in 0..arch.num_tasks {
        let mut dims = vec![shared_out];
        dims.extend(&arch.task_widths);
        task_specific.push(
            dims.windows(2)
                .map(|pair| DenseLayer {
                    weights: glorot_uniform(rng, pair[1], pair[0]),
                    bias: Array1::zeros(pair[1]),
                })
                .collect::<Vec<_>>(),
        );
    }
    let head_in = arch.head_input_width();
    let outputs: Vec<OutputLayer> = (0..arch.num_tasks)
        .map(|_| OutputLayer {
            weights: glorot_uniform(rng, 1, head_in).row(0).to_owned(),
            bias: 0.0,
        })
        .collect();
    let thresholds = ThresholdSet::evenly_spaced(variant, arch.num_tasks, arch.num_classes)?;
    Ok(DmtorModel {
        shared,
        task_specific,
        outputs,
        thresholds,
        architecture: arch.clone(),
        task_ids,
        epoch_loss: Vec::new(),
    })
}

fn apply_update(layer: &mut DenseLayer, grad: &LayerGradient, lr: f64, use_bias: bool) {
    layer.weights.scaled_add(-lr, &grad.d_weights);
    if use_bias {
        layer.bias.scaled_add(-lr, &grad.d_bias);
    }
}

/// Trains a DMTOR model with seeded mini-batch SGD. Each epoch shuffles every
/// task's instances, chunks them into batches, and interleaves the batches
/// across tasks round-robin; a batch updates the shared stack, the owning
/// task's stack and head, and that task's thresholds (monotonicity-repaired).
pub fn train_dmtor(
    data: &MultiTaskDataset,
    variant: ThresholdVariant,
    arch: &DmtorArchitecture,
    cfg: &SgdConfig,
) -> Result<DmtorModel, DeepError> {
    data.validate()?;
    cfg.validate()?;
    if arch.num_tasks != data.num_tasks() {
        return Err(DeepError::ArchitectureMismatch(format!(
            "architecture has {} tasks, dataset {}",
            arch.num_tasks,
            data.num_tasks()
        )));
    }
    if arch.input_dim != data.num_features() {
        return Err(DeepError::ArchitectureMismatch(format!(
            "architecture expects {} features, dataset has {}",
            arch.input_dim,
            data.num_features()
        )));
    }
    if arch.num_classes != data.num_classes() {
        return Err(DeepError::ArchitectureMismatch(format!(
            "architecture expects {} classes, dataset has {}",
            arch.num_classes,
            data.num_classes()
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut model = init_model(arch, variant, data.task_ids(), &mut rng)?;
    let total_instances = data.total_instances() as f64;
    for epoch in 0..cfg.epochs {
        // per-task shuffled batch index lists
        let batches_per_task: Vec<Vec<Vec<usize>>> = data
            .tasks()
            .iter()
            .map(|task| {
                let mut idx: Vec<usize> = (0..task.num_instances()).collect();
                use rand::seq::SliceRandom;
                idx.shuffle(&mut rng);
                idx.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect()
            })
            .collect();
        let max_rounds = batches_per_task.iter().map(Vec::len).max().unwrap_or(0);
        let mut epoch_loss_sum = 0.0;
        for round in 0..max_rounds {
            for (t, task_batches) in batches_per_task.iter().enumerate() {
                let Some(batch) = task_batches.get(round) else {
                    continue;
                };
                let task = data.task(t);
                let g = data.num_features();
                let mut feats = Vec::with_capacity(batch.len() * g);
                let mut labels = Vec::with_capacity(batch.len());
                for &j in batch {
                    feats.extend(task.instance(j).iter().copied());
                    labels.push(task.labels()[j]);
                }
                let features = Array2::from_shape_vec((batch.len(), g), feats)
                    .expect("batch buffer shape");
                let grads = backward(&model, t, features.view(), &labels)?;
                epoch_loss_sum += grads.loss * batch.len() as f64;
                let lr = cfg.learning_rate;
                for (layer, grad) in model.shared.iter_mut().zip(&grads.shared) {
                    apply_update(layer, grad, lr, arch.use_bias);
                }
                for (layer, grad) in model.task_specific[t].iter_mut().zip(&grads.task) {
                    apply_update(layer, grad, lr, arch.use_bias);
                }
                model.outputs[t].weights.scaled_add(-lr, &grads.output_weights);
                if arch.use_bias {
                    model.outputs[t].bias -= lr * grads.output_bias;
                }
                // threshold step for this task only, then the repair sweep
                let mut full_grad = Array2::zeros(model.thresholds.values().raw_dim());
                full_grad.row_mut(t).assign(&grads.thresholds);
                model.thresholds =
                    update_thresholds(&model.thresholds, &full_grad, lr, DEFAULT_MIN_GAP)?;
            }
        }
        let epoch_mean = epoch_loss_sum / total_instances;
        if !epoch_mean.is_finite() {
            return Err(DeepError::NonFinite { epoch: epoch + 1 });
        }
        model.epoch_loss.push(epoch_mean);
    }
    Ok(model)
}
