//! The two ordinal losses and their analytic gradients.
//!
//! Both losses score an instance as X·W_t and charge smooth margin penalties
//! against cut points. The immediate variant charges only the two thresholds
//! adjacent to the true segment (finite first/last thresholds included); the
//! all variant charges every interior threshold, adjacent or not. Loss and
//! gradient are normalized by 1/n_t per task so the gradient is the exact
//! derivative of the reported value.

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

use crate::dataset::MultiTaskDataset;
use crate::model::{ThresholdSet, ThresholdVariant, WeightMatrix};

#[derive(Debug, Error)]
pub enum LossError {
    #[error("threshold variant mismatch: expected {expected:?}, found {found:?}")]
    VariantMismatch {
        expected: ThresholdVariant,
        found: ThresholdVariant,
    },
    #[error("weight matrix is {found_rows}×{found_cols}, dataset needs {rows}×{cols}")]
    WeightShapeMismatch {
        rows: usize,
        cols: usize,
        found_rows: usize,
        found_cols: usize,
    },
    #[error("threshold set covers {found} tasks / {found_classes} classes, dataset has {tasks} tasks / {classes} classes")]
    ThresholdShapeMismatch {
        tasks: usize,
        classes: u32,
        found: usize,
        found_classes: u32,
    },
}

/// Smooth margin penalty M(d) = log(1 + exp(d)).
///
/// Overflow-safe: above d = 35 the direct form would round 1 + exp(d) to
/// exp(d) anyway, so the asymptote d + log1p(exp(−d)) is used there.
pub fn margin(d: f64) -> f64 {
    if d > 35.0 {
        d + (-d).exp().ln_1p()
    } else {
        d.exp().ln_1p()
    }
}

/// Logistic function, the derivative of [`margin`].
pub fn sigmoid(d: f64) -> f64 {
    if d >= 0.0 {
        1.0 / (1.0 + (-d).exp())
    } else {
        let e = d.exp();
        e / (1.0 + e)
    }
}

/// Total loss plus the per-task 1/n_t-normalized contributions that sum to it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub total: f64,
    pub per_task: Vec<f64>,
}

/// Gradients with respect to the weight matrix and the stored thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    /// G × T, column t is ∂L/∂W_t.
    pub d_weights: Array2<f64>,
    /// Same shape as the threshold storage (T × L).
    pub d_thresholds: Array2<f64>,
}

fn check_shapes(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
    expected: ThresholdVariant,
) -> Result<(), LossError> {
    if thresholds.variant() != expected {
        return Err(LossError::VariantMismatch {
            expected,
            found: thresholds.variant(),
        });
    }
    if weights.num_features() != data.num_features() || weights.num_tasks() != data.num_tasks() {
        return Err(LossError::WeightShapeMismatch {
            rows: data.num_features(),
            cols: data.num_tasks(),
            found_rows: weights.num_features(),
            found_cols: weights.num_tasks(),
        });
    }
    if thresholds.num_tasks() != data.num_tasks()
        || thresholds.num_classes() != data.num_classes()
    {
        return Err(LossError::ThresholdShapeMismatch {
            tasks: data.num_tasks(),
            classes: data.num_classes(),
            found: thresholds.num_tasks(),
            found_classes: thresholds.num_classes(),
        });
    }
    Ok(())
}

/// Immediate-threshold loss: each instance is charged
/// M(ϑ_{y−1} − X·W_t) + M(X·W_t − ϑ_y) against its segment's two endpoints.
pub fn loss_immediate(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> Result<LossValue, LossError> {
    check_shapes(data, weights, thresholds, ThresholdVariant::Immediate)?;
    Ok(immediate_loss_unchecked(data, weights, thresholds))
}

pub(crate) fn immediate_loss_unchecked(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> LossValue {
    let mut per_task = Vec::with_capacity(data.num_tasks());
    for (t, task) in data.tasks().iter().enumerate() {
        let scores = task.features().dot(&weights.task_weights(t));
        let row = thresholds.task_row(t);
        let mut sum = 0.0;
        for (j, &label) in task.labels().iter().enumerate() {
            let s = scores[j];
            let y = label as usize;
            sum += margin(row[y - 1] - s) + margin(s - row[y]);
        }
        per_task.push(sum / task.num_instances() as f64);
    }
    let total = per_task.iter().sum();
    LossValue { total, per_task }
}

/// Gradient of [`loss_immediate`] with respect to weights and all stored
/// thresholds (including the finite first/last ones, which the loss uses).
pub fn grad_immediate(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> Result<LossGradient, LossError> {
    check_shapes(data, weights, thresholds, ThresholdVariant::Immediate)?;
    Ok(immediate_grad_unchecked(data, weights, thresholds))
}

pub(crate) fn immediate_grad_unchecked(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> LossGradient {
    let mut d_weights = Array2::zeros(weights.values().raw_dim());
    let mut d_thresholds = Array2::zeros(thresholds.values().raw_dim());
    for (t, task) in data.tasks().iter().enumerate() {
        let scores = task.features().dot(&weights.task_weights(t));
        let row = thresholds.task_row(t);
        let inv_n = 1.0 / task.num_instances() as f64;
        let mut w_col = d_weights.column_mut(t);
        for (j, &label) in task.labels().iter().enumerate() {
            let s = scores[j];
            let y = label as usize;
            let upper = sigmoid(s - row[y]);
            let lower = sigmoid(row[y - 1] - s);
            w_col.scaled_add((upper - lower) * inv_n, &task.instance(j));
            d_thresholds[(t, y - 1)] += lower * inv_n;
            d_thresholds[(t, y)] -= upper * inv_n;
        }
    }
    LossGradient {
        d_weights,
        d_thresholds,
    }
}

/// All-threshold loss: each instance is charged a margin term against every
/// interior threshold, M(ϑ_{tμ} − X·W_t) below its class and
/// M(X·W_t − ϑ_{tμ}) at or above it.
pub fn loss_all(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> Result<LossValue, LossError> {
    check_shapes(data, weights, thresholds, ThresholdVariant::All)?;
    Ok(all_loss_unchecked(data, weights, thresholds))
}

pub(crate) fn all_loss_unchecked(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> LossValue {
    let mut per_task = Vec::with_capacity(data.num_tasks());
    for (t, task) in data.tasks().iter().enumerate() {
        let scores = task.features().dot(&weights.task_weights(t));
        let row = thresholds.task_row(t);
        let mut sum = 0.0;
        for (j, &label) in task.labels().iter().enumerate() {
            let s = scores[j];
            for (i, &cut) in row.iter().enumerate() {
                let z = indicator(i, label);
                sum += margin(z * (s - cut));
            }
        }
        per_task.push(sum / task.num_instances() as f64);
    }
    let total = per_task.iter().sum();
    LossValue { total, per_task }
}

/// +1 when the stored threshold index i (cut point ϑ_{i+1}) is at or above
/// the instance's class, −1 below it.
fn indicator(index: usize, label: u32) -> f64 {
    if index as u32 + 1 >= label {
        1.0
    } else {
        -1.0
    }
}

/// Gradient of [`loss_all`].
pub fn grad_all(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> Result<LossGradient, LossError> {
    check_shapes(data, weights, thresholds, ThresholdVariant::All)?;
    Ok(all_grad_unchecked(data, weights, thresholds))
}

pub(crate) fn all_grad_unchecked(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
) -> LossGradient {
    let mut d_weights = Array2::zeros(weights.values().raw_dim());
    let mut d_thresholds = Array2::zeros(thresholds.values().raw_dim());
    for (t, task) in data.tasks().iter().enumerate() {
        let scores = task.features().dot(&weights.task_weights(t));
        let row = thresholds.task_row(t);
        let inv_n = 1.0 / task.num_instances() as f64;
        let mut w_col = d_weights.column_mut(t);
        for (j, &label) in task.labels().iter().enumerate() {
            let s = scores[j];
            let mut d_score = 0.0;
            for (i, &cut) in row.iter().enumerate() {
                let z = indicator(i, label);
                let g = z * sigmoid(z * (s - cut));
                d_score += g;
                d_thresholds[(t, i)] -= g * inv_n;
            }
            w_col.scaled_add(d_score * inv_n, &task.instance(j));
        }
    }
    LossGradient {
        d_weights,
        d_thresholds,
    }
}

/// Latent score of one instance, shared by both losses.
pub fn score(weights: &WeightMatrix, task: usize, x: ArrayView1<'_, f64>) -> f64 {
    weights.task_weights(task).dot(&x)
}
