//! Parameter types for threshold models: the shared weight matrix, per-task
//! ordered cut points, and the trained shallow model bundle.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::serde_arrays;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("weight matrix contains a non-finite entry at row {row}, column {column}")]
    NonFiniteWeight { row: usize, column: usize },
    #[error("threshold set has no tasks")]
    NoThresholdRows,
    #[error("task {task_index}: threshold vector not strictly increasing at position {position}")]
    NotStrictlyIncreasing { task_index: usize, position: usize },
    #[error("task {task_index}: non-finite threshold at position {position}")]
    NonFiniteThreshold { task_index: usize, position: usize },
    #[error("{variant:?} thresholds need at least {min} entries per task, got {found}")]
    TooFewThresholds {
        variant: ThresholdVariant,
        min: usize,
        found: usize,
    },
    #[error("threshold rows have unequal lengths")]
    RaggedThresholdRows,
}

/// The G × T coefficient matrix; column t is the weight vector of task t.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMatrix {
    #[serde(with = "serde_arrays::array2")]
    values: Array2<f64>,
}

impl WeightMatrix {
    pub fn new(values: Array2<f64>) -> Result<Self, ModelError> {
        for ((row, column), &v) in values.indexed_iter() {
            if !v.is_finite() {
                return Err(ModelError::NonFiniteWeight { row, column });
            }
        }
        Ok(Self { values })
    }

    /// Skips the finiteness sweep; used on values produced internally.
    pub(crate) fn from_values(values: Array2<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(num_features: usize, num_tasks: usize) -> Self {
        Self {
            values: Array2::zeros((num_features, num_tasks)),
        }
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Weight vector of task t.
    pub fn task_weights(&self, task: usize) -> ArrayView1<'_, f64> {
        self.values.column(task)
    }

    pub fn num_features(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_tasks(&self) -> usize {
        self.values.ncols()
    }

    /// Number of feature rows that are exactly zero across every task.
    pub fn zero_row_count(&self) -> usize {
        self.values
            .rows()
            .into_iter()
            .filter(|r| r.iter().all(|&v| v == 0.0))
            .count()
    }
}

/// Which thresholds the loss learns and stores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdVariant {
    /// Finite first and last thresholds participate in the loss; U+1 values
    /// are stored per task.
    Immediate,
    /// Only the U−1 interior thresholds exist; the ±∞ endpoints are implicit
    /// and never stored.
    All,
}

/// Per-task strictly increasing cut points partitioning the latent score
/// line into U segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSet {
    variant: ThresholdVariant,
    /// T × L, where L = U+1 (Immediate) or U−1 (All).
    #[serde(with = "serde_arrays::array2")]
    values: Array2<f64>,
}

impl ThresholdSet {
    pub fn new(variant: ThresholdVariant, rows: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Err(ModelError::NoThresholdRows);
        }
        let len = rows[0].len();
        if rows.iter().any(|r| r.len() != len) {
            return Err(ModelError::RaggedThresholdRows);
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        let values = Array2::from_shape_vec((data.len() / len.max(1), len), data)
            .map_err(|_| ModelError::RaggedThresholdRows)?;
        Self::from_values(variant, values)
    }

    pub fn from_values(variant: ThresholdVariant, values: Array2<f64>) -> Result<Self, ModelError> {
        if values.nrows() == 0 {
            return Err(ModelError::NoThresholdRows);
        }
        let min_len = match variant {
            // U >= 2 means at least 3 stored values for Immediate.
            ThresholdVariant::Immediate => 3,
            ThresholdVariant::All => 1,
        };
        if values.ncols() < min_len {
            return Err(ModelError::TooFewThresholds {
                variant,
                min: min_len,
                found: values.ncols(),
            });
        }
        for (task_index, row) in values.rows().into_iter().enumerate() {
            for (position, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(ModelError::NonFiniteThreshold {
                        task_index,
                        position,
                    });
                }
                if position > 0 && v <= row[position - 1] {
                    return Err(ModelError::NotStrictlyIncreasing {
                        task_index,
                        position,
                    });
                }
            }
        }
        Ok(Self { variant, values })
    }

    /// Evenly spaced starting thresholds, symmetric around the zero scores of
    /// a zero-weight model: the interior points cover [−1, 1], and the
    /// Immediate variant flanks them one spacing beyond on each side.
    pub fn evenly_spaced(
        variant: ThresholdVariant,
        num_tasks: usize,
        num_classes: u32,
    ) -> Result<Self, ModelError> {
        let interior = (num_classes as usize).saturating_sub(1).max(1);
        let (points, spacing) = if interior == 1 {
            (vec![0.0], 2.0)
        } else {
            let spacing = 2.0 / (interior as f64 - 1.0);
            let points = (0..interior).map(|i| -1.0 + spacing * i as f64).collect();
            (points, spacing)
        };
        let row = match variant {
            ThresholdVariant::All => points,
            ThresholdVariant::Immediate => {
                let mut row = Vec::with_capacity(interior + 2);
                row.push(points[0] - spacing);
                row.extend_from_slice(&points);
                row.push(points[interior - 1] + spacing);
                row
            }
        };
        Self::new(variant, vec![row; num_tasks])
    }

    pub fn variant(&self) -> ThresholdVariant {
        self.variant
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn num_tasks(&self) -> usize {
        self.values.nrows()
    }

    /// Stored entries per task: U+1 for Immediate, U−1 for All.
    pub fn len_per_task(&self) -> usize {
        self.values.ncols()
    }

    pub fn num_classes(&self) -> u32 {
        match self.variant {
            ThresholdVariant::Immediate => (self.values.ncols() - 1) as u32,
            ThresholdVariant::All => (self.values.ncols() + 1) as u32,
        }
    }

    pub fn task_row(&self, task: usize) -> ArrayView1<'_, f64> {
        self.values.row(task)
    }

    /// The U−1 interior cut points used by the prediction rule. For the
    /// Immediate variant the stored first/last thresholds are excluded: at
    /// prediction time they act as −∞/+∞.
    pub fn interior(&self, task: usize) -> ArrayView1<'_, f64> {
        match self.variant {
            ThresholdVariant::All => self.values.row(task),
            ThresholdVariant::Immediate => {
                let len = self.values.ncols();
                self.values.row(task).slice_move(ndarray::s![1..len - 1])
            }
        }
    }
}

/// One entry of a shallow trainer's objective trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub iteration: usize,
    pub objective: f64,
}

/// Trained regularized multi-task ordinal regression model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmtorModel {
    pub weights: WeightMatrix,
    pub thresholds: ThresholdSet,
    pub lambda: f64,
    pub task_ids: Vec<String>,
    pub training_log: Vec<TrainingRecord>,
}

impl RmtorModel {
    /// Latent score X·W_t of one instance under task t.
    pub fn score(&self, task: usize, x: ArrayView1<'_, f64>) -> f64 {
        self.weights.task_weights(task).dot(&x)
    }

    pub fn predict(&self, task: usize, x: ArrayView1<'_, f64>) -> u32 {
        crate::eval::predict_score(self.score(task, x), &self.thresholds, task)
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.task_ids.iter().position(|t| t == id)
    }

    pub fn num_tasks(&self) -> usize {
        self.task_ids.len()
    }

    pub fn num_features(&self) -> usize {
        self.weights.num_features()
    }

    pub fn num_classes(&self) -> u32 {
        self.thresholds.num_classes()
    }

    /// Final recorded composite objective.
    pub fn final_objective(&self) -> Option<f64> {
        self.training_log.last().map(|r| r.objective)
    }
}
