//! Dataset container shared by every trainer: a list of tasks over a common
//! feature space, with 1-based ordinal labels.

use ndarray::{Array2, ArrayView1, ArrayView2};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset has no tasks")]
    NoTasks,
    #[error("number of classes must be at least 2, got {0}")]
    TooFewClasses(u32),
    #[error("task `{task}` has no instances")]
    EmptyTask { task: String },
    #[error("task `{task}`: feature dimension mismatch (expected {expected}, found {found})")]
    FeatureDimMismatch {
        task: String,
        expected: usize,
        found: usize,
    },
    #[error("task `{task}`: {rows} feature rows but {labels} labels")]
    RowCountMismatch {
        task: String,
        rows: usize,
        labels: usize,
    },
    #[error("task `{task}`, row {row}: label {label} outside [1, {num_classes}]")]
    LabelOutOfRange {
        task: String,
        row: usize,
        label: u32,
        num_classes: u32,
    },
    #[error("task `{task}`, row {row}, feature column {column}: non-finite feature value")]
    NonFiniteFeature {
        task: String,
        row: usize,
        column: usize,
    },
    #[error("duplicate task id `{0}`")]
    DuplicateTaskId(String),
}

/// One subpopulation's instances: an n×G feature matrix with aligned labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    id: String,
    features: Array2<f64>,
    labels: Vec<u32>,
}

impl Task {
    pub fn new(
        id: impl Into<String>,
        features: Array2<f64>,
        labels: Vec<u32>,
    ) -> Result<Self, DatasetError> {
        let id = id.into();
        if features.nrows() != labels.len() {
            return Err(DatasetError::RowCountMismatch {
                task: id,
                rows: features.nrows(),
                labels: labels.len(),
            });
        }
        if labels.is_empty() {
            return Err(DatasetError::EmptyTask { task: id });
        }
        Ok(Self {
            id,
            features,
            labels,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// n_t × G feature matrix.
    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn instance(&self, row: usize) -> ArrayView1<'_, f64> {
        self.features.row(row)
    }

    /// 1-based labels aligned with the feature rows.
    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn num_instances(&self) -> usize {
        self.labels.len()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }
}

/// T tasks over a shared G-dimensional feature space with labels in `1..=U`.
///
/// Construction validates every invariant; a value of this type is always a
/// valid dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiTaskDataset {
    tasks: Vec<Task>,
    num_features: usize,
    num_classes: u32,
}

impl MultiTaskDataset {
    pub fn new(tasks: Vec<Task>, num_classes: u32) -> Result<Self, DatasetError> {
        let num_features = tasks.first().map_or(0, Task::num_features);
        let dataset = Self {
            tasks,
            num_features,
            num_classes,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    /// Re-checks every invariant. Idempotent: a constructed dataset always
    /// passes.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.tasks.is_empty() {
            return Err(DatasetError::NoTasks);
        }
        if self.num_classes < 2 {
            return Err(DatasetError::TooFewClasses(self.num_classes));
        }
        for (i, task) in self.tasks.iter().enumerate() {
            if self.tasks[..i].iter().any(|t| t.id == task.id) {
                return Err(DatasetError::DuplicateTaskId(task.id.clone()));
            }
            if task.labels.is_empty() {
                return Err(DatasetError::EmptyTask {
                    task: task.id.clone(),
                });
            }
            if task.num_features() != self.num_features {
                return Err(DatasetError::FeatureDimMismatch {
                    task: task.id.clone(),
                    expected: self.num_features,
                    found: task.num_features(),
                });
            }
            for (row, &label) in task.labels.iter().enumerate() {
                if label < 1 || label > self.num_classes {
                    return Err(DatasetError::LabelOutOfRange {
                        task: task.id.clone(),
                        row,
                        label,
                        num_classes: self.num_classes,
                    });
                }
            }
            for ((row, column), &value) in task.features.indexed_iter() {
                if !value.is_finite() {
                    return Err(DatasetError::NonFiniteFeature {
                        task: task.id.clone(),
                        row,
                        column,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, index: usize) -> &Task {
        &self.tasks[index]
    }

    pub fn task_index(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.len()
    }

    /// G, the shared feature dimension.
    pub fn num_features(&self) -> usize {
        self.num_features
    }

    /// U, the number of ordinal classes.
    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn total_instances(&self) -> usize {
        self.tasks.iter().map(Task::num_instances).sum()
    }

    pub fn task_ids(&self) -> Vec<String> {
        self.tasks.iter().map(|t| t.id.clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn two_task_dataset() -> MultiTaskDataset {
        let t1 = Task::new(
            "a",
            array![[1.0, 0.0, 2.0], [0.5, 1.0, -1.0]],
            vec![1, 2],
        )
        .unwrap();
        let t2 = Task::new("b", array![[0.0, 0.0, 1.0]], vec![3]).unwrap();
        MultiTaskDataset::new(vec![t1, t2], 3).unwrap()
    }

    #[test]
    fn accepts_consistent_dataset() {
        let ds = two_task_dataset();
        assert_eq!(ds.num_tasks(), 2);
        assert_eq!(ds.num_features(), 3);
        assert_eq!(ds.num_classes(), 3);
        assert_eq!(ds.total_instances(), 3);
    }

    #[test]
    fn validate_is_idempotent() {
        let ds = two_task_dataset();
        ds.validate().unwrap();
        ds.validate().unwrap();
        let copy = ds.clone();
        copy.validate().unwrap();
        assert_eq!(ds, copy);
    }

    #[test]
    fn rejects_label_zero() {
        let t = Task::new("a", array![[1.0], [2.0]], vec![0, 1]).unwrap();
        let err = MultiTaskDataset::new(vec![t], 2).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::LabelOutOfRange { label: 0, row: 0, .. }
        ));
    }

    #[test]
    fn rejects_label_above_num_classes() {
        let t = Task::new("a", array![[1.0], [2.0]], vec![1, 4]).unwrap();
        let err = MultiTaskDataset::new(vec![t], 3).unwrap_err();
        assert!(matches!(err, DatasetError::LabelOutOfRange { label: 4, .. }));
    }

    #[test]
    fn rejects_feature_dim_mismatch() {
        let t1 = Task::new("a", array![[1.0, 2.0, 3.0]], vec![1]).unwrap();
        let t2 = Task::new("b", array![[1.0, 2.0, 3.0, 4.0]], vec![2]).unwrap();
        let err = MultiTaskDataset::new(vec![t1, t2], 3).unwrap_err();
        match err {
            DatasetError::FeatureDimMismatch {
                task,
                expected,
                found,
            } => {
                assert_eq!(task, "b");
                assert_eq!(expected, 3);
                assert_eq!(found, 4);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_task() {
        let err = Task::new("a", Array2::zeros((0, 3)), vec![]).unwrap_err();
        assert!(matches!(err, DatasetError::EmptyTask { .. }));
    }

    #[test]
    fn rejects_non_finite_feature() {
        let t = Task::new("a", array![[1.0], [f64::NAN]], vec![1, 2]).unwrap();
        let err = MultiTaskDataset::new(vec![t], 2).unwrap_err();
        assert!(matches!(
            err,
            DatasetError::NonFiniteFeature { row: 1, column: 0, .. }
        ));
    }

    #[test]
    fn rejects_misaligned_rows_and_labels() {
        let err = Task::new("a", array![[1.0], [2.0]], vec![1]).unwrap_err();
        assert!(matches!(err, DatasetError::RowCountMismatch { .. }));
    }

    #[test]
    fn rejects_duplicate_task_ids() {
        let t1 = Task::new("a", array![[1.0]], vec![1]).unwrap();
        let t2 = Task::new("a", array![[2.0]], vec![2]).unwrap();
        let err = MultiTaskDataset::new(vec![t1, t2], 2).unwrap_err();
        assert!(matches!(err, DatasetError::DuplicateTaskId(_)));
    }

    #[test]
    fn rejects_single_class() {
        let t = Task::new("a", array![[1.0]], vec![1]).unwrap();
        let err = MultiTaskDataset::new(vec![t], 1).unwrap_err();
        assert!(matches!(err, DatasetError::TooFewClasses(1)));
    }
}
