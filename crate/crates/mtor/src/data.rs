//! Dataset ingestion from delimited files and a synthetic generator that
//! inverts the latent-variable model.

use std::path::PathBuf;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiTaskDataset, Task};
use crate::eval::predict_score;
use crate::model::{ModelError, ThresholdSet, ThresholdVariant, WeightMatrix};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("file has no data rows")]
    EmptyFile,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("duplicate header name `{0}`")]
    DuplicateColumn(String),
    #[error("label column and task column must differ (both `{0}`)")]
    LabelTaskCollision(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumericFeature {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: cannot parse `{value}` as an integer label")]
    InvalidLabel { row: usize, value: String },
    #[error("row {row}: label {label} exceeds the declared number of classes {num_classes}")]
    LabelAboveOverride {
        row: usize,
        label: i64,
        num_classes: u32,
    },
    #[error("row {row}: label {label} must be at least 1")]
    LabelBelowOne { row: usize, label: i64 },
    #[error("invalid generator spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How to read a delimited file into a [`MultiTaskDataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSpec {
    pub path: PathBuf,
    pub label_column: String,
    pub task_column: String,
    /// Explicit feature columns; `None` selects every remaining column in
    /// header order.
    pub feature_columns: Option<Vec<String>>,
    /// Appends a constant-1 column, emulating an intercept.
    pub add_bias_feature: bool,
    pub delimiter: u8,
    /// Forces U instead of inferring it as the maximum observed label.
    pub num_classes_override: Option<u32>,
}

impl IngestSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            label_column: "label".into(),
            task_column: "task".into(),
            feature_columns: None,
            add_bias_feature: false,
            delimiter: b',',
            num_classes_override: None,
        }
    }
}

/// A parsed dataset plus non-fatal ingestion notes.
#[derive(Debug, Clone)]
pub struct LoadedCsv {
    pub dataset: MultiTaskDataset,
    pub warnings: Vec<String>,
}

/// Reads a UTF-8 delimited file with a header row. Features parse as f64
/// (scientific notation accepted), labels as integers validated to
/// `1..=U` where U is the maximum observed label unless overridden. Tasks
/// appear in order of first appearance of their group value.
pub fn load_csv(spec: &IngestSpec) -> Result<LoadedCsv, DataError> {
    if spec.label_column == spec.task_column {
        return Err(DataError::LabelTaskCollision(spec.label_column.clone()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(spec.delimiter)
        .has_headers(true)
        .from_path(&spec.path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(DataError::EmptyFile);
    }
    for (i, name) in headers.iter().enumerate() {
        if headers[..i].contains(name) {
            return Err(DataError::DuplicateColumn(name.clone()));
        }
    }
    let find = |name: &str| -> Result<usize, DataError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::UnknownColumn(name.to_string()))
    };
    let label_idx = find(&spec.label_column)?;
    let task_idx = find(&spec.task_column)?;
    let feature_idx: Vec<usize> = match &spec.feature_columns {
        Some(names) => {
            let mut idx = Vec::with_capacity(names.len());
            for name in names {
                if name == &spec.label_column || name == &spec.task_column {
                    return Err(DataError::UnknownColumn(format!(
                        "{name} (reserved for label/task)"
                    )));
                }
                idx.push(find(name)?);
            }
            idx
        }
        None => (0..headers.len())
            .filter(|&i| i != label_idx && i != task_idx)
            .collect(),
    };

    struct Group {
        id: String,
        features: Vec<f64>,
        labels: Vec<u32>,
    }
    let mut groups: Vec<Group> = Vec::new();
    let mut max_label: i64 = 0;
    for (row_number, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_number + 1; // 1-based data row for messages
        let task_value = record.get(task_idx).unwrap_or("").to_string();
        let label_raw = record.get(label_idx).unwrap_or("").trim();
        let label: i64 = label_raw.parse().map_err(|_| DataError::InvalidLabel {
            row,
            value: label_raw.to_string(),
        })?;
        if label < 1 {
            return Err(DataError::LabelBelowOne { row, label });
        }
        if let Some(u) = spec.num_classes_override {
            if label > u as i64 {
                return Err(DataError::LabelAboveOverride {
                    row,
                    label,
                    num_classes: u,
                });
            }
        }
        max_label = max_label.max(label);
        let group = match groups.iter_mut().find(|g| g.id == task_value) {
            Some(g) => g,
            None => {
                groups.push(Group {
                    id: task_value,
                    features: Vec::new(),
                    labels: Vec::new(),
                });
                groups.last_mut().unwrap()
            }
        };
        for &col in &feature_idx {
            let cell = record.get(col).unwrap_or("").trim();
            let value: f64 = cell.parse().map_err(|_| DataError::NonNumericFeature {
                row,
                column: headers[col].clone(),
                value: cell.to_string(),
            })?;
            group.features.push(value);
        }
        if spec.add_bias_feature {
            group.features.push(1.0);
        }
        group.labels.push(label as u32);
    }
    if groups.is_empty() {
        return Err(DataError::EmptyFile);
    }
    let num_classes = spec.num_classes_override.unwrap_or(max_label as u32);
    let width = feature_idx.len() + usize::from(spec.add_bias_feature);
    let mut tasks = Vec::with_capacity(groups.len());
    for group in groups {
        let n = group.labels.len();
        let features = Array2::from_shape_vec((n, width), group.features)
            .expect("row-major group buffer");
        tasks.push(Task::new(group.id, features, group.labels)?);
    }
    let dataset = MultiTaskDataset::new(tasks, num_classes)?;
    let mut warnings = Vec::new();
    for class in 1..=num_classes {
        let present = dataset
            .tasks()
            .iter()
            .any(|t| t.labels().contains(&class));
        if !present {
            warnings.push(format!("class {class} has no instances"));
        }
    }
    Ok(LoadedCsv { dataset, warnings })
}

/// Writes `task,label,f1..fG` rows. Numbers use the shortest representation
/// that parses back to the identical double, so a load/write/load cycle is
/// exact.
pub fn write_csv(
    dataset: &MultiTaskDataset,
    path: impl Into<PathBuf>,
    delimiter: u8,
) -> Result<(), DataError> {
    let mut writer = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_path(path.into())?;
    let mut header = vec!["task".to_string(), "label".to_string()];
    header.extend((1..=dataset.num_features()).map(|g| format!("f{g}")));
    writer.write_record(&header)?;
    for task in dataset.tasks() {
        for j in 0..task.num_instances() {
            let mut record = vec![task.id().to_string(), task.labels()[j].to_string()];
            record.extend(task.instance(j).iter().map(|v| v.to_string()));
            writer.write_record(&record)?;
        }
    }
    writer.flush()?;
    Ok(())
}

/// Generator settings for the latent-variable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_tasks: usize,
    pub per_task_n: Vec<usize>,
    pub num_features: usize,
    pub num_classes: u32,
    /// ρ ∈ [0,1]: per-task weights are ρ·w0 + (1−ρ)·v_t for a shared w0.
    pub task_relatedness: f64,
    pub noise_sd: f64,
    /// Fraction of feature rows of the true weight matrix zeroed jointly.
    pub sparsity: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let fail = |msg: &str| Err(DataError::InvalidSpec(msg.to_string()));
        if self.num_tasks == 0 {
            return fail("num_tasks must be positive");
        }
        if self.per_task_n.len() != self.num_tasks {
            return fail("per_task_n length must equal num_tasks");
        }
        if self.num_classes < 2 {
            return fail("num_classes must be at least 2");
        }
        if self
            .per_task_n
            .iter()
            .any(|&n| n < self.num_classes as usize)
        {
            return fail("each task needs at least num_classes instances");
        }
        if self.num_features == 0 {
            return fail("num_features must be positive");
        }
        if !(0.0..=1.0).contains(&self.task_relatedness) {
            return fail("task_relatedness must lie in [0, 1]");
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return fail("noise_sd must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.sparsity) {
            return fail("sparsity must lie in [0, 1]");
        }
        Ok(())
    }
}

/// A generated dataset with the weights and thresholds that produced it.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub dataset: MultiTaskDataset,
    pub true_weights: WeightMatrix,
    pub true_thresholds: ThresholdSet,
}

/// Draws per-task weights around a shared base vector, zeroes a fraction of
/// weight rows jointly, samples standard-normal features, and places each
/// task's thresholds at empirical quantiles of the noisy latent score so the
/// classes come out balanced. Labels follow the same segment rule the
/// predictor uses, so at zero noise the ground truth reproduces them exactly.
pub fn synthesize(spec: &SynthSpec) -> Result<SynthOutput, DataError> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let g = spec.num_features;
    let t = spec.num_tasks;
    let u = spec.num_classes;
    let rho = spec.task_relatedness;

    let base: Array1<f64> = Array1::from_shape_fn(g, |_| rng.sample(StandardNormal));
    let mut weights = Array2::zeros((g, t));
    for task in 0..t {
        let own: Array1<f64> = Array1::from_shape_fn(g, |_| rng.sample(StandardNormal));
        let column = &base * rho + &own * (1.0 - rho);
        weights.column_mut(task).assign(&column);
    }
    let zero_rows = ((spec.sparsity * g as f64).round() as usize).min(g);
    let chosen = rand::seq::index::sample(&mut rng, g, zero_rows);
    for row in chosen.iter() {
        weights.row_mut(row).fill(0.0);
    }

    let mut threshold_rows = Vec::with_capacity(t);
    let mut raw_tasks = Vec::with_capacity(t);
    for (task, &n) in spec.per_task_n.iter().enumerate() {
        let features = Array2::from_shape_fn((n, g), |_| rng.sample::<f64, _>(StandardNormal));
        let noise: Array1<f64> =
            Array1::from_shape_fn(n, |_| rng.sample::<f64, _>(StandardNormal) * spec.noise_sd);
        // score each row the way the predictors do (weight·x) so that at zero
        // noise the ground truth reproduces every label bit-exactly even when
        // a threshold coincides with a sample score
        let latent = Array1::from_shape_fn(n, |j| {
            weights.column(task).dot(&features.row(j)) + noise[j]
        });
        let mut sorted: Vec<f64> = latent.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite latent scores"));
        let mut cuts = Vec::with_capacity(u as usize - 1);
        for class in 1..u {
            let boundary = ((n as f64 * class as f64 / u as f64) + 0.5).floor() as usize;
            cuts.push(sorted[boundary.clamp(1, n) - 1]);
        }
        // continuous scores never tie in practice; keep the invariant anyway
        for i in 1..cuts.len() {
            if cuts[i] <= cuts[i - 1] {
                cuts[i] = cuts[i - 1] + f64::EPSILON * cuts[i - 1].abs().max(1.0);
            }
        }
        threshold_rows.push(cuts);
        raw_tasks.push((task, features, latent));
    }
    let thresholds = ThresholdSet::new(ThresholdVariant::All, threshold_rows)?;

    let mut tasks = Vec::with_capacity(t);
    for (task, features, latent) in raw_tasks {
        let labels: Vec<u32> = latent
            .iter()
            .map(|&y| predict_score(y, &thresholds, task))
            .collect();
        tasks.push(Task::new(format!("task{}", task + 1), features, labels)?);
    }
    Ok(SynthOutput {
        dataset: MultiTaskDataset::new(tasks, u)?,
        true_weights: WeightMatrix::new(weights)?,
        true_thresholds: thresholds,
    })
}
