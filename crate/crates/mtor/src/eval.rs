//! Prediction rule, accuracy/MAE reports, stratified splitting, and k-fold
//! selection of the sparsity parameter.

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiTaskDataset, Task};
use crate::model::{ThresholdSet, ThresholdVariant};
use crate::optimizer::{train_rmtor, AlternatingConfig, FistaConfig, OptimError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("label vectors have different lengths ({expected} vs {found})")]
    LengthMismatch { expected: usize, found: usize },
    #[error("empty label vectors")]
    EmptyInput,
    #[error("train fraction must lie strictly between 0 and 1, got {0}")]
    BadFraction(f64),
    #[error("k-fold needs k >= 2, got {0}")]
    BadFoldCount(usize),
    #[error("lambda grid is empty")]
    EmptyGrid,
    #[error("lambda grid entries must be positive, got {0}")]
    NonPositiveLambda(f64),
    #[error("unknown task id `{0}`")]
    UnknownTask(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Reads a label off the latent score line: the label is the segment
/// (ϑ_{μ−1}, ϑ_μ] containing the score, with implicit ±∞ endpoints. A score
/// exactly on a cut point belongs to the segment below it. For the Immediate
/// variant the stored finite first/last thresholds are ignored here — scores
/// beyond them still map to the extreme labels.
pub fn predict_score(score: f64, thresholds: &ThresholdSet, task: usize) -> u32 {
    let interior = thresholds.interior(task);
    1 + interior.iter().filter(|&&cut| cut < score).count() as u32
}

/// Applies a per-task scorer and the threshold rule to one instance.
pub fn predict_with<F>(score_fn: F, thresholds: &ThresholdSet, task: usize, x: ArrayView1<'_, f64>) -> u32
where
    F: Fn(usize, ArrayView1<'_, f64>) -> f64,
{
    predict_score(score_fn(task, x), thresholds, task)
}

/// Fraction of exact label matches.
pub fn accuracy(true_labels: &[u32], predicted: &[u32]) -> Result<f64, EvalError> {
    check_pair(true_labels, predicted)?;
    let hits = true_labels
        .iter()
        .zip(predicted)
        .filter(|(a, b)| a == b)
        .count();
    Ok(hits as f64 / true_labels.len() as f64)
}

/// Mean absolute label distance.
pub fn mae(true_labels: &[u32], predicted: &[u32]) -> Result<f64, EvalError> {
    check_pair(true_labels, predicted)?;
    let sum: f64 = true_labels
        .iter()
        .zip(predicted)
        .map(|(&a, &b)| (a as f64 - b as f64).abs())
        .sum();
    Ok(sum / true_labels.len() as f64)
}

fn check_pair(a: &[u32], b: &[u32]) -> Result<(), EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    if a.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Per-task metrics row, mirroring one table row of a results report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub task_id: String,
    pub n_instances: usize,
    pub accuracy: f64,
    pub mae: f64,
}

/// Instance-weighted overall metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub n_instances: usize,
    pub accuracy: f64,
    pub mae: f64,
}

/// Per-task accuracy and MAE with instance counts, plus their
/// instance-weighted aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_task: Vec<TaskMetrics>,
    pub overall: OverallMetrics,
}

impl EvalReport {
    pub fn from_task_metrics(per_task: Vec<TaskMetrics>) -> Self {
        let n: usize = per_task.iter().map(|m| m.n_instances).sum();
        let weight = |f: fn(&TaskMetrics) -> f64| -> f64 {
            if n == 0 {
                return 0.0;
            }
            per_task
                .iter()
                .map(|m| f(m) * m.n_instances as f64)
                .sum::<f64>()
                / n as f64
        };
        let overall = OverallMetrics {
            n_instances: n,
            accuracy: weight(|m| m.accuracy),
            mae: weight(|m| m.mae),
        };
        Self { per_task, overall }
    }
}

/// Scores every instance of `data` with `predict` and assembles the report.
pub fn evaluate<F>(data: &MultiTaskDataset, mut predict: F) -> Result<EvalReport, EvalError>
where
    F: FnMut(&str, ArrayView1<'_, f64>) -> Result<u32, EvalError>,
{
    let mut rows = Vec::with_capacity(data.num_tasks());
    for task in data.tasks() {
        let mut predicted = Vec::with_capacity(task.num_instances());
        for j in 0..task.num_instances() {
            predicted.push(predict(task.id(), task.instance(j))?);
        }
        rows.push(TaskMetrics {
            task_id: task.id().to_string(),
            n_instances: task.num_instances(),
            accuracy: accuracy(task.labels(), &predicted)?,
            mae: mae(task.labels(), &predicted)?,
        });
    }
    Ok(EvalReport::from_task_metrics(rows))
}

/// A train/test partition plus any stratification warnings.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: MultiTaskDataset,
    pub test: MultiTaskDataset,
    pub warnings: Vec<String>,
}

/// Splits each task class-by-class so train/test label proportions match the
/// full data. Per stratum, round(fraction·count) instances go to train
/// (half-up); the largest stratum is then adjusted so the task total matches
/// round(fraction·n_t). A single-instance stratum goes to train with a
/// warning. Deterministic per seed; train and test partition the input
/// exactly.
pub fn stratified_split(
    data: &MultiTaskDataset,
    train_fraction: f64,
    seed: u64,
) -> Result<Split, EvalError> {
    if !train_fraction.is_finite() || train_fraction <= 0.0 || train_fraction >= 1.0 {
        return Err(EvalError::BadFraction(train_fraction));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut warnings = Vec::new();
    let mut train_tasks = Vec::new();
    let mut test_tasks = Vec::new();
    for task in data.tasks() {
        let strata = strata_indices(task, data.num_classes(), &mut rng);
        let mut take = Vec::with_capacity(strata.len());
        for stratum in &strata {
            let c = stratum.len();
            if c == 0 {
                take.push(0);
                continue;
            }
            if c == 1 {
                warnings.push(format!(
                    "task `{}`: a class has a single instance; assigned to train",
                    task.id()
                ));
                take.push(1);
                continue;
            }
            take.push(round_half_up(train_fraction * c as f64));
        }
        // nudge the largest stratum so the task total matches the
        // task-level rounding of the fraction
        let target = round_half_up(train_fraction * task.num_instances() as f64);
        let total: usize = take.iter().sum();
        if total != target {
            let largest = strata
                .iter()
                .enumerate()
                .max_by_key(|(_, s)| s.len())
                .map(|(i, _)| i)
                .unwrap();
            let c = strata[largest].len();
            let adjusted = take[largest] as i64 + (target as i64 - total as i64);
            take[largest] = adjusted.clamp(if c == 1 { 1 } else { 0 }, c as i64) as usize;
        }
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (stratum, &n_train) in strata.iter().zip(&take) {
            train_idx.extend_from_slice(&stratum[..n_train]);
            test_idx.extend_from_slice(&stratum[n_train..]);
        }
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        if !train_idx.is_empty() {
            train_tasks.push(subset_task(task, &train_idx));
        }
        if !test_idx.is_empty() {
            test_tasks.push(subset_task(task, &test_idx));
        }
    }
    Ok(Split {
        train: MultiTaskDataset::new(train_tasks, data.num_classes())?,
        test: MultiTaskDataset::new(test_tasks, data.num_classes())?,
        warnings,
    })
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Shuffled instance indices grouped by label (index 0 = class 1).
fn strata_indices(task: &Task, num_classes: u32, rng: &mut ChaCha20Rng) -> Vec<Vec<usize>> {
    let mut strata: Vec<Vec<usize>> = vec![Vec::new(); num_classes as usize];
    for (j, &label) in task.labels().iter().enumerate() {
        strata[label as usize - 1].push(j);
    }
    for stratum in &mut strata {
        stratum.shuffle(rng);
    }
    strata
}

fn subset_task(task: &Task, indices: &[usize]) -> Task {
    let g = task.num_features();
    let mut feats = Vec::with_capacity(indices.len() * g);
    let mut labels = Vec::with_capacity(indices.len());
    for &j in indices {
        feats.extend(task.instance(j).iter().copied());
        labels.push(task.labels()[j]);
    }
    Task::new(
        task.id(),
        Array2::from_shape_vec((indices.len(), g), feats).expect("subset shape"),
        labels,
    )
    .expect("nonempty subset")
}

/// One grid row of a cross-validation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaScore {
    pub lambda: f64,
    pub mean_accuracy: f64,
}

/// Outcome of [`kfold_select_lambda`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSelection {
    pub best_lambda: f64,
    pub scores: Vec<LambdaScore>,
}

/// Stratified k-fold cross-validation over a λ grid for the shallow trainer.
/// Each λ is scored by the mean held-out overall accuracy; ties break toward
/// the larger λ (the sparser model).
pub fn kfold_select_lambda(
    data: &MultiTaskDataset,
    variant: ThresholdVariant,
    grid: &[f64],
    k: usize,
    fista_cfg: &FistaConfig,
    alt_cfg: &AlternatingConfig,
    seed: u64,
) -> Result<LambdaSelection, EvalError> {
    if k < 2 {
        return Err(EvalError::BadFoldCount(k));
    }
    if grid.is_empty() {
        return Err(EvalError::EmptyGrid);
    }
    if let Some(&bad) = grid.iter().find(|&&l| !l.is_finite() || l <= 0.0) {
        return Err(EvalError::NonPositiveLambda(bad));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // fold_of[t][j] = fold index of instance j in task t, dealt round-robin
    // within each label stratum
    let fold_of: Vec<Vec<usize>> = data
        .tasks()
        .iter()
        .map(|task| {
            let mut assignment = vec![0usize; task.num_instances()];
            for stratum in strata_indices(task, data.num_classes(), &mut rng) {
                for (pos, &j) in stratum.iter().enumerate() {
                    assignment[j] = pos % k;
                }
            }
            assignment
        })
        .collect();

    let mut sums = vec![0.0f64; grid.len()];
    let mut counts = vec![0usize; grid.len()];
    for fold in 0..k {
        let mut train_tasks = Vec::new();
        let mut val_parts: Vec<(usize, Vec<usize>)> = Vec::new();
        for (t, task) in data.tasks().iter().enumerate() {
            let train_idx: Vec<usize> = (0..task.num_instances())
                .filter(|&j| fold_of[t][j] != fold)
                .collect();
            let val_idx: Vec<usize> = (0..task.num_instances())
                .filter(|&j| fold_of[t][j] == fold)
                .collect();
            if train_idx.is_empty() {
                // a task this small cannot be trained in this fold; skip its
                // held-out instances as well since the model will not cover it
                continue;
            }
            let model_index = train_tasks.len();
            train_tasks.push(subset_task(task, &train_idx));
            if !val_idx.is_empty() {
                val_parts.push((model_index, val_idx));
            }
        }
        let train = MultiTaskDataset::new(train_tasks, data.num_classes())?;
        // resolve validation instances against the original tasks
        let original: Vec<usize> = train
            .tasks()
            .iter()
            .map(|t| data.task_index(t.id()).expect("subset keeps ids"))
            .collect();
        for (gi, &lambda) in grid.iter().enumerate() {
            let model = train_rmtor(&train, variant, lambda, fista_cfg, alt_cfg)?;
            let mut hits = 0usize;
            let mut total = 0usize;
            for &(model_index, ref val_idx) in &val_parts {
                let task = data.task(original[model_index]);
                for &j in val_idx {
                    let predicted = model.predict(model_index, task.instance(j));
                    if predicted == task.labels()[j] {
                        hits += 1;
                    }
                    total += 1;
                }
            }
            if total > 0 {
                sums[gi] += hits as f64 / total as f64;
                counts[gi] += 1;
            }
        }
    }
    let scores: Vec<LambdaScore> = grid
        .iter()
        .zip(sums.iter().zip(&counts))
        .map(|(&lambda, (&sum, &count))| LambdaScore {
            lambda,
            mean_accuracy: if count > 0 { sum / count as f64 } else { 0.0 },
        })
        .collect();
    let mut best = &scores[0];
    for row in &scores[1..] {
        if row.mean_accuracy > best.mean_accuracy
            || (row.mean_accuracy == best.mean_accuracy && row.lambda > best.lambda)
        {
            best = row;
        }
    }
    Ok(LambdaSelection {
        best_lambda: best.lambda,
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::WeightMatrix;
    use ndarray::{array, Array1};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn predict_partitions_the_line() {
        let th = ThresholdSet::new(ThresholdVariant::All, vec![vec![-1.0, 1.0]]).unwrap();
        assert_eq!(predict_score(-2.0, &th, 0), 1);
        assert_eq!(predict_score(0.0, &th, 0), 2);
        assert_eq!(predict_score(5.0, &th, 0), 3);
    }

    #[test]
    fn predict_tie_goes_to_lower_segment() {
        let th = ThresholdSet::new(ThresholdVariant::All, vec![vec![-1.0, 1.0]]).unwrap();
        assert_eq!(predict_score(-1.0, &th, 0), 1);
        assert_eq!(predict_score(1.0, &th, 0), 2);
    }

    #[test]
    fn predict_immediate_treats_endpoints_as_infinite() {
        let th = ThresholdSet::new(
            ThresholdVariant::Immediate,
            vec![vec![-2.0, -1.0, 1.0, 2.0]],
        )
        .unwrap();
        // below the stored first threshold still maps to label 1
        assert_eq!(predict_score(-100.0, &th, 0), 1);
        assert_eq!(predict_score(-1.5, &th, 0), 1);
        // above the stored last threshold still maps to label U
        assert_eq!(predict_score(100.0, &th, 0), 3);
    }

    #[test]
    fn predicted_label_is_monotone_in_score() {
        let th = ThresholdSet::new(ThresholdVariant::All, vec![vec![-0.7, 0.2, 1.4]]).unwrap();
        let mut prev = 0;
        let mut s = -5.0;
        while s <= 5.0 {
            let label = predict_score(s, &th, 0);
            assert!(label >= prev);
            prev = label;
            s += 0.01;
        }
        assert_eq!(prev, 4);
    }

    #[test]
    fn predict_invariant_under_monotone_affine_transform() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..100 {
            let cuts = {
                let a: f64 = rng.sample(StandardNormal);
                vec![a, a + 0.5 + rng.random::<f64>(), a + 2.0 + rng.random::<f64>()]
            };
            let th = ThresholdSet::new(ThresholdVariant::All, vec![cuts.clone()]).unwrap();
            let c = 0.1 + 3.0 * rng.random::<f64>();
            let b: f64 = rng.sample(StandardNormal);
            let scaled: Vec<f64> = cuts.iter().map(|&v| c * v + b).collect();
            let th2 = ThresholdSet::new(ThresholdVariant::All, vec![scaled]).unwrap();
            let s: f64 = rng.sample::<f64, _>(StandardNormal) * 2.0;
            assert_eq!(
                predict_score(s, &th, 0),
                predict_score(c * s + b, &th2, 0)
            );
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 2, 3, 3], &[1, 2, 2, 3]).unwrap(), 0.75);
        assert_eq!(accuracy(&[1, 1], &[2, 2]).unwrap(), 0.0);
    }

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1, 2], &[1, 2]).unwrap(), 0.0);
        assert_eq!(mae(&[1, 4], &[4, 1]).unwrap(), 3.0);
    }

    #[test]
    fn mae_bounded_by_accuracy_complement() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let u = 5u32;
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let a: Vec<u32> = (0..n).map(|_| rng.random_range(1..=u)).collect();
            let b: Vec<u32> = (0..n).map(|_| rng.random_range(1..=u)).collect();
            let acc = accuracy(&a, &b).unwrap();
            let err = mae(&a, &b).unwrap();
            assert!(err <= (1.0 - acc) * (u as f64 - 1.0) + 1e-12);
        }
    }

    #[test]
    fn metric_errors() {
        assert!(matches!(
            accuracy(&[1, 2], &[1]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(mae(&[], &[]), Err(EvalError::EmptyInput)));
    }

    fn balanced_task(id: &str, n_per_class: &[usize], g: usize, seed: u64) -> Task {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n: usize = n_per_class.iter().sum();
        let feats = Array2::from_shape_fn((n, g), |_| rng.sample::<f64, _>(StandardNormal));
        let mut labels = Vec::new();
        for (c, &count) in n_per_class.iter().enumerate() {
            labels.extend(std::iter::repeat(c as u32 + 1).take(count));
        }
        Task::new(id, feats, labels).unwrap()
    }

    #[test]
    fn split_is_a_partition_with_stratified_proportions() {
        let task_a = balanced_task("a", &[40, 30, 30], 4, 1);
        let task_b = balanced_task("b", &[25, 25, 10], 4, 2);
        let data = MultiTaskDataset::new(vec![task_a, task_b], 3).unwrap();
        let split = stratified_split(&data, 0.8, 9).unwrap();
        assert_eq!(
            split.train.total_instances() + split.test.total_instances(),
            data.total_instances()
        );
        for task in data.tasks() {
            let ti = split.train.task_index(task.id()).unwrap();
            let si = split.test.task_index(task.id()).unwrap();
            let train_task = split.train.task(ti);
            let test_task = split.test.task(si);
            // class shares within one instance of the input shares
            for c in 1..=3u32 {
                let full = task.labels().iter().filter(|&&l| l == c).count();
                let tr = train_task.labels().iter().filter(|&&l| l == c).count();
                let expected = (0.8 * full as f64 + 0.5).floor() as i64;
                assert!((tr as i64 - expected).abs() <= 1, "class {c}: {tr} vs {expected}");
            }
            // partition: every original row appears exactly once
            let mut rows: Vec<Vec<u64>> = Vec::new();
            for src in [train_task, test_task] {
                for j in 0..src.num_instances() {
                    rows.push(src.instance(j).iter().map(|v| v.to_bits()).collect());
                }
            }
            rows.sort();
            let mut original: Vec<Vec<u64>> = (0..task.num_instances())
                .map(|j| task.instance(j).iter().map(|v| v.to_bits()).collect())
                .collect();
            original.sort();
            assert_eq!(rows, original);
        }
    }

    #[test]
    fn split_eighty_twenty_on_single_class() {
        let task = balanced_task("only", &[100], 2, 3);
        let data = MultiTaskDataset::new(vec![task], 2).unwrap();
        // class 2 absent entirely; still a legal dataset for splitting
        let split = stratified_split(&data, 0.8, 0).unwrap();
        assert_eq!(split.train.task(0).num_instances(), 80);
        assert_eq!(split.test.task(0).num_instances(), 20);
    }

    #[test]
    fn split_single_instance_stratum_goes_to_train_with_warning() {
        let feats = array![[0.0], [1.0], [2.0], [3.0], [4.0]];
        let task = Task::new("a", feats, vec![1, 1, 1, 1, 2]).unwrap();
        let data = MultiTaskDataset::new(vec![task], 2).unwrap();
        let split = stratified_split(&data, 0.5, 0).unwrap();
        assert!(!split.warnings.is_empty());
        let ti = split.train.task_index("a").unwrap();
        assert!(split.train.task(ti).labels().contains(&2));
    }

    #[test]
    fn split_is_deterministic_per_seed() {
        let task = balanced_task("a", &[20, 20], 3, 4);
        let data = MultiTaskDataset::new(vec![task], 2).unwrap();
        let s1 = stratified_split(&data, 0.8, 42).unwrap();
        let s2 = stratified_split(&data, 0.8, 42).unwrap();
        assert_eq!(s1.train, s2.train);
        assert_eq!(s1.test, s2.test);
        let s3 = stratified_split(&data, 0.8, 43).unwrap();
        assert!(s3.train != s1.train || s3.test != s1.test);
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let task = balanced_task("a", &[4, 4], 2, 5);
        let data = MultiTaskDataset::new(vec![task], 2).unwrap();
        assert!(matches!(
            stratified_split(&data, 0.0, 0),
            Err(EvalError::BadFraction(_))
        ));
        assert!(matches!(
            stratified_split(&data, 1.0, 0),
            Err(EvalError::BadFraction(_))
        ));
    }

    #[test]
    fn report_aggregation_is_instance_weighted() {
        let report = EvalReport::from_task_metrics(vec![
            TaskMetrics {
                task_id: "a".into(),
                n_instances: 30,
                accuracy: 0.9,
                mae: 0.1,
            },
            TaskMetrics {
                task_id: "b".into(),
                n_instances: 10,
                accuracy: 0.5,
                mae: 0.6,
            },
        ]);
        assert_eq!(report.overall.n_instances, 40);
        assert!((report.overall.accuracy - 0.8).abs() < 1e-12);
        assert!((report.overall.mae - 0.225).abs() < 1e-12);
    }

    #[test]
    fn evaluate_recomputes_to_same_weighted_aggregate() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let t1 = balanced_task("a", &[9, 8], 2, 30);
        let t2 = balanced_task("b", &[5, 12], 2, 31);
        let data = MultiTaskDataset::new(vec![t1, t2], 2).unwrap();
        // arbitrary deterministic predictor
        let report = evaluate(&data, |_, x| {
            Ok(if x[0] + x[1] > 0.0 { 2 } else { 1 })
        })
        .unwrap();
        // recompute overall from concatenated predictions
        let mut all_true = Vec::new();
        let mut all_pred = Vec::new();
        for task in data.tasks() {
            for j in 0..task.num_instances() {
                let x = task.instance(j);
                all_true.push(task.labels()[j]);
                all_pred.push(if x[0] + x[1] > 0.0 { 2 } else { 1 });
            }
        }
        let acc = accuracy(&all_true, &all_pred).unwrap();
        let err = mae(&all_true, &all_pred).unwrap();
        assert!((report.overall.accuracy - acc).abs() < 1e-12);
        assert!((report.overall.mae - err).abs() < 1e-12);
        let _ = rng.random::<u8>();
    }

    #[test]
    fn kfold_single_lambda_grid_returns_it() {
        let t1 = balanced_task("a", &[10, 10], 3, 20);
        let data = MultiTaskDataset::new(vec![t1], 2).unwrap();
        let selection = kfold_select_lambda(
            &data,
            ThresholdVariant::Immediate,
            &[0.05],
            2,
            &FistaConfig {
                max_iterations: 50,
                ..FistaConfig::default()
            },
            &AlternatingConfig {
                outer_max: 5,
                ..AlternatingConfig::default()
            },
            0,
        )
        .unwrap();
        assert_eq!(selection.best_lambda, 0.05);
        assert_eq!(selection.scores.len(), 1);
        assert!((0.0..=1.0).contains(&selection.scores[0].mean_accuracy));
    }

    #[test]
    fn kfold_rejects_bad_inputs() {
        let t1 = balanced_task("a", &[4, 4], 2, 21);
        let data = MultiTaskDataset::new(vec![t1], 2).unwrap();
        let fcfg = FistaConfig::default();
        let acfg = AlternatingConfig::default();
        assert!(matches!(
            kfold_select_lambda(&data, ThresholdVariant::All, &[0.1], 1, &fcfg, &acfg, 0),
            Err(EvalError::BadFoldCount(1))
        ));
        assert!(matches!(
            kfold_select_lambda(&data, ThresholdVariant::All, &[], 2, &fcfg, &acfg, 0),
            Err(EvalError::EmptyGrid)
        ));
        assert!(matches!(
            kfold_select_lambda(&data, ThresholdVariant::All, &[0.0], 2, &fcfg, &acfg, 0),
            Err(EvalError::NonPositiveLambda(_))
        ));
    }

    #[test]
    fn kfold_permits_folds_with_a_missing_class() {
        // class 2 has fewer instances than folds, so some held-out folds
        // miss it entirely; evaluation just counts the labels present
        let mut rng = ChaCha20Rng::seed_from_u64(40);
        let n = 20;
        let feats = Array2::from_shape_fn((n, 2), |_| rng.sample::<f64, _>(StandardNormal));
        let mut labels = vec![1u32; n];
        labels[0] = 2;
        labels[1] = 2;
        labels[2] = 2;
        let task = Task::new("a", feats, labels).unwrap();
        let data = MultiTaskDataset::new(vec![task], 2).unwrap();
        let selection = kfold_select_lambda(
            &data,
            ThresholdVariant::Immediate,
            &[0.1],
            5,
            &FistaConfig {
                max_iterations: 30,
                ..FistaConfig::default()
            },
            &AlternatingConfig {
                outer_max: 3,
                ..AlternatingConfig::default()
            },
            1,
        )
        .unwrap();
        assert!((0.0..=1.0).contains(&selection.scores[0].mean_accuracy));
    }

    #[test]
    fn kfold_reports_argmax_and_prefers_larger_lambda_on_ties() {
        // λ=1e6 annihilates all weights on any data, so several huge λs give
        // identical threshold-only accuracy; the larger must win
        let t1 = balanced_task("a", &[12, 12], 2, 22);
        let data = MultiTaskDataset::new(vec![t1], 2).unwrap();
        let selection = kfold_select_lambda(
            &data,
            ThresholdVariant::Immediate,
            &[1e6, 2e6],
            3,
            &FistaConfig {
                max_iterations: 30,
                ..FistaConfig::default()
            },
            &AlternatingConfig {
                outer_max: 3,
                ..AlternatingConfig::default()
            },
            7,
        )
        .unwrap();
        assert_eq!(selection.scores.len(), 2);
        assert!(
            (selection.scores[0].mean_accuracy - selection.scores[1].mean_accuracy).abs()
                < 1e-12
        );
        assert_eq!(selection.best_lambda, 2e6);
        for row in &selection.scores {
            assert!((0.0..=1.0).contains(&row.mean_accuracy));
        }
    }

    #[test]
    fn predict_with_applies_scorer() {
        let th = ThresholdSet::new(ThresholdVariant::All, vec![vec![0.0]]).unwrap();
        let x = Array1::from_vec(vec![2.0, 3.0]);
        let w = WeightMatrix::new(array![[1.0], [-1.0]]).unwrap();
        let label = predict_with(
            |task, v| w.task_weights(task).dot(&v),
            &th,
            0,
            x.view(),
        );
        assert_eq!(label, 1);
    }
}
