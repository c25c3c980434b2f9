//! Single-task baselines in the paper's two comparison settings: a global
//! model trained on the pooled data (heterogeneity ignored) and individual
//! models trained per task (relatedness ignored).

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{MultiTaskDataset, Task};
use crate::deep::{train_dmtor, DeepError, DmtorArchitecture, DmtorModel, SgdConfig};
use crate::model::{RmtorModel, ThresholdVariant};
use crate::optimizer::{train_rmtor, AlternatingConfig, FistaConfig, OptimError};

#[derive(Debug, Error)]
#[error("unknown task id `{0}`")]
pub struct UnknownTask(pub String);

/// Which single-task comparison setting a baseline was trained under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StlSetting {
    /// One model on the pooled data, served for every task.
    Global,
    /// One model per task, trained on that task's data only.
    Individual,
}

/// Trained single-task models keyed by task id. Global stores one model and
/// serves it for any id; Individual stores one per known id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StlModelSet<M> {
    pub setting: StlSetting,
    pub task_ids: Vec<String>,
    /// One entry under Global; aligned with `task_ids` under Individual.
    pub models: Vec<M>,
}

impl<M> StlModelSet<M> {
    pub fn model_for(&self, task_id: &str) -> Result<&M, UnknownTask> {
        match self.setting {
            StlSetting::Global => Ok(&self.models[0]),
            StlSetting::Individual => self
                .task_ids
                .iter()
                .position(|id| id == task_id)
                .map(|i| &self.models[i])
                .ok_or_else(|| UnknownTask(task_id.to_string())),
        }
    }
}

fn pooled_dataset(data: &MultiTaskDataset, id: &str) -> MultiTaskDataset {
    let g = data.num_features();
    let n = data.total_instances();
    let mut feats = Vec::with_capacity(n * g);
    let mut labels = Vec::with_capacity(n);
    for task in data.tasks() {
        feats.extend(task.features().iter().copied());
        labels.extend_from_slice(task.labels());
    }
    let features = Array2::from_shape_vec((n, g), feats).expect("pooled buffer");
    MultiTaskDataset::new(
        vec![Task::new(id, features, labels).expect("nonempty pool")],
        data.num_classes(),
    )
    .expect("pool of a valid dataset is valid")
}

/// Single task extracted with its own class count: U becomes the maximum
/// label this task actually contains, so an individual model never reflects
/// labels it has not seen.
fn single_task_dataset(task: &Task) -> MultiTaskDataset {
    let num_classes = *task.labels().iter().max().expect("nonempty task");
    MultiTaskDataset::new(vec![task.clone()], num_classes.max(2))
        .expect("task of a valid dataset is valid")
}

/// Per-task trainings are independent; spread them across up to `threads`
/// workers. Results land in task order, so the outcome does not depend on
/// the thread count.
fn run_parallel<M, E, F>(tasks: &[Task], threads: usize, train_one: F) -> Result<Vec<M>, E>
where
    M: Send,
    E: Send,
    F: Fn(&Task) -> Result<M, E> + Sync,
{
    let workers = threads.max(1).min(tasks.len());
    if workers <= 1 {
        return tasks.iter().map(&train_one).collect();
    }
    let mut slots: Vec<Option<Result<M, E>>> = Vec::new();
    slots.resize_with(tasks.len(), || None);
    let slots = std::sync::Mutex::new(slots);
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let index = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if index >= tasks.len() {
                    break;
                }
                let outcome = train_one(&tasks[index]);
                slots.lock().expect("worker panicked")[index] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers joined")
        .into_iter()
        .map(|slot| slot.expect("every index visited"))
        .collect()
}

/// Shallow single-task baselines. Global pools every task into one and
/// trains a single T=1 model; Individual trains a T=1 model per task
/// (optionally across `threads` workers — trainings are independent and the
/// result is identical for any thread count).
pub fn train_stl_shallow(
    data: &MultiTaskDataset,
    setting: StlSetting,
    variant: ThresholdVariant,
    lambda: f64,
    fista_cfg: &FistaConfig,
    alt_cfg: &AlternatingConfig,
    threads: usize,
) -> Result<StlModelSet<RmtorModel>, OptimError> {
    data.validate()?;
    let models = match setting {
        StlSetting::Global => {
            let pooled = pooled_dataset(data, "global");
            vec![train_rmtor(&pooled, variant, lambda, fista_cfg, alt_cfg)?]
        }
        StlSetting::Individual => run_parallel(data.tasks(), threads, |task| {
            train_rmtor(
                &single_task_dataset(task),
                variant,
                lambda,
                fista_cfg,
                alt_cfg,
            )
        })?,
    };
    Ok(StlModelSet {
        setting,
        task_ids: data.task_ids(),
        models,
    })
}

/// Deep single-task baselines. A single task has no sharing distinction, so
/// the network keeps only the shared widths as its hidden layers.
pub fn train_stl_deep(
    data: &MultiTaskDataset,
    setting: StlSetting,
    variant: ThresholdVariant,
    arch: &DmtorArchitecture,
    cfg: &SgdConfig,
    threads: usize,
) -> Result<StlModelSet<DmtorModel>, DeepError> {
    data.validate()?;
    let models = match setting {
        StlSetting::Global => {
            let pooled = pooled_dataset(data, "global");
            let stl_arch = DmtorArchitecture::shared_only(
                arch.shared_widths.clone(),
                pooled.num_features(),
                pooled.num_classes(),
            )?;
            vec![train_dmtor(&pooled, variant, &stl_arch, cfg)?]
        }
        StlSetting::Individual => {
            run_parallel(data.tasks(), threads, |task| {
                let single = single_task_dataset(task);
                let stl_arch = DmtorArchitecture::shared_only(
                    arch.shared_widths.clone(),
                    single.num_features(),
                    single.num_classes(),
                )?;
                train_dmtor(&single, variant, &stl_arch, cfg)
            })?
        }
    };
    Ok(StlModelSet {
        setting,
        task_ids: data.task_ids(),
        models,
    })
}
