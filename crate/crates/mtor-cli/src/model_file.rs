//! On-disk JSON formats for models, evaluation reports, cross-validation
//! reports, and generator ground truth.

use std::fs;
use std::path::Path;

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};

use mtor::baselines::StlModelSet;
use mtor::data::SynthSpec;
use mtor::deep::DmtorModel;
use mtor::eval::{EvalReport, LambdaSelection};
use mtor::{RmtorModel, ThresholdSet, WeightMatrix};

use crate::manifest::RunManifest;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Any trained model this toolkit can persist and serve.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelPayload {
    Rmtor(RmtorModel),
    Dmtor(DmtorModel),
    StlShallow(StlModelSet<RmtorModel>),
    StlDeep(StlModelSet<DmtorModel>),
}

impl ModelPayload {
    pub fn type_name(&self) -> &'static str {
        match self {
            ModelPayload::Rmtor(_) => "rmtor",
            ModelPayload::Dmtor(_) => "dmtor",
            ModelPayload::StlShallow(_) => "stl-shallow",
            ModelPayload::StlDeep(_) => "stl-deep",
        }
    }

    /// Feature dimension the model expects.
    pub fn num_features(&self) -> usize {
        match self {
            ModelPayload::Rmtor(m) => m.num_features(),
            ModelPayload::Dmtor(m) => m.num_features(),
            ModelPayload::StlShallow(s) => s.models[0].num_features(),
            ModelPayload::StlDeep(s) => s.models[0].num_features(),
        }
    }

    /// Predicts a label for one instance of the named task. MTL and
    /// individual-setting models reject ids they were not trained on; a
    /// global-setting model serves any id with its single pooled model.
    pub fn predict(&self, task_id: &str, x: ArrayView1<'_, f64>) -> Result<u32, CliError> {
        let unknown = |id: &str| CliError::Data(format!("unknown task id `{id}` for this model"));
        match self {
            ModelPayload::Rmtor(m) => {
                let task = m.task_index(task_id).ok_or_else(|| unknown(task_id))?;
                Ok(m.predict(task, x))
            }
            ModelPayload::Dmtor(m) => {
                let task = m.task_index(task_id).ok_or_else(|| unknown(task_id))?;
                m.predict(task, x)
                    .map_err(|e| CliError::Data(e.to_string()))
            }
            ModelPayload::StlShallow(s) => {
                let model = s.model_for(task_id).map_err(|e| CliError::Data(e.to_string()))?;
                Ok(model.predict(0, x))
            }
            ModelPayload::StlDeep(s) => {
                let model = s.model_for(task_id).map_err(|e| CliError::Data(e.to_string()))?;
                model.predict(0, x).map_err(|e| CliError::Data(e.to_string()))
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub model: ModelPayload,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ReportFile {
    pub schema_version: u32,
    pub report: EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CvFile {
    pub schema_version: u32,
    pub selection: LambdaSelection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

/// Ground truth emitted next to a synthetic dataset.
#[derive(Debug, Serialize, Deserialize)]
pub struct TruthFile {
    pub schema_version: u32,
    pub spec: SynthSpec,
    pub true_weights: WeightMatrix,
    pub true_thresholds: ThresholdSet,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manifest: Option<RunManifest>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Data(format!("cannot serialize artifact: {e}")))?;
    text.push('\n');
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModelFile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("cannot parse model file {}: {e}", path.display())))
}
