//! Shallow trainer: FISTA with backtracking and the row-wise ℓ2,1 proximal
//! step for the weight matrix, plain gradient descent for the thresholds,
//! alternating until the composite objective settles.

use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, MultiTaskDataset};
use crate::loss::{
    all_grad_unchecked, all_loss_unchecked, immediate_grad_unchecked, immediate_loss_unchecked,
    loss_all, loss_immediate, LossError,
};
use crate::model::{
    ModelError, RmtorModel, ThresholdSet, ThresholdVariant, TrainingRecord, WeightMatrix,
};

#[derive(Debug, Error)]
pub enum OptimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Settings for the inner FISTA loop over the weight matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FistaConfig {
    pub max_iterations: usize,
    /// Stop when the relative Frobenius change of W falls below this.
    pub tolerance: f64,
    /// Starting curvature estimate γ; 1/γ is the step size.
    pub initial_gamma: f64,
    /// Multiplier applied to γ while the backtracking condition fails.
    pub backtrack_factor: f64,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-6,
            initial_gamma: 1.0,
            backtrack_factor: 2.0,
        }
    }
}

impl FistaConfig {
    fn validate(&self) -> Result<(), OptimError> {
        if self.max_iterations == 0 {
            return Err(OptimError::Config("max_iterations must be positive".into()));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(OptimError::Config("tolerance must be positive".into()));
        }
        if !self.initial_gamma.is_finite() || self.initial_gamma <= 0.0 {
            return Err(OptimError::Config("initial_gamma must be positive".into()));
        }
        if !self.backtrack_factor.is_finite() || self.backtrack_factor <= 1.0 {
            return Err(OptimError::Config(
                "backtrack_factor must exceed 1".into(),
            ));
        }
        Ok(())
    }
}

/// Settings for the outer alternating loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingConfig {
    pub outer_max: usize,
    /// Stop when the relative change of the composite objective falls below
    /// this.
    pub outer_tolerance: f64,
    /// Threshold gradient-descent rounds per outer iteration.
    pub threshold_steps: usize,
    /// Threshold step size ε (fixed schedule).
    pub threshold_lr: f64,
    /// Minimum gap kept between consecutive thresholds by the repair sweep.
    pub min_gap: f64,
}

impl Default for AlternatingConfig {
    fn default() -> Self {
        Self {
            outer_max: 100,
            outer_tolerance: 1e-5,
            threshold_steps: 20,
            threshold_lr: 0.01,
            min_gap: 1e-6,
        }
    }
}

impl AlternatingConfig {
    fn validate(&self) -> Result<(), OptimError> {
        if self.outer_max == 0 || self.threshold_steps == 0 {
            return Err(OptimError::Config(
                "outer_max and threshold_steps must be positive".into(),
            ));
        }
        if [self.outer_tolerance, self.threshold_lr, self.min_gap]
            .iter()
            .any(|v| !v.is_finite() || *v <= 0.0)
        {
            return Err(OptimError::Config(
                "outer_tolerance, threshold_lr and min_gap must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// ‖W‖₂,₁ = Σ_g ‖row g‖₂ — the row-wise group norm coupling the tasks.
pub fn l21_norm(weights: &WeightMatrix) -> f64 {
    l21_of(weights.values())
}

fn l21_of(values: &Array2<f64>) -> f64 {
    values
        .rows()
        .into_iter()
        .map(|row| row.dot(&row).sqrt())
        .sum()
}

/// Row-wise shrinkage: each row is scaled by (1 − threshold/‖row‖₂) when its
/// norm exceeds the threshold and zeroed otherwise; a zero threshold returns
/// the input unchanged.
pub fn prox_l21(h: &Array2<f64>, threshold: f64) -> Array2<f64> {
    if threshold == 0.0 {
        return h.clone();
    }
    let mut out = h.clone();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > threshold {
            let scale = 1.0 - threshold / norm;
            row.mapv_inplace(|v| v * scale);
        } else {
            row.fill(0.0);
        }
    }
    out
}

fn frobenius(values: &Array2<f64>) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn inner_product(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    Zip::from(a).and(b).fold(0.0, |acc, &x, &y| acc + x * y)
}

/// Accelerated proximal-gradient minimization of loss(W) + λ‖W‖₂,₁.
///
/// Momentum follows d_{−1}=0, d_0=1, α = (d_{l−2}−1)/d_{l−1}, with the search
/// point S = W + α(W − W_prev). Backtracking multiplies γ until the smooth
/// loss at the prox candidate is majorized by its quadratic model at S; the
/// proximal step is prox_ℓ2,1(S − ∇loss(S)/γ, λ/γ). A candidate that would
/// raise the composite objective is rejected and the iterate held — momentum
/// can overshoot, and the trainer's convergence bookkeeping needs the
/// composite trace non-increasing. Stops when the relative Frobenius change
/// of an accepted step drops below the tolerance or iterations run out.
/// Returns the final weights and the number of iterations taken.
pub fn fista<L, G>(
    loss: L,
    grad: G,
    lambda: f64,
    w0: &WeightMatrix,
    cfg: &FistaConfig,
) -> Result<(WeightMatrix, usize), OptimError>
where
    L: Fn(&WeightMatrix) -> f64,
    G: Fn(&WeightMatrix) -> Array2<f64>,
{
    fista_with_callback(loss, grad, lambda, w0, cfg, |_, _| {})
}

/// [`fista`] with a per-iteration hook receiving the iteration index and the
/// new iterate, for convergence diagnostics.
pub fn fista_with_callback<L, G, C>(
    loss: L,
    grad: G,
    lambda: f64,
    w0: &WeightMatrix,
    cfg: &FistaConfig,
    mut callback: C,
) -> Result<(WeightMatrix, usize), OptimError>
where
    L: Fn(&WeightMatrix) -> f64,
    G: Fn(&WeightMatrix) -> Array2<f64>,
    C: FnMut(usize, &WeightMatrix),
{
    cfg.validate()?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(OptimError::Config("lambda must be nonnegative".into()));
    }
    let mut w_prev = w0.values().clone();
    let mut w = w0.values().clone();
    let mut composite_w = {
        let wm = WeightMatrix::from_values(w.clone());
        loss(&wm) + lambda * l21_of(&w)
    };
    if !composite_w.is_finite() {
        return Err(OptimError::NonFinite { iteration: 0 });
    }
    let mut d_before_prev = 0.0f64; // d_{l-2}
    let mut d_prev = 1.0f64; // d_{l-1}
    let mut gamma = cfg.initial_gamma;
    let mut iterations = 0;
    for l in 1..=cfg.max_iterations {
        iterations = l;
        let alpha = (d_before_prev - 1.0) / d_prev;
        let search = &w + &((&w - &w_prev) * alpha);
        let search_wm = WeightMatrix::from_values(search.clone());
        let loss_s = loss(&search_wm);
        let grad_s = grad(&search_wm);
        if !loss_s.is_finite() || grad_s.iter().any(|v| !v.is_finite()) {
            return Err(OptimError::NonFinite { iteration: l });
        }
        let (candidate, loss_c) = loop {
            let candidate = prox_l21(&(&search - &(&grad_s / gamma)), lambda / gamma);
            let diff = &candidate - &search;
            let quad = loss_s
                + 0.5 * gamma * inner_product(&diff, &diff)
                + inner_product(&diff, &grad_s);
            let loss_c = loss(&WeightMatrix::from_values(candidate.clone()));
            if !loss_c.is_finite() {
                return Err(OptimError::NonFinite { iteration: l });
            }
            // the slack keeps rounding at exact equality (e.g. a quadratic
            // loss with γ at its curvature) from forcing a spurious doubling
            if loss_c <= quad + 1e-12 * quad.abs().max(1.0) {
                break (candidate, loss_c);
            }
            gamma *= cfg.backtrack_factor;
            if !gamma.is_finite() {
                return Err(OptimError::NonFinite { iteration: l });
            }
        };
        let composite_c = loss_c + lambda * l21_of(&candidate);
        let d = (1.0 + (1.0 + 4.0 * d_prev * d_prev).sqrt()) / 2.0;
        d_before_prev = d_prev;
        d_prev = d;
        if composite_c <= composite_w + 1e-12 * composite_w.abs().max(1.0) {
            let change = frobenius(&(&candidate - &w)) / frobenius(&w).max(1.0);
            w_prev = w;
            w = candidate;
            composite_w = composite_c;
            callback(l, &WeightMatrix::from_values(w.clone()));
            if change < cfg.tolerance {
                break;
            }
        } else {
            // overshoot: hold the iterate; the next search point collapses
            // to W and the following step is a plain descending prox step
            w_prev = w.clone();
            callback(l, &WeightMatrix::from_values(w.clone()));
        }
    }
    Ok((WeightMatrix::from_values(w), iterations))
}

/// One threshold gradient-descent step followed by the monotonicity repair:
/// after ϑ ← ϑ − ε·grad, a left-to-right sweep lifts each entry to at least
/// min_gap above its predecessor.
pub fn update_thresholds(
    thresholds: &ThresholdSet,
    grad: &Array2<f64>,
    eps: f64,
    min_gap: f64,
) -> Result<ThresholdSet, OptimError> {
    if grad.raw_dim() != thresholds.values().raw_dim() {
        return Err(OptimError::Config(format!(
            "threshold gradient shape {:?} does not match storage {:?}",
            grad.shape(),
            thresholds.values().shape()
        )));
    }
    let mut values = thresholds.values() - &(grad * eps);
    for mut row in values.rows_mut() {
        for i in 1..row.len() {
            let floor = row[i - 1] + min_gap;
            if row[i] < floor {
                row[i] = floor;
            }
        }
    }
    Ok(ThresholdSet::from_values(thresholds.variant(), values)?)
}

fn composite_objective(
    data: &MultiTaskDataset,
    weights: &WeightMatrix,
    thresholds: &ThresholdSet,
    lambda: f64,
) -> f64 {
    let loss = match thresholds.variant() {
        ThresholdVariant::Immediate => immediate_loss_unchecked(data, weights, thresholds),
        ThresholdVariant::All => all_loss_unchecked(data, weights, thresholds),
    };
    loss.total + lambda * l21_norm(weights)
}

/// Trains a regularized multi-task ordinal regression model by alternating
/// FISTA over the weight matrix (thresholds fixed) with threshold
/// gradient-descent rounds (weights fixed). Starts from W = 0 and evenly
/// spaced thresholds; records the composite objective each outer iteration.
pub fn train_rmtor(
    data: &MultiTaskDataset,
    variant: ThresholdVariant,
    lambda: f64,
    fista_cfg: &FistaConfig,
    alt_cfg: &AlternatingConfig,
) -> Result<RmtorModel, OptimError> {
    data.validate()?;
    fista_cfg.validate()?;
    alt_cfg.validate()?;
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(OptimError::Config("lambda must be nonnegative".into()));
    }
    let mut weights = WeightMatrix::zeros(data.num_features(), data.num_tasks());
    let mut thresholds =
        ThresholdSet::evenly_spaced(variant, data.num_tasks(), data.num_classes())?;
    // validate the (data, weights, thresholds) triple once; the loop below
    // keeps the shapes fixed
    match variant {
        ThresholdVariant::Immediate => {
            loss_immediate(data, &weights, &thresholds)?;
        }
        ThresholdVariant::All => {
            loss_all(data, &weights, &thresholds)?;
        }
    }
    let mut objective = composite_objective(data, &weights, &thresholds, lambda);
    let mut training_log = vec![TrainingRecord {
        iteration: 0,
        objective,
    }];
    for outer in 1..=alt_cfg.outer_max {
        let th = thresholds.clone();
        let loss_fn = |w: &WeightMatrix| -> f64 {
            match variant {
                ThresholdVariant::Immediate => immediate_loss_unchecked(data, w, &th).total,
                ThresholdVariant::All => all_loss_unchecked(data, w, &th).total,
            }
        };
        let grad_fn = |w: &WeightMatrix| -> Array2<f64> {
            match variant {
                ThresholdVariant::Immediate => immediate_grad_unchecked(data, w, &th).d_weights,
                ThresholdVariant::All => all_grad_unchecked(data, w, &th).d_weights,
            }
        };
        let (new_weights, _iters) = fista(loss_fn, grad_fn, lambda, &weights, fista_cfg)?;
        weights = new_weights;
        for _ in 0..alt_cfg.threshold_steps {
            let grad = match variant {
                ThresholdVariant::Immediate => {
                    immediate_grad_unchecked(data, &weights, &thresholds).d_thresholds
                }
                ThresholdVariant::All => {
                    all_grad_unchecked(data, &weights, &thresholds).d_thresholds
                }
            };
            if grad.iter().any(|v| !v.is_finite()) {
                return Err(OptimError::NonFinite { iteration: outer });
            }
            thresholds =
                update_thresholds(&thresholds, &grad, alt_cfg.threshold_lr, alt_cfg.min_gap)?;
        }
        let new_objective = composite_objective(data, &weights, &thresholds, lambda);
        if !new_objective.is_finite() {
            return Err(OptimError::NonFinite { iteration: outer });
        }
        training_log.push(TrainingRecord {
            iteration: outer,
            objective: new_objective,
        });
        let rel_change = (objective - new_objective).abs() / objective.abs().max(1.0);
        objective = new_objective;
        if rel_change < alt_cfg.outer_tolerance {
            break;
        }
    }
    Ok(RmtorModel {
        weights,
        thresholds,
        lambda,
        task_ids: data.task_ids(),
        training_log,
    })
}

// Re-exported here so trainers of both depths share one repair rule.
pub(crate) const DEFAULT_MIN_GAP: f64 = 1e-6;
