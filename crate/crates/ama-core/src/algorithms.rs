//! End-to-end training procedures: specialist pipeline, adaptive
//! resampling (AMA-S) and reweighting (AMA-R), the standard baselines,
//! the fixed-weight / unclipped ablations, and model averaging.

use crate::domain::{
    clipped_excess, ExcessLossRecord, SimplexWeights, TaskDataset, TaskId,
};
use crate::error::{AmaError, Result};
use crate::losses::{dpo_loss, dpo_loss_grad, DpoConfig, ParamVector};
use crate::players::{
    current_sampling_weights, eg_update, exp3_update, AlphaKind, AlphaPlayerState, ImportanceMode,
    TaskFeedback,
};
use crate::rng::{rng_for, Purpose};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

/// Which training procedure to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    AmaS,
    AmaR,
    Standard,
    StandardUniform,
    AmaSUniform,
    AmaRUniform,
    DoremiFixedS,
    DoremiFixedR,
    AmaSUnclipped,
    AmaRUnclipped,
}

impl Algorithm {
    /// Variants that consume the precomputed specialist-loss column.
    pub fn needs_loss_column(self) -> bool {
        !matches!(self, Algorithm::Standard | Algorithm::StandardUniform)
    }

    fn is_doremi(self) -> bool {
        matches!(self, Algorithm::DoremiFixedS | Algorithm::DoremiFixedR)
    }

    /// Resampling-family variants draw tasks from alpha; the rest sample
    /// tasks uniformly (Standard pools by dataset size).
    fn samples_by_alpha(self) -> bool {
        matches!(
            self,
            Algorithm::AmaS | Algorithm::DoremiFixedS | Algorithm::AmaSUnclipped
        )
    }

    /// Reweighting-family variants weight per-task batch means by alpha in
    /// the model update.
    fn reweights_objective(self) -> bool {
        matches!(
            self,
            Algorithm::AmaR
                | Algorithm::AmaRUniform
                | Algorithm::DoremiFixedR
                | Algorithm::AmaRUnclipped
        )
    }

    fn clips_model_gradient(self) -> bool {
        !matches!(
            self,
            Algorithm::Standard
                | Algorithm::StandardUniform
                | Algorithm::AmaSUnclipped
                | Algorithm::AmaRUnclipped
        )
    }
}

impl std::str::FromStr for Algorithm {
    type Err = AmaError;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| AmaError::Config(format!("unknown algorithm '{s}'")))
    }
}

/// Full configuration of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub batch_size: usize,
    pub smoothing_c: f64,
    pub steps: usize,
    pub model_step_size: f64,
    pub weight_step_size: f64,
    pub beta: f64,
    pub seed: u64,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub importance_mode: ImportanceMode,
    #[serde(default)]
    pub fixed_weights: Option<Vec<f64>>,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
}

fn default_epochs() -> usize {
    3
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(AmaError::Config("steps must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(AmaError::Config("batch_size must be >= 1".into()));
        }
        if !(self.smoothing_c > 0.0 && self.smoothing_c < 1.0) {
            return Err(AmaError::Config(format!(
                "smoothing_c must lie in (0,1), got {}",
                self.smoothing_c
            )));
        }
        if !(self.beta > 0.0) {
            return Err(AmaError::Config("beta must be positive".into()));
        }
        if !(self.model_step_size > 0.0) || !(self.weight_step_size > 0.0) {
            return Err(AmaError::Config("step sizes must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(AmaError::Config("epochs must be >= 1".into()));
        }
        if self.algorithm.is_doremi() != self.fixed_weights.is_some() {
            return Err(AmaError::Config(
                "fixed_weights must be present iff the algorithm is a doremi_fixed variant".into(),
            ));
        }
        Ok(())
    }

    /// Default hyperparameters: c = 0.1, eta_w = 1, batch 256.
    pub fn defaults(algorithm: Algorithm, steps: usize, seed: u64) -> Self {
        Self {
            batch_size: 256,
            smoothing_c: 0.1,
            steps,
            model_step_size: 5e-3,
            weight_step_size: 1.0,
            beta: 1.0,
            seed,
            algorithm,
            importance_mode: ImportanceMode::InternalQ,
            fixed_weights: None,
            epochs: 3,
        }
    }
}

/// One specialist parameter vector per task, plus the shared reference.
#[derive(Debug, Clone, PartialEq)]
pub struct SpecialistSet {
    pub specialists: Vec<ParamVector>,
    pub reference: ParamVector,
}

impl SpecialistSet {
    pub fn new(specialists: Vec<ParamVector>, reference: ParamVector) -> Result<Self> {
        let d = reference.dim();
        if specialists.iter().any(|s| s.dim() != d) {
            return Err(AmaError::Shape(
                "specialists and reference must share dimension".into(),
            ));
        }
        Ok(Self {
            specialists,
            reference,
        })
    }
}

/// Trajectories and outputs of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainResult {
    pub final_theta: ParamVector,
    pub theta_checkpoints: Vec<(usize, ParamVector)>,
    pub weight_trajectory: Vec<(usize, SimplexWeights)>,
    pub excess_trajectory: Vec<ExcessLossRecord>,
    pub sample_counts: Vec<u64>,
}

/// Number of steps in one epoch: ceil(total examples / batch size).
pub fn steps_per_epoch(datasets: &[TaskDataset], batch_size: usize) -> usize {
    let total: usize = datasets.iter().map(|d| d.len()).sum();
    total.div_ceil(batch_size)
}

/// Trains a specialist on a single task dataset by seeded minibatch
/// gradient descent on the DPO loss, starting from the reference.
pub fn train_specialist(
    dataset: &TaskDataset,
    cfg: &RunConfig,
    reference: &ParamVector,
) -> Result<ParamVector> {
    dataset.validate()?;
    let dpo = DpoConfig::new(cfg.beta, reference.clone())?;
    let mut theta = reference.clone();
    let steps = cfg.epochs * dataset.len().div_ceil(cfg.batch_size);
    let mut rng = rng_for(cfg.seed.wrapping_add(dataset.task.0 as u64), Purpose::Specialist);
    for step in 0..steps {
        let mut grad = vec![0.0; theta.dim()];
        let b = cfg.batch_size.min(dataset.len());
        for _ in 0..b {
            let idx = rng.gen_range(0..dataset.len());
            let g = dpo_loss_grad(&theta, &dpo, &dataset.examples[idx])?;
            for (a, gi) in grad.iter_mut().zip(&g) {
                *a += gi;
            }
        }
        let scale = -cfg.model_step_size / b as f64;
        theta.axpy(scale, &grad);
        if theta.values.iter().any(|v| !v.is_finite()) {
            return Err(AmaError::Training {
                step,
                message: "specialist parameters diverged".into(),
            });
        }
    }
    Ok(theta)
}

/// Writes the precomputed specialist-loss column onto every example.
pub fn precompute_loss_column(
    specialist: &ParamVector,
    dataset: &TaskDataset,
    cfg: &DpoConfig,
    overwrite: bool,
) -> Result<TaskDataset> {
    if dataset.has_loss_column() && !overwrite {
        return Err(AmaError::InvalidInput(format!(
            "dataset '{}' already carries a specialist-loss column",
            dataset.name
        )));
    }
    let mut examples = Vec::with_capacity(dataset.len());
    for z in &dataset.examples {
        let mut z2 = z.clone();
        z2.specialist_loss = Some(dpo_loss(specialist, cfg, z)?);
        examples.push(z2);
    }
    TaskDataset::new(dataset.task, dataset.name.clone(), examples)
}

/// Draws b examples: task from alpha, then an example uniformly with
/// replacement from that task. Returns (task, example index) pairs.
pub fn sample_batch_multinomial(
    datasets: &[TaskDataset],
    alpha: &SimplexWeights,
    b: usize,
    rng: &mut ChaCha12Rng,
) -> Result<Vec<(TaskId, usize)>> {
    if alpha.len() != datasets.len() {
        return Err(AmaError::Shape(format!(
            "alpha has {} entries for {} datasets",
            alpha.len(),
            datasets.len()
        )));
    }
    let dist = WeightedIndex::new(alpha.as_slice())
        .map_err(|e| AmaError::InvalidWeights(e.to_string()))?;
    let mut batch = Vec::with_capacity(b);
    for _ in 0..b {
        let j = dist.sample(rng);
        let idx = rng.gen_range(0..datasets[j].len());
        batch.push((TaskId(j), idx));
    }
    Ok(batch)
}

fn size_proportional_alpha(datasets: &[TaskDataset]) -> Result<SimplexWeights> {
    crate::domain::normalize_to_simplex(
        &datasets.iter().map(|d| d.len() as f64).collect::<Vec<_>>(),
    )
}

/// Runs the configured algorithm over the task datasets. `reference` is
/// both the DPO reference and the generalist's initialization.
pub fn run_algorithm(
    datasets: &[TaskDataset],
    cfg: &RunConfig,
    reference: &ParamVector,
) -> Result<TrainResult> {
    cfg.validate()?;
    if datasets.is_empty() {
        return Err(AmaError::InvalidInput("no task datasets".into()));
    }
    let k = datasets.len();
    for (i, ds) in datasets.iter().enumerate() {
        ds.validate()?;
        if ds.task.0 != i {
            return Err(AmaError::InvalidInput(format!(
                "dataset '{}' has task id {} at position {i}",
                ds.name, ds.task.0
            )));
        }
        if cfg.algorithm.needs_loss_column() && !ds.has_loss_column() {
            return Err(AmaError::InvalidInput(format!(
                "algorithm {:?} requires a specialist-loss column on dataset '{}'",
                cfg.algorithm, ds.name
            )));
        }
        if ds.dim() != reference.dim() {
            return Err(AmaError::Shape(format!(
                "dataset '{}' has dimension {}, reference has {}",
                ds.name,
                ds.dim(),
                reference.dim()
            )));
        }
    }

    let dpo = DpoConfig::new(cfg.beta, reference.clone())?;
    let mut theta = reference.clone();
    let mut alpha_player = make_alpha_player(cfg, k)?;
    let mut rng = rng_for(cfg.seed, Purpose::Sampling);

    let standard_alpha = size_proportional_alpha(datasets)?;
    let checkpoint_every = cfg.steps.div_ceil(2 * cfg.epochs).max(1);

    let mut weight_trajectory = Vec::with_capacity(cfg.steps);
    let mut excess_trajectory = Vec::new();
    let mut theta_checkpoints = Vec::new();
    let mut sample_counts = vec![0u64; k];

    for step in 1..=cfg.steps {
        // Sampling distribution for this step.
        let alpha = match cfg.algorithm {
            Algorithm::Standard => standard_alpha.clone(),
            a if a.samples_by_alpha() => current_sampling_weights(&alpha_player, k)?,
            _ => SimplexWeights::uniform(k),
        };
        // Objective weights recorded in the trajectory: the sampling
        // weights for resampling variants, the reweighting coefficients
        // for reweighting variants.
        let objective_alpha = if cfg.algorithm.reweights_objective() {
            current_sampling_weights(&alpha_player, k)?
        } else {
            alpha.clone()
        };
        weight_trajectory.push((step, objective_alpha.clone()));

        let batch = sample_batch_multinomial(datasets, &alpha, cfg.batch_size, &mut rng)?;
        for (t, _) in &batch {
            sample_counts[t.0] += 1;
        }

        // Per-task batch statistics and the model gradient.
        let mut per_task: Vec<PerTaskBatch> = vec![PerTaskBatch::new(theta.dim()); k];
        for (t, idx) in &batch {
            let z = &datasets[t.0].examples[*idx];
            let loss = dpo_loss(&theta, &dpo, z)?;
            if !loss.is_finite() {
                return Err(AmaError::Training {
                    step,
                    message: "non-finite loss".into(),
                });
            }
            let stats = &mut per_task[t.0];
            stats.count += 1;
            if cfg.algorithm.needs_loss_column() {
                let spec = z.specialist_loss.expect("column checked above");
                let raw = loss - spec;
                stats.raw_sum += raw;
                stats.clipped_sum += clipped_excess(loss, spec)?;
                let contributes = if cfg.algorithm.clips_model_gradient() {
                    raw > 0.0
                } else {
                    true
                };
                if contributes {
                    let g = dpo_loss_grad(&theta, &dpo, z)?;
                    for (a, gi) in stats.grad_sum.iter_mut().zip(&g) {
                        *a += gi;
                    }
                }
            } else {
                let g = dpo_loss_grad(&theta, &dpo, z)?;
                for (a, gi) in stats.grad_sum.iter_mut().zip(&g) {
                    *a += gi;
                }
            }
        }

        if cfg.algorithm.needs_loss_column() {
            for (i, stats) in per_task.iter().enumerate() {
                excess_trajectory.push(if stats.count > 0 {
                    ExcessLossRecord::observed(
                        TaskId(i),
                        step,
                        stats.raw_sum / stats.count as f64,
                        stats.count,
                    )
                } else {
                    ExcessLossRecord::unsampled(TaskId(i), step)
                });
            }
        }

        // Weight update (adaptive variants only).
        match cfg.algorithm {
            Algorithm::AmaS | Algorithm::AmaSUnclipped => {
                let fb = feedback(&per_task);
                alpha_player = exp3_update(&alpha_player, &fb)?;
            }
            Algorithm::AmaR | Algorithm::AmaRUnclipped => {
                let fb = feedback(&per_task);
                alpha_player = eg_update(&alpha_player, &fb)?;
            }
            _ => {}
        }

        // Model update.
        let mut grad = vec![0.0; theta.dim()];
        if cfg.algorithm.reweights_objective() {
            // sum_i alpha_i * (1/|B_i|) sum_{z in B_i} grad; empty batches
            // contribute zero.
            for (i, stats) in per_task.iter().enumerate() {
                if stats.count > 0 {
                    let w = objective_alpha.get(i) / stats.count as f64;
                    for (a, gi) in grad.iter_mut().zip(&stats.grad_sum) {
                        *a += w * gi;
                    }
                }
            }
        } else {
            // (1/|B|) over the whole batch.
            let inv = 1.0 / cfg.batch_size as f64;
            for stats in &per_task {
                for (a, gi) in grad.iter_mut().zip(&stats.grad_sum) {
                    *a += inv * gi;
                }
            }
        }
        theta.axpy(-cfg.model_step_size, &grad);
        if theta.values.iter().any(|v| !v.is_finite()) {
            return Err(AmaError::Training {
                step,
                message: "model parameters diverged".into(),
            });
        }

        if step % checkpoint_every == 0 || step == cfg.steps {
            if theta_checkpoints.last().map(|(s, _)| *s) != Some(step) {
                theta_checkpoints.push((step, theta.clone()));
            }
        }
    }

    Ok(TrainResult {
        final_theta: theta,
        theta_checkpoints,
        weight_trajectory,
        excess_trajectory,
        sample_counts,
    })
}

#[derive(Clone)]
struct PerTaskBatch {
    count: usize,
    raw_sum: f64,
    clipped_sum: f64,
    grad_sum: Vec<f64>,
}

impl PerTaskBatch {
    fn new(d: usize) -> Self {
        Self {
            count: 0,
            raw_sum: 0.0,
            clipped_sum: 0.0,
            grad_sum: vec![0.0; d],
        }
    }
}

fn feedback(per_task: &[PerTaskBatch]) -> Vec<TaskFeedback> {
    per_task
        .iter()
        .map(|s| {
            if s.count > 0 {
                TaskFeedback::observed(s.clipped_sum / s.count as f64, s.count)
            } else {
                TaskFeedback::unsampled()
            }
        })
        .collect()
}

fn make_alpha_player(cfg: &RunConfig, k: usize) -> Result<AlphaPlayerState> {
    match cfg.algorithm {
        Algorithm::AmaS | Algorithm::AmaSUnclipped => Ok(AlphaPlayerState::new(
            k,
            cfg.smoothing_c,
            cfg.weight_step_size,
            AlphaKind::Exp3,
        )?
        .with_importance_mode(cfg.importance_mode)),
        Algorithm::AmaR | Algorithm::AmaRUnclipped => AlphaPlayerState::new(
            k,
            cfg.smoothing_c,
            cfg.weight_step_size,
            AlphaKind::Eg,
        ),
        Algorithm::DoremiFixedS | Algorithm::DoremiFixedR => {
            let w = cfg
                .fixed_weights
                .clone()
                .ok_or_else(|| AmaError::Config("doremi variant requires fixed_weights".into()))?;
            Ok(AlphaPlayerState::fixed(SimplexWeights::new(w)?))
        }
        _ => Ok(AlphaPlayerState {
            q: SimplexWeights::uniform(k),
            c: cfg.smoothing_c,
            eta_w: cfg.weight_step_size,
            kind: AlphaKind::FixedUniform,
            importance_mode: cfg.importance_mode,
        }),
    }
}

/// Elementwise convex combination of parameter vectors.
pub fn model_average(params: &[ParamVector], lambdas: &[f64]) -> Result<ParamVector> {
    if params.is_empty() || params.len() != lambdas.len() {
        return Err(AmaError::Config(format!(
            "{} models vs {} weights",
            params.len(),
            lambdas.len()
        )));
    }
    let sum: f64 = lambdas.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(AmaError::Config(format!(
            "merge weights sum to {sum}, expected 1"
        )));
    }
    let d = params[0].dim();
    if params.iter().any(|p| p.dim() != d) {
        return Err(AmaError::Shape("merged models must share dimension".into()));
    }
    let mut out = vec![0.0; d];
    for (p, l) in params.iter().zip(lambdas) {
        for (o, v) in out.iter_mut().zip(&p.values) {
            *o += l * v;
        }
    }
    ParamVector::new(out)
}

/// Convenience wrappers matching the per-algorithm entry points.
pub fn ama_s_run(
    datasets: &[TaskDataset],
    specialists: &SpecialistSet,
    cfg: &RunConfig,
) -> Result<TrainResult> {
    expect_algorithm(cfg, Algorithm::AmaS)?;
    run_algorithm(datasets, cfg, &specialists.reference)
}

pub fn ama_r_run(
    datasets: &[TaskDataset],
    specialists: &SpecialistSet,
    cfg: &RunConfig,
) -> Result<TrainResult> {
    expect_algorithm(cfg, Algorithm::AmaR)?;
    run_algorithm(datasets, cfg, &specialists.reference)
}

pub fn standard_run(
    datasets: &[TaskDataset],
    cfg: &RunConfig,
    reference: &ParamVector,
) -> Result<TrainResult> {
    expect_algorithm(cfg, Algorithm::Standard)?;
    run_algorithm(datasets, cfg, reference)
}

pub fn standard_uniform_run(
    datasets: &[TaskDataset],
    cfg: &RunConfig,
    reference: &ParamVector,
) -> Result<TrainResult> {
    expect_algorithm(cfg, Algorithm::StandardUniform)?;
    run_algorithm(datasets, cfg, reference)
}

fn expect_algorithm(cfg: &RunConfig, want: Algorithm) -> Result<()> {
    if cfg.algorithm != want {
        return Err(AmaError::Config(format!(
            "config selects {:?}, expected {:?}",
            cfg.algorithm, want
        )));
    }
    Ok(())
}
