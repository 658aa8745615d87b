//! Run configuration files and the end-to-end orchestration used by the
//! CLI: load datasets, run the specialist pipeline when loss columns are
//! absent, execute the selected algorithm, and export artifacts.

use crate::algorithms::{
    precompute_loss_column, run_algorithm, steps_per_epoch, train_specialist, RunConfig,
    TrainResult,
};
use crate::domain::TaskDataset;
use crate::error::{AmaError, Result};
use crate::io::{export_metrics, load_datasets, save_datasets, save_params, write_failure_marker};
use crate::losses::{DpoConfig, ParamVector};
use crate::players::ImportanceMode;
use crate::plots::emit_plots;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// On-disk run configuration (JSON). Unspecified fields take the default
/// hyperparameters: batch 256, c = 0.1, task-weight learning rate 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileConfig {
    pub algorithm: String,
    pub dataset: PathBuf,
    pub output: PathBuf,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_c")]
    pub smoothing_c: f64,
    /// Total training steps; defaults to epochs worth of data.
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default = "d_model_lr")]
    pub model_step_size: f64,
    #[serde(default = "d_eta_w")]
    pub weight_step_size: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub importance_mode: Option<String>,
    #[serde(default)]
    pub fixed_weights: Option<Vec<f64>>,
}

fn d_batch() -> usize {
    256
}
fn d_c() -> f64 {
    0.1
}
fn d_model_lr() -> f64 {
    5e-3
}
fn d_eta_w() -> f64 {
    1.0
}
fn d_beta() -> f64 {
    1.0
}
fn d_epochs() -> usize {
    3
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| AmaError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| AmaError::Config(e.to_string()))
    }

    /// Resolves into a validated RunConfig given the loaded datasets.
    pub fn resolve(&self, datasets: &[TaskDataset]) -> Result<RunConfig> {
        let algorithm = self.algorithm.parse()?;
        let importance_mode = match self.importance_mode.as_deref() {
            None | Some("internal_q") => ImportanceMode::InternalQ,
            Some("sampling_alpha") => ImportanceMode::SamplingAlpha,
            Some(other) => {
                return Err(AmaError::Config(format!(
                    "unknown importance_mode '{other}'"
                )))
            }
        };
        let steps = self
            .steps
            .unwrap_or_else(|| self.epochs * steps_per_epoch(datasets, self.batch_size));
        let cfg = RunConfig {
            batch_size: self.batch_size,
            smoothing_c: self.smoothing_c,
            steps,
            model_step_size: self.model_step_size,
            weight_step_size: self.weight_step_size,
            beta: self.beta,
            seed: self.seed,
            algorithm,
            importance_mode,
            fixed_weights: self.fixed_weights.clone(),
            epochs: self.epochs,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs the full pipeline described by a config file. When the algorithm
/// needs specialist losses and the dataset lacks the column, specialists
/// are trained first and the augmented dataset is written next to the
/// other artifacts.
pub fn run_from_config(config_path: &Path) -> Result<TrainResult> {
    let file_cfg = FileConfig::load(config_path)?;
    let datasets = load_datasets(&file_cfg.dataset)?;
    let cfg = file_cfg.resolve(&datasets)?;
    let out_dir = file_cfg.output.clone();

    let result = (|| -> Result<TrainResult> {
        let d = datasets[0].dim();
        let reference = ParamVector::zeros(d);
        let datasets = ensure_loss_columns(datasets, &cfg, &reference, Some(&out_dir))?;
        run_algorithm(&datasets, &cfg, &reference)
    })();

    match result {
        Ok(result) => {
            export_metrics(&result, &cfg, &out_dir)?;
            emit_plots(&out_dir)?;
            Ok(result)
        }
        Err(e) => {
            // Flush a failure marker so partial artifacts are identifiable.
            let _ = write_failure_marker(&out_dir, &e.to_string());
            Err(e)
        }
    }
}

/// Trains specialists and attaches loss columns where required. Writes
/// each specialist's params and the augmented dataset when `out_dir` is
/// given.
pub fn ensure_loss_columns(
    datasets: Vec<TaskDataset>,
    cfg: &RunConfig,
    reference: &ParamVector,
    out_dir: Option<&Path>,
) -> Result<Vec<TaskDataset>> {
    if !cfg.algorithm.needs_loss_column() || datasets.iter().all(|d| d.has_loss_column()) {
        return Ok(datasets);
    }
    let dpo = DpoConfig::new(cfg.beta, reference.clone())?;
    let mut augmented = Vec::with_capacity(datasets.len());
    for ds in &datasets {
        let specialist = train_specialist(ds, cfg, reference)?;
        if let Some(dir) = out_dir {
            std::fs::create_dir_all(dir).map_err(|e| AmaError::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
            save_params(&specialist, &dir.join(format!("specialist_{}.bin", ds.task.0)))?;
        }
        augmented.push(precompute_loss_column(&specialist, ds, &dpo, false)?);
    }
    if let Some(dir) = out_dir {
        save_datasets(&augmented, &dir.join("dataset_with_columns.jsonl"))?;
    }
    Ok(augmented)
}
