//! Dataset ingestion and artifact export.
//!
//! Dataset files are JSONL, one object per example with keys `task`,
//! `prompt_features`, `chosen_features`, `rejected_features`, and an
//! optional `specialist_loss`. Tasks are grouped by first appearance.
//!
//! Exports: `weights.csv` (step, one column per task), `excess.csv`
//! (step, task, raw, clipped, batch_count; empty value fields when the
//! task drew no samples), `counts.csv`, a params binary (magic bytes,
//! u32 dimension, little-endian doubles), and `manifest.json` with the
//! config hash and seed. All outputs are byte-deterministic.

use crate::algorithms::{RunConfig, TrainResult};
use crate::domain::{PreferenceExample, TaskDataset, TaskId};
use crate::error::{AmaError, Result};
use crate::losses::ParamVector;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const PARAMS_MAGIC: &[u8; 4] = b"AMAP";

fn io_err(path: &Path, source: std::io::Error) -> AmaError {
    AmaError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[derive(Deserialize)]
struct DatasetRow {
    task: String,
    prompt_features: Vec<f64>,
    chosen_features: Vec<f64>,
    rejected_features: Vec<f64>,
    #[serde(default)]
    specialist_loss: Option<f64>,
}

/// Loads a JSONL dataset file, grouping rows into per-task datasets in
/// order of first appearance. The load is atomic: any malformed row fails
/// the whole file with its line number.
pub fn load_datasets(path: &Path) -> Result<Vec<TaskDataset>> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let reader = BufReader::new(file);
    let mut order: Vec<String> = Vec::new();
    let mut groups: HashMap<String, Vec<PreferenceExample>> = HashMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| io_err(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: DatasetRow = serde_json::from_str(&line).map_err(|e| AmaError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        let example = PreferenceExample {
            prompt_features: row.prompt_features,
            chosen_features: row.chosen_features,
            rejected_features: row.rejected_features,
            specialist_loss: row.specialist_loss,
        };
        example.validate().map_err(|e| AmaError::Parse {
            line: lineno + 1,
            message: e.to_string(),
        })?;
        if !groups.contains_key(&row.task) {
            order.push(row.task.clone());
        }
        groups.entry(row.task).or_default().push(example);
    }
    if order.is_empty() {
        return Err(AmaError::InvalidInput(format!(
            "no examples in {}",
            path.display()
        )));
    }
    let mut datasets = Vec::with_capacity(order.len());
    for (i, name) in order.iter().enumerate() {
        let examples = groups.remove(name).unwrap();
        datasets.push(TaskDataset::new(TaskId(i), name.clone(), examples)?);
    }
    Ok(datasets)
}

/// Writes datasets back as JSONL (full-precision decimal serialization,
/// so a reload reproduces identical values).
pub fn save_datasets(datasets: &[TaskDataset], path: &Path) -> Result<()> {
    let mut out = String::new();
    for ds in datasets {
        for z in &ds.examples {
            let row = serde_json::json!({
                "task": ds.name,
                "prompt_features": z.prompt_features,
                "chosen_features": z.chosen_features,
                "rejected_features": z.rejected_features,
            });
            let mut row = row;
            if let Some(l) = z.specialist_loss {
                row["specialist_loss"] = serde_json::json!(l);
            }
            out.push_str(&serde_json::to_string(&row).expect("serializable"));
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| io_err(path, e))
}

/// Writes a parameter vector: magic, u32 dimension, little-endian doubles.
pub fn save_params(theta: &ParamVector, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(8 + 8 * theta.dim());
    buf.extend_from_slice(PARAMS_MAGIC);
    buf.extend_from_slice(&(theta.dim() as u32).to_le_bytes());
    for v in &theta.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamVector> {
    let buf = fs::read(path).map_err(|e| io_err(path, e))?;
    if buf.len() < 8 || &buf[0..4] != PARAMS_MAGIC {
        return Err(AmaError::InvalidInput(format!(
            "{} is not a params file",
            path.display()
        )));
    }
    let dim = u32::from_le_bytes(buf[4..8].try_into().unwrap()) as usize;
    if buf.len() != 8 + 8 * dim {
        return Err(AmaError::InvalidInput(format!(
            "{}: expected {} doubles",
            path.display(),
            dim
        )));
    }
    let values = buf[8..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ParamVector::new(values)
}

/// SHA-256 hash of the canonical JSON form of the config.
pub fn config_hash(cfg: &RunConfig) -> String {
    let json = serde_json::to_string(cfg).expect("serializable");
    let digest = Sha256::digest(json.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes all metric files for one run into `out_dir`.
pub fn export_metrics(result: &TrainResult, cfg: &RunConfig, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let k = result.sample_counts.len();

    let weights_path = out_dir.join("weights.csv");
    {
        let mut f = fs::File::create(&weights_path).map_err(|e| io_err(&weights_path, e))?;
        let header: Vec<String> = (0..k).map(|i| format!("w{i}")).collect();
        writeln!(f, "step,{}", header.join(",")).map_err(|e| io_err(&weights_path, e))?;
        for (step, w) in &result.weight_trajectory {
            let row: Vec<String> = w.as_slice().iter().map(|x| format!("{x}")).collect();
            writeln!(f, "{step},{}", row.join(",")).map_err(|e| io_err(&weights_path, e))?;
        }
    }

    let excess_path = out_dir.join("excess.csv");
    {
        let mut f = fs::File::create(&excess_path).map_err(|e| io_err(&excess_path, e))?;
        writeln!(f, "step,task,raw_excess,clipped_excess,batch_count")
            .map_err(|e| io_err(&excess_path, e))?;
        for r in &result.excess_trajectory {
            let raw = r.raw_excess.map(|v| format!("{v}")).unwrap_or_default();
            let clipped = r.clipped_excess.map(|v| format!("{v}")).unwrap_or_default();
            writeln!(f, "{},{},{},{},{}", r.step, r.task.0, raw, clipped, r.batch_count)
                .map_err(|e| io_err(&excess_path, e))?;
        }
    }

    let counts_path = out_dir.join("counts.csv");
    {
        let mut f = fs::File::create(&counts_path).map_err(|e| io_err(&counts_path, e))?;
        writeln!(f, "task,samples").map_err(|e| io_err(&counts_path, e))?;
        for (i, c) in result.sample_counts.iter().enumerate() {
            writeln!(f, "{i},{c}").map_err(|e| io_err(&counts_path, e))?;
        }
    }

    save_params(&result.final_theta, &out_dir.join("params.bin"))?;
    for (step, theta) in &result.theta_checkpoints {
        save_params(theta, &out_dir.join(format!("checkpoint_{step}.bin")))?;
    }

    let manifest_path = out_dir.join("manifest.json");
    let manifest = serde_json::json!({
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "algorithm": cfg.algorithm,
        "steps": cfg.steps,
        "tasks": k,
        "checkpoints": result.theta_checkpoints.iter().map(|(s, _)| s).collect::<Vec<_>>(),
    });
    fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).expect("serializable"),
    )
    .map_err(|e| io_err(&manifest_path, e))
}

/// Marks a run directory as failed; partial artifacts stay for debugging.
pub fn write_failure_marker(out_dir: &Path, message: &str) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let path = out_dir.join("FAILED");
    fs::write(&path, message).map_err(|e| io_err(&path, e))
}
