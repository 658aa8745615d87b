use ama_core::algorithms::{
    model_average, precompute_loss_column, run_algorithm, train_specialist,
};
use ama_core::checkpoint::{compute_checkpoint_score, select_checkpoint};
use ama_core::config::{ensure_loss_columns, FileConfig};
use ama_core::error::{AmaError, Result};
use ama_core::game::{generate_regression_tasks, imbalance_experiment, theorem1_experiment};
use ama_core::io::{
    export_metrics, load_datasets, load_params, save_datasets, save_params, write_failure_marker,
};
use ama_core::losses::{DpoConfig, ParamVector};
use ama_core::plots::emit_plots;
use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ama", about = "Adaptive data mixing for multi-task preference optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Training flags shared by several subcommands. Every flag has a
/// config-file equivalent; the config file wins over defaults and flags
/// win over the config file.
#[derive(Args, Clone, Default)]
struct TrainFlags {
    /// JSON run configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    smoothing_c: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    model_step_size: Option<f64>,
    #[arg(long)]
    weight_step_size: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    importance_mode: Option<String>,
    /// Comma-separated simplex weights for the doremi_fixed variants
    #[arg(long)]
    fixed_weights: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one specialist model per task and save its parameters
    TrainSpecialists(TrainFlags),
    /// Attach specialist-loss columns to a dataset
    Precompute {
        #[arg(long)]
        dataset: PathBuf,
        /// Directory holding specialist_<task>.bin files
        #[arg(long)]
        specialists: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        beta: Option<f64>,
        /// Recompute columns that are already present
        #[arg(long)]
        overwrite: bool,
    },
    /// Run a training algorithm and export metrics, params, and plots
    Train(TrainFlags),
    /// Convex combination of saved parameter vectors
    Merge {
        /// Params files, repeated
        #[arg(long = "params", required = true)]
        params: Vec<PathBuf>,
        /// Comma-separated weights summing to 1
        #[arg(long)]
        lambdas: String,
        #[arg(long)]
        output: PathBuf,
    },
    /// Preference accuracy of saved params on a dataset
    Evaluate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Apply the earliest-overlapping-CI rule to a run's checkpoints
    SelectCheckpoint {
        /// Run directory containing checkpoint_<step>.bin files
        #[arg(long)]
        run_dir: PathBuf,
        /// Evaluation dataset (JSONL)
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Synthetic experiments
    Experiment {
        #[command(subcommand)]
        which: ExperimentCommand,
    },
    /// Re-render SVG plots from a run directory's CSV files
    Plot {
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum ExperimentCommand {
    /// Convergence-gap experiment on synthetic regression tasks
    Theorem1 {
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 16)]
        d: usize,
        #[arg(long, default_value_t = 2000)]
        samples_per_task: usize,
        /// Comma-separated round counts
        #[arg(long, default_value = "256,1024,4096")]
        t_grid: String,
        /// Comma-separated seeds
        #[arg(long, default_value = "0,1,2,3,4,5,6,7,8,9,10,11,12,13,14,15")]
        seeds: String,
        #[arg(long, default_value_t = 0)]
        gen_seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Large-task versus duplicated-small-tasks mixture
    Imbalance {
        #[arg(long, default_value_t = 8)]
        d: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| AmaError::Config(format!("bad {what} entry '{p}'")))
        })
        .collect()
}

/// Merges config-file values and command-line flags into a FileConfig.
fn resolve_flags(flags: &TrainFlags) -> Result<FileConfig> {
    let mut cfg = match &flags.config {
        Some(path) => FileConfig::load(path)?,
        None => {
            let dataset = flags.dataset.clone().ok_or_else(|| {
                AmaError::Config("either --config or --dataset is required".into())
            })?;
            let output = flags
                .output
                .clone()
                .ok_or_else(|| AmaError::Config("either --config or --output is required".into()))?;
            let algorithm = flags
                .algorithm
                .clone()
                .ok_or_else(|| AmaError::Config("--algorithm is required without --config".into()))?;
            // Route through serde so field defaults apply uniformly.
            serde_json::from_value(serde_json::json!({
                "algorithm": algorithm,
                "dataset": dataset,
                "output": output,
            }))
            .map_err(|e| AmaError::Config(e.to_string()))?
        }
    };
    if let Some(v) = &flags.dataset {
        cfg.dataset = v.clone();
    }
    if let Some(v) = &flags.output {
        cfg.output = v.clone();
    }
    if let Some(v) = &flags.algorithm {
        cfg.algorithm = v.clone();
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.smoothing_c {
        cfg.smoothing_c = v;
    }
    if let Some(v) = flags.steps {
        cfg.steps = Some(v);
    }
    if let Some(v) = flags.model_step_size {
        cfg.model_step_size = v;
    }
    if let Some(v) = flags.weight_step_size {
        cfg.weight_step_size = v;
    }
    if let Some(v) = flags.beta {
        cfg.beta = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = &flags.importance_mode {
        cfg.importance_mode = Some(v.clone());
    }
    if let Some(v) = &flags.fixed_weights {
        cfg.fixed_weights = Some(parse_list(v, "fixed_weights")?);
    }
    Ok(cfg)
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| AmaError::Io {
        path: dir.display().to_string(),
        source: e,
    })
}

fn cmd_train_specialists(flags: &TrainFlags) -> Result<()> {
    let file_cfg = resolve_flags(flags)?;
    let datasets = load_datasets(&file_cfg.dataset)?;
    let cfg = file_cfg.resolve(&datasets)?;
    mkdir(&file_cfg.output)?;
    let reference = ParamVector::zeros(datasets[0].dim());
    for ds in &datasets {
        let specialist = train_specialist(ds, &cfg, &reference)?;
        let path = file_cfg.output.join(format!("specialist_{}.bin", ds.task.0));
        save_params(&specialist, &path)?;
        println!("task {} ({}) -> {}", ds.task.0, ds.name, path.display());
    }
    Ok(())
}

fn cmd_precompute(
    dataset: &Path,
    specialists: &Path,
    output: &Path,
    beta: Option<f64>,
    overwrite: bool,
) -> Result<()> {
    let datasets = load_datasets(dataset)?;
    let reference = ParamVector::zeros(datasets[0].dim());
    let dpo = DpoConfig::new(beta.unwrap_or(1.0), reference)?;
    let mut augmented = Vec::with_capacity(datasets.len());
    for ds in &datasets {
        let path = specialists.join(format!("specialist_{}.bin", ds.task.0));
        let specialist = load_params(&path)?;
        augmented.push(precompute_loss_column(&specialist, ds, &dpo, overwrite)?);
    }
    save_datasets(&augmented, output)?;
    println!("wrote {}", output.display());
    Ok(())
}

fn cmd_train(flags: &TrainFlags) -> Result<()> {
    let file_cfg = resolve_flags(flags)?;
    let datasets = load_datasets(&file_cfg.dataset)?;
    let cfg = file_cfg.resolve(&datasets)?;
    let out_dir = &file_cfg.output;
    let reference = ParamVector::zeros(datasets[0].dim());

    let run = (|| {
        let datasets = ensure_loss_columns(datasets, &cfg, &reference, Some(out_dir))?;
        run_algorithm(&datasets, &cfg, &reference)
    })();
    match run {
        Ok(result) => {
            export_metrics(&result, &cfg, out_dir)?;
            emit_plots(out_dir)?;
            println!(
                "completed {} steps; artifacts in {}",
                cfg.steps,
                out_dir.display()
            );
            Ok(())
        }
        Err(e) => {
            let _ = write_failure_marker(out_dir, &e.to_string());
            Err(e)
        }
    }
}

fn cmd_merge(params: &[PathBuf], lambdas: &str, output: &Path) -> Result<()> {
    let lambdas: Vec<f64> = parse_list(lambdas, "lambdas")?;
    let vectors: Vec<ParamVector> = params.iter().map(|p| load_params(p)).collect::<Result<_>>()?;
    let merged = model_average(&vectors, &lambdas)?;
    save_params(&merged, output)?;
    println!("wrote {}", output.display());
    Ok(())
}

fn cmd_evaluate(params: &Path, dataset: &Path) -> Result<()> {
    let theta = load_params(params)?;
    let datasets = load_datasets(dataset)?;
    let score = compute_checkpoint_score(&theta, 0, &datasets)?;
    for (ds, acc) in datasets.iter().zip(&score.per_task_accuracy) {
        println!("task {} ({}): accuracy {:.6}", ds.task.0, ds.name, acc);
    }
    println!(
        "combined accuracy {:.6} (sigma {:.6})",
        score.combined_accuracy, score.sigma
    );
    Ok(())
}

fn cmd_select_checkpoint(run_dir: &Path, dataset: &Path) -> Result<()> {
    let datasets = load_datasets(dataset)?;
    let mut steps: Vec<usize> = Vec::new();
    let entries = std::fs::read_dir(run_dir).map_err(|e| AmaError::Io {
        path: run_dir.display().to_string(),
        source: e,
    })?;
    for entry in entries {
        let entry = entry.map_err(|e| AmaError::Io {
            path: run_dir.display().to_string(),
            source: e,
        })?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(step) = name
            .strip_prefix("checkpoint_")
            .and_then(|s| s.strip_suffix(".bin"))
        {
            steps.push(step.parse().map_err(|_| {
                AmaError::InvalidInput(format!("bad checkpoint file name '{name}'"))
            })?);
        }
    }
    if steps.is_empty() {
        return Err(AmaError::InvalidInput(format!(
            "no checkpoint files in {}",
            run_dir.display()
        )));
    }
    steps.sort_unstable();
    let mut scores = Vec::with_capacity(steps.len());
    for step in steps {
        let theta = load_params(&run_dir.join(format!("checkpoint_{step}.bin")))?;
        let score = compute_checkpoint_score(&theta, step, &datasets)?;
        println!(
            "step {}: accuracy {:.6} +- {:.6}",
            step, score.combined_accuracy, score.sigma
        );
        scores.push(score);
    }
    let selected = select_checkpoint(&scores)?;
    println!("selected step {selected}");
    Ok(())
}

fn cmd_theorem1(
    k: usize,
    d: usize,
    samples_per_task: usize,
    t_grid: &str,
    seeds: &str,
    gen_seed: u64,
    output: &Path,
) -> Result<()> {
    let t_grid: Vec<usize> = parse_list(t_grid, "t_grid")?;
    let seeds: Vec<u64> = parse_list(seeds, "seeds")?;
    let tasks = generate_regression_tasks(k, d, samples_per_task, gen_seed)?;
    let reports = theorem1_experiment(&tasks, &t_grid, &seeds)?;
    mkdir(output)?;
    let path = output.join("gaps.csv");
    let mut csv = String::from("t_rounds,seed,worst_task_average_loss,minimax_value,gap\n");
    let mut i = 0;
    for &t in &t_grid {
        for &seed in &seeds {
            let r = &reports[i];
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                t, seed, r.worst_task_average_loss, r.minimax_value, r.gap
            ));
            i += 1;
        }
    }
    std::fs::write(&path, csv).map_err(|e| AmaError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    for &t in &t_grid {
        let mut gaps: Vec<f64> = reports
            .iter()
            .filter(|r| r.t_rounds == t)
            .map(|r| r.gap)
            .collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = gaps[gaps.len() / 2];
        println!("T = {t}: median gap {median:.6}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_imbalance(d: usize, seed: u64, output: &Path) -> Result<()> {
    let outcome = imbalance_experiment(d, seed)?;
    mkdir(output)?;
    let large = outcome.large_task.0;
    let summary = serde_json::json!({
        "large_task_samples_ama_s": outcome.ama_s.sample_counts[large],
        "large_task_samples_ama_r": outcome.ama_r.sample_counts[large],
        "expected_large_samples_ama_r": outcome.expected_large_samples_r,
        "large_task_accuracy_ama_s": outcome.large_task_accuracy_s,
        "large_task_accuracy_ama_r": outcome.large_task_accuracy_r,
    });
    let path = output.join("imbalance.json");
    std::fs::write(&path, serde_json::to_string_pretty(&summary).unwrap()).map_err(|e| {
        AmaError::Io {
            path: path.display().to_string(),
            source: e,
        }
    })?;
    println!("{summary:#}");
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::TrainSpecialists(flags) => cmd_train_specialists(flags),
        Command::Precompute {
            dataset,
            specialists,
            output,
            beta,
            overwrite,
        } => cmd_precompute(dataset, specialists, output, *beta, *overwrite),
        Command::Train(flags) => cmd_train(flags),
        Command::Merge {
            params,
            lambdas,
            output,
        } => cmd_merge(params, lambdas, output),
        Command::Evaluate { params, dataset } => cmd_evaluate(params, dataset),
        Command::SelectCheckpoint { run_dir, dataset } => cmd_select_checkpoint(run_dir, dataset),
        Command::Experiment { which } => match which {
            ExperimentCommand::Theorem1 {
                k,
                d,
                samples_per_task,
                t_grid,
                seeds,
                gen_seed,
                output,
            } => cmd_theorem1(*k, *d, *samples_per_task, t_grid, seeds, *gen_seed, output),
            ExperimentCommand::Imbalance { d, seed, output } => cmd_imbalance(*d, *seed, output),
        },
        Command::Plot { dir } => emit_plots(dir),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
