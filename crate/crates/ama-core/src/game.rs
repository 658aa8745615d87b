//! Two-player zero-sum game harness: the round protocol, regret
//! measurement against an offline convex oracle, an independent minimax
//! oracle, and the convergence / imbalance experiments.

use crate::algorithms::{
    precompute_loss_column, run_algorithm, steps_per_epoch, train_specialist, Algorithm, RunConfig,
    SpecialistSet, TrainResult,
};
use crate::domain::{PreferenceExample, SimplexWeights, TaskDataset, TaskId};
use crate::error::{AmaError, Result};
use crate::losses::{pref_accuracy, DpoConfig, ParamVector, RegressionExample};
use crate::players::{
    current_sampling_weights, exp3_update, ogd_step, AlphaKind, AlphaPlayerState, ImportanceMode,
    OgdPlayerState, TaskFeedback,
};
use crate::rng::{rng_for, Purpose};
use nalgebra::{DMatrix, DVector};
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_distr::StandardNormal;

/// Lipschitz bound for the squared loss on the unit ball with |y| <= 1.
pub const SQUARED_LOSS_LIPSCHITZ: f64 = 4.0;
/// Regret constant of the projected-OGD player in this setting.
pub const OGD_REGRET_CONSTANT: f64 = 5.656854249492381; // 4 * sqrt(2)

/// A regression task with its average loss cached in quadratic form:
/// L(theta) = theta' A theta - 2 b' theta + c, gradient 2(A theta - b).
#[derive(Debug, Clone)]
pub struct RegressionTask {
    pub examples: Vec<RegressionExample>,
    gram: DMatrix<f64>,
    xy: DVector<f64>,
    yy: f64,
}

impl RegressionTask {
    pub fn new(examples: Vec<RegressionExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(AmaError::InvalidInput("empty regression task".into()));
        }
        let d = examples[0].input.len();
        if examples.iter().any(|e| e.input.len() != d) {
            return Err(AmaError::Shape("mixed input dimensions".into()));
        }
        let n = examples.len() as f64;
        let mut gram = DMatrix::zeros(d, d);
        let mut xy = DVector::zeros(d);
        let mut yy = 0.0;
        for e in &examples {
            let x = DVector::from_column_slice(&e.input);
            gram += &x * x.transpose();
            xy += &x * e.target;
            yy += e.target * e.target;
        }
        gram /= n;
        xy /= n;
        yy /= n;
        Ok(Self {
            examples,
            gram,
            xy,
            yy,
        })
    }

    pub fn dim(&self) -> usize {
        self.xy.len()
    }

    /// Task-average squared loss at theta.
    pub fn avg_loss(&self, theta: &ParamVector) -> f64 {
        let t = DVector::from_column_slice(&theta.values);
        (t.transpose() * &self.gram * &t)[(0, 0)] - 2.0 * self.xy.dot(&t) + self.yy
    }

    /// Gradient of the task-average loss.
    pub fn avg_grad(&self, theta: &ParamVector) -> Vec<f64> {
        let t = DVector::from_column_slice(&theta.values);
        let g = (&self.gram * &t - &self.xy) * 2.0;
        g.as_slice().to_vec()
    }
}

/// One round of the protocol.
#[derive(Debug, Clone)]
pub struct GameRound {
    pub alpha: SimplexWeights,
    pub theta_snapshot: ParamVector,
    pub sampled_task: TaskId,
    pub incurred_loss: f64,
}

/// The realized trajectory of a game.
#[derive(Debug, Clone)]
pub struct GameTrace {
    pub rounds: Vec<GameRound>,
    /// Rounds where bounded-loss mode saw a loss outside [0, 1].
    pub contract_warnings: usize,
}

/// Game settings. Bounded mode rescales the squared loss by 1/4 so the
/// theorem's max-loss-at-most-1 hypothesis holds without moving the argmin.
#[derive(Debug, Clone)]
pub struct GameConfig {
    pub bounded: bool,
    /// OGD step size; the analysis uses 1/(L sqrt(2T)) with L = 4.
    pub ogd_step_size: f64,
    pub radius: f64,
    /// Alpha-player learning rate; the analysis uses 1/(4k).
    pub eta_w: f64,
}

impl GameConfig {
    pub fn for_theorem(t: usize, k: usize) -> Self {
        Self {
            bounded: true,
            ogd_step_size: 1.0 / (SQUARED_LOSS_LIPSCHITZ * (2.0 * t as f64).sqrt()),
            radius: 1.0,
            eta_w: 1.0 / (4.0 * k as f64),
        }
    }

    fn loss_scale(&self) -> f64 {
        if self.bounded {
            0.25
        } else {
            1.0
        }
    }
}

/// Runs the four-step protocol for T rounds: the alpha-player posts
/// alpha_t, the theta-player posts theta_t, a task is drawn from alpha_t,
/// and the theta-player suffers that task's average loss. The alpha-player
/// runs importance-weighted multiplicative updates against the sampling
/// distribution (smoothing fixed at 1/2); the theta-player takes one
/// projected gradient step on the sampled task.
pub fn play_game(tasks: &[RegressionTask], t_rounds: usize, cfg: &GameConfig, seed: u64) -> Result<GameTrace> {
    if tasks.is_empty() || t_rounds == 0 {
        return Err(AmaError::InvalidInput(
            "need at least one task and one round".into(),
        ));
    }
    let k = tasks.len();
    let d = tasks[0].dim();
    let scale = cfg.loss_scale();
    let mut alpha_player = AlphaPlayerState::new(k, 0.5, cfg.eta_w, AlphaKind::Exp3)?
        .with_importance_mode(ImportanceMode::SamplingAlpha);
    let mut theta_player =
        OgdPlayerState::new(ParamVector::zeros(d), cfg.ogd_step_size, cfg.radius);
    let mut rng = rng_for(seed, Purpose::Game);
    let mut rounds = Vec::with_capacity(t_rounds);
    let mut contract_warnings = 0usize;

    for _ in 0..t_rounds {
        let alpha = current_sampling_weights(&alpha_player, k)?;
        let dist = WeightedIndex::new(alpha.as_slice())
            .map_err(|e| AmaError::InvalidWeights(e.to_string()))?;
        let i_t = dist.sample(&mut rng);
        let loss = tasks[i_t].avg_loss(&theta_player.theta) * scale;
        if cfg.bounded && !(0.0..=1.0 + 1e-12).contains(&loss) {
            contract_warnings += 1;
        }
        rounds.push(GameRound {
            alpha,
            theta_snapshot: theta_player.theta.clone(),
            sampled_task: TaskId(i_t),
            incurred_loss: loss,
        });

        // Alpha-player sees only the sampled task's loss.
        let fb: Vec<TaskFeedback> = (0..k)
            .map(|i| {
                if i == i_t {
                    TaskFeedback::observed(loss, 1)
                } else {
                    TaskFeedback::unsampled()
                }
            })
            .collect();
        alpha_player = exp3_update(&alpha_player, &fb)?;

        let mut grad = tasks[i_t].avg_grad(&theta_player.theta);
        grad.iter_mut().for_each(|g| *g *= scale);
        theta_player = ogd_step(&theta_player, &grad)?;
    }

    Ok(GameTrace {
        rounds,
        contract_warnings,
    })
}

/// Exact solver for min theta' A theta - 2 b' theta + c over the ball of
/// the given radius, via normal equations plus a Lagrange-multiplier
/// bisection on the boundary. Serves as the closed-form cross-check for
/// the subgradient minimax oracle and as the offline regret oracle.
pub fn ball_constrained_quadratic_min(
    gram: &DMatrix<f64>,
    xy: &DVector<f64>,
    yy: f64,
    radius: f64,
) -> Result<(f64, ParamVector)> {
    let d = xy.len();
    let solve = |lambda: f64| -> Result<DVector<f64>> {
        let m = gram + DMatrix::identity(d, d) * lambda;
        m.lu()
            .solve(xy)
            .ok_or_else(|| AmaError::Oracle("singular normal equations".into()))
    };
    let unconstrained = solve(1e-12)?;
    let theta = if unconstrained.norm() <= radius {
        unconstrained
    } else {
        // ||theta(lambda)|| is decreasing in lambda; bisect.
        let mut lo = 0.0f64;
        let mut hi = 1.0f64;
        while solve(hi)?.norm() > radius {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(AmaError::Oracle("bisection bracket failed".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if solve(mid)?.norm() > radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        solve(0.5 * (lo + hi))?
    };
    let value = (theta.transpose() * gram * &theta)[(0, 0)] - 2.0 * xy.dot(&theta) + yy;
    Ok((value, ParamVector::new(theta.as_slice().to_vec())?))
}

/// Best fixed theta's cumulative loss on a realized task sequence.
pub fn offline_sequence_oracle(
    tasks: &[RegressionTask],
    sequence: &[TaskId],
    radius: f64,
    loss_scale: f64,
) -> Result<f64> {
    if sequence.is_empty() {
        return Err(AmaError::InvalidInput("empty sequence".into()));
    }
    let d = tasks[0].dim();
    let mut counts = vec![0usize; tasks.len()];
    for t in sequence {
        counts[t.0] += 1;
    }
    let mut gram = DMatrix::zeros(d, d);
    let mut xy = DVector::zeros(d);
    let mut yy = 0.0;
    for (i, n) in counts.iter().enumerate() {
        let w = *n as f64;
        gram += &tasks[i].gram * w;
        xy += &tasks[i].xy * w;
        yy += tasks[i].yy * w;
    }
    let (value, _) = ball_constrained_quadratic_min(&gram, &xy, yy, radius)?;
    Ok(value * loss_scale)
}

/// Minimax oracle: min over the ball of max_i L_i(theta), by projected
/// subgradient descent on the pointwise max with step decay. Terminates
/// when the best objective improves by less than 1e-8 over 1000
/// iterations. Independent of the game dynamics.
pub fn minimax_oracle(
    tasks: &[RegressionTask],
    radius: f64,
    loss_scale: f64,
) -> Result<(f64, ParamVector)> {
    if tasks.is_empty() {
        return Err(AmaError::InvalidInput("no tasks".into()));
    }
    let d = tasks[0].dim();
    let objective = |theta: &ParamVector| -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for (i, t) in tasks.iter().enumerate() {
            let l = t.avg_loss(theta);
            if l > best {
                best = l;
                arg = i;
            }
        }
        (best, arg)
    };
    let mut theta = ParamVector::zeros(d);
    let (mut best_val, _) = objective(&theta);
    let mut best_theta = theta.clone();
    let mut last_improvement_val = best_val;
    let mut since_check = 0usize;
    let max_iter = 2_000_000usize;
    for iter in 1..=max_iter {
        let (_, arg) = objective(&theta);
        let grad = tasks[arg].avg_grad(&theta);
        let step = radius / (iter as f64).sqrt();
        let mut next = theta.clone();
        next.axpy(-step, &grad);
        theta = crate::losses::project_l2_ball(&next, radius);
        let (val, _) = objective(&theta);
        if val < best_val {
            best_val = val;
            best_theta = theta.clone();
        }
        since_check += 1;
        if since_check >= 1000 {
            if last_improvement_val - best_val < 1e-8 {
                return Ok((best_val * loss_scale, best_theta));
            }
            last_improvement_val = best_val;
            since_check = 0;
        }
    }
    Err(AmaError::Oracle(format!(
        "minimax oracle did not converge within {max_iter} iterations"
    )))
}

/// Gap between the game's worst-task time-averaged loss and the minimax
/// benchmark, for one T.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    pub t_rounds: usize,
    pub worst_task_average_loss: f64,
    pub minimax_value: f64,
    pub gap: f64,
    pub per_task_averaged_losses: Vec<f64>,
    /// Worst-task loss of the final iterate (reported alongside the
    /// time-averaged figure; the bound concerns the latter).
    pub final_iterate_worst_loss: f64,
}

/// Summarizes a trace against a precomputed minimax value.
pub fn convergence_report(
    tasks: &[RegressionTask],
    trace: &GameTrace,
    minimax_value: f64,
    loss_scale: f64,
) -> ConvergenceReport {
    let t_rounds = trace.rounds.len();
    let k = tasks.len();
    let mut sums = vec![0.0; k];
    for round in &trace.rounds {
        for (i, task) in tasks.iter().enumerate() {
            sums[i] += task.avg_loss(&round.theta_snapshot) * loss_scale;
        }
    }
    let per_task: Vec<f64> = sums.iter().map(|s| s / t_rounds as f64).collect();
    let worst = per_task.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let last = &trace.rounds[t_rounds - 1].theta_snapshot;
    let final_worst = tasks
        .iter()
        .map(|t| t.avg_loss(last) * loss_scale)
        .fold(f64::NEG_INFINITY, f64::max);
    ConvergenceReport {
        t_rounds,
        worst_task_average_loss: worst,
        minimax_value,
        gap: worst - minimax_value,
        per_task_averaged_losses: per_task,
        final_iterate_worst_loss: final_worst,
    }
}

/// Generates k regression tasks with inputs in the unit ball, targets in
/// [-1, 1], and distinct per-task directions so the minimax compromise is
/// nontrivial.
pub fn generate_regression_tasks(
    k: usize,
    d: usize,
    samples_per_task: usize,
    gen_seed: u64,
) -> Result<Vec<RegressionTask>> {
    let mut rng = rng_for(gen_seed, Purpose::Generation);
    // Shared base direction: the per-task predictors are perturbations of
    // it, so the minimax compromise sits near the ball boundary (far from
    // the zero initialization) while the tasks remain distinct.
    let mut base: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let bn: f64 = base.iter().map(|v| v * v).sum::<f64>().sqrt();
    base.iter_mut().for_each(|v| *v /= bn);
    let mut tasks = Vec::with_capacity(k);
    for _ in 0..k {
        let mut w: Vec<f64> = base
            .iter()
            .map(|b| b + 0.35 / (d as f64).sqrt() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let wn: f64 = w.iter().map(|v| v * v).sum::<f64>().sqrt();
        w.iter_mut().for_each(|v| *v /= wn);
        let mut examples = Vec::with_capacity(samples_per_task);
        for _ in 0..samples_per_task {
            // Inputs concentrate along the task direction (plus a small
            // isotropic component) so the loss has O(1) curvature there
            // and gradient steps make headway within the horizon.
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            let s: f64 = sign * rng.gen_range(0.4f64..1.0);
            let mut x: Vec<f64> = w
                .iter()
                .map(|wi| s * wi + 0.3 / (d as f64).sqrt() * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let xn: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if xn > 1.0 {
                x.iter_mut().for_each(|v| *v /= xn);
            }
            let noise: f64 = rng.sample::<f64, _>(StandardNormal) * 0.1;
            let y = (w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + noise).clamp(-1.0, 1.0);
            examples.push(RegressionExample::new(x, y)?);
        }
        tasks.push(RegressionTask::new(examples)?);
    }
    Ok(tasks)
}

/// Runs the convergence experiment: for each T in the grid and each seed,
/// plays the game and reports the gap against the (shared) minimax value.
/// Reports are ordered by (T, seed).
pub fn theorem1_experiment(
    tasks: &[RegressionTask],
    t_grid: &[usize],
    seeds: &[u64],
) -> Result<Vec<ConvergenceReport>> {
    let k = tasks.len();
    let (minimax_value, _) = minimax_oracle(tasks, 1.0, 0.25)?;
    let mut reports = Vec::with_capacity(t_grid.len() * seeds.len());
    for &t in t_grid {
        let cfg = GameConfig::for_theorem(t, k);
        for &seed in seeds {
            let trace = play_game(tasks, t, &cfg, seed)?;
            reports.push(convergence_report(tasks, &trace, minimax_value, 0.25));
        }
    }
    Ok(reports)
}

/// Outcome of one paired imbalance run.
#[derive(Debug)]
pub struct ImbalanceOutcome {
    pub ama_s: TrainResult,
    pub ama_r: TrainResult,
    pub large_task: TaskId,
    pub large_task_accuracy_s: f64,
    pub large_task_accuracy_r: f64,
    pub expected_large_samples_r: f64,
}

/// Sizes of the imbalance setup: one large task plus ten duplicated small
/// tasks, eleven tasks total.
pub const IMBALANCE_LARGE: usize = 10_000;
pub const IMBALANCE_SMALL: usize = 250;
pub const IMBALANCE_SMALL_COPIES: usize = 10;

/// Builds the synthetic imbalance mixture: a large task on a hard, noisy
/// direction and ten copies of a small task on an easy direction.
pub fn build_imbalance_datasets(d: usize, gen_seed: u64) -> Result<Vec<TaskDataset>> {
    let mut rng = rng_for(gen_seed, Purpose::Generation);
    let dir = |rng: &mut rand_chacha::ChaCha12Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        v
    };
    let hard_dir = dir(&mut rng);
    let easy_dir = dir(&mut rng);

    let make_examples =
        |n: usize, direction: &[f64], margin: f64, noise: f64, rng: &mut rand_chacha::ChaCha12Rng| {
            (0..n)
                .map(|_| {
                    let chosen: Vec<f64> = direction
                        .iter()
                        .map(|u| margin / 2.0 * u + noise * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    let rejected: Vec<f64> = direction
                        .iter()
                        .map(|u| -margin / 2.0 * u + noise * rng.sample::<f64, _>(StandardNormal))
                        .collect();
                    PreferenceExample {
                        prompt_features: vec![0.0; direction.len()],
                        chosen_features: chosen,
                        rejected_features: rejected,
                        specialist_loss: None,
                    }
                })
                .collect::<Vec<_>>()
        };

    let mut datasets = Vec::with_capacity(1 + IMBALANCE_SMALL_COPIES);
    datasets.push(TaskDataset::new(
        TaskId(0),
        "large".into(),
        make_examples(IMBALANCE_LARGE, &hard_dir, 0.4, 0.25, &mut rng),
    )?);
    // The ten small tasks are independent draws from the same easy
    // distribution, mirroring duplicated subsets.
    for i in 0..IMBALANCE_SMALL_COPIES {
        datasets.push(TaskDataset::new(
            TaskId(i + 1),
            format!("small-{i}"),
            make_examples(IMBALANCE_SMALL, &easy_dir, 3.0, 0.1, &mut rng),
        )?);
    }
    Ok(datasets)
}

/// Runs AMA-S and AMA-R for one epoch each on the imbalance mixture,
/// sharing specialists and the precomputed loss columns.
pub fn imbalance_experiment(d: usize, seed: u64) -> Result<ImbalanceOutcome> {
    let datasets = build_imbalance_datasets(d, seed);
    let datasets = datasets?;
    let reference = ParamVector::zeros(d);
    let base = RunConfig {
        batch_size: 256,
        smoothing_c: 0.1,
        steps: steps_per_epoch(&datasets, 256),
        model_step_size: 0.5,
        // Tamer than the training default: with eleven tasks the
        // importance-weighted exponent is otherwise large enough to make
        // the weights oscillate instead of concentrating.
        weight_step_size: 0.1,
        beta: 1.0,
        seed,
        algorithm: Algorithm::AmaS,
        importance_mode: ImportanceMode::InternalQ,
        fixed_weights: None,
        epochs: 1,
    };

    // Specialists per task, then the shared loss column.
    let spec_cfg = RunConfig {
        epochs: 3,
        algorithm: Algorithm::Standard,
        ..base.clone()
    };
    let dpo = DpoConfig::new(base.beta, reference.clone())?;
    let mut specialists = Vec::with_capacity(datasets.len());
    let mut with_columns = Vec::with_capacity(datasets.len());
    for ds in &datasets {
        let specialist = train_specialist(ds, &spec_cfg, &reference)?;
        with_columns.push(precompute_loss_column(&specialist, ds, &dpo, false)?);
        specialists.push(specialist);
    }
    let _specialist_set = SpecialistSet::new(specialists, reference.clone())?;

    let cfg_s = base.clone();
    let cfg_r = RunConfig {
        algorithm: Algorithm::AmaR,
        ..base.clone()
    };
    let ama_s = run_algorithm(&with_columns, &cfg_s, &reference)?;
    let ama_r = run_algorithm(&with_columns, &cfg_r, &reference)?;

    let large = TaskId(0);
    let acc_s = pref_accuracy(&ama_s.final_theta, &with_columns[0])?;
    let acc_r = pref_accuracy(&ama_r.final_theta, &with_columns[0])?;
    let expected_large_samples_r =
        (base.steps * base.batch_size) as f64 / (1 + IMBALANCE_SMALL_COPIES) as f64;

    Ok(ImbalanceOutcome {
        ama_s,
        ama_r,
        large_task: large,
        large_task_accuracy_s: acc_s,
        large_task_accuracy_r: acc_r,
        expected_large_samples_r,
    })
}
