//! The two game players: low-regret theta-players (projected online
//! gradient descent) and alpha-players (EXP3, exponentiated gradient,
//! fixed-weight baselines), plus regret bookkeeping.

use crate::domain::{
    normalize_log_weights, smooth_weights, SimplexWeights, TaskId, SIMPLEX_TOL,
};
use crate::error::{AmaError, Result};
use crate::losses::{project_l2_ball, ParamVector};
use serde::{Deserialize, Serialize};

/// Projected-OGD theta-player state. The invariant ||theta|| <= radius
/// holds after every step.
#[derive(Debug, Clone, PartialEq)]
pub struct OgdPlayerState {
    pub theta: ParamVector,
    pub step_size: f64,
    pub radius: f64,
    pub steps_taken: usize,
}

impl OgdPlayerState {
    pub fn new(theta: ParamVector, step_size: f64, radius: f64) -> Self {
        Self {
            theta: project_l2_ball(&theta, radius),
            step_size,
            radius,
            steps_taken: 0,
        }
    }
}

/// One projected gradient step: theta' = proj(theta - eta * g).
pub fn ogd_step(state: &OgdPlayerState, gradient: &[f64]) -> Result<OgdPlayerState> {
    if gradient.len() != state.theta.dim() {
        return Err(AmaError::Shape(format!(
            "gradient dim {} vs theta dim {}",
            gradient.len(),
            state.theta.dim()
        )));
    }
    let mut theta = state.theta.clone();
    theta.axpy(-state.step_size, gradient);
    Ok(OgdPlayerState {
        theta: project_l2_ball(&theta, state.radius),
        step_size: state.step_size,
        radius: state.radius,
        steps_taken: state.steps_taken + 1,
    })
}

/// Which update rule the alpha-player runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlphaKind {
    /// Importance-weighted multiplicative update (drives resampling).
    Exp3,
    /// Exponentiated gradient without importance weighting (drives reweighting).
    Eg,
    /// Weights pinned at uniform.
    FixedUniform,
    /// Weights pinned at a given vector.
    FixedGiven,
}

/// Denominator used in EXP3's importance weighting: the internal weight q
/// (the training algorithm as written) or the smoothed sampling weight
/// alpha (the game-protocol analysis).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ImportanceMode {
    InternalQ,
    SamplingAlpha,
}

impl Default for ImportanceMode {
    fn default() -> Self {
        ImportanceMode::InternalQ
    }
}

/// Alpha-player state: internal weights q, smoothing c, and the weight
/// learning rate eta_w multiplying the exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaPlayerState {
    pub q: SimplexWeights,
    pub c: f64,
    pub eta_w: f64,
    pub kind: AlphaKind,
    pub importance_mode: ImportanceMode,
}

impl AlphaPlayerState {
    pub fn new(k: usize, c: f64, eta_w: f64, kind: AlphaKind) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(AmaError::Config(format!("c must lie in (0,1), got {c}")));
        }
        if !(eta_w > 0.0) {
            return Err(AmaError::Config(format!(
                "eta_w must be positive, got {eta_w}"
            )));
        }
        Ok(Self {
            q: SimplexWeights::uniform(k),
            c,
            eta_w,
            kind,
            importance_mode: ImportanceMode::InternalQ,
        })
    }

    pub fn fixed(weights: SimplexWeights) -> Self {
        Self {
            q: weights,
            c: 0.5,
            eta_w: 1.0,
            kind: AlphaKind::FixedGiven,
            importance_mode: ImportanceMode::InternalQ,
        }
    }

    pub fn with_importance_mode(mut self, mode: ImportanceMode) -> Self {
        self.importance_mode = mode;
        self
    }
}

/// Per-task feedback for one weight update: the batch-mean clipped excess
/// loss and how many samples the task drew this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaskFeedback {
    pub mean_clipped_excess: f64,
    pub batch_count: usize,
}

impl TaskFeedback {
    pub fn observed(mean_clipped_excess: f64, batch_count: usize) -> Self {
        Self {
            mean_clipped_excess,
            batch_count,
        }
    }

    pub fn unsampled() -> Self {
        Self {
            mean_clipped_excess: 0.0,
            batch_count: 0,
        }
    }
}

fn check_feedback(state: &AlphaPlayerState, feedback: &[TaskFeedback]) -> Result<()> {
    if feedback.len() != state.q.len() {
        return Err(AmaError::Shape(format!(
            "feedback has {} entries, expected {}",
            feedback.len(),
            state.q.len()
        )));
    }
    for (i, f) in feedback.iter().enumerate() {
        if f.batch_count > 0 && (f.mean_clipped_excess < 0.0 || !f.mean_clipped_excess.is_finite())
        {
            return Err(AmaError::InvalidInput(format!(
                "task {i}: mean clipped excess {} violates nonnegativity",
                f.mean_clipped_excess
            )));
        }
    }
    Ok(())
}

/// Multiplicative update with each task's exponent computed in log space.
/// Tasks with `batch_count == 0` keep their unnormalized weight.
fn multiplicative_update(
    state: &AlphaPlayerState,
    feedback: &[TaskFeedback],
    exponent: impl Fn(usize, &TaskFeedback) -> f64,
) -> Result<AlphaPlayerState> {
    check_feedback(state, feedback)?;
    // When a weight underflows to 0 the importance-weighted exponent
    // mean/q_i is +inf and ln(0) + inf is NaN; the exact-arithmetic limit
    // sends that task's weight to 1, so saturate at a large finite value.
    const LOG_CAP: f64 = f64::MAX / 4.0;
    let log_q: Vec<f64> = state
        .q
        .as_slice()
        .iter()
        .enumerate()
        .map(|(i, qi)| {
            let base = qi.ln(); // -inf for zero weight
            let total = if feedback[i].batch_count > 0 {
                base + exponent(i, &feedback[i])
            } else {
                base
            };
            if total.is_nan() || total > LOG_CAP {
                LOG_CAP
            } else {
                total
            }
        })
        .collect();
    let q = normalize_log_weights(&log_q)?;
    Ok(AlphaPlayerState {
        q,
        ..state.clone()
    })
}

/// EXP3 update: q_i' propto q_i * exp(eta_w * mean_i / denom_i), where the
/// importance denominator is q_i or alpha_i depending on the mode.
pub fn exp3_update(state: &AlphaPlayerState, feedback: &[TaskFeedback]) -> Result<AlphaPlayerState> {
    if state.kind != AlphaKind::Exp3 {
        return Err(AmaError::Config(format!(
            "exp3_update on a {:?} player",
            state.kind
        )));
    }
    let k = state.q.len();
    let denom: Vec<f64> = match state.importance_mode {
        ImportanceMode::InternalQ => state.q.as_slice().to_vec(),
        ImportanceMode::SamplingAlpha => smooth_weights(&state.q, state.c, k)?.as_slice().to_vec(),
    };
    multiplicative_update(state, feedback, |i, f| {
        state.eta_w * f.mean_clipped_excess / denom[i]
    })
}

/// Exponentiated-gradient update: q_i' propto q_i * exp(eta_w * mean_i),
/// without the importance factor.
pub fn eg_update(state: &AlphaPlayerState, feedback: &[TaskFeedback]) -> Result<AlphaPlayerState> {
    if state.kind != AlphaKind::Eg {
        return Err(AmaError::Config(format!(
            "eg_update on a {:?} player",
            state.kind
        )));
    }
    multiplicative_update(state, feedback, |_, f| state.eta_w * f.mean_clipped_excess)
}

/// The sampling/objective weights this player exposes for the next step:
/// smoothed q for adaptive kinds, the stored weights for fixed kinds.
pub fn current_sampling_weights(state: &AlphaPlayerState, k: usize) -> Result<SimplexWeights> {
    match state.kind {
        AlphaKind::Exp3 | AlphaKind::Eg => smooth_weights(&state.q, state.c, k),
        AlphaKind::FixedUniform => Ok(SimplexWeights::uniform(k)),
        AlphaKind::FixedGiven => {
            if state.q.len() != k {
                return Err(AmaError::Shape(format!(
                    "fixed weights have {} entries, expected {k}",
                    state.q.len()
                )));
            }
            Ok(state.q.clone())
        }
    }
}

/// Running record of the theta-player's realized per-round losses.
#[derive(Debug, Clone, Default)]
pub struct RegretLedger {
    pub cumulative_player_loss: f64,
    pub per_round_losses: Vec<(TaskId, f64)>,
}

impl RegretLedger {
    pub fn record(&mut self, task: TaskId, loss: f64) {
        self.cumulative_player_loss += loss;
        self.per_round_losses.push((task, loss));
    }

    pub fn check_consistent(&self) -> bool {
        let sum: f64 = self.per_round_losses.iter().map(|(_, l)| l).sum();
        (sum - self.cumulative_player_loss).abs() <= SIMPLEX_TOL * self.per_round_losses.len().max(1) as f64
    }
}

/// Realized regret: the player's cumulative loss minus the best fixed
/// theta's cumulative loss on the same task sequence, the latter supplied
/// by an offline oracle. May be negative.
pub fn measure_regret(
    ledger: &RegretLedger,
    oracle: &dyn Fn(&[TaskId]) -> Result<f64>,
) -> Result<f64> {
    if ledger.per_round_losses.is_empty() {
        return Err(AmaError::InvalidInput("empty regret ledger".into()));
    }
    let sequence: Vec<TaskId> = ledger.per_round_losses.iter().map(|(t, _)| *t).collect();
    let best = oracle(&sequence)?;
    Ok(ledger.cumulative_player_loss - best)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp3_player(q: Vec<f64>, c: f64, eta: f64) -> AlphaPlayerState {
        AlphaPlayerState {
            q: SimplexWeights::new(q).unwrap(),
            c,
            eta_w: eta,
            kind: AlphaKind::Exp3,
            importance_mode: ImportanceMode::InternalQ,
        }
    }

    fn eg_player(q: Vec<f64>, eta: f64) -> AlphaPlayerState {
        AlphaPlayerState {
            q: SimplexWeights::new(q).unwrap(),
            c: 0.1,
            eta_w: eta,
            kind: AlphaKind::Eg,
            importance_mode: ImportanceMode::InternalQ,
        }
    }

    #[test]
    fn ogd_zero_gradient_fixed_point() {
        let s = OgdPlayerState::new(ParamVector::new(vec![0.3, 0.4]).unwrap(), 0.1, 1.0);
        let s2 = ogd_step(&s, &[0.0, 0.0]).unwrap();
        assert_eq!(s2.theta, s.theta);
        assert_eq!(s2.steps_taken, 1);
    }

    #[test]
    fn ogd_forced_step() {
        let s = OgdPlayerState::new(ParamVector::zeros(2), 0.1, 1.0);
        let s2 = ogd_step(&s, &[1.0, 0.0]).unwrap();
        assert!((s2.theta.values[0] + 0.1).abs() < 1e-15);
        assert_eq!(s2.theta.values[1], 0.0);
    }

    #[test]
    fn ogd_projection_contract() {
        let mut s = OgdPlayerState::new(ParamVector::zeros(2), 0.9, 1.0);
        for _ in 0..20 {
            s = ogd_step(&s, &[-3.0, 1.5]).unwrap();
            assert!(s.theta.norm() <= s.radius + 1e-12);
        }
    }

    #[test]
    fn exp3_zero_excess_fixed_point() {
        let s = exp3_player(vec![0.7, 0.3], 0.1, 1.0);
        let s2 = exp3_update(
            &s,
            &[TaskFeedback::observed(0.0, 5), TaskFeedback::observed(0.0, 3)],
        )
        .unwrap();
        assert!((s2.q.get(0) - 0.7).abs() < 1e-12);
        assert!((s2.q.get(1) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn exp3_uniform_equal_excess_unchanged() {
        let s = exp3_player(vec![0.25; 4], 0.1, 1.0);
        let fb = vec![TaskFeedback::observed(0.4, 2); 4];
        let s2 = exp3_update(&s, &fb).unwrap();
        for w in s2.q.as_slice() {
            assert!((w - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn exp3_two_task_closed_form() {
        // Frozen from direct evaluation: normalize(0.5 e^0.6, 0.5 e^0.2).
        let s = exp3_player(vec![0.5, 0.5], 0.1, 1.0);
        let s2 = exp3_update(
            &s,
            &[
                TaskFeedback::observed(0.3, 4),
                TaskFeedback::observed(0.1, 4),
            ],
        )
        .unwrap();
        assert!((s2.q.get(0) - 0.598687660112452).abs() < 1e-12);
        assert!((s2.q.get(1) - 0.401312339887548).abs() < 1e-12);
    }

    #[test]
    fn exp3_rejects_negative_excess() {
        let s = exp3_player(vec![0.5, 0.5], 0.1, 1.0);
        assert!(exp3_update(
            &s,
            &[
                TaskFeedback::observed(-0.1, 1),
                TaskFeedback::observed(0.0, 1)
            ]
        )
        .is_err());
    }

    #[test]
    fn eg_two_task_closed_form() {
        // Frozen from direct evaluation: normalize(0.5 e^0.3, 0.5 e^0.1).
        let s = eg_player(vec![0.5, 0.5], 1.0);
        let s2 = eg_update(
            &s,
            &[
                TaskFeedback::observed(0.3, 4),
                TaskFeedback::observed(0.1, 4),
            ],
        )
        .unwrap();
        assert!((s2.q.get(0) - 0.549833997312478).abs() < 1e-12);
        assert!((s2.q.get(1) - 0.450166002687522).abs() < 1e-12);
    }

    #[test]
    fn eg_degenerate_mass_with_unsampled_task() {
        let s = eg_player(vec![1.0, 0.0], 1.0);
        let s2 = eg_update(
            &s,
            &[TaskFeedback::observed(0.2, 3), TaskFeedback::unsampled()],
        )
        .unwrap();
        assert_eq!(s2.q.as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn monotone_prioritization() {
        // Equal weights, strictly larger excess on task 0 -> strictly larger q.
        let s = exp3_player(vec![0.5, 0.5], 0.1, 1.0);
        let s2 = exp3_update(
            &s,
            &[
                TaskFeedback::observed(0.5, 2),
                TaskFeedback::observed(0.2, 2),
            ],
        )
        .unwrap();
        assert!(s2.q.get(0) > s2.q.get(1));
        let s = eg_player(vec![0.5, 0.5], 1.0);
        let s2 = eg_update(
            &s,
            &[
                TaskFeedback::observed(0.5, 2),
                TaskFeedback::observed(0.2, 2),
            ],
        )
        .unwrap();
        assert!(s2.q.get(0) > s2.q.get(1));
    }

    #[test]
    fn sampling_weights_by_kind() {
        let fixed = AlphaPlayerState {
            q: SimplexWeights::uniform(3),
            c: 0.1,
            eta_w: 1.0,
            kind: AlphaKind::FixedUniform,
            importance_mode: ImportanceMode::InternalQ,
        };
        let w = current_sampling_weights(&fixed, 3).unwrap();
        assert_eq!(w, SimplexWeights::uniform(3));

        let s = exp3_player(vec![1.0, 0.0], 0.1, 1.0);
        let w = current_sampling_weights(&s, 2).unwrap();
        assert!((w.get(0) - 0.95).abs() < 1e-15);
        assert!((w.get(1) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn regret_edge_cases() {
        let mut ledger = RegretLedger::default();
        ledger.record(TaskId(0), 0.9);
        let r = measure_regret(&ledger, &|_| Ok(0.4)).unwrap();
        assert!((r - 0.5).abs() < 1e-15);
        assert!(ledger.check_consistent());
    }

    #[test]
    fn no_nan_for_large_means() {
        let mut s = exp3_player(vec![0.5, 0.5], 0.1, 1.0);
        for _ in 0..100 {
            s = exp3_update(
                &s,
                &[
                    TaskFeedback::observed(1e3, 1),
                    TaskFeedback::observed(900.0, 1),
                ],
            )
            .unwrap();
            assert!(s.q.as_slice().iter().all(|w| w.is_finite()));
        }
    }
}
