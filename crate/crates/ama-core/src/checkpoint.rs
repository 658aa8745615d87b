//! Checkpoint scoring and selection: per-task preference accuracies with
//! binomial standard errors, combined into a confidence interval, and the
//! earliest-overlapping-CI selection rule.

use crate::domain::TaskDataset;
use crate::error::{AmaError, Result};
use crate::losses::{pref_accuracy, ParamVector};
use serde::{Deserialize, Serialize};

/// Evaluation of one checkpoint across tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointScore {
    pub step: usize,
    pub per_task_accuracy: Vec<f64>,
    pub per_task_n: Vec<usize>,
    /// Unweighted mean of per-task accuracies.
    pub combined_accuracy: f64,
    /// sigma = sqrt(sum_i p_i (1-p_i) / n_i).
    pub sigma: f64,
}

impl CheckpointScore {
    pub fn from_accuracies(step: usize, acc: Vec<f64>, n: Vec<usize>) -> Result<Self> {
        if acc.is_empty() || acc.len() != n.len() {
            return Err(AmaError::InvalidInput("mismatched accuracy/count lists".into()));
        }
        if n.iter().any(|x| *x == 0) {
            return Err(AmaError::InvalidInput("per-task n must be positive".into()));
        }
        let combined = acc.iter().sum::<f64>() / acc.len() as f64;
        let var: f64 = acc
            .iter()
            .zip(&n)
            .map(|(p, ni)| p * (1.0 - p) / *ni as f64)
            .sum();
        Ok(Self {
            step,
            per_task_accuracy: acc,
            per_task_n: n,
            combined_accuracy: combined,
            sigma: var.sqrt(),
        })
    }

    pub fn ci(&self) -> (f64, f64) {
        (
            self.combined_accuracy - self.sigma,
            self.combined_accuracy + self.sigma,
        )
    }
}

/// Scores one checkpoint on the evaluation datasets.
pub fn compute_checkpoint_score(
    theta: &ParamVector,
    step: usize,
    eval_datasets: &[TaskDataset],
) -> Result<CheckpointScore> {
    if eval_datasets.is_empty() {
        return Err(AmaError::InvalidInput("no evaluation datasets".into()));
    }
    let mut acc = Vec::with_capacity(eval_datasets.len());
    let mut n = Vec::with_capacity(eval_datasets.len());
    for ds in eval_datasets {
        acc.push(pref_accuracy(theta, ds)?);
        n.push(ds.len());
    }
    CheckpointScore::from_accuracies(step, acc, n)
}

/// Selects the earliest checkpoint whose CI overlaps the CI of the
/// highest-accuracy checkpoint (earliest on accuracy ties). Always returns
/// a step at or before the argmax.
pub fn select_checkpoint(scores: &[CheckpointScore]) -> Result<usize> {
    if scores.is_empty() {
        return Err(AmaError::InvalidInput("no checkpoint scores".into()));
    }
    for w in scores.windows(2) {
        if w[1].step <= w[0].step {
            return Err(AmaError::InvalidInput(
                "checkpoint steps must be strictly increasing".into(),
            ));
        }
    }
    let best = scores
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| {
            a.combined_accuracy
                .partial_cmp(&b.combined_accuracy)
                .unwrap()
                // earliest on ties: prefer the smaller index
                .then(ib.cmp(ia))
        })
        .map(|(_, s)| s)
        .unwrap();
    let (blo, bhi) = best.ci();
    for s in scores {
        let (lo, hi) = s.ci();
        if lo <= bhi && blo <= hi {
            return Ok(s.step);
        }
    }
    unreachable!("the argmax overlaps itself");
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(step: usize, p: f64, sigma: f64) -> CheckpointScore {
        CheckpointScore {
            step,
            per_task_accuracy: vec![p],
            per_task_n: vec![100],
            combined_accuracy: p,
            sigma,
        }
    }

    #[test]
    fn sigma_formulas() {
        // One task, p = 0.5, n = 100 -> sigma = 0.05.
        let s = CheckpointScore::from_accuracies(1, vec![0.5], vec![100]).unwrap();
        assert!((s.sigma - 0.05).abs() < 1e-12);
        // Degenerate accuracies -> sigma 0.
        let s = CheckpointScore::from_accuracies(1, vec![0.0, 1.0], vec![10, 20]).unwrap();
        assert_eq!(s.sigma, 0.0);
        // 3-4-5: per-task sigmas 0.03 and 0.04 combine to 0.05.
        // p(1-p)/n = 0.0009 needs p=0.1, n=100; 0.0016 needs p=0.2, n=100.
        let s = CheckpointScore::from_accuracies(1, vec![0.1, 0.2], vec![100, 100]).unwrap();
        assert!((s.sigma - 0.05).abs() < 1e-12);
    }

    #[test]
    fn single_checkpoint_selected() {
        assert_eq!(select_checkpoint(&[score(3, 0.7, 0.02)]).unwrap(), 3);
    }

    #[test]
    fn three_point_overlap_example() {
        // (0.70 +- 0.02, 0.80 +- 0.02, 0.81 +- 0.02): the max is step 3;
        // step 2's [0.78, 0.82] overlaps its [0.79, 0.83]; step 1's does not.
        let scores = [
            score(1, 0.70, 0.02),
            score(2, 0.80, 0.02),
            score(3, 0.81, 0.02),
        ];
        assert_eq!(select_checkpoint(&scores).unwrap(), 2);
    }

    #[test]
    fn identical_checkpoints_pick_first() {
        let scores = [score(1, 0.6, 0.01), score(2, 0.6, 0.01), score(3, 0.6, 0.01)];
        assert_eq!(select_checkpoint(&scores).unwrap(), 1);
    }

    #[test]
    fn appending_non_overlapping_checkpoints_is_invariant() {
        let base = vec![score(1, 0.70, 0.02), score(2, 0.80, 0.02)];
        let picked = select_checkpoint(&base).unwrap();
        let mut extended = base.clone();
        extended.push(score(3, 0.5, 0.02)); // far below the max's CI
        assert_eq!(select_checkpoint(&extended).unwrap(), picked);
    }

    #[test]
    fn rejects_non_increasing_steps() {
        let scores = [score(2, 0.7, 0.01), score(2, 0.8, 0.01)];
        assert!(select_checkpoint(&scores).is_err());
    }
}
