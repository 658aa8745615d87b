//! Shared domain types and the primitive simplex / excess-loss operations.

use crate::error::{AmaError, Result};
use serde::{Deserialize, Serialize};

/// Numeric tolerance for simplex membership checks.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// Index of a task in a run with `k` tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId(pub usize);

/// A point on the k-simplex: nonnegative entries summing to 1 (within
/// [`SIMPLEX_TOL`]). Houses both the sampling/objective weights alpha and
/// the weight players' internal vector q.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimplexWeights {
    weights: Vec<f64>,
}

impl SimplexWeights {
    /// Validates and wraps a weight vector.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(AmaError::InvalidWeights("empty weight vector".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(AmaError::InvalidWeights(
                "entries must be finite and nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(AmaError::InvalidWeights(format!(
                "entries sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// The uniform distribution on k tasks.
    pub fn uniform(k: usize) -> Self {
        Self {
            weights: vec![1.0 / k as f64; k],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

/// Normalizes a nonnegative vector onto the simplex.
pub fn normalize_to_simplex(v: &[f64]) -> Result<SimplexWeights> {
    if v.is_empty() {
        return Err(AmaError::InvalidWeights("empty input".into()));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(AmaError::InvalidWeights(
            "entries must be finite and nonnegative".into(),
        ));
    }
    let sum: f64 = v.iter().sum();
    if sum <= 0.0 {
        return Err(AmaError::InvalidWeights("all-zero input".into()));
    }
    SimplexWeights::new(v.iter().map(|x| x / sum).collect())
}

/// Normalizes weights given in log space, subtracting the max before
/// exponentiating so that accumulated multiplicative updates cannot
/// overflow. Entries of `-inf` map to weight 0.
pub fn normalize_log_weights(log_w: &[f64]) -> Result<SimplexWeights> {
    if log_w.is_empty() {
        return Err(AmaError::InvalidWeights("empty input".into()));
    }
    if log_w.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
        return Err(AmaError::Numeric("non-finite log weight".into()));
    }
    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(AmaError::InvalidWeights("all weights are zero".into()));
    }
    let exp: Vec<f64> = log_w.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exp.iter().sum();
    SimplexWeights::new(exp.iter().map(|x| x / sum).collect())
}

/// Mixes q with the uniform distribution: alpha_i = (1-c) q_i + c/k.
/// Every output entry is bounded below by c/k.
pub fn smooth_weights(q: &SimplexWeights, c: f64, k: usize) -> Result<SimplexWeights> {
    if !(0.0..1.0).contains(&c) || c <= 0.0 {
        return Err(AmaError::Config(format!(
            "smoothing parameter c must lie in (0,1), got {c}"
        )));
    }
    if q.len() != k {
        return Err(AmaError::Shape(format!(
            "q has {} entries, expected k = {k}",
            q.len()
        )));
    }
    let floor = c / k as f64;
    SimplexWeights::new(q.as_slice().iter().map(|qi| (1.0 - c) * qi + floor).collect())
}

/// max(generalist_loss - specialist_loss, 0).
pub fn clipped_excess(generalist_loss: f64, specialist_loss: f64) -> Result<f64> {
    if !generalist_loss.is_finite() || !specialist_loss.is_finite() {
        return Err(AmaError::Numeric("non-finite loss input".into()));
    }
    Ok((generalist_loss - specialist_loss).max(0.0))
}

/// One preference triple z = (x, y+, y-) represented by feature vectors,
/// optionally carrying a precomputed specialist loss.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceExample {
    pub prompt_features: Vec<f64>,
    pub chosen_features: Vec<f64>,
    pub rejected_features: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specialist_loss: Option<f64>,
}

impl PreferenceExample {
    pub fn dim(&self) -> usize {
        self.prompt_features.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.prompt_features.len();
        if self.chosen_features.len() != d || self.rejected_features.len() != d {
            return Err(AmaError::Shape(format!(
                "feature vectors have dimensions {}, {}, {}",
                d,
                self.chosen_features.len(),
                self.rejected_features.len()
            )));
        }
        if let Some(l) = self.specialist_loss {
            if !l.is_finite() || l < 0.0 {
                return Err(AmaError::InvalidInput(format!(
                    "specialist_loss must be finite and nonnegative, got {l}"
                )));
            }
        }
        Ok(())
    }
}

/// A named collection of preference examples for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub task: TaskId,
    pub name: String,
    pub examples: Vec<PreferenceExample>,
}

impl TaskDataset {
    pub fn new(task: TaskId, name: String, examples: Vec<PreferenceExample>) -> Result<Self> {
        let ds = Self {
            task,
            name,
            examples,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.examples[0].dim()
    }

    /// Whether the specialist-loss column is present (it is all-or-nothing).
    pub fn has_loss_column(&self) -> bool {
        self.examples[0].specialist_loss.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.examples.is_empty() {
            return Err(AmaError::InvalidInput(format!(
                "dataset '{}' is empty",
                self.name
            )));
        }
        let d = self.examples[0].dim();
        let has_col = self.examples[0].specialist_loss.is_some();
        for (i, ex) in self.examples.iter().enumerate() {
            ex.validate()?;
            if ex.dim() != d {
                return Err(AmaError::Shape(format!(
                    "dataset '{}': example {i} has dimension {}, expected {d}",
                    self.name,
                    ex.dim()
                )));
            }
            if ex.specialist_loss.is_some() != has_col {
                return Err(AmaError::InvalidInput(format!(
                    "dataset '{}': specialist-loss column is partial (example {i})",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

/// Per-task, per-step excess-loss observation. A step where the task drew
/// no samples has `batch_count == 0` and carries no excess values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessLossRecord {
    pub task: TaskId,
    pub step: usize,
    pub raw_excess: Option<f64>,
    pub clipped_excess: Option<f64>,
    pub batch_count: usize,
}

impl ExcessLossRecord {
    pub fn observed(task: TaskId, step: usize, raw: f64, batch_count: usize) -> Self {
        Self {
            task,
            step,
            raw_excess: Some(raw),
            clipped_excess: Some(raw.max(0.0)),
            batch_count,
        }
    }

    pub fn unsampled(task: TaskId, step: usize) -> Self {
        Self {
            task,
            step,
            raw_excess: None,
            clipped_excess: None,
            batch_count: 0,
        }
    }
}
