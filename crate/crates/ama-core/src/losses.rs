//! Desk-scale differentiable losses: the DPO analog on linear feature
//! models and the squared regression loss, with exact gradients.
//!
//! Under a linear log-score policy, log pi_theta(y|x) = theta . phi(x,y)
//! up to a per-prompt partition term that cancels between the chosen and
//! rejected responses, so the DPO log-ratio margin reduces to
//! (theta - reference) . (chosen_features - rejected_features).

use crate::domain::{PreferenceExample, TaskDataset};
use crate::error::{AmaError, Result};
use serde::{Deserialize, Serialize};

/// Flat model parameter vector (generalist, specialist, or reference).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AmaError::Numeric("non-finite parameter entry".into()));
        }
        Ok(Self { values })
    }

    pub fn zeros(d: usize) -> Self {
        Self {
            values: vec![0.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.values.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// self += scale * g
    pub fn axpy(&mut self, scale: f64, g: &[f64]) {
        for (v, gi) in self.values.iter_mut().zip(g) {
            *v += scale * gi;
        }
    }
}

/// DPO hyperparameters: beta and the reference model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DpoConfig {
    pub beta: f64,
    pub reference: ParamVector,
}

impl DpoConfig {
    pub fn new(beta: f64, reference: ParamVector) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(AmaError::Config(format!("beta must be positive, got {beta}")));
        }
        Ok(Self { beta, reference })
    }
}

/// One regression sample with ||x||_2 <= 1 and y in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionExample {
    pub input: Vec<f64>,
    pub target: f64,
}

impl RegressionExample {
    pub fn new(input: Vec<f64>, target: f64) -> Result<Self> {
        let norm: f64 = input.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 + 1e-12 {
            return Err(AmaError::InvalidInput(format!(
                "input norm {norm} exceeds 1"
            )));
        }
        if !(-1.0..=1.0).contains(&target) {
            return Err(AmaError::InvalidInput(format!(
                "target {target} outside [-1, 1]"
            )));
        }
        Ok(Self { input, target })
    }
}

fn check_dims(theta: &ParamVector, cfg: &DpoConfig, z: &PreferenceExample) -> Result<()> {
    let d = theta.dim();
    if cfg.reference.dim() != d || z.dim() != d {
        return Err(AmaError::Shape(format!(
            "theta has dim {d}, reference {}, example {}",
            cfg.reference.dim(),
            z.dim()
        )));
    }
    Ok(())
}

/// Preference margin m = (theta - reference) . (chosen - rejected).
pub fn dpo_margin(theta: &ParamVector, cfg: &DpoConfig, z: &PreferenceExample) -> Result<f64> {
    check_dims(theta, cfg, z)?;
    let m = theta
        .values
        .iter()
        .zip(&cfg.reference.values)
        .zip(z.chosen_features.iter().zip(&z.rejected_features))
        .map(|((t, r), (c, j))| (t - r) * (c - j))
        .sum();
    Ok(m)
}

/// Numerically stable softplus: log(1 + e^x).
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// -log sigmoid(beta * margin). Strictly positive, decreasing in the margin.
pub fn dpo_loss(theta: &ParamVector, cfg: &DpoConfig, z: &PreferenceExample) -> Result<f64> {
    let m = dpo_margin(theta, cfg, z)?;
    let loss = softplus(-cfg.beta * m);
    if !loss.is_finite() {
        return Err(AmaError::Numeric(format!("non-finite DPO loss (margin {m})")));
    }
    Ok(loss)
}

/// Analytic gradient: -beta * sigmoid(-beta m) * (chosen - rejected).
pub fn dpo_loss_grad(
    theta: &ParamVector,
    cfg: &DpoConfig,
    z: &PreferenceExample,
) -> Result<Vec<f64>> {
    let m = dpo_margin(theta, cfg, z)?;
    let scale = -cfg.beta * sigmoid(-cfg.beta * m);
    Ok(z.chosen_features
        .iter()
        .zip(&z.rejected_features)
        .map(|(c, j)| scale * (c - j))
        .collect())
}

/// Squared regression loss (theta . x - y)^2 with its gradient 2(theta.x - y) x.
pub fn squared_loss(theta: &ParamVector, ex: &RegressionExample) -> Result<(f64, Vec<f64>)> {
    if theta.dim() != ex.input.len() {
        return Err(AmaError::Shape(format!(
            "theta dim {} vs input dim {}",
            theta.dim(),
            ex.input.len()
        )));
    }
    let r = theta.dot(&ex.input) - ex.target;
    let grad = ex.input.iter().map(|x| 2.0 * r * x).collect();
    Ok((r * r, grad))
}

/// Euclidean projection onto the ball of the given radius.
pub fn project_l2_ball(theta: &ParamVector, radius: f64) -> ParamVector {
    debug_assert!(radius > 0.0);
    let norm = theta.norm();
    if norm <= radius {
        theta.clone()
    } else {
        let s = radius / norm;
        ParamVector {
            values: theta.values.iter().map(|v| v * s).collect(),
        }
    }
}

/// Mean DPO loss over a dataset.
pub fn task_average_loss(theta: &ParamVector, cfg: &DpoConfig, ds: &TaskDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(AmaError::InvalidInput("empty dataset".into()));
    }
    let mut sum = 0.0;
    for z in &ds.examples {
        sum += dpo_loss(theta, cfg, z)?;
    }
    Ok(sum / ds.len() as f64)
}

/// Fraction of examples with theta . (chosen - rejected) > 0 (strict; zero
/// margin counts as incorrect).
pub fn pref_accuracy(theta: &ParamVector, ds: &TaskDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(AmaError::InvalidInput("empty dataset".into()));
    }
    let mut correct = 0usize;
    for z in &ds.examples {
        let score: f64 = theta
            .values
            .iter()
            .zip(z.chosen_features.iter().zip(&z.rejected_features))
            .map(|(t, (c, j))| t * (c - j))
            .sum();
        if score > 0.0 {
            correct += 1;
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TaskId;
    use rand::Rng;

    fn example(chosen: Vec<f64>, rejected: Vec<f64>) -> PreferenceExample {
        let d = chosen.len();
        PreferenceExample {
            prompt_features: vec![0.0; d],
            chosen_features: chosen,
            rejected_features: rejected,
            specialist_loss: None,
        }
    }

    #[test]
    fn margin_identity_and_symmetry() {
        let cfg = DpoConfig::new(1.0, ParamVector::new(vec![0.5, -0.5]).unwrap()).unwrap();
        let z = example(vec![1.0, 2.0], vec![0.0, 1.0]);
        // theta = reference
        let m = dpo_margin(&cfg.reference.clone(), &cfg, &z).unwrap();
        assert_eq!(m, 0.0);
        // chosen = rejected
        let z2 = example(vec![1.0, 2.0], vec![1.0, 2.0]);
        let theta = ParamVector::new(vec![3.0, -1.0]).unwrap();
        assert_eq!(dpo_margin(&theta, &cfg, &z2).unwrap(), 0.0);
    }

    #[test]
    fn margin_forced_dot_product() {
        let cfg = DpoConfig::new(1.0, ParamVector::zeros(2)).unwrap();
        let theta = ParamVector::new(vec![1.0, 0.0]).unwrap();
        let z = example(vec![0.5, 2.0], vec![0.0, 0.0]);
        assert!((dpo_margin(&theta, &cfg, &z).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn loss_at_zero_margin_is_ln2() {
        let cfg = DpoConfig::new(3.7, ParamVector::zeros(2)).unwrap();
        let z = example(vec![1.0, 1.0], vec![1.0, 1.0]);
        let theta = ParamVector::new(vec![0.2, 0.9]).unwrap();
        let loss = dpo_loss(&theta, &cfg, &z).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn loss_at_unit_margin() {
        // Frozen from an independent high-precision evaluation of
        // -log(1/(1+e^-1)) = log(1+e^-1).
        let cfg = DpoConfig::new(1.0, ParamVector::zeros(1)).unwrap();
        let theta = ParamVector::new(vec![1.0]).unwrap();
        let z = example(vec![1.0], vec![0.0]);
        let loss = dpo_loss(&theta, &cfg, &z).unwrap();
        assert!((loss - 0.3132616875182228).abs() < 1e-12);
    }

    #[test]
    fn loss_decreases_as_beta_grows_with_positive_margin() {
        let theta = ParamVector::new(vec![1.0]).unwrap();
        let z = example(vec![1.0], vec![0.0]);
        let mut prev = f64::INFINITY;
        for beta in [0.5, 1.0, 2.0, 4.0, 8.0, 16.0] {
            let cfg = DpoConfig::new(beta, ParamVector::zeros(1)).unwrap();
            let loss = dpo_loss(&theta, &cfg, &z).unwrap();
            assert!(loss < prev);
            prev = loss;
        }
    }

    #[test]
    fn grad_zero_when_chosen_equals_rejected() {
        let cfg = DpoConfig::new(1.0, ParamVector::zeros(2)).unwrap();
        let theta = ParamVector::new(vec![0.3, -0.7]).unwrap();
        let z = example(vec![1.0, 2.0], vec![1.0, 2.0]);
        assert_eq!(dpo_loss_grad(&theta, &cfg, &z).unwrap(), vec![0.0, 0.0]);
    }

    /// Central finite-difference oracle for any scalar function of theta.
    pub(crate) fn finite_diff<F: Fn(&ParamVector) -> f64>(
        f: F,
        theta: &ParamVector,
        step: f64,
    ) -> Vec<f64> {
        let mut g = Vec::with_capacity(theta.dim());
        for i in 0..theta.dim() {
            let mut plus = theta.clone();
            plus.values[i] += step;
            let mut minus = theta.clone();
            minus.values[i] -= step;
            g.push((f(&plus) - f(&minus)) / (2.0 * step));
        }
        g
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff: f64 = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt().max(1.0);
        diff / scale
    }

    #[test]
    fn dpo_grad_matches_finite_differences() {
        let mut rng = crate::rng::rng_for(11, crate::rng::Purpose::Generation);
        for _ in 0..100 {
            let d = 4;
            let theta =
                ParamVector::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let reference =
                ParamVector::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
            let cfg = DpoConfig::new(rng.gen_range(0.1..3.0), reference).unwrap();
            let z = example(
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let analytic = dpo_loss_grad(&theta, &cfg, &z).unwrap();
            let numeric = finite_diff(|t| dpo_loss(t, &cfg, &z).unwrap(), &theta, 1e-5);
            assert!(rel_err(&analytic, &numeric) <= 1e-5);
        }
    }

    #[test]
    fn squared_loss_cases() {
        // theta.x = y -> 0 loss, zero gradient
        let theta = ParamVector::new(vec![1.0, 0.0]).unwrap();
        let ex = RegressionExample::new(vec![0.5, 0.5], 0.5).unwrap();
        let (l, g) = squared_loss(&theta, &ex).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|x| *x == 0.0));
        // theta = 0, y = 1 -> 1
        let (l, _) = squared_loss(
            &ParamVector::zeros(2),
            &RegressionExample::new(vec![0.3, 0.4], 1.0).unwrap(),
        )
        .unwrap();
        assert_eq!(l, 1.0);
        // forced arithmetic
        let theta = ParamVector::new(vec![1.0, 0.0]).unwrap();
        let ex = RegressionExample::new(vec![0.6, 0.8], -0.4).unwrap();
        let (l, _) = squared_loss(&theta, &ex).unwrap();
        assert!((l - 1.0).abs() < 1e-15);
    }

    #[test]
    fn squared_loss_grad_bounded_by_four() {
        let mut rng = crate::rng::rng_for(12, crate::rng::Purpose::Generation);
        for _ in 0..200 {
            let d = 5;
            let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1.0 {
                x.iter_mut().for_each(|v| *v /= n);
            }
            let ex = RegressionExample::new(x, rng.gen_range(-1.0..1.0)).unwrap();
            let mut t: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let tn: f64 = t.iter().map(|v| v * v).sum::<f64>().sqrt();
            if tn > 1.0 {
                t.iter_mut().for_each(|v| *v /= tn);
            }
            let theta = ParamVector::new(t).unwrap();
            let (_, g) = squared_loss(&theta, &ex).unwrap();
            let gn: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(gn <= 4.0 + 1e-12);
        }
    }

    #[test]
    fn squared_grad_matches_finite_differences() {
        let mut rng = crate::rng::rng_for(13, crate::rng::Purpose::Generation);
        for _ in 0..100 {
            let d = 6;
            let mut x: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let n: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= n.max(1.0));
            let ex = RegressionExample::new(x, rng.gen_range(-1.0..1.0)).unwrap();
            let theta =
                ParamVector::new((0..d).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
            let analytic = squared_loss(&theta, &ex).unwrap().1;
            let numeric = finite_diff(|t| squared_loss(t, &ex).unwrap().0, &theta, 1e-5);
            assert!(rel_err(&analytic, &numeric) <= 1e-5);
        }
    }

    #[test]
    fn projection_cases() {
        let t = ParamVector::new(vec![0.3, 0.4]).unwrap();
        assert_eq!(project_l2_ball(&t, 1.0), t);
        let t = ParamVector::new(vec![3.0, 4.0]).unwrap();
        let p = project_l2_ball(&t, 1.0);
        assert!((p.values[0] - 0.6).abs() < 1e-15);
        assert!((p.values[1] - 0.8).abs() < 1e-15);
        let z = ParamVector::zeros(3);
        assert_eq!(project_l2_ball(&z, 1.0), z);
    }

    #[test]
    fn dpo_loss_is_convex_on_midpoints() {
        let mut rng = crate::rng::rng_for(14, crate::rng::Purpose::Generation);
        for _ in 0..200 {
            let d = 3;
            let cfg = DpoConfig::new(
                rng.gen_range(0.1..3.0),
                ParamVector::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
            )
            .unwrap();
            let z = example(
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            );
            let t1 = ParamVector::new((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let t2 = ParamVector::new((0..d).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap();
            let mid = ParamVector::new(
                t1.values
                    .iter()
                    .zip(&t2.values)
                    .map(|(a, b)| (a + b) / 2.0)
                    .collect(),
            )
            .unwrap();
            let lm = dpo_loss(&mid, &cfg, &z).unwrap();
            let l1 = dpo_loss(&t1, &cfg, &z).unwrap();
            let l2 = dpo_loss(&t2, &cfg, &z).unwrap();
            assert!(lm <= (l1 + l2) / 2.0 + 1e-12);
        }
    }

    #[test]
    fn average_loss_and_accuracy() {
        let cfg = DpoConfig::new(1.0, ParamVector::zeros(1)).unwrap();
        let ds = TaskDataset::new(
            TaskId(0),
            "t".into(),
            vec![example(vec![1.0], vec![0.0]), example(vec![0.0], vec![1.0])],
        )
        .unwrap();
        let theta = ParamVector::new(vec![1.0]).unwrap();
        let avg = task_average_loss(&theta, &cfg, &ds).unwrap();
        let a = dpo_loss(&theta, &cfg, &ds.examples[0]).unwrap();
        let b = dpo_loss(&theta, &cfg, &ds.examples[1]).unwrap();
        assert!((avg - (a + b) / 2.0).abs() < 1e-15);
        // one positive margin, one negative
        assert_eq!(pref_accuracy(&theta, &ds).unwrap(), 0.5);
        // zero theta: zero margins count as incorrect
        assert_eq!(pref_accuracy(&ParamVector::zeros(1), &ds).unwrap(), 0.0);
        // positive rescaling invariance
        let theta10 = ParamVector::new(vec![10.0]).unwrap();
        assert_eq!(
            pref_accuracy(&theta, &ds).unwrap(),
            pref_accuracy(&theta10, &ds).unwrap()
        );
    }

    #[test]
    fn accuracy_antisymmetric_under_swap() {
        let theta = ParamVector::new(vec![1.0, -0.5]).unwrap();
        let orig = TaskDataset::new(
            TaskId(0),
            "t".into(),
            vec![
                example(vec![1.0, 0.0], vec![0.0, 1.0]),
                example(vec![0.0, 1.0], vec![1.0, 0.0]),
                example(vec![0.4, 0.2], vec![-0.3, 0.8]),
            ],
        )
        .unwrap();
        let swapped = TaskDataset::new(
            TaskId(0),
            "t".into(),
            orig.examples
                .iter()
                .map(|z| example(z.rejected_features.clone(), z.chosen_features.clone()))
                .collect(),
        )
        .unwrap();
        let a = pref_accuracy(&theta, &orig).unwrap();
        let b = pref_accuracy(&theta, &swapped).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
    }
}
