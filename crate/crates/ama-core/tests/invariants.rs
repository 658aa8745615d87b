//! Property tests for the simplex, clipping, projection, and selection
//! invariants.

use ama_core::algorithms::model_average;
use ama_core::checkpoint::{select_checkpoint, CheckpointScore};
use ama_core::domain::{
    clipped_excess, normalize_log_weights, smooth_weights, SimplexWeights,
};
use ama_core::losses::{project_l2_ball, ParamVector};
use ama_core::players::{
    eg_update, exp3_update, AlphaKind, AlphaPlayerState, ImportanceMode, TaskFeedback,
};
use proptest::prelude::*;

fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.01f64..1.0, k).prop_map(|raw| {
        let z: f64 = raw.iter().sum();
        raw.iter().map(|v| v / z).collect()
    })
}

fn feedback(k: usize) -> impl Strategy<Value = Vec<TaskFeedback>> {
    proptest::collection::vec(
        prop_oneof![
            Just(TaskFeedback::unsampled()),
            (0.0f64..5.0, 1usize..20).prop_map(|(m, n)| TaskFeedback::observed(m, n)),
        ],
        k,
    )
}

proptest! {
    #[test]
    fn clipped_excess_is_clipped_and_monotone(
        g in -10.0f64..10.0,
        s in -10.0f64..10.0,
        bump in 0.0f64..5.0,
    ) {
        let e = clipped_excess(g, s).unwrap();
        prop_assert!(e >= 0.0);
        prop_assert_eq!(e == 0.0, g <= s);
        // Monotone nondecreasing in the generalist loss.
        prop_assert!(clipped_excess(g + bump, s).unwrap() >= e);
        // Monotone nonincreasing in the specialist loss.
        prop_assert!(clipped_excess(g, s + bump).unwrap() <= e);
    }

    #[test]
    fn weight_updates_stay_on_the_simplex(
        q in simplex(5),
        fb in feedback(5),
        c in 0.01f64..0.99,
        eta in 0.05f64..2.0,
    ) {
        for (kind, mode) in [
            (AlphaKind::Exp3, ImportanceMode::InternalQ),
            (AlphaKind::Exp3, ImportanceMode::SamplingAlpha),
            (AlphaKind::Eg, ImportanceMode::InternalQ),
        ] {
            let state = AlphaPlayerState {
                q: SimplexWeights::new(q.clone()).unwrap(),
                c,
                eta_w: eta,
                kind,
                importance_mode: mode,
            };
            let next = match kind {
                AlphaKind::Exp3 => exp3_update(&state, &fb).unwrap(),
                _ => eg_update(&state, &fb).unwrap(),
            };
            let sum: f64 = next.q.as_slice().iter().sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            prop_assert!(next.q.as_slice().iter().all(|w| *w >= 0.0));
        }
    }

    #[test]
    fn all_unsampled_feedback_is_a_fixed_point(q in simplex(4), c in 0.01f64..0.99) {
        let state = AlphaPlayerState {
            q: SimplexWeights::new(q.clone()).unwrap(),
            c,
            eta_w: 1.0,
            kind: AlphaKind::Eg,
            importance_mode: ImportanceMode::InternalQ,
        };
        let fb = vec![TaskFeedback::unsampled(); 4];
        let next = eg_update(&state, &fb).unwrap();
        for (a, b) in next.q.as_slice().iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn smoothing_respects_the_floor(q in simplex(7), c in 0.01f64..0.99) {
        let alpha = smooth_weights(&SimplexWeights::new(q).unwrap(), c, 7).unwrap();
        let floor = c / 7.0;
        let sum: f64 = alpha.as_slice().iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-9);
        prop_assert!(alpha.as_slice().iter().all(|a| *a >= floor - 1e-12));
    }

    #[test]
    fn log_normalization_is_shift_invariant(
        log_w in proptest::collection::vec(-50.0f64..50.0, 2..8),
        shift in -100.0f64..100.0,
    ) {
        let a = normalize_log_weights(&log_w).unwrap();
        let shifted: Vec<f64> = log_w.iter().map(|v| v + shift).collect();
        let b = normalize_log_weights(&shifted).unwrap();
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn ball_projection_contracts_and_is_idempotent(
        v in proptest::collection::vec(-10.0f64..10.0, 1..6),
        r in 0.1f64..5.0,
    ) {
        let theta = ParamVector::new(v).unwrap();
        let p = project_l2_ball(&theta, r);
        prop_assert!(p.norm() <= r + 1e-12);
        let pp = project_l2_ball(&p, r);
        for (a, b) in p.values.iter().zip(&pp.values) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        if theta.norm() <= r {
            prop_assert_eq!(&p, &theta);
        }
    }

    #[test]
    fn model_average_is_a_convex_combination(
        a in proptest::collection::vec(-5.0f64..5.0, 3),
        b in proptest::collection::vec(-5.0f64..5.0, 3),
        lambda in 0.0f64..1.0,
    ) {
        let pa = ParamVector::new(a.clone()).unwrap();
        let pb = ParamVector::new(b.clone()).unwrap();
        let avg = model_average(&[pa, pb], &[lambda, 1.0 - lambda]).unwrap();
        for i in 0..3 {
            let lo = a[i].min(b[i]);
            let hi = a[i].max(b[i]);
            prop_assert!(avg.values[i] >= lo - 1e-12 && avg.values[i] <= hi + 1e-12);
        }
    }

    #[test]
    fn selected_checkpoint_never_follows_the_argmax(
        accs in proptest::collection::vec(0.05f64..0.95, 1..10),
        n in 10usize..200,
    ) {
        let scores: Vec<CheckpointScore> = accs
            .iter()
            .enumerate()
            .map(|(i, p)| CheckpointScore::from_accuracies(i + 1, vec![*p], vec![n]).unwrap())
            .collect();
        let selected = select_checkpoint(&scores).unwrap();
        let argmax = scores
            .iter()
            .max_by(|a, b| {
                a.combined_accuracy
                    .partial_cmp(&b.combined_accuracy)
                    .unwrap()
                    .then(b.step.cmp(&a.step))
            })
            .unwrap()
            .step;
        prop_assert!(selected <= argmax);
    }
}
