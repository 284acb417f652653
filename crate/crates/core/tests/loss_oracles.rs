mod common;

use common::{piece_formulas, random_slicing, GOAL};
use ctxspot_core::seg_loss::{grad_point, loss_point, loss_point_clamped, Margins};
use ctxspot_core::spot_loss::{spotting_grad, spotting_loss, total_loss, ActionMatrix, Matching, PredictionMatrix};
use ndarray::array;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn worked_examples_match_high_precision_values() {
    let o = common::closed_form_loss_values();
    assert!(o.passed, "{}", o.detail);
}

#[test]
fn pieces_agree_at_every_boundary() {
    let o = common::piece_boundary_continuity(100, 7);
    assert!(o.passed, "{}", o.detail);
}

#[test]
fn closed_form_derivatives() {
    let m = Margins::new(0.9, 0.1);
    assert_eq!(grad_point(0.5, -50, &GOAL, m).unwrap(), 2.0);
    assert_eq!(grad_point(0.5, 0, &GOAL, m).unwrap(), -2.0);
    // clamp active: p below the minimum margin far from the action
    assert_eq!(grad_point(0.05, -50, &GOAL, m).unwrap(), 0.0);
    // exactly at the maximum margin
    assert_eq!(grad_point(0.9, 0, &GOAL, m).unwrap(), 0.0);
}

#[test]
fn spotting_worked_example() {
    let y = ActionMatrix { rows: array![[1.0, 0.5, 1.0]] };
    let yhat = PredictionMatrix::new(array![[0.8, 0.4, 1.0], [0.2, 0.7, 1.0]]).unwrap();
    let m = Matching { pairs: vec![(0, 0)], unmatched_pred_rows: vec![1], iterations: 1 };
    let alpha = [1.0, 5.0, 1.0];
    approx::assert_abs_diff_eq!(spotting_loss(&y, &yhat, &m, &alpha, 0.5).unwrap(), 0.11, epsilon = 1e-12);
    let g = spotting_grad(&y, &yhat, &m, &alpha, 0.5).unwrap();
    let want = array![[-0.4, -1.0, 0.0], [0.2, 0.0, 0.0]];
    assert!(g.iter().zip(&want).all(|(a, b)| (a - b).abs() <= 1e-12), "{g}");
    approx::assert_abs_diff_eq!(total_loss(0.11, 0.2, 1.5), 0.41, epsilon = 1e-12);
}

#[test]
fn spotting_grad_matches_central_differences() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let alpha = [1.0, 5.0, 1.0, 1.0];
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let loc: f64 = rng.gen_range(0.0..1.0);
        let y = ActionMatrix { rows: array![[1.0, loc, 0.0, 1.0]] };
        let a: f64 = rng.gen_range(0.05..0.95);
        let rows = array![
            [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), a, 1.0 - a],
            [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95), 0.5, 0.5]
        ];
        let yhat = PredictionMatrix::new(rows.clone()).unwrap();
        let m = Matching { pairs: vec![(0, 1)], unmatched_pred_rows: vec![0], iterations: 1 };
        let g = spotting_grad(&y, &yhat, &m, &alpha, 0.5).unwrap();
        let h = 1e-6;
        for ((r, c), &analytic) in g.indexed_iter() {
            let mut up = rows.clone();
            up[[r, c]] += h;
            let mut down = rows.clone();
            down[[r, c]] -= h;
            // class rows need not sum to one for the loss itself
            let f = |m2: ndarray::Array2<f64>| spotting_loss(&y, &PredictionMatrix { rows: m2 }, &m, &alpha, 0.5).unwrap();
            let numeric = (f(up) - f(down)) / (2.0 * h);
            let e = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(if analytic == numeric { 0.0 } else { e });
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn clamped_loss_is_non_negative(p in 0.0f64..=1.0, s in -300i64..300, seed in 0u64..1000,
                                    tmax in 0.5f64..=1.0, tmin in 0.0f64..0.5) {
        let k = random_slicing(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!(loss_point_clamped(p, s, &k, Margins::new(tmax, tmin)).unwrap() >= 0.0);
    }

    #[test]
    fn library_matches_the_active_closed_form(p in 0.01f64..0.99, s in -300i64..300, seed in 0u64..1000) {
        let k = random_slicing(&mut ChaCha8Rng::seed_from_u64(seed));
        let f = piece_formulas(p, s as f64, &k);
        let piece = if s <= k.k1 { 0 } else if s <= k.k2 { 1 } else if s < 0 { 2 }
            else if s < k.k3 { 3 } else if s < k.k4 { 4 } else { 5 };
        prop_assert!((loss_point(p, s, &k).unwrap() - f[piece]).abs() <= 1e-12);
    }

    #[test]
    fn monotone_in_score(p in 0.0f64..0.98, dp in 0.0f64..0.02, s in -300i64..=-121) {
        let m = Margins::new(0.9, 0.1);
        let far = loss_point_clamped(p, s, &GOAL, m).unwrap() <= loss_point_clamped(p + dp, s, &GOAL, m).unwrap();
        let at = loss_point_clamped(p, 0, &GOAL, m).unwrap() >= loss_point_clamped(p + dp, 0, &GOAL, m).unwrap();
        prop_assert!(far && at);
    }
}
