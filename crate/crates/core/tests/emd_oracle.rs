mod common;
#[path = "common/lp.rs"]
mod lp;

use common::rng;
use m2align_core::alignment::*;
use rand::Rng;

fn simplex_weights(r: &mut impl Rng, n: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| r.random_range(1e-3..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|x| x / s).collect()
}

#[test]
fn lp_oracle_hand_cases() {
    let obj = lp::transport_objective(&[0.0, 1.0, 1.0, 0.0], &[0.5, 0.5], &[0.5, 0.5]);
    assert!(obj.abs() < 1e-12);
    let obj = lp::transport_objective(&[1.0, 0.0, 0.0, 1.0], &[0.5, 0.5], &[0.5, 0.5]);
    assert!(obj.abs() < 1e-12);
    let obj = lp::transport_objective(&[2.0, 3.0], &[1.0], &[0.25, 0.75]);
    assert!((obj - 2.75).abs() < 1e-12);
}

#[test]
fn emd_matches_lp_oracle_on_random_instances() {
    let mut r = rng(0xE3D);
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let (lq, ls) = (r.random_range(1..=6), r.random_range(1..=6));
        let values: Vec<f64> = if case % 5 == 0 {
            // Coarse values force ties and degenerate pivots.
            (0..lq * ls)
                .map(|_| r.random_range(-2..=2) as f64 * 0.5)
                .collect()
        } else {
            (0..lq * ls).map(|_| r.random_range(-1.0..=1.0)).collect()
        };
        let sim = SimilarityMatrix::new(lq, ls, values.clone()).unwrap();
        let masses = if case % 7 == 0 {
            Masses {
                mu: vec![1.0 / lq as f64; lq],
                gamma: vec![1.0 / ls as f64; ls],
            }
        } else {
            Masses {
                mu: simplex_weights(&mut r, lq),
                gamma: simplex_weights(&mut r, ls),
            }
        };
        let plan = solve_emd(&sim, &masses).unwrap();
        let cost: Vec<f64> = values.iter().map(|v| 1.0 - v).collect();
        let want = lp::transport_objective(&cost, &masses.mu, &masses.gamma);
        worst = worst.max((plan.objective() - want).abs());
        assert!(
            (plan.objective() - want).abs() <= 1e-6,
            "case {case}: {} vs {want}",
            plan.objective()
        );
        for (a, b) in plan.row_sums().iter().zip(&masses.mu) {
            assert!((a - b).abs() <= 1e-8);
        }
        for (a, b) in plan.col_sums().iter().zip(&masses.gamma) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert!(plan.values().iter().all(|v| *v >= 0.0));
        let score = alignment_score(&sim, &plan).unwrap();
        assert!((score - (1.0 - plan.objective())).abs() <= 1e-9);
    }
    println!("worst |emd - lp| = {worst:e}");
}

#[test]
fn emd_plan_is_deterministic_under_ties() {
    let sim = SimilarityMatrix::new(3, 3, vec![0.5; 9]).unwrap();
    let masses = Masses {
        mu: vec![1.0 / 3.0; 3],
        gamma: vec![1.0 / 3.0; 3],
    };
    let a = solve_emd(&sim, &masses).unwrap();
    for _ in 0..5 {
        assert_eq!(solve_emd(&sim, &masses).unwrap(), a);
    }
}
