use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::speechnet::{EmotionTimeline, TimelineWindow};

fn one_hot(k: usize, n: usize) -> Vec<f64> {
    (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()
}

fn timeline(rows: Vec<Vec<f64>>) -> EmotionTimeline {
    EmotionTimeline::new(
        rows.into_iter()
            .enumerate()
            .map(|(i, p)| TimelineWindow {
                start: 10.0 * i as f64,
                distribution: EmotionDistribution::new(p).unwrap(),
            })
            .collect(),
    )
    .unwrap()
}

fn random_samples(n: usize, seed: u64, truth: [f64; 4]) -> Vec<FusionSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: [f64; 4] = std::array::from_fn(|_| rng.random_range(0.0..1.0));
            FusionSample {
                branches: BranchScores::from_array(x),
                y_hat: fuse_arrays(&truth, &x),
            }
        })
        .collect()
}

#[test]
fn text_variability_endpoints() {
    assert_eq!(
        text_variability(&EmotionDistribution::new(one_hot(2, 5)).unwrap()),
        0.0
    );
    assert!((text_variability(&EmotionDistribution::uniform(5)) - 1.0).abs() < 1e-12);
}

#[test]
fn speech_score_endpoints() {
    let angry = timeline(vec![one_hot(0, 8); 3]);
    assert_eq!(speech_score(&angry), 0.0);
    let alternating = timeline(vec![
        one_hot(4, 8),
        one_hot(7, 8),
        one_hot(4, 8),
        one_hot(7, 8),
    ]);
    assert_eq!(speech_score(&alternating), 1.0);
    let single = timeline(vec![one_hot(1, 8)]);
    assert_eq!(speech_score(&single), 0.5);
}

#[test]
fn fuse_examples() {
    let c = FusionCoefficients::default();
    assert_eq!(fuse(&c, &BranchScores::from_array([1.0; 4])), 1.0);
    assert_eq!(
        fuse(&c, &BranchScores::from_array([1.0, 0.0, 0.0, 0.0])),
        0.5
    );
    assert_eq!(fuse(&c, &BranchScores::from_array([0.0; 4])), 0.0);
}

#[test]
fn huber_examples() {
    assert_eq!(huber_loss(0.3, 0.3, 1.0), 0.0);
    assert_eq!(huber_grad(0.3, 0.3, 1.0), 0.0);
    assert_eq!(huber_loss(1.0, 0.5, 1.0), 0.125);
    assert_eq!(huber_loss(2.0, 0.0, 0.5), 0.875);
    assert_eq!(huber_grad(2.0, 0.0, 0.5), 0.5);
    assert_eq!(huber_grad(-2.0, 0.0, 0.5), -0.5);
}

#[test]
fn simplex_projection_cases() {
    for (a, b) in project_to_simplex(&[0.5, 0.1, 0.2, 0.2])
        .iter()
        .zip([0.5, 0.1, 0.2, 0.2])
    {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(
        project_to_simplex(&[2.0, 0.0, 0.0, 0.0]),
        vec![1.0, 0.0, 0.0, 0.0]
    );
    let p = project_to_simplex(&[0.6, 0.6, -1.0, 0.0]);
    assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
    assert_eq!((p[2], p[3]), (0.0, 0.0));
}

#[test]
fn stationary_point_keeps_initial_coefficients() {
    let samples = random_samples(50, 1, INITIAL_COEFFICIENTS);
    let out = train_coefficients(&samples, &FusionConfig::default()).unwrap();
    assert_eq!(out.coefficients.to_array(), INITIAL_COEFFICIENTS);
    assert!(out.converged);
    assert_eq!(out.final_loss(), 0.0);
}

#[test]
fn coefficient_gradient_matches_finite_differences() {
    let mut samples = random_samples(40, 2, [0.1, 0.2, 0.3, 0.4]);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for s in &mut samples {
        s.y_hat = rng.random_range(0.0..1.0);
    }
    let c = [0.7, 0.05, 0.15, 0.1];
    for theta in [1.0, 0.1] {
        let g = loss_gradient(&c, &samples, theta);
        for i in 0..4 {
            let eps = 1e-6;
            let (mut up, mut dn) = (c, c);
            up[i] += eps;
            dn[i] -= eps;
            let num =
                (mean_loss(&up, &samples, theta) - mean_loss(&dn, &samples, theta)) / (2.0 * eps);
            let rel = (g[i] - num).abs() / g[i].abs().max(num.abs()).max(1e-12);
            assert!(
                rel < 1e-6,
                "theta {theta} coefficient {i}: {} vs {num}",
                g[i]
            );
        }
    }
}

#[test]
fn recovers_simplex_coefficients_with_a_large_step() {
    let truth = [0.4, 0.3, 0.2, 0.1];
    let samples = random_samples(500, 4, truth);
    let cfg = FusionConfig {
        learning_rate: 1.0,
        max_iters: 5000,
        ..FusionConfig::default()
    };
    let out = train_coefficients(&samples, &cfg).unwrap();
    for (a, b) in out.coefficients.to_array().iter().zip(truth) {
        assert!((a - b).abs() < 1e-2);
    }
    assert!(out.final_loss() < 1e-5);
    assert!(out.final_loss() <= out.history[0].loss);
}

#[test]
fn unconstrained_mode_skips_projection() {
    let samples = random_samples(100, 5, [0.3, 0.2, 0.1, 0.1]);
    let cfg = FusionConfig {
        learning_rate: 1.0,
        max_iters: 3000,
        constrained: false,
        ..FusionConfig::default()
    };
    let out = train_coefficients(&samples, &cfg).unwrap();
    let c = out.coefficients.to_array();
    assert!((c.iter().sum::<f64>() - 0.7).abs() < 1e-3);
    assert!(!out.coefficients.constrained);
    out.coefficients.validate().unwrap();
}

#[test]
fn ablation_examples() {
    let c = FusionCoefficients::default();
    let a = ablation_leave_one_out(&c, &BranchScores::from_array([1.0; 4]));
    assert_eq!(a.full, 1.0);
    assert_eq!(a.drop_x1, 0.5);
    assert!((a.drop_x2 - 0.9).abs() < 1e-15);
    let zero = FusionCoefficients::from_array([0.5, 0.0, 0.3, 0.2], 1.0, true);
    let b = BranchScores::from_array([0.2, 0.9, 0.4, 0.7]);
    let a = ablation_leave_one_out(&zero, &b);
    assert_eq!(a.drop_x2, a.full);
}

#[test]
fn coefficient_json_round_trip_and_validation() {
    let c = FusionCoefficients::from_array([0.4, 0.3, 0.2, 0.1], 0.7, true);
    assert_eq!(
        FusionCoefficients::from_json(&c.to_json().unwrap()).unwrap(),
        c
    );
    let bad = FusionCoefficients::from_array([0.4, 0.3, 0.2, 0.2], 1.0, true);
    assert!(FusionCoefficients::from_json(&bad.to_json().unwrap()).is_err());
    assert!(FusionCoefficients::from_json(r#"{"alpha":1}"#).is_err());
}

#[test]
fn samples_csv_round_trip() {
    let samples = random_samples(5, 6, [0.25; 4]);
    let mut buf = Vec::new();
    write_fusion_samples(&samples, &mut buf).unwrap();
    assert!(buf.starts_with(b"x1,x2,x3,x4,y_hat\n"));
    assert_eq!(read_fusion_samples(buf.as_slice(), "t").unwrap(), samples);
    assert!(read_fusion_samples("x1,x2,x3,y_hat\n".as_bytes(), "t").is_err());
}

#[test]
fn x3_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rows: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            crate::emotion::softmax(
                &(0..8)
                    .map(|_| rng.random_range(-2.0..2.0))
                    .collect::<Vec<_>>(),
            )
        })
        .collect();
    let view: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
    let g = x3_gradient(&view);
    let eps = 1e-7;
    for t in 0..rows.len() {
        for k in 0..8 {
            let mut up = rows.clone();
            let mut dn = rows.clone();
            up[t][k] += eps;
            dn[t][k] -= eps;
            let f =
                |r: &Vec<Vec<f64>>| x3_from_probs(&r.iter().map(Vec::as_slice).collect::<Vec<_>>());
            let num = (f(&up) - f(&dn)) / (2.0 * eps);
            assert!((num - g[t][k]).abs() < 1e-7, "window {t} class {k}");
        }
    }
}

#[test]
fn joint_finetuning_lowers_the_loss() {
    let model = crate::speechnet::init_cnn(8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let samples: Vec<JointSample> = (0..3)
        .map(|i| JointSample {
            x1: 0.2 * i as f64,
            x2: 0.5,
            x4: 0.1,
            windows: (0..2)
                .map(|_| {
                    (0..crate::speechnet::INPUT_LEN)
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect(),
            y_hat: 0.9,
        })
        .collect();
    let cfg = FusionConfig {
        learning_rate: 0.1,
        finetune_learning_rate: 1e-3,
        finetune_iters: 5,
        ..FusionConfig::default()
    };
    let out = finetune_speech(&model, &FusionCoefficients::default(), &samples, &cfg).unwrap();
    assert_eq!(out.history.len(), 6);
    assert!(out.history[5].loss < out.history[0].loss);
    assert_ne!(out.model.dense2.weight, model.dense2.weight);
    out.coefficients.validate().unwrap();
}

proptest! {
    #[test]
    fn fuse_is_linear(a in 0.0f64..1.0, b in prop::array::uniform4(0.0f64..1.0), b2 in prop::array::uniform4(0.0f64..1.0)) {
        let c = FusionCoefficients::default();
        let mix: [f64; 4] = std::array::from_fn(|i| a * b[i] + (1.0 - a) * b2[i]);
        let lhs = fuse(&c, &BranchScores::from_array(mix));
        let rhs = a * fuse(&c, &BranchScores::from_array(b)) + (1.0 - a) * fuse(&c, &BranchScores::from_array(b2));
        prop_assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn huber_is_below_the_square(d in -5.0f64..5.0, theta in 0.01f64..3.0) {
        let l = huber_loss(d, 0.0, theta);
        prop_assert!(l >= 0.0);
        prop_assert!(l <= 0.5 * d * d + 1e-15);
        if d.abs() <= theta {
            prop_assert_eq!(l, 0.5 * d * d);
        }
    }

    #[test]
    fn projection_lands_on_simplex(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
        let p = project_to_simplex(&v);
        prop_assert!(p.iter().all(|x| *x >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scores_stay_in_unit_interval(c in prop::array::uniform4(0.0f64..1.0), b in prop::array::uniform4(0.0f64..1.0)) {
        let p = project_to_simplex(&c);
        let coeffs = FusionCoefficients::from_array([p[0], p[1], p[2], p[3]], 1.0, true);
        let a = ablation_leave_one_out(&coeffs, &BranchScores::from_array(b));
        for s in [a.full, a.drop_x1, a.drop_x2, a.drop_x3, a.drop_x4] {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
        }
    }
}
