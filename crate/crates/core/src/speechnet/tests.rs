use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_batch(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            (0..INPUT_LEN)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect()
        })
        .collect()
}

#[test]
fn parameter_counts_match_layer_table() {
    let m = init_cnn(7);
    let c = m.param_counts();
    assert_eq!(m.conv1.param_count(), 2_688);
    assert_eq!(m.conv2.param_count(), 81_984);
    assert_eq!(m.bn1.trainable_count() + m.bn1.non_trainable_count(), 512);
    assert_eq!(m.bn2.trainable_count() + m.bn2.non_trainable_count(), 256);
    assert_eq!(m.dense1.param_count(), 5_059_080);
    assert_eq!(m.dense2.param_count(), 4_168);
    assert_eq!(c.total, 5_148_688);
    assert_eq!(c.trainable, 5_148_304);
    assert_eq!(c.non_trainable, 384);
    assert_eq!((CONV1_OUT_LEN, CONV2_OUT_LEN, FLAT_LEN), (161, 152, 9728));
}

#[test]
fn same_seed_same_weights() {
    assert_eq!(init_cnn(3), init_cnn(3));
    assert_ne!(init_cnn(3).conv1.weight, init_cnn(4).conv1.weight);
}

#[test]
fn zero_model_is_uniform() {
    let m = CnnModel::zeroed();
    for p in m.predict(&random_batch(3, 1)).unwrap() {
        assert!(p.iter().all(|v| (v - 0.125).abs() < 1e-15));
    }
}

#[test]
fn outputs_are_distributions() {
    let m = init_cnn(11);
    for mode in [Mode::Train, Mode::Eval] {
        for p in m.forward(&random_batch(5, 2), mode).unwrap() {
            assert!(p.iter().all(|v| *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn wrong_input_length_is_rejected() {
    let m = CnnModel::zeroed();
    assert!(m.predict(&[vec![0.0; 179]]).is_err());
    assert!(m.predict::<Vec<f64>>(&[]).is_err());
}

#[test]
fn eval_forward_is_batch_invariant() {
    let m = init_cnn(5);
    let batch = random_batch(6, 9);
    let together = m.predict(&batch).unwrap();
    for (x, p) in batch.iter().zip(&together) {
        let alone = m.predict(std::slice::from_ref(x)).unwrap();
        for (a, b) in alone[0].iter().zip(p) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

fn gates(y: &[Vec<f64>]) -> Vec<Vec<bool>> {
    y.iter()
        .map(|r| r.iter().map(|v| *v > 0.0).collect())
        .collect()
}

fn gated(y: Vec<Vec<f64>>, g: &[Vec<bool>]) -> Vec<Vec<f64>> {
    y.into_iter()
        .zip(g)
        .map(|(r, m)| {
            r.into_iter()
                .zip(m)
                .map(|(v, on)| if *on { v } else { 0.0 })
                .collect()
        })
        .collect()
}

type Gates = (Vec<Vec<bool>>, Vec<Vec<bool>>);

/// Train-mode loss rebuilt from the public layers. With `frozen` set, each
/// ReLU keeps the on/off pattern it had at the base point, so the loss is
/// smooth in every parameter and central differences see no kinks.
fn layer_loss(
    m: &CnnModel,
    batch: &[Vec<f64>],
    labels: &[usize],
    frozen: Option<&Gates>,
) -> (f64, Gates) {
    let z1: Vec<Vec<f64>> = batch.iter().map(|x| m.conv1.forward(x)).collect();
    let (y1, _) = m.bn1.forward(&z1, true);
    let g1 = frozen.map_or_else(|| gates(&y1), |f| f.0.clone());
    let a1 = gated(y1, &g1);
    let z2: Vec<Vec<f64>> = a1.iter().map(|x| m.conv2.forward(x)).collect();
    let (y2, _) = m.bn2.forward(&z2, true);
    let g2 = frozen.map_or_else(|| gates(&y2), |f| f.1.clone());
    let a2 = gated(y2, &g2);
    let probs: Vec<Vec<f64>> = a2
        .iter()
        .map(|x| crate::emotion::softmax(&m.dense2.forward(&m.dense1.forward(x))))
        .collect();
    (cross_entropy(&probs, labels), (g1, g2))
}

/// Central differences of the gate-frozen loss at step `eps` (or of the
/// plain loss when `freeze` is false) for 200 parameters spread evenly over
/// the trainable tensors; returns the largest relative error.
fn worst_gradient_error(eps: f64, freeze: bool, skip_below: f64) -> f64 {
    let mut model = init_cnn(21);
    let batch = random_batch(4, 22);
    let labels = [0, 3, 5, 7];
    let (loss, grads, _) = model.loss_and_gradients(&batch, &labels).unwrap();
    let (rebuilt, base_gates) = layer_loss(&model, &batch, &labels, None);
    assert!((loss - rebuilt).abs() < 1e-12);
    let frozen = freeze.then_some(&base_gates);
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for k in 0..200 {
        let tensor = k % CnnModel::TRAINABLE.len();
        let i = rng.random_range(0..grads.0[tensor].len());
        let orig = model.trainable_mut()[tensor][i];
        model.trainable_mut()[tensor][i] = orig + eps;
        let plus = layer_loss(&model, &batch, &labels, frozen).0;
        model.trainable_mut()[tensor][i] = orig - eps;
        let minus = layer_loss(&model, &batch, &labels, frozen).0;
        model.trainable_mut()[tensor][i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let analytic = grads.0[tensor][i];
        if analytic.abs().max(numeric.abs()) >= skip_below {
            worst = worst.max(relative_error(analytic, numeric));
        }
    }
    worst
}

#[test]
fn gradients_match_gate_frozen_finite_differences() {
    let worst = worst_gradient_error(1e-4, true, 0.0);
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn gradients_match_plain_finite_differences_with_small_step() {
    // A tiny step rarely crosses a ReLU kink; gradients that are zero up to
    // roundoff (conv biases ahead of batch norm) are left out.
    let worst = worst_gradient_error(1e-6, false, 1e-6);
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn probability_backward_matches_logit_backward() {
    let model = init_cnn(31);
    let batch = random_batch(3, 32);
    let cache = model.forward_cached(&batch, Mode::Eval).unwrap();
    // d(sum_k w_k p_k)/dz equals p * (w - <w, p>)
    let w: Vec<f64> = (0..N_SPEECH_CLASSES).map(|k| k as f64 * 0.1).collect();
    let via_probs = model.backward_from_probs(&cache, &vec![w.clone(); 3]);
    let d_logits: Vec<Vec<f64>> = cache
        .probs
        .iter()
        .map(|p| {
            let inner: f64 = p.iter().zip(&w).map(|(a, b)| a * b).sum();
            p.iter().zip(&w).map(|(pk, wk)| pk * (wk - inner)).collect()
        })
        .collect();
    assert_eq!(via_probs, model.backward(&cache, &d_logits));
}

#[test]
fn zero_learning_rate_leaves_weights() {
    let mut model = init_cnn(41);
    let before = model.clone();
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..TrainConfig::default()
    };
    let mut opt = cfg.optimizer(&model);
    train_step(&mut model, &mut opt, &random_batch(4, 42), &[1, 2, 3, 4]).unwrap();
    for ((_, a), (_, b)) in model.trainable().iter().zip(before.trainable().iter()) {
        assert_eq!(a, b);
    }
}

#[test]
fn loss_decreases_on_a_fixed_batch() {
    let mut model = init_cnn(51);
    let batch = random_batch(8, 52);
    let labels = [0, 1, 2, 3, 4, 5, 6, 7];
    let mut opt = TrainConfig::default().optimizer(&model);
    let mut losses = Vec::new();
    for _ in 0..50 {
        losses.push(train_step(&mut model, &mut opt, &batch, &labels).unwrap());
    }
    let ups = losses.windows(2).filter(|w| w[1] >= w[0]).count();
    assert!(ups <= 5, "{ups} non-decreasing steps: {losses:?}");
    assert!(losses[49] < losses[0]);
}

#[test]
fn binary_round_trip() {
    let mut model = init_cnn(61);
    model.bn2.running_var[3] = 2.5;
    let bytes = model.to_bytes();
    assert_eq!(&bytes[..8], CNN_MAGIC);
    let back = CnnModel::from_bytes(&bytes).unwrap();
    assert_eq!(back, model);
    let mut corrupt = bytes.clone();
    corrupt.truncate(bytes.len() - 8);
    assert!(CnnModel::from_bytes(&corrupt).is_err());
    let mut wrong_version = bytes;
    wrong_version[8] = 9;
    assert!(matches!(
        CnnModel::from_bytes(&wrong_version),
        Err(crate::error::Error::FormatVersion { found: 9, .. })
    ));
}

#[test]
fn label_aliases() {
    assert_eq!(speech_label_index("Angry"), Some(0));
    assert_eq!(speech_label_index("fear"), Some(3));
    assert_eq!(speech_label_index("surprise"), Some(7));
    assert_eq!(speech_label_index("bored"), None);
}
