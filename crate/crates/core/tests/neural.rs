//! Model forward passes, exact gradients and the training loop.

mod common;

use common::*;
use rankfuse_core::cp::{cp_als, AlsConfig};
use rankfuse_core::neural::{
    baseline_forward, batch_loss, evaluate, gradients, predict_logit, regularizer_value, t2fn_forward,
    tfn_fused, train, ModelDims, ModelParams, Optimizer, TrainConfig, Variant,
};
use rankfuse_core::noise::NoiseSpec;
use rankfuse_core::synth::MultimodalSequence;
use rankfuse_core::Matrix;

fn small_dims() -> ModelDims {
    ModelDims::new([3, 2, 4], [2, 3, 2]).unwrap()
}

fn batch(n: usize, steps: usize, dims: [usize; 3], seed: u64) -> Vec<MultimodalSequence> {
    let mut g = gen(seed);
    (0..n).map(|_| random_sequence(steps, dims, &mut g)).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[test]
fn finite_differences_match_analytic_gradients() {
    let dims = small_dims();
    let data = batch(2, 3, dims.inputs, 30);
    for variant in Variant::ALL {
        for lambda in [0.0, 0.01] {
            let p = ModelParams::init(variant, dims, 31);
            let cfg = TrainConfig {
                reg_weight: lambda,
                ..TrainConfig::default()
            };
            let (grad, _) = gradients(&p, &data, &cfg).unwrap();
            let analytic = grad.to_flat();
            let flat = p.to_flat();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for i in 0..flat.len() {
                let mut q = p.clone();
                let mut v = flat.clone();
                v[i] = flat[i] + h;
                q.assign_flat(&v).unwrap();
                let up = batch_loss(&q, &data, lambda).unwrap();
                v[i] = flat[i] - h;
                q.assign_flat(&v).unwrap();
                let down = batch_loss(&q, &data, lambda).unwrap();
                let numeric = (up - down) / (2.0 * h);
                let err = (numeric - analytic[i]).abs() / numeric.abs().max(analytic[i].abs()).max(1e-6);
                worst = worst.max(err);
            }
            assert!(worst < 1e-4, "{variant} lambda={lambda}: worst relative error {worst}");
        }
    }
}

#[test]
fn regularizer_equals_scaled_materialized_norm() {
    let dims = small_dims();
    let p = ModelParams::init(Variant::T2fn, dims, 32);
    for s in batch(3, 4, dims.inputs, 33) {
        let (fused, _) = t2fn_forward(&p, &s).unwrap();
        let explicit = fused.materialize().frobenius_norm().powi(2);
        // Fused shape 3×4×3: scale² = (3·4·3) / 4 = 9.
        assert_eq!(dims.fused_shape(), [3, 4, 3]);
        assert!(rel_diff(regularizer_value(&dims, &fused), 9.0 * explicit) < 1e-10);
    }
}

#[test]
fn doubling_lambda_doubles_the_penalty_term() {
    let dims = small_dims();
    let p = ModelParams::init(Variant::T2fn, dims, 34);
    let data = batch(3, 3, dims.inputs, 35);
    let l0 = batch_loss(&p, &data, 0.0).unwrap();
    let l1 = batch_loss(&p, &data, 0.01).unwrap();
    let l2 = batch_loss(&p, &data, 0.02).unwrap();
    assert!(rel_diff(l2 - l0, 2.0 * (l1 - l0)) < 1e-10);
}

#[test]
fn lstm_matches_hand_computation() {
    // One input, one hidden unit, two steps.
    let dims = ModelDims::new([1, 1, 1], [1, 1, 1]).unwrap();
    let mut p = ModelParams::zeros(Variant::LfLstm, dims);
    let enc = &mut p.encoders[0];
    // Rows: i, f, o, g; columns: x, h.
    let w = [[0.5, -0.3], [0.2, 0.4], [-0.6, 0.1], [0.9, -0.7]];
    let b = [0.1, -0.2, 0.3, 0.05];
    enc.weights = Matrix::from_rows(&w).unwrap();
    enc.bias = b.to_vec();
    let xs = [0.8, -0.5];
    let (mut h, mut c) = (0.0, 0.0);
    for x in xs {
        let a = |k: usize| w[k][0] * x + w[k][1] * h + b[k];
        let (i, f, o, g) = (sigmoid(a(0)), sigmoid(a(1)), sigmoid(a(2)), a(3).tanh());
        c = f * c + i * g;
        h = o * c.tanh();
    }
    let x = Matrix::from_rows(&[[xs[0]], [xs[1]]]).unwrap();
    let out = enc.forward(&x).unwrap();
    assert!((out.last_hidden()[0] - h).abs() < 1e-15);
}

#[test]
fn t2fn_fused_tensor_has_rank_at_most_steps() {
    let dims = ModelDims::new([3, 3, 3], [4, 4, 4]).unwrap();
    let p = ModelParams::init(Variant::T2fn, dims, 36);
    let cfg = AlsConfig {
        restarts: 5,
        max_iters: 5000,
        tol: 1e-14,
        ..AlsConfig::default()
    };
    for steps in 1..=3 {
        let s = &batch(1, steps, dims.inputs, 37 + steps as u64)[0];
        let (fused, _) = t2fn_forward(&p, s).unwrap();
        let (_, eps) = cp_als(&fused.materialize(), steps, &cfg).unwrap();
        assert!(eps <= 1e-5, "T={steps}: {eps}");
    }
}

#[test]
fn tfn_fused_tensor_is_rank_one() {
    let dims = ModelDims::new([4, 4, 4], [4, 4, 4]).unwrap();
    let p = ModelParams::init(Variant::Tfn, dims, 38);
    for s in batch(10, 5, dims.inputs, 39) {
        let (_, eps) = cp_als(&tfn_fused(&p, &s).unwrap().materialize(), 1, &AlsConfig::default()).unwrap();
        assert!(eps <= 1e-6, "{eps}");
    }
}

#[test]
fn single_step_t2fn_equals_tfn() {
    let dims = small_dims();
    let t2 = ModelParams::init(Variant::T2fn, dims, 40);
    let tfn = ModelParams {
        variant: Variant::Tfn,
        ..t2.clone()
    };
    for s in batch(4, 1, dims.inputs, 41) {
        let a = predict_logit(&t2, &s).unwrap();
        let b = baseline_forward(&tfn, &s).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn late_fusion_reads_final_hidden_states() {
    let dims = small_dims();
    let p = ModelParams::init(Variant::LfLstm, dims, 42);
    let s = &batch(1, 4, dims.inputs, 43)[0];
    let hidden = p.encode(s).unwrap();
    let repr: Vec<f64> = hidden.iter().flat_map(|h| h.row(3).to_vec()).collect();
    let expected = p.classifier.bias + repr.iter().zip(&p.classifier.weights).map(|(a, b)| a * b).sum::<f64>();
    assert!((predict_logit(&p, s).unwrap() - expected).abs() < 1e-12);
}

#[test]
fn early_fusion_with_zero_weights_outputs_bias() {
    let dims = small_dims();
    let mut p = ModelParams::init(Variant::EfLstm, dims, 44);
    p.classifier.weights.iter_mut().for_each(|w| *w = 0.0);
    p.classifier.bias = 0.37;
    for s in batch(3, 2, dims.inputs, 45) {
        assert_eq!(predict_logit(&p, &s).unwrap(), 0.37);
    }
}

#[test]
fn mismatched_dims_are_rejected() {
    let p = ModelParams::init(Variant::T2fn, small_dims(), 46);
    let s = &batch(1, 2, [1, 1, 1], 47)[0];
    assert!(predict_logit(&p, s).is_err());
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let dims = small_dims();
    let data = batch(8, 3, dims.inputs, 48);
    for optimizer in [Optimizer::Sgd, Optimizer::default()] {
        let p = ModelParams::init(Variant::T2fn, dims, 49);
        let cfg = TrainConfig {
            learning_rate: 0.0,
            epochs: 2,
            batch_size: 3,
            optimizer,
            reg_weight: 0.01,
            ..TrainConfig::default()
        };
        let out = train(&p, &data, &data[..2], &cfg, &NoiseSpec::clean()).unwrap();
        assert_eq!(out.params, p);
    }
}

#[test]
fn training_is_deterministic() {
    let dims = small_dims();
    let data = batch(12, 3, dims.inputs, 50);
    let p = ModelParams::init(Variant::T2fn, dims, 51);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        epochs: 3,
        batch_size: 4,
        reg_weight: 0.001,
        ..TrainConfig::default()
    };
    let noise = NoiseSpec::new(rankfuse_core::noise::NoiseKind::RandomDrop, 0.3, 52).unwrap();
    let a = train(&p, &data, &data[..4], &cfg, &noise).unwrap();
    let b = train(&p, &data, &data[..4], &cfg, &noise).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.metrics.len(), 3);
}

#[test]
fn untrained_models_are_at_chance_on_random_labels() {
    let dims = small_dims();
    let data = batch(1000, 3, dims.inputs, 53);
    let mut total = 0.0;
    let seeds = 0..4u64;
    for seed in seeds.clone() {
        total += evaluate(&ModelParams::init(Variant::T2fn, dims, seed), &data).unwrap();
    }
    let mean = total / seeds.count() as f64;
    assert!((mean - 0.5).abs() <= 0.05, "{mean}");
}
