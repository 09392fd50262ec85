//! Behavior tests for the assembled forecaster.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tecast_core::autodiff::{grad_check, Graph, Tensor};
use tecast_core::config::ModelConfig;
use tecast_core::dataset::{FeatureLayout, Sample, SampleMeta};
use tecast_core::tft::{quantile_loss, Batch, BoundParams, Mode, TftModel};

fn layout(v_static: usize, v_enc: usize, v_dec: usize) -> FeatureLayout {
    FeatureLayout {
        static_names: (0..v_static).map(|i| format!("s{i}")).collect(),
        encoder_names: (0..v_enc).map(|i| format!("e{i}")).collect(),
        decoder_names: (0..v_dec).map(|i| format!("d{i}")).collect(),
    }
}

fn sample(seed: usize, l: usize, h: usize, v_s: usize, v_e: usize, v_d: usize) -> Sample {
    let wave = |k: usize| ((seed * 31 + k * 17) as f64 * 0.37).sin();
    Sample {
        static_features: (0..v_s).map(wave).collect(),
        encoder_inputs: (0..l)
            .map(|t| (0..v_e).map(|v| wave(t * v_e + v)).collect())
            .collect(),
        decoder_known: (0..h)
            .map(|t| (0..v_d).map(|v| wave(100 + t * v_d + v)).collect())
            .collect(),
        targets: (0..h).map(|t| [wave(200 + t), wave(300 + t)]).collect(),
        meta: SampleMeta {
            origin_ts: 0,
            location_index: 0,
            lat: 40.0,
            lon: 10.0,
            ap_at_origin: 6.0,
            f107_at_origin: 120.0,
        },
    }
}

fn batch(b: usize, l: usize, h: usize, v_s: usize, v_e: usize, v_d: usize) -> Batch {
    let samples: Vec<Sample> = (0..b).map(|i| sample(i, l, h, v_s, v_e, v_d)).collect();
    Batch::from_samples(&samples).unwrap()
}

fn small_model(hidden: usize, l: usize, h: usize) -> (TftModel, ModelConfig) {
    let config = ModelConfig {
        hidden_size: hidden,
        attention_heads: 2,
        lstm_layers: 1,
        dropout_rate: 0.1,
        ..Default::default()
    };
    let model = TftModel::new(&config, l, h, &layout(2, 3, 2)).unwrap();
    (model, config)
}

#[test]
fn forward_output_shape_matches_contract() {
    // batch 3, H 24, 2 targets, 3 quantiles
    let config = ModelConfig {
        hidden_size: 8,
        attention_heads: 2,
        lstm_layers: 2,
        ..Default::default()
    };
    let model = TftModel::new(&config, 4, 24, &layout(2, 3, 2)).unwrap();
    let params = model.init_params(1);
    let b = batch(3, 4, 24, 2, 3, 2);
    let out = model.forward(&params, &b, Mode::Eval, None).unwrap();
    let preds = out.predictions_array(24, 2, 3);
    assert_eq!(preds.shape(), &[3, 24, 2, 3]);
}

#[test]
fn eval_forward_is_bitwise_deterministic() {
    let (model, _) = small_model(8, 4, 2);
    let params = model.init_params(7);
    let b = batch(2, 4, 2, 2, 3, 2);
    let a = model.forward(&params, &b, Mode::Eval, None).unwrap();
    let c = model.forward(&params, &b, Mode::Eval, None).unwrap();
    assert_eq!(a.predictions.detach(), c.predictions.detach());
    for (x, y) in a.record.attention.iter().zip(&c.record.attention) {
        assert_eq!(x, y);
    }
}

#[test]
fn train_mode_without_rng_is_a_missing_seed_error() {
    let (model, _) = small_model(8, 4, 2);
    let params = model.init_params(7);
    let b = batch(2, 4, 2, 2, 3, 2);
    let err = match model.forward(&params, &b, Mode::Train, None) {
        Err(e) => e,
        Ok(_) => panic!("train mode without an RNG must fail"),
    };
    assert!(err.to_string().contains("seed"), "{err}");
}

#[test]
fn train_mode_is_deterministic_given_rng_state() {
    let (model, _) = small_model(8, 4, 2);
    let params = model.init_params(7);
    let b = batch(2, 4, 2, 2, 3, 2);
    let run = |seed: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        model
            .forward(&params, &b, Mode::Train, Some(&mut rng))
            .unwrap()
            .predictions
            .detach()
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn dropout_rng_state_advances_across_calls() {
    let (model, _) = small_model(8, 4, 2);
    let params = model.init_params(7);
    let b = batch(2, 4, 2, 2, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let first = model
        .forward(&params, &b, Mode::Train, Some(&mut rng))
        .unwrap()
        .predictions
        .detach();
    let second = model
        .forward(&params, &b, Mode::Train, Some(&mut rng))
        .unwrap()
        .predictions
        .detach();
    assert_ne!(first, second, "mask source must advance between steps");
}

#[test]
fn gradients_reach_static_features_and_every_block() {
    let (model, config) = small_model(8, 4, 2);
    let params = model.init_params(7);
    let b = batch(2, 4, 2, 2, 3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let out = model
        .forward(&params, &b, Mode::Train, Some(&mut rng))
        .unwrap();
    let loss = quantile_loss(&out.predictions, &b.targets, &config.quantiles).unwrap();
    loss.backward().unwrap();
    let grads = out.bound.gradients(&params);
    let nonzero = |name: &str| {
        params
            .entries()
            .iter()
            .zip(&grads)
            .find(|((n, _), _)| n == name)
            .map(|(_, g)| g.data().iter().any(|&v| v != 0.0))
            .unwrap_or(false)
    };
    assert!(nonzero("embed.static0.w"), "static path got no gradient");
    assert!(nonzero("embed.encoder0.w"));
    assert!(nonzero("embed.decoder0.w"));
    assert!(nonzero("lstm.enc.l0.wx"));
    assert!(nonzero("attn.v.w"));
    assert!(nonzero("head.w"));
}

#[test]
fn variable_selection_weights_are_simplex_shaped() {
    let (model, _) = small_model(8, 4, 2);
    let params = model.init_params(7);
    let b = batch(3, 4, 2, 2, 3, 2);
    let out = model.forward(&params, &b, Mode::Eval, None).unwrap();
    for row in out.record.static_weights.data().chunks(2) {
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }
    for row in out.record.encoder_weights.data().chunks(3) {
        let s: f64 = row.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
        assert!(row.iter().all(|&w| w >= 0.0));
    }
}

#[test]
fn parameter_count_is_a_deterministic_function_of_config() {
    let (model, _) = small_model(8, 4, 2);
    let a = model.init_params(1);
    let b = model.init_params(1);
    assert_eq!(a.entries(), b.entries(), "same seed, same parameters");
    let c = model.init_params(2);
    assert_eq!(a.shapes(), c.shapes(), "shapes ignore the seed");
    assert_ne!(a.entries(), c.entries(), "values follow the seed");
}

#[test]
fn full_model_gradients_match_finite_differences() {
    let config = ModelConfig {
        hidden_size: 4,
        attention_heads: 2,
        lstm_layers: 1,
        dropout_rate: 0.0,
        ..Default::default()
    };
    let lay = layout(2, 2, 2);
    let model = TftModel::new(&config, 3, 2, &lay).unwrap();
    let params = model.init_params(13);
    let b = batch(2, 3, 2, 2, 2, 2);
    let points: Vec<Tensor> = params.entries().iter().map(|(_, t)| t.clone()).collect();
    let quantiles = config.quantiles.clone();
    let err = grad_check(
        |graph: &Graph, vars| {
            let bound = BoundParams::from_vars(&params, vars)?;
            let out = model.forward_bound(graph, bound, &b, Mode::Eval, None)?;
            quantile_loss(&out.predictions, &b.targets, &quantiles)
        },
        &points,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-5, "full-model gradient error {err}");
}
