mod common;

use common::checks;
use grouprank::cnn::{Backbone, BackboneSpec, ConvSpec, Maps};
use grouprank::emotion::{self, Phase, ScnnConfig, ScnnModel, TrainingSample};
use grouprank::fusion::RankNetInput;
use grouprank::raster::RasterImage;

#[test]
fn scnn_regression_gradient_matches_finite_differences() {
    for seed in [1, 2, 3] {
        let r = checks::scnn_regression(seed);
        assert!(r.passes(1e-4), "seed {seed}: {r:?}");
    }
}

#[test]
fn scnn_saliency_gradient_matches_finite_differences() {
    for seed in [1, 2, 3] {
        let r = checks::scnn_saliency(seed);
        assert!(r.passes(1e-4), "seed {seed}: {r:?}");
    }
}

#[test]
fn aesthetics_gradient_matches_finite_differences() {
    for seed in [4, 5] {
        let r = checks::aesthetics(seed);
        assert!(r.passes(1e-4), "seed {seed}: {r:?}");
    }
}

#[test]
fn ranknet_gradient_matches_finite_differences() {
    for seed in [6, 7] {
        for input in [RankNetInput::Fused, RankNetInput::Raw] {
            let r = checks::ranknet(seed, input);
            assert!(r.passes(1e-6), "seed {seed} {input:?}: {r:?}");
        }
    }
}

/// 4x4 input `x[r][c] = (4r + c) / 16`, one 3x3 filter of ninths (a box
/// mean, so each output is the centre pixel), dense weights `[1, -1, 0.5, 2]`
/// and bias 0.25.
fn hand_network() -> (ScnnModel, RasterImage) {
    let spec = BackboneSpec {
        input_size: 4,
        conv: vec![ConvSpec {
            filters: 1,
            kernel: 3,
            stride: 1,
            pool: false,
        }],
        dense: vec![1],
    };
    let mut net = Backbone::zeros(spec).unwrap();
    net.conv_params[..9].fill(1.0 / 9.0);
    net.conv_params[9] = 0.0;
    net.dense_params
        .copy_from_slice(&[1.0, -1.0, 0.5, 2.0, 0.25]);
    let pixels = (0..16).map(|i| 255.0 * i as f64 / 16.0).collect();
    (
        ScnnModel { net },
        RasterImage::new(4, 4, 1, pixels).unwrap(),
    )
}

#[test]
fn hand_computed_forward_value() {
    let (model, image) = hand_network();
    // activations 5/16, 6/16, 9/16, 10/16
    // y = (5 - 6 + 4.5 + 20) / 16 + 0.25 = 1.71875
    let y = emotion::predict_raw(&model, &image).unwrap();
    assert!((y - 1.71875).abs() < 1e-12, "{y}");
}

#[test]
fn hand_computed_single_step() {
    let (mut model, image) = hand_network();
    let label = 1.0;
    let eta = 0.1;
    let sample = TrainingSample::new(image, label, None).unwrap();
    let config = ScnnConfig {
        eta,
        ..ScnnConfig::default()
    };
    emotion::train_step(&mut model, &[sample], &config, Phase::Regression).unwrap();

    let x = |r: usize, c: usize| (4 * r + c) as f64 / 16.0;
    let a = [x(1, 1), x(1, 2), x(2, 1), x(2, 2)];
    let v = [1.0, -1.0, 0.5, 2.0];
    let err = 1.71875 - label;
    let d = 2.0 * err;

    let mut dense = vec![0.0; 5];
    for k in 0..4 {
        dense[k] = v[k] - eta * d * a[k];
    }
    dense[4] = 0.25 - eta * d;
    for (got, want) in model.net.dense_params.iter().zip(&dense) {
        assert!((got - want).abs() < 1e-10, "dense {got} vs {want}");
    }

    let mut conv = vec![0.0; 10];
    for ky in 0..3 {
        for kx in 0..3 {
            let g: f64 = (0..2)
                .flat_map(|oy| (0..2).map(move |ox| (oy, ox)))
                .map(|(oy, ox)| d * v[oy * 2 + ox] * x(oy + ky, ox + kx))
                .sum();
            conv[ky * 3 + kx] = 1.0 / 9.0 - eta * g;
        }
    }
    conv[9] = -eta * d * v.iter().sum::<f64>();
    for (got, want) in model.net.conv_params.iter().zip(&conv) {
        assert!((got - want).abs() < 1e-10, "conv {got} vs {want}");
    }
}

#[test]
fn saliency_phase_updates_only_conv_parameters() {
    let (model, batch) = checks::zero_regression_batch(11);
    let g = emotion::gradients(&model, &batch, 1.0, true).unwrap();
    assert!(g.sal_loss.unwrap() > 0.0);
    assert!(g.conv.iter().any(|v| *v != 0.0));

    let mut stepped = model.clone();
    let config = ScnnConfig {
        eta: 0.5,
        lambda1: 1e-3,
        backbone: common::micro_spec(),
        ..ScnnConfig::default()
    };
    emotion::train_step(&mut stepped, &batch, &config, Phase::Saliency).unwrap();
    assert_eq!(stepped.net.dense_params, model.net.dense_params);
    assert!(stepped
        .net
        .conv_params
        .iter()
        .zip(&model.net.conv_params)
        .any(|(a, b)| a != b));
}

#[test]
fn zero_lambda_phase_two_equals_phase_one() {
    let model = checks::scnn_model(21);
    let batch = common::emotion_batch(22, 3, 8);
    let config = ScnnConfig {
        eta: 0.01,
        lambda1: 0.0,
        backbone: common::micro_spec(),
        ..ScnnConfig::default()
    };
    let mut a = model.clone();
    let mut b = model;
    emotion::train_step(&mut a, &batch, &config, Phase::Regression).unwrap();
    emotion::train_step(&mut b, &batch, &config, Phase::Saliency).unwrap();
    assert_eq!(a, b);
}

#[test]
fn saliency_phase_requires_maps() {
    let model = checks::scnn_model(1);
    let mut batch = common::emotion_batch(2, 2, 8);
    batch[1].saliency = None;
    let config = ScnnConfig {
        backbone: common::micro_spec(),
        ..ScnnConfig::default()
    };
    let mut m = model.clone();
    assert!(matches!(
        emotion::train_step(&mut m, &batch, &config, Phase::Saliency),
        Err(grouprank::Error::MissingSaliency(1))
    ));
    assert!(emotion::train_step(&mut m, &batch, &config, Phase::Regression).is_ok());
}

#[test]
fn flat_attention_has_zero_saliency_gradient() {
    let mut model = checks::scnn_model(3);
    model.net.conv_params.iter_mut().for_each(|p| *p = 0.0);
    let batch = common::emotion_batch(4, 2, 8);
    let with = emotion::gradients(&model, &batch, 1.0, true).unwrap();
    let without = emotion::gradients(&model, &batch, 0.0, true).unwrap();
    assert_eq!(with.conv, without.conv);
    let trace = emotion::forward(&model, &batch[0].image).unwrap();
    let att = emotion::attention_map(&model, &trace);
    assert!(att.map.data().iter().all(|v| *v == 0.0));
    let maps: &Maps = trace.final_maps();
    assert!(maps.data.iter().all(|v| *v == 0.0));
}
