mod common;

use grouprank::aesthetics::{
    self, delta, loss_from_predictions, pair_loss, AestheticPair, AestheticsConfig, AestheticsModel,
};
use grouprank::emotion::{self, Phase, ScnnConfig, ScnnModel, TrainingSample};
use grouprank::raster::{RasterImage, RealGrid};
use grouprank::Error;

fn scnn_config(seed: u64) -> ScnnConfig {
    ScnnConfig {
        backbone: common::saliency::spec(),
        eta: 1e-2,
        batch_size: 4,
        epochs_phase1: 200,
        epochs_phase2: 3,
        seed,
        ..ScnnConfig::default()
    }
}

#[test]
fn emotion_training_reduces_regression_loss() {
    let data = common::saliency::marked_patches(12, 3);
    let config = scnn_config(3);
    let mut model = ScnnModel::new(&config).unwrap();
    let before = emotion::regression_loss(&model, &data).unwrap();
    let history = emotion::train(&mut model, &data, &config).unwrap();
    assert_eq!(history.len(), 203);
    assert_eq!(history[0].phase, Phase::Regression);
    assert!(history[0].sal_loss.is_none());
    assert_eq!(history[202].phase, Phase::Saliency);
    assert!(history[202].sal_loss.is_some());
    let after = emotion::regression_loss(&model, &data).unwrap();
    assert!(after < 0.5 * before, "{before} -> {after}");
    assert!(emotion::evaluate_mae(&model, &data).unwrap() < 1.0);
}

#[test]
fn emotion_training_is_deterministic() {
    let data = common::saliency::marked_patches(6, 4);
    let config = ScnnConfig {
        epochs_phase1: 5,
        ..scnn_config(4)
    };
    let run = || {
        let mut m = ScnnModel::new(&config).unwrap();
        let h = emotion::train(&mut m, &data, &config).unwrap();
        (m.to_text(), h)
    };
    assert_eq!(run(), run());
}

#[test]
fn phase_two_needs_saliency_maps() {
    let mut data = common::saliency::marked_patches(4, 5);
    data[2].saliency = None;
    let config = scnn_config(5);
    let mut model = ScnnModel::new(&config).unwrap();
    assert!(matches!(
        emotion::train(&mut model, &data, &config),
        Err(Error::MissingSaliency(2))
    ));
    let phase1_only = ScnnConfig {
        epochs_phase2: 0,
        epochs_phase1: 1,
        ..config
    };
    assert!(emotion::train(&mut model, &data, &phase1_only).is_ok());
}

#[test]
fn saliency_enforcement_lowers_attention_error() {
    for seed in [2, 6] {
        let e = common::saliency_protocol::standard(seed);
        assert!(e.reg_after_phase1 < 1e-6, "{}", e.reg_after_phase1);
        assert!(
            e.with_lambda < e.without_lambda,
            "{} vs {}",
            e.with_lambda,
            e.without_lambda
        );
    }
}

#[test]
fn scnn_model_file_round_trip() {
    let model = ScnnModel::new(&scnn_config(8)).unwrap();
    let text = model.to_text();
    assert_eq!(ScnnModel::from_text(&text).unwrap(), model);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.model");
    model.save(&path).unwrap();
    assert_eq!(ScnnModel::load(&path).unwrap(), model);
    assert!(ScnnModel::from_text(&text.replacen("scnn", "aesthetics", 1)).is_err());
    let truncated: String = text.lines().take(3).collect::<Vec<_>>().join("\n");
    assert!(ScnnModel::from_text(&truncated).is_err());
}

#[test]
fn training_sample_validation() {
    let img = RasterImage::new(4, 4, 1, vec![0.0; 16]).unwrap();
    assert!(TrainingSample::new(img.clone(), f64::NAN, None).is_err());
    let bad = RealGrid::filled(3, 3, 2.0);
    assert!(TrainingSample::new(img, 1.0, Some(bad)).is_err());
}

#[test]
fn emotion_score_normalization() {
    assert_eq!(emotion::normalize_prediction(2.5), 0.5);
    assert_eq!(emotion::normalize_prediction(-1.0), 0.0);
    assert_eq!(emotion::normalize_prediction(7.0), 1.0);
    assert!(emotion::mean_absolute_error(&[], &[]).is_err());
    assert_eq!(
        emotion::mean_absolute_error(&[1.0, 3.0], &[2.0, 2.0]).unwrap(),
        1.0
    );
}

#[test]
fn hinge_sign_convention() {
    assert_eq!(delta(0.7, 0.2), 1.0);
    assert_eq!(delta(0.2, 0.7), -1.0);
    assert_eq!(delta(0.5, 0.5), 1.0);
    // correctly ordered by more than the margin
    assert_eq!(pair_loss(0.9, 0.1, 0.8, 0.2, 0.5), 0.0);
    // wrong order: alpha + |gap|
    assert!((pair_loss(0.1, 0.9, 0.8, 0.2, 0.5) - 1.3).abs() < 1e-12);
    assert!((pair_loss(0.9, 0.1, 0.2, 0.8, 0.5) - 1.3).abs() < 1e-12);
}

#[test]
fn combined_loss_worked_value() {
    // reg: ((0.1)^2 + (0.2)^2) / 2 = 0.025; hinge: 0.5 - 0.3 = 0.2, times 2 / 2
    let l = loss_from_predictions(&[(0.6, 0.3)], &[(0.5, 0.1)], 2.0, 0.5);
    assert!((l - 0.225).abs() < 1e-12, "{l}");
    assert_eq!(
        loss_from_predictions(&[(0.6, 0.3)], &[(0.5, 0.1)], 0.0, 0.5),
        loss_from_predictions(&[(0.6, 0.3)], &[(0.5, 0.1)], 0.0, 9.0)
    );
}

fn brightness_pairs(n: usize, seed: u64) -> Vec<AestheticPair> {
    use rand::Rng;
    let mut r = common::rng(seed);
    let mut image = |level: f64| {
        let data = (0..100)
            .map(|_| (255.0 * level + r.random_range(-10.0..10.0)).clamp(0.0, 255.0))
            .collect();
        RasterImage::new(10, 10, 1, data).unwrap()
    };
    let mut levels = common::rng(seed + 1);
    (0..n)
        .map(|_| {
            let (a, b): (f64, f64) = (levels.random(), levels.random());
            AestheticPair {
                image_a: image(a),
                image_b: image(b),
                score_a: a,
                score_b: b,
            }
        })
        .collect()
}

#[test]
fn aesthetics_training_orders_pairs() {
    let pairs = brightness_pairs(30, 9);
    let config = AestheticsConfig {
        backbone: common::small_spec(),
        eta: 3e-2,
        epochs: 40,
        seed: 9,
        ..AestheticsConfig::default()
    };
    let mut model = AestheticsModel::new(&config).unwrap();
    let before = aesthetics::batch_loss(&model, &pairs, &config).unwrap();
    let history = aesthetics::train_aesthetics(&mut model, &pairs, &config).unwrap();
    assert_eq!(history.len(), 40);
    let after = aesthetics::batch_loss(&model, &pairs, &config).unwrap();
    assert!(after < before, "{before} -> {after}");
    let ordered = pairs
        .iter()
        .filter(|p| {
            let a = aesthetics::predict_raw(&model, &p.image_a).unwrap();
            let b = aesthetics::predict_raw(&model, &p.image_b).unwrap();
            (a > b) == (p.score_a > p.score_b)
        })
        .count();
    assert!(ordered >= 27, "{ordered}/30");
    assert!(model.score_min < model.score_max);
    for p in &pairs {
        let s = aesthetics::predict_aesthetics(&model, &p.image_a).unwrap();
        assert!((0.0..=1.0).contains(&s));
    }

    let text = model.to_text();
    assert_eq!(AestheticsModel::from_text(&text).unwrap(), model);
    let mut again = AestheticsModel::new(&config).unwrap();
    aesthetics::train_aesthetics(&mut again, &pairs, &config).unwrap();
    assert_eq!(again.to_text(), text);
}

#[test]
fn aesthetics_step_matches_gradient() {
    let pairs = common::checks::aesthetics_pairs(1, 3);
    let config = AestheticsConfig {
        backbone: common::micro_spec(),
        eta: 0.1,
        ..AestheticsConfig::default()
    };
    let model = AestheticsModel::new(&config).unwrap();
    let g = aesthetics::batch_gradients(&model, &pairs, &config).unwrap();
    let mut stepped = model.clone();
    let loss = aesthetics::train_step(&mut stepped, &pairs, &config).unwrap();
    assert_eq!(loss, g.loss);
    for ((after, before), d) in stepped
        .net
        .dense_params
        .iter()
        .zip(&model.net.dense_params)
        .zip(&g.dense)
    {
        assert_eq!(*after, before - 0.1 * d);
    }
    assert!(aesthetics::train_step(&mut stepped, &[], &config).is_err());
}
