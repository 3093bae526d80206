//! Group-happiness channel: a convolutional regressor whose convolution
//! layers are also trained to make a gradient-weighted attention map match a
//! precomputed saliency map.
//!
//! Attention: `w_k = mean(dy/dA_k)` over the cells of each last-layer
//! activation map `A_k`, `S_hat = ReLU(sum_k w_k A_k)`, min-max normalized to
//! `[0, 1]`. When differentiating the saliency loss the weights `w_k` are held
//! constant (stop-gradient), so the saliency loss reaches only the
//! convolution parameters.
//!
//! Training runs in two phases: plain SGD on the regression loss for all
//! parameters, then
//!
//! ```text
//! conv  <- conv  - eta * (dL_reg/dconv + lambda1 * dL_sal/dconv)
//! dense <- dense - eta * dL_reg/ddense
//! ```

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cnn::{prepare_input, Backbone, BackboneSpec, Maps, Trace};
use crate::error::{Error, Result};
use crate::modelfile::{ModelReader, ModelWriter};
use crate::raster::{resize_bilinear, RasterImage, RealGrid};

pub const MODEL_TYPE: &str = "scnn";
/// Happiness intensities run from 0 to 5.
pub const MAX_LABEL: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScnnConfig {
    pub backbone: BackboneSpec,
    pub eta: f64,
    pub lambda1: f64,
    pub batch_size: usize,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub seed: u64,
}

impl Default for ScnnConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneSpec::default(),
            eta: 1e-4,
            lambda1: 1e-3,
            batch_size: 5,
            epochs_phase1: 10,
            epochs_phase2: 10,
            seed: 0,
        }
    }
}

impl ScnnConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) {
            return Err(Error::Config("eta must be positive".into()));
        }
        if !(self.lambda1 >= 0.0) {
            return Err(Error::Config("lambda1 must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Regression loss only, all parameters.
    Regression,
    /// Regression plus saliency loss with the asymmetric update.
    Saliency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScnnModel {
    pub net: Backbone,
}

impl ScnnModel {
    pub fn new(config: &ScnnConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            net: Backbone::init(config.backbone.clone(), &mut rng, MAX_LABEL / 2.0)?,
        })
    }

    pub fn conv_params(&self) -> &[f64] {
        &self.net.conv_params
    }

    pub fn dense_params(&self) -> &[f64] {
        &self.net.dense_params
    }

    pub fn to_text(&self) -> String {
        let mut w = ModelWriter::new(MODEL_TYPE);
        w.comment("saliency-enforced happiness regressor; labels on a 0-5 scale");
        self.net.write_into(&mut w);
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let r = ModelReader::parse(text)?;
        r.expect_type(MODEL_TYPE)?;
        Ok(Self {
            net: Backbone::read_from(&r)?,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub image: RasterImage,
    pub label: f64,
    /// Ground-truth saliency in `[0, 1]`, any resolution.
    pub saliency: Option<RealGrid>,
}

impl TrainingSample {
    pub fn new(image: RasterImage, label: f64, saliency: Option<RealGrid>) -> Result<Self> {
        if !(0.0..=MAX_LABEL).contains(&label) {
            return Err(Error::InvalidArgument(format!(
                "happiness label {label} outside [0, 5]"
            )));
        }
        if let Some(s) = &saliency {
            if s.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::InvalidArgument(
                    "saliency values must lie in [0, 1]".into(),
                ));
            }
        }
        Ok(Self {
            image,
            label,
            saliency,
        })
    }
}

/// Sample converted to network input, with its saliency target resized to
/// the attention-map resolution.
struct Prepared {
    input: Maps,
    label: f64,
    saliency: Option<RealGrid>,
}

fn prepare(model: &ScnnModel, samples: &[TrainingSample]) -> Result<Vec<Prepared>> {
    let (h, w) = model.net.final_map_size();
    samples
        .iter()
        .map(|s| {
            Ok(Prepared {
                input: prepare_input(&s.image, model.net.input_size())?,
                label: s.label,
                saliency: s
                    .saliency
                    .as_ref()
                    .map(|g| resize_bilinear(g, w, h))
                    .transpose()?,
            })
        })
        .collect()
}

pub fn forward(model: &ScnnModel, image: &RasterImage) -> Result<Trace> {
    model
        .net
        .forward(&prepare_input(image, model.net.input_size())?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attention {
    /// One weight per last-layer activation map.
    pub weights: Vec<f64>,
    /// `ReLU(sum_k w_k A_k)` before normalization.
    pub raw: RealGrid,
    /// `raw` min-max normalized to `[0, 1]`; a flat map normalizes to zeros.
    pub map: RealGrid,
}

const FLAT_RANGE: f64 = 1e-12;

pub fn attention_map(model: &ScnnModel, trace: &Trace) -> Attention {
    let (_, d_maps) = model.net.backward_head(trace, 1.0);
    attention_with_weights(trace.final_maps(), &map_means(&d_maps))
}

fn map_means(m: &Maps) -> Vec<f64> {
    (0..m.channels)
        .map(|c| {
            let p = m.plane(c);
            p.iter().sum::<f64>() / p.len() as f64
        })
        .collect()
}

/// Attention map for given per-map weights.
pub fn attention_with_weights(maps: &Maps, weights: &[f64]) -> Attention {
    let cells = maps.height * maps.width;
    let mut z = vec![0.0; cells];
    for (k, w) in weights.iter().enumerate() {
        for (zi, a) in z.iter_mut().zip(maps.plane(k)) {
            *zi += w * a;
        }
    }
    let raw: Vec<f64> = z.iter().map(|v| v.max(0.0)).collect();
    let (lo, hi) = min_max(&raw);
    let map = if hi - lo > FLAT_RANGE {
        raw.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; cells]
    };
    Attention {
        weights: weights.to_vec(),
        raw: RealGrid::new(maps.width, maps.height, raw).expect("sized"),
        map: RealGrid::new(maps.width, maps.height, map).expect("sized"),
    }
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Losses {
    pub reg: f64,
    pub sal: f64,
}

pub fn regression_loss(model: &ScnnModel, batch: &[TrainingSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let mut total = 0.0;
    for s in batch {
        let e = forward(model, &s.image)?.prediction - s.label;
        total += e * e;
    }
    Ok(total / batch.len() as f64)
}

/// Regression and saliency losses; every sample must carry a saliency map.
pub fn losses(model: &ScnnModel, batch: &[TrainingSample]) -> Result<Losses> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    if let Some(i) = batch.iter().position(|s| s.saliency.is_none()) {
        return Err(Error::MissingSaliency(i));
    }
    let prepared = prepare(model, batch)?;
    let (mut reg, mut sal) = (0.0, 0.0);
    for p in &prepared {
        let trace = model.net.forward(&p.input)?;
        let e = trace.prediction - p.label;
        reg += e * e;
        let att = attention_map(model, &trace);
        sal += mean_sq_diff(att.map.data(), p.saliency.as_ref().unwrap().data());
    }
    let n = batch.len() as f64;
    Ok(Losses {
        reg: reg / n,
        sal: sal / n,
    })
}

fn mean_sq_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64
}

/// Gradients of one batch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// `dL_reg/dconv + lambda1 * dL_sal/dconv`.
    pub conv: Vec<f64>,
    /// `dL_reg/ddense`.
    pub dense: Vec<f64>,
    pub reg_loss: f64,
    pub sal_loss: Option<f64>,
}

pub fn gradients(
    model: &ScnnModel,
    batch: &[TrainingSample],
    lambda1: f64,
    with_saliency: bool,
) -> Result<Gradients> {
    if with_saliency {
        if let Some(i) = batch.iter().position(|s| s.saliency.is_none()) {
            return Err(Error::MissingSaliency(i));
        }
    }
    let prepared = prepare(model, batch)?;
    let refs: Vec<&Prepared> = prepared.iter().collect();
    prepared_gradients(model, &refs, lambda1, with_saliency)
}

fn prepared_gradients(
    model: &ScnnModel,
    batch: &[&Prepared],
    lambda1: f64,
    with_saliency: bool,
) -> Result<Gradients> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    let net = &model.net;
    let n = batch.len() as f64;
    let mut conv = vec![0.0; net.conv_params.len()];
    let mut dense = vec![0.0; net.dense_params.len()];
    let (mut reg_loss, mut sal_loss) = (0.0, 0.0);
    for p in batch {
        let trace = net.forward(&p.input)?;
        let err = trace.prediction - p.label;
        reg_loss += err * err;
        // the head is linear in its upstream gradient: backprop dy/dy = 1 once
        // and scale for the regression term
        let (dense_unit, d_unit) = net.backward_head(&trace, 1.0);
        let scale = 2.0 * err / n;
        for (g, u) in dense.iter_mut().zip(&dense_unit) {
            *g += scale * u;
        }
        let mut d_maps = Maps {
            data: d_unit.data.iter().map(|v| scale * v).collect(),
            ..d_unit.clone()
        };
        if with_saliency {
            let target = p.saliency.as_ref().expect("checked by caller");
            let weights = map_means(&d_unit);
            let (loss, d_sal) = saliency_backward(trace.final_maps(), &weights, target, n);
            sal_loss += loss;
            if lambda1 != 0.0 {
                for (d, s) in d_maps.data.iter_mut().zip(&d_sal.data) {
                    *d += lambda1 * s;
                }
            }
        }
        for (g, c) in conv.iter_mut().zip(net.backward_conv(&trace, &d_maps)) {
            *g += c;
        }
    }
    Ok(Gradients {
        conv,
        dense,
        reg_loss: reg_loss / n,
        sal_loss: with_saliency.then_some(sal_loss / n),
    })
}

/// Per-sample saliency loss and its gradient with respect to the activation
/// maps, weights held fixed. The gradient already carries the `1/n` batch
/// factor; the returned loss does not.
fn saliency_backward(maps: &Maps, weights: &[f64], target: &RealGrid, n: f64) -> (f64, Maps) {
    let cells = maps.height * maps.width;
    let att = attention_with_weights(maps, weights);
    let s_hat = att.map.data();
    let s = target.data();
    let loss = mean_sq_diff(s_hat, s);

    let g: Vec<f64> = s_hat
        .iter()
        .zip(s)
        .map(|(a, b)| 2.0 * (a - b) / (cells as f64 * n))
        .collect();

    let raw = att.raw.data();
    let mut d_raw = vec![0.0; cells];
    let (lo, hi) = min_max(raw);
    let range = hi - lo;
    if range > FLAT_RANGE {
        let arg_lo = raw.iter().position(|&v| v == lo).unwrap();
        let arg_hi = raw.iter().position(|&v| v == hi).unwrap();
        let sum_g: f64 = g.iter().sum();
        let sum_gs: f64 = g.iter().zip(s_hat).map(|(a, b)| a * b).sum();
        for (d, gi) in d_raw.iter_mut().zip(&g) {
            *d = gi / range;
        }
        d_raw[arg_lo] += (sum_gs - sum_g) / range;
        d_raw[arg_hi] -= sum_gs / range;
    }

    let mut d_maps = Maps::zeros(maps.channels, maps.height, maps.width);
    for (k, w) in weights.iter().enumerate() {
        for cell in 0..cells {
            // ReLU: raw > 0 exactly where the pre-activation is positive
            if raw[cell] > 0.0 {
                d_maps.data[k * cells + cell] = w * d_raw[cell];
            }
        }
    }
    (loss, d_maps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepReport {
    pub reg_loss: f64,
    pub sal_loss: Option<f64>,
}

pub fn train_step(
    model: &mut ScnnModel,
    batch: &[TrainingSample],
    config: &ScnnConfig,
    phase: Phase,
) -> Result<StepReport> {
    config.validate()?;
    let with_saliency = phase == Phase::Saliency;
    if with_saliency {
        if let Some(i) = batch.iter().position(|s| s.saliency.is_none()) {
            return Err(Error::MissingSaliency(i));
        }
    }
    let prepared = prepare(model, batch)?;
    let refs: Vec<&Prepared> = prepared.iter().collect();
    step_prepared(model, &refs, config, phase)
}

fn step_prepared(
    model: &mut ScnnModel,
    batch: &[&Prepared],
    config: &ScnnConfig,
    phase: Phase,
) -> Result<StepReport> {
    let with_saliency = phase == Phase::Saliency;
    let lambda1 = if with_saliency { config.lambda1 } else { 0.0 };
    let g = prepared_gradients(model, batch, lambda1, with_saliency)?;
    let finite = g.reg_loss.is_finite()
        && g.sal_loss.is_none_or(f64::is_finite)
        && g.conv.iter().chain(&g.dense).all(|v| v.is_finite());
    if !finite {
        return Err(Error::Divergence(format!(
            "non-finite loss or gradient (L_reg = {}, L_sal = {:?})",
            g.reg_loss, g.sal_loss
        )));
    }
    for (p, d) in model.net.conv_params.iter_mut().zip(&g.conv) {
        *p -= config.eta * d;
    }
    for (p, d) in model.net.dense_params.iter_mut().zip(&g.dense) {
        *p -= config.eta * d;
    }
    Ok(StepReport {
        reg_loss: g.reg_loss,
        sal_loss: g.sal_loss,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLoss {
    pub phase: Phase,
    pub epoch: usize,
    /// Mean of the batch losses seen during the epoch.
    pub reg_loss: f64,
    pub sal_loss: Option<f64>,
}

/// Both training phases with seeded shuffling; returns the per-epoch history.
pub fn train(
    model: &mut ScnnModel,
    dataset: &[TrainingSample],
    config: &ScnnConfig,
) -> Result<Vec<EpochLoss>> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::Empty("happiness training set"));
    }
    if config.epochs_phase2 > 0 {
        if let Some(i) = dataset.iter().position(|s| s.saliency.is_none()) {
            return Err(Error::MissingSaliency(i));
        }
    }
    let prepared = prepare(model, dataset)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut history = Vec::new();
    let schedule = [
        (Phase::Regression, config.epochs_phase1),
        (Phase::Saliency, config.epochs_phase2),
    ];
    for (phase, epochs) in schedule {
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let (mut reg, mut sal, mut batches) = (0.0, 0.0, 0usize);
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<&Prepared> = chunk.iter().map(|&i| &prepared[i]).collect();
                let r = step_prepared(model, &batch, config, phase)?;
                reg += r.reg_loss;
                sal += r.sal_loss.unwrap_or(0.0);
                batches += 1;
            }
            let b = batches as f64;
            history.push(EpochLoss {
                phase,
                epoch,
                reg_loss: reg / b,
                sal_loss: (phase == Phase::Saliency).then_some(sal / b),
            });
        }
    }
    Ok(history)
}

/// Raw happiness prediction on the 0-5 scale (unclamped).
pub fn predict_raw(model: &ScnnModel, image: &RasterImage) -> Result<f64> {
    Ok(forward(model, image)?.prediction)
}

/// Channel score: prediction divided by 5 and clamped to `[0, 1]`.
pub fn predict_emotion(model: &ScnnModel, image: &RasterImage) -> Result<f64> {
    Ok(normalize_prediction(predict_raw(model, image)?))
}

pub fn normalize_prediction(y: f64) -> f64 {
    (y / MAX_LABEL).clamp(0.0, 1.0)
}

pub fn mean_absolute_error(predictions: &[f64], labels: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / predictions.len() as f64)
}

pub fn evaluate_mae(model: &ScnnModel, dataset: &[TrainingSample]) -> Result<f64> {
    let preds = dataset
        .iter()
        .map(|s| predict_raw(model, &s.image))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<f64> = dataset.iter().map(|s| s.label).collect();
    mean_absolute_error(&preds, &labels)
}
