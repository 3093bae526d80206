//! Aesthetics channel: a convolutional regressor trained in siamese fashion
//! on image pairs with a squared-error term plus a pairwise hinge term,
//!
//! ```text
//! L = 1/(2N) sum_images (y_hat - y)^2
//!   + lambda2/(2N) sum_pairs max(0, alpha - delta(y_i, y_j) (y_hat_i - y_hat_j))
//! ```
//!
//! where `N` is the number of pairs and `delta` is `+1` when `y_i >= y_j`.
//! Both towers share one parameter set.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::cnn::{prepare_input, Backbone, BackboneSpec, Maps};
use crate::error::{Error, Result};
use crate::modelfile::{ModelReader, ModelWriter};
use crate::quality::normalize_score;
use crate::raster::RasterImage;

pub const MODEL_TYPE: &str = "aesthetics";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AestheticsConfig {
    pub backbone: BackboneSpec,
    pub lambda2: f64,
    pub alpha: f64,
    pub eta: f64,
    pub batch_pairs: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for AestheticsConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneSpec::default(),
            lambda2: 1.0,
            alpha: 0.5,
            eta: 1e-3,
            batch_pairs: 5,
            epochs: 10,
            seed: 0,
        }
    }
}

impl AestheticsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !(self.lambda2 >= 0.0) {
            return Err(Error::Config(
                "alpha and lambda2 must be non-negative".into(),
            ));
        }
        if !(self.eta > 0.0) {
            return Err(Error::Config("eta must be positive".into()));
        }
        if self.batch_pairs == 0 {
            return Err(Error::Config("batch_pairs must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AestheticsModel {
    pub net: Backbone,
    /// Raw-score range over the training images.
    pub score_min: f64,
    pub score_max: f64,
}

impl AestheticsModel {
    pub fn new(config: &AestheticsConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        Ok(Self {
            net: Backbone::init(config.backbone.clone(), &mut rng, 0.5)?,
            score_min: 0.0,
            score_max: 1.0,
        })
    }

    pub fn to_text(&self) -> String {
        let mut w = ModelWriter::new(MODEL_TYPE);
        w.comment("siamese-trained aesthetics regressor");
        w.real("score_min", self.score_min);
        w.real("score_max", self.score_max);
        self.net.write_into(&mut w);
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let r = ModelReader::parse(text)?;
        r.expect_type(MODEL_TYPE)?;
        Ok(Self {
            net: Backbone::read_from(&r)?,
            score_min: r.real("score_min")?,
            score_max: r.real("score_max")?,
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
pub struct AestheticPair {
    pub image_a: RasterImage,
    pub image_b: RasterImage,
    pub score_a: f64,
    pub score_b: f64,
}

/// `+1` when `y_i >= y_j`, otherwise `-1`.
pub fn delta(y_i: f64, y_j: f64) -> f64 {
    if y_i >= y_j {
        1.0
    } else {
        -1.0
    }
}

pub fn pair_loss(pred_i: f64, pred_j: f64, y_i: f64, y_j: f64, alpha: f64) -> f64 {
    (alpha - delta(y_i, y_j) * (pred_i - pred_j)).max(0.0)
}

/// Loss for given predictions `(y_hat_a, y_hat_b)` and labels `(y_a, y_b)`
/// of each pair.
pub fn loss_from_predictions(
    preds: &[(f64, f64)],
    labels: &[(f64, f64)],
    lambda2: f64,
    alpha: f64,
) -> f64 {
    let two_n = 2.0 * preds.len() as f64;
    let mut reg = 0.0;
    let mut hinge = 0.0;
    for (&(pa, pb), &(ya, yb)) in preds.iter().zip(labels) {
        reg += (pa - ya).powi(2) + (pb - yb).powi(2);
        hinge += pair_loss(pa, pb, ya, yb, alpha);
    }
    reg / two_n + lambda2 / two_n * hinge
}

struct PreparedPair {
    a: Maps,
    b: Maps,
    score_a: f64,
    score_b: f64,
}

fn prepare(model: &AestheticsModel, pairs: &[AestheticPair]) -> Result<Vec<PreparedPair>> {
    let size = model.net.input_size();
    pairs
        .iter()
        .map(|p| {
            if !p.score_a.is_finite() || !p.score_b.is_finite() {
                return Err(Error::InvalidArgument("non-finite aesthetics score".into()));
            }
            Ok(PreparedPair {
                a: prepare_input(&p.image_a, size)?,
                b: prepare_input(&p.image_b, size)?,
                score_a: p.score_a,
                score_b: p.score_b,
            })
        })
        .collect()
}

pub fn batch_loss(
    model: &AestheticsModel,
    pairs: &[AestheticPair],
    config: &AestheticsConfig,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair batch"));
    }
    let prepared = prepare(model, pairs)?;
    let mut preds = Vec::with_capacity(pairs.len());
    for p in &prepared {
        preds.push((model.net.predict(&p.a)?, model.net.predict(&p.b)?));
    }
    let labels: Vec<(f64, f64)> = prepared.iter().map(|p| (p.score_a, p.score_b)).collect();
    Ok(loss_from_predictions(
        &preds,
        &labels,
        config.lambda2,
        config.alpha,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub loss: f64,
    pub conv: Vec<f64>,
    pub dense: Vec<f64>,
}

pub fn batch_gradients(
    model: &AestheticsModel,
    pairs: &[AestheticPair],
    config: &AestheticsConfig,
) -> Result<Gradients> {
    let prepared = prepare(model, pairs)?;
    let refs: Vec<&PreparedPair> = prepared.iter().collect();
    prepared_gradients(model, &refs, config)
}

fn prepared_gradients(
    model: &AestheticsModel,
    pairs: &[&PreparedPair],
    config: &AestheticsConfig,
) -> Result<Gradients> {
    if pairs.is_empty() {
        return Err(Error::Empty("pair batch"));
    }
    let net = &model.net;
    let two_n = 2.0 * pairs.len() as f64;
    let mut conv = vec![0.0; net.conv_params.len()];
    let mut dense = vec![0.0; net.dense_params.len()];
    let mut loss = 0.0;
    for p in pairs {
        let ta = net.forward(&p.a)?;
        let tb = net.forward(&p.b)?;
        let (pa, pb) = (ta.prediction, tb.prediction);
        let mut da = 2.0 * (pa - p.score_a) / two_n;
        let mut db = 2.0 * (pb - p.score_b) / two_n;
        loss += ((pa - p.score_a).powi(2) + (pb - p.score_b).powi(2)) / two_n;
        let sign = delta(p.score_a, p.score_b);
        let hinge = config.alpha - sign * (pa - pb);
        if hinge > 0.0 {
            loss += config.lambda2 / two_n * hinge;
            da -= config.lambda2 / two_n * sign;
            db += config.lambda2 / two_n * sign;
        }
        for (trace, d) in [(&ta, da), (&tb, db)] {
            if d == 0.0 {
                continue;
            }
            let (gd, d_maps) = net.backward_head(trace, d);
            for (g, v) in dense.iter_mut().zip(gd) {
                *g += v;
            }
            for (g, v) in conv.iter_mut().zip(net.backward_conv(trace, &d_maps)) {
                *g += v;
            }
        }
    }
    Ok(Gradients { loss, conv, dense })
}

fn apply(model: &mut AestheticsModel, g: &Gradients, eta: f64) -> Result<()> {
    if !g.loss.is_finite() || g.conv.iter().chain(&g.dense).any(|v| !v.is_finite()) {
        return Err(Error::Divergence(format!("aesthetics loss {}", g.loss)));
    }
    for (p, d) in model.net.conv_params.iter_mut().zip(&g.conv) {
        *p -= eta * d;
    }
    for (p, d) in model.net.dense_params.iter_mut().zip(&g.dense) {
        *p -= eta * d;
    }
    Ok(())
}

/// One SGD step on a pair batch; returns the batch loss before the update.
pub fn train_step(
    model: &mut AestheticsModel,
    pairs: &[AestheticPair],
    config: &AestheticsConfig,
) -> Result<f64> {
    config.validate()?;
    let g = batch_gradients(model, pairs, config)?;
    apply(model, &g, config.eta)?;
    Ok(g.loss)
}

/// Seeded SGD over pair batches. Records the raw-score bounds of the training
/// images afterwards and returns the mean batch loss of each epoch.
pub fn train_aesthetics(
    model: &mut AestheticsModel,
    pairs: &[AestheticPair],
    config: &AestheticsConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("aesthetics training pairs"));
    }
    let prepared = prepare(model, pairs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut batches) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_pairs) {
            let batch: Vec<&PreparedPair> = chunk.iter().map(|&i| &prepared[i]).collect();
            let g = prepared_gradients(model, &batch, config)?;
            apply(model, &g, config.eta)?;
            total += g.loss;
            batches += 1;
        }
        history.push(total / batches as f64);
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for p in &prepared {
        for m in [&p.a, &p.b] {
            let v = model.net.predict(m)?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    model.score_min = lo;
    model.score_max = hi;
    Ok(history)
}

pub fn predict_raw(model: &AestheticsModel, image: &RasterImage) -> Result<f64> {
    model
        .net
        .predict(&prepare_input(image, model.net.input_size())?)
}

/// Channel score: raw prediction min-max normalized by the training bounds,
/// clamped to `[0, 1]`.
pub fn predict_aesthetics(model: &AestheticsModel, image: &RasterImage) -> Result<f64> {
    Ok(normalize_score(
        predict_raw(model, image)?,
        model.score_min,
        model.score_max,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_cases() {
        assert_eq!(delta(2.0, 1.0), 1.0);
        assert_eq!(delta(1.0, 2.0), -1.0);
        assert_eq!(delta(1.0, 1.0), 1.0);
    }

    #[test]
    fn pair_loss_cases() {
        assert!((pair_loss(0.8, 0.5, 2.0, 1.0, 0.5) - 0.2).abs() < 1e-12);
        assert_eq!(pair_loss(1.4, 0.5, 2.0, 1.0, 0.5), 0.0);
        assert!((pair_loss(0.8, 0.5, 1.0, 2.0, 0.5) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn order_invariant_for_strict_labels() {
        for &(pa, pb, ya, yb) in &[(0.3, 0.9, 1.0, 2.0), (2.0, -1.0, 5.0, 0.5)] {
            let ab = pair_loss(pa, pb, ya, yb, 0.5);
            let ba = pair_loss(pb, pa, yb, ya, 0.5);
            assert_eq!(ab, ba);
        }
    }

    #[test]
    fn loss_from_predictions_examples() {
        // lambda2 = 0: plain mean squared error over the 2N images
        let preds = [(1.0, 2.0), (0.0, 0.5)];
        let labels = [(1.5, 2.0), (0.0, 0.0)];
        let mse = (0.25 + 0.0 + 0.0 + 0.25) / 4.0;
        assert!((loss_from_predictions(&preds, &labels, 0.0, 0.5) - mse).abs() < 1e-12);
        // perfect predictions with margins above alpha
        let perfect = [(3.0, 1.0), (0.0, 2.0)];
        assert_eq!(loss_from_predictions(&perfect, &perfect, 1.0, 0.5), 0.0);
        // pair 1: y_a < y_b -> delta -1, arg 0.5 + (1.0 - 2.0) = -0.5 -> 0
        // pair 2: y_a = y_b -> delta +1, arg 0.5 - (0.0 - 0.5) = 1.0
        let hand = mse + 2.0 / 4.0 * 1.0;
        let labels2 = [(1.5, 2.0), (0.0, 0.0)];
        assert!((loss_from_predictions(&preds, &labels2, 2.0, 0.5) - hand).abs() < 1e-12);
    }
}
