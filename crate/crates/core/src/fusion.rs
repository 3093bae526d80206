//! Channel fusion and the set rankers: mean and max pooling, a linear rank
//! SVM and a small siamese ranking network.
//!
//! Every channel score lies in `[0, 1]`. The fusion vector concatenates each
//! score with its square: `[e, e^2, a, a^2, q, q^2]`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::modelfile::{ModelReader, ModelWriter};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelScores {
    pub emotion: f64,
    pub aesthetics: f64,
    pub quality: f64,
}

impl ChannelScores {
    pub fn new(emotion: f64, aesthetics: f64, quality: f64) -> Result<Self> {
        let s = Self {
            emotion,
            aesthetics,
            quality,
        };
        s.check()?;
        Ok(s)
    }

    fn check(&self) -> Result<()> {
        if self.as_array().iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "channel scores {:?} outside [0, 1]",
                self.as_array()
            )))
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.emotion, self.aesthetics, self.quality]
    }

    fn from_array(v: [f64; 3]) -> Self {
        Self {
            emotion: v[0],
            aesthetics: v[1],
            quality: v[2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionVector(pub [f64; 6]);

impl FusionVector {
    pub fn values(&self) -> &[f64; 6] {
        &self.0
    }

    /// The linear entries `[e, a, q]`.
    pub fn linear(&self) -> [f64; 3] {
        [self.0[0], self.0[2], self.0[4]]
    }
}

pub fn fuse(scores: &ChannelScores) -> Result<FusionVector> {
    scores.check()?;
    let [e, a, q] = scores.as_array();
    Ok(FusionVector([e, e * e, a, a * a, q, q * q]))
}

/// Ranks from per-image scores: highest score gets rank 1, ties go to the
/// earlier index.
pub fn ranks_from_scores(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut ranks = vec![0; scores.len()];
    for (r, i) in order.into_iter().enumerate() {
        ranks[i] = r + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Mean,
    Max,
}

pub fn pooled_score(scores: &ChannelScores, mode: PoolMode) -> f64 {
    let v = scores.as_array();
    match mode {
        PoolMode::Mean => v.iter().sum::<f64>() / 3.0,
        PoolMode::Max => v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn pool_rank(set: &[ChannelScores], mode: PoolMode) -> Result<Vec<usize>> {
    check_set(set)?;
    let scores: Vec<f64> = set.iter().map(|s| pooled_score(s, mode)).collect();
    Ok(ranks_from_scores(&scores))
}

fn check_set(set: &[ChannelScores]) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Empty("image set"));
    }
    if set.len() < 2 {
        return Err(Error::InvalidArgument(
            "a set needs at least 2 images".into(),
        ));
    }
    Ok(())
}

/// Per-channel min-max bounds; applying them rescales and clamps to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl ChannelBounds {
    pub fn identity() -> Self {
        Self {
            min: [0.0; 3],
            max: [1.0; 3],
        }
    }

    pub fn fit<'a>(scores: impl IntoIterator<Item = &'a ChannelScores>) -> Self {
        let mut b = Self {
            min: [f64::INFINITY; 3],
            max: [f64::NEG_INFINITY; 3],
        };
        let mut any = false;
        for s in scores {
            any = true;
            for (c, v) in s.as_array().into_iter().enumerate() {
                b.min[c] = b.min[c].min(v);
                b.max[c] = b.max[c].max(v);
            }
        }
        if any {
            b
        } else {
            Self::identity()
        }
    }

    pub fn apply(&self, s: &ChannelScores) -> ChannelScores {
        let mut out = [0.0; 3];
        for (c, v) in s.as_array().into_iter().enumerate() {
            let (lo, hi) = (self.min[c], self.max[c]);
            out[c] = if hi > lo {
                ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
            } else {
                v.clamp(0.0, 1.0)
            };
        }
        ChannelScores::from_array(out)
    }
}

// ---------------------------------------------------------------------------
// rank SVM

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSvmConfig {
    pub reg_lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// Starting weights; zeros when absent.
    pub initial_weights: Option<[f64; 6]>,
}

impl Default for RankSvmConfig {
    fn default() -> Self {
        Self {
            reg_lambda: 1e-3,
            epochs: 200,
            learning_rate: 0.1,
            seed: 0,
            initial_weights: None,
        }
    }
}

/// Linear scorer `s(k) = w . k`, margin 1.
#[derive(Debug, Clone, PartialEq)]
pub struct RankSvmModel {
    pub weights: [f64; 6],
    pub reg_lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl RankSvmModel {
    pub fn score_raw(&self, x: &[f64; 6]) -> f64 {
        self.weights.iter().zip(x).map(|(w, v)| w * v).sum()
    }

    pub fn score(&self, kappa: &FusionVector) -> f64 {
        self.score_raw(kappa.values())
    }
}

/// Subgradient descent on
/// `mean(max(0, 1 - w . (k_pref - k_other))) + reg_lambda |w|^2`.
pub fn train_ranksvm(
    pairs: &[(FusionVector, FusionVector)],
    config: &RankSvmConfig,
) -> Result<RankSvmModel> {
    if pairs.is_empty() {
        return Err(Error::Empty("rank SVM training pairs"));
    }
    let diffs: Vec<[f64; 6]> = pairs
        .iter()
        .map(|(p, o)| std::array::from_fn(|i| p.0[i] - o.0[i]))
        .collect();
    let mut w = config.initial_weights.unwrap_or([0.0; 6]);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..diffs.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let eta = config.learning_rate / (1.0 + epoch as f64).sqrt();
        for &i in &order {
            let d = &diffs[i];
            let margin: f64 = w.iter().zip(d).map(|(a, b)| a * b).sum();
            let active = margin < 1.0;
            for (wj, dj) in w.iter_mut().zip(d) {
                let g = 2.0 * config.reg_lambda * *wj - if active { *dj } else { 0.0 };
                *wj -= eta * g;
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!(
                "rank SVM weights at epoch {epoch}"
            )));
        }
    }
    Ok(RankSvmModel {
        weights: w,
        reg_lambda: config.reg_lambda,
        epochs: config.epochs,
        seed: config.seed,
    })
}

// ---------------------------------------------------------------------------
// rank network

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankNetInput {
    /// The 6-dim fusion vector.
    Fused,
    /// The three raw channel scores.
    Raw,
}

impl RankNetInput {
    pub fn dim(self) -> usize {
        match self {
            RankNetInput::Fused => 6,
            RankNetInput::Raw => 3,
        }
    }

    pub fn features(self, kappa: &FusionVector) -> Vec<f64> {
        match self {
            RankNetInput::Fused => kappa.0.to_vec(),
            RankNetInput::Raw => kappa.linear().to_vec(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            RankNetInput::Fused => "fused",
            RankNetInput::Raw => "raw",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankNetConfig {
    pub input: RankNetInput,
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for RankNetConfig {
    fn default() -> Self {
        Self {
            input: RankNetInput::Fused,
            alpha: 0.5,
            learning_rate: 1e-5,
            epochs: 100,
            batch_size: 5,
            seed: 0,
        }
    }
}

pub const HIDDEN: usize = 3;

/// `score = ReLU(w2 . ReLU(W1 x + b1) + b2)` with 3 hidden units.
///
/// Parameters are laid out as `W1` (row-major, 3 x d), `b1`, `w2`, `b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankNetModel {
    pub input: RankNetInput,
    pub alpha: f64,
    pub params: Vec<f64>,
}

impl RankNetModel {
    pub fn param_count(input: RankNetInput) -> usize {
        HIDDEN * input.dim() + HIDDEN + HIDDEN + 1
    }

    pub fn zeros(input: RankNetInput, alpha: f64) -> Self {
        Self {
            input,
            alpha,
            params: vec![0.0; Self::param_count(input)],
        }
    }

    /// Weights uniform in `[0.01, 0.1]`, biases 0.1.
    pub fn init<R: Rng + ?Sized>(input: RankNetInput, alpha: f64, rng: &mut R) -> Self {
        let mut m = Self::zeros(input, alpha);
        let d = input.dim();
        for (i, p) in m.params.iter_mut().enumerate() {
            let is_bias =
                (HIDDEN * d..HIDDEN * d + HIDDEN).contains(&i) || i == Self::param_count(input) - 1;
            *p = if is_bias {
                0.1
            } else {
                rng.random_range(0.01..=0.1)
            };
        }
        m
    }

    fn parts(&self) -> (&[f64], &[f64], &[f64], f64) {
        let d = self.input.dim();
        let (w1, rest) = self.params.split_at(HIDDEN * d);
        let (b1, rest) = rest.split_at(HIDDEN);
        let (w2, rest) = rest.split_at(HIDDEN);
        (w1, b1, w2, rest[0])
    }

    /// Score of a raw feature vector of the model's input dimension.
    pub fn forward_features(&self, x: &[f64]) -> f64 {
        self.forward_trace(x).2
    }

    fn forward_trace(&self, x: &[f64]) -> ([f64; HIDDEN], f64, f64) {
        let d = self.input.dim();
        let (w1, b1, w2, b2) = self.parts();
        let mut z1 = [0.0; HIDDEN];
        for (h, z) in z1.iter_mut().enumerate() {
            *z = b1[h]
                + w1[h * d..(h + 1) * d]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>();
        }
        let z2 = b2 + (0..HIDDEN).map(|h| w2[h] * z1[h].max(0.0)).sum::<f64>();
        (z1, z2, z2.max(0.0))
    }

    /// Adds `d_score * dscore/dparams` into `grad`.
    fn accumulate_gradient(&self, x: &[f64], d_score: f64, grad: &mut [f64]) {
        let d = self.input.dim();
        let (z1, z2, _) = self.forward_trace(x);
        if z2 <= 0.0 {
            return;
        }
        let (_, _, w2, _) = self.parts();
        let b1_off = HIDDEN * d;
        let w2_off = b1_off + HIDDEN;
        let b2_off = w2_off + HIDDEN;
        grad[b2_off] += d_score;
        for h in 0..HIDDEN {
            let a = z1[h].max(0.0);
            grad[w2_off + h] += d_score * a;
            if z1[h] > 0.0 {
                let dz = d_score * w2[h];
                grad[b1_off + h] += dz;
                for j in 0..d {
                    grad[h * d + j] += dz * x[j];
                }
            }
        }
    }

    pub fn score(&self, kappa: &FusionVector) -> f64 {
        self.forward_features(&self.input.features(kappa))
    }
}

pub fn ranknet_forward(model: &RankNetModel, kappa: &FusionVector) -> f64 {
    model.score(kappa)
}

/// Mean hinge `max(0, alpha - (s_pref - s_other))` over feature pairs.
pub fn ranknet_loss(model: &RankNetModel, pairs: &[(Vec<f64>, Vec<f64>)]) -> f64 {
    pairs
        .iter()
        .map(|(p, o)| {
            (model.alpha - (model.forward_features(p) - model.forward_features(o))).max(0.0)
        })
        .sum::<f64>()
        / pairs.len() as f64
}

pub fn ranknet_gradient(model: &RankNetModel, pairs: &[(Vec<f64>, Vec<f64>)]) -> Vec<f64> {
    let mut grad = vec![0.0; model.params.len()];
    let n = pairs.len() as f64;
    for (p, o) in pairs {
        let margin = model.forward_features(p) - model.forward_features(o);
        if model.alpha - margin > 0.0 {
            model.accumulate_gradient(p, -1.0 / n, &mut grad);
            model.accumulate_gradient(o, 1.0 / n, &mut grad);
        }
    }
    grad
}

/// Siamese training on `(preferred, other)` pairs with a shared parameter set.
pub fn train_ranknet(
    pairs: &[(FusionVector, FusionVector)],
    config: &RankNetConfig,
) -> Result<RankNetModel> {
    if pairs.is_empty() {
        return Err(Error::Empty("rank network training pairs"));
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let feats: Vec<(Vec<f64>, Vec<f64>)> = pairs
        .iter()
        .map(|(p, o)| (config.input.features(p), config.input.features(o)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = RankNetModel::init(config.input, config.alpha, &mut rng);
    let mut order: Vec<usize> = (0..feats.len()).collect();
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(Vec<f64>, Vec<f64>)> =
                chunk.iter().map(|&i| feats[i].clone()).collect();
            let g = ranknet_gradient(&model, &batch);
            for (p, d) in model.params.iter_mut().zip(&g) {
                *p -= config.learning_rate * d;
            }
        }
        if model.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence(format!("rank network at epoch {epoch}")));
        }
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// rankers over sets

/// A set of images with channel scores and ground-truth ranks (1 = best).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    pub set_id: String,
    pub scores: Vec<ChannelScores>,
    pub true_ranks: Vec<usize>,
}

/// All `(preferred, other)` pairs implied by the ground truth of each set.
pub fn preference_pairs(
    sets: &[ScoredSet],
    bounds: &ChannelBounds,
) -> Result<Vec<(FusionVector, FusionVector)>> {
    let mut pairs = Vec::new();
    for set in sets {
        let fused: Vec<FusionVector> = set
            .scores
            .iter()
            .map(|s| fuse(&bounds.apply(s)))
            .collect::<Result<_>>()?;
        for i in 0..fused.len() {
            for j in 0..fused.len() {
                if set.true_ranks[i] < set.true_ranks[j] {
                    pairs.push((fused[i], fused[j]));
                }
            }
        }
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ranker {
    Pool(PoolMode),
    RankSvm(RankSvmModel),
    RankNet(RankNetModel),
}

impl Ranker {
    pub fn name(&self) -> &'static str {
        match self {
            Ranker::Pool(PoolMode::Mean) => "mean",
            Ranker::Pool(PoolMode::Max) => "max",
            Ranker::RankSvm(_) => "ranksvm",
            Ranker::RankNet(_) => "ranknet",
        }
    }

    /// Per-image score of already-normalized channel scores.
    pub fn score(&self, scores: &ChannelScores) -> Result<f64> {
        Ok(match self {
            Ranker::Pool(mode) => pooled_score(scores, *mode),
            Ranker::RankSvm(m) => m.score(&fuse(scores)?),
            Ranker::RankNet(m) => m.score(&fuse(scores)?),
        })
    }
}

/// Ranks one set of normalized channel scores.
pub fn rank_set(ranker: &Ranker, set: &[ChannelScores]) -> Result<Vec<usize>> {
    check_set(set)?;
    let scores = set
        .iter()
        .map(|s| ranker.score(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(ranks_from_scores(&scores))
}

/// A ranker together with the channel bounds it was trained under.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedRanker {
    pub bounds: ChannelBounds,
    pub ranker: Ranker,
}

impl FittedRanker {
    pub fn score(&self, scores: &ChannelScores) -> Result<f64> {
        self.ranker.score(&self.bounds.apply(scores))
    }

    pub fn score_set(&self, set: &[ChannelScores]) -> Result<Vec<f64>> {
        set.iter().map(|s| self.score(s)).collect()
    }

    pub fn rank(&self, set: &[ChannelScores]) -> Result<Vec<usize>> {
        check_set(set)?;
        Ok(ranks_from_scores(&self.score_set(set)?))
    }

    pub fn to_text(&self) -> String {
        let mut w = ModelWriter::new(self.ranker.name());
        w.comment("channel order: emotion aesthetics quality");
        w.reals("bounds_min", &self.bounds.min);
        w.reals("bounds_max", &self.bounds.max);
        match &self.ranker {
            Ranker::Pool(_) => {}
            Ranker::RankSvm(m) => {
                w.comment("score = weights . [e, e^2, a, a^2, q, q^2]");
                w.real("reg_lambda", m.reg_lambda);
                w.int("epochs", m.epochs as u64);
                w.int("seed", m.seed);
                w.reals("weights", &m.weights);
            }
            Ranker::RankNet(m) => {
                w.comment("params: W1 (3 x d, row-major), b1, w2, b2");
                w.text("input", m.input.name());
                w.real("alpha", m.alpha);
                w.reals("params", &m.params);
            }
        }
        w.finish()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let r = ModelReader::parse(text)?;
        let mut bounds = ChannelBounds::identity();
        bounds.min.copy_from_slice(r.reals_exact("bounds_min", 3)?);
        bounds.max.copy_from_slice(r.reals_exact("bounds_max", 3)?);
        let ranker = match r.type_tag() {
            "mean" => Ranker::Pool(PoolMode::Mean),
            "max" => Ranker::Pool(PoolMode::Max),
            "ranksvm" => {
                let mut weights = [0.0; 6];
                weights.copy_from_slice(r.reals_exact("weights", 6)?);
                Ranker::RankSvm(RankSvmModel {
                    weights,
                    reg_lambda: r.real("reg_lambda")?,
                    epochs: r.int("epochs")? as usize,
                    seed: r.int("seed")?,
                })
            }
            "ranknet" => {
                let input = match r.text("input")? {
                    "fused" => RankNetInput::Fused,
                    "raw" => RankNetInput::Raw,
                    other => return Err(Error::ModelFormat(format!("unknown input `{other}`"))),
                };
                Ranker::RankNet(RankNetModel {
                    input,
                    alpha: r.real("alpha")?,
                    params: r
                        .reals_exact("params", RankNetModel::param_count(input))?
                        .to_vec(),
                })
            }
            other => {
                return Err(Error::ModelFormat(format!(
                    "`{other}` is not a ranker model"
                )))
            }
        };
        Ok(Self { bounds, ranker })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RankerConfig {
    Pool(PoolMode),
    RankSvm(RankSvmConfig),
    RankNet(RankNetConfig),
}

impl RankerConfig {
    pub fn name(&self) -> &'static str {
        match self {
            RankerConfig::Pool(PoolMode::Mean) => "mean",
            RankerConfig::Pool(PoolMode::Max) => "max",
            RankerConfig::RankSvm(_) => "ranksvm",
            RankerConfig::RankNet(_) => "ranknet",
        }
    }

    /// Display name in report tables.
    pub fn label(&self) -> &'static str {
        match self {
            RankerConfig::Pool(PoolMode::Mean) => "Mean pooling",
            RankerConfig::Pool(PoolMode::Max) => "Max pooling",
            RankerConfig::RankSvm(_) => "rankSVM",
            RankerConfig::RankNet(_) => "rankNet",
        }
    }

    /// Fits normalization bounds and the ranker on the training sets.
    /// `seed_offset` is added to the configured seed.
    pub fn fit(&self, train: &[ScoredSet], seed_offset: u64) -> Result<FittedRanker> {
        let bounds = ChannelBounds::fit(train.iter().flat_map(|s| &s.scores));
        let ranker = match self {
            RankerConfig::Pool(mode) => Ranker::Pool(*mode),
            RankerConfig::RankSvm(c) => {
                let pairs = preference_pairs(train, &bounds)?;
                let c = RankSvmConfig {
                    seed: c.seed.wrapping_add(seed_offset),
                    ..c.clone()
                };
                Ranker::RankSvm(train_ranksvm(&pairs, &c)?)
            }
            RankerConfig::RankNet(c) => {
                let pairs = preference_pairs(train, &bounds)?;
                let c = RankNetConfig {
                    seed: c.seed.wrapping_add(seed_offset),
                    ..c.clone()
                };
                Ranker::RankNet(train_ranknet(&pairs, &c)?)
            }
        };
        Ok(FittedRanker { bounds, ranker })
    }
}
