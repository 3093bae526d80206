//! No-reference image quality channel.
//!
//! Natural-scene statistics of MSCN coefficients (36 features over two
//! scales) feed a linear support-vector regressor. Higher predictions mean
//! better quality; the channel score is the prediction min-max normalized
//! with bounds recorded on the training set.

pub mod features;
pub mod fit;
pub mod gamma;
pub mod mscn;
pub mod svr;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use features::{
    extract_features, extract_features_grid, feature_names, QualityFeatures, FEATURE_COUNT,
};
pub use fit::{fit_aggd, fit_ggd, AggdFit, GgdFit};
pub use mscn::{compute_mscn, compute_mscn_grid, MscnMap};
pub use svr::SvrConfig;

use crate::error::{Error, Result};
use crate::modelfile::{ModelReader, ModelWriter};
use crate::raster::RealGrid;
use crate::synth::{distort, Distortion};

pub const MODEL_TYPE: &str = "quality";

#[derive(Debug, Clone, PartialEq)]
pub struct QualityModel {
    /// 36 feature weights followed by the bias.
    pub weights: [f64; FEATURE_COUNT + 1],
    pub feature_min: [f64; FEATURE_COUNT],
    pub feature_max: [f64; FEATURE_COUNT],
    /// Raw-score range over the training set, used for channel normalization.
    pub score_min: f64,
    pub score_max: f64,
}

impl QualityModel {
    /// Features mapped to `[-1, 1]` by the stored bounds; constant features map to 0.
    pub fn normalize(&self, features: &QualityFeatures) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        for (i, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.feature_min[i], self.feature_max[i]);
            *o = if hi > lo {
                2.0 * (features.values[i] - lo) / (hi - lo) - 1.0
            } else {
                0.0
            };
        }
        out
    }

    pub fn predict_raw(&self, features: &QualityFeatures) -> f64 {
        let x = self.normalize(features);
        let (w, b) = self.weights.split_at(FEATURE_COUNT);
        w.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>() + b[0]
    }

    /// Channel score in `[0, 1]`.
    pub fn predict_normalized(&self, features: &QualityFeatures) -> f64 {
        normalize_score(self.predict_raw(features), self.score_min, self.score_max)
    }

    pub fn to_text(&self) -> String {
        ModelWriter::new(MODEL_TYPE)
            .comment(&format!("feature order: {}", feature_names().join(" ")))
            .reals("feature_min", &self.feature_min)
            .reals("feature_max", &self.feature_max)
            .reals("weights", &self.weights)
            .real("score_min", self.score_min)
            .real("score_max", self.score_max)
            .finish()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let r = ModelReader::parse(text)?;
        r.expect_type(MODEL_TYPE)?;
        let mut model = QualityModel {
            weights: [0.0; FEATURE_COUNT + 1],
            feature_min: [0.0; FEATURE_COUNT],
            feature_max: [0.0; FEATURE_COUNT],
            score_min: r.real("score_min")?,
            score_max: r.real("score_max")?,
        };
        model
            .weights
            .copy_from_slice(r.reals_exact("weights", FEATURE_COUNT + 1)?);
        model
            .feature_min
            .copy_from_slice(r.reals_exact("feature_min", FEATURE_COUNT)?);
        model
            .feature_max
            .copy_from_slice(r.reals_exact("feature_max", FEATURE_COUNT)?);
        if model
            .feature_min
            .iter()
            .zip(&model.feature_max)
            .any(|(lo, hi)| lo > hi)
        {
            return Err(Error::ModelFormat("feature_min exceeds feature_max".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

/// Min-max normalization clamped to `[0, 1]`; a degenerate range maps to 0.5.
pub fn normalize_score(raw: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        ((raw - lo) / (hi - lo)).clamp(0.0, 1.0)
    } else {
        0.5
    }
}

pub fn train_quality_model(
    features: &[QualityFeatures],
    scores: &[f64],
    config: &SvrConfig,
) -> Result<QualityModel> {
    if features.is_empty() {
        return Err(Error::Empty("quality training set"));
    }
    let mut feature_min = [f64::INFINITY; FEATURE_COUNT];
    let mut feature_max = [f64::NEG_INFINITY; FEATURE_COUNT];
    for f in features {
        for i in 0..FEATURE_COUNT {
            feature_min[i] = feature_min[i].min(f.values[i]);
            feature_max[i] = feature_max[i].max(f.values[i]);
        }
    }
    let mut model = QualityModel {
        weights: [0.0; FEATURE_COUNT + 1],
        feature_min,
        feature_max,
        score_min: 0.0,
        score_max: 0.0,
    };
    let x: Vec<Vec<f64>> = features
        .iter()
        .map(|f| model.normalize(f).to_vec())
        .collect();
    let svr = svr::train_svr(&x, scores, config)?;
    model.weights[..FEATURE_COUNT].copy_from_slice(&svr.weights);
    model.weights[FEATURE_COUNT] = svr.bias;

    let raw: Vec<f64> = features.iter().map(|f| model.predict_raw(f)).collect();
    model.score_min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    model.score_max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(model)
}

/// Raw (unnormalized) quality prediction.
pub fn predict_quality(model: &QualityModel, features: &QualityFeatures) -> f64 {
    model.predict_raw(features)
}

/// Quality rating assigned to a distortion level: 4 for pristine down to 0
/// for the most severe level.
pub fn severity_rating(level: usize) -> f64 {
    4.0 - level as f64
}

/// Features and ratings for every pristine grid at each blur and noise level.
/// Level 0 (the pristine image) is included once.
pub fn distortion_corpus(
    pristine: &[RealGrid],
    seed: u64,
) -> Result<(Vec<QualityFeatures>, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::new();
    let mut ratings = Vec::new();
    for grid in pristine {
        features.push(extract_features_grid(grid)?);
        ratings.push(severity_rating(0));
        for kind in [Distortion::Blur, Distortion::Noise] {
            for level in 1..kind.levels().len() {
                let distorted = distort(grid, kind, level, &mut rng);
                features.push(extract_features_grid(&distorted)?);
                ratings.push(severity_rating(level));
            }
        }
    }
    Ok((features, ratings))
}
