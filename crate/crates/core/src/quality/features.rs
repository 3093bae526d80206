use super::fit::{fit_aggd_unchecked, fit_ggd_unchecked};
use super::mscn::{compute_mscn_grid, MscnMap};
use crate::error::{Error, Result};
use crate::raster::{downsample_half, RasterImage, RealGrid};

pub const FEATURES_PER_SCALE: usize = 18;
pub const SCALES: usize = 2;
pub const FEATURE_COUNT: usize = FEATURES_PER_SCALE * SCALES;
pub const MIN_DIMENSION: usize = 14;

// Below the public 100-sample floor so that the half-resolution scale of
// small (>= 14 px) images can still be fitted.
const MIN_FIT_SAMPLES: usize = 16;

/// Natural-scene-statistics feature vector.
///
/// Order, repeated for the full and half resolution scales:
/// `ggd_shape, ggd_variance`, then for each neighbour product
/// (horizontal, vertical, main diagonal, secondary diagonal):
/// `aggd_shape, aggd_mean, aggd_left_variance, aggd_right_variance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QualityFeatures {
    pub values: [f64; FEATURE_COUNT],
}

impl QualityFeatures {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let values: [f64; FEATURE_COUNT] = values.try_into().map_err(|_| {
            Error::DimensionMismatch(format!(
                "expected {FEATURE_COUNT} quality features, got {}",
                values.len()
            ))
        })?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite quality feature".into()));
        }
        Ok(Self { values })
    }
}

pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(FEATURE_COUNT);
    for scale in 1..=SCALES {
        names.push(format!("s{scale}_ggd_shape"));
        names.push(format!("s{scale}_ggd_variance"));
        for product in ["h", "v", "d1", "d2"] {
            for stat in ["shape", "mean", "left_var", "right_var"] {
                names.push(format!("s{scale}_{product}_{stat}"));
            }
        }
    }
    names
}

pub fn extract_features(img: &RasterImage) -> Result<QualityFeatures> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument(
            "quality features need a grayscale image".into(),
        ));
    }
    extract_features_grid(&img.luminance())
}

pub fn extract_features_grid(luma: &RealGrid) -> Result<QualityFeatures> {
    if luma.width() < MIN_DIMENSION || luma.height() < MIN_DIMENSION {
        return Err(Error::TooSmall {
            width: luma.width(),
            height: luma.height(),
            reason: "two-scale quality features need at least 14x14",
        });
    }
    let mut values = [0.0; FEATURE_COUNT];
    let full = compute_mscn_grid(luma)?;
    scale_features(&full, &mut values[..FEATURES_PER_SCALE])?;
    let half = compute_mscn_grid(&downsample_half(luma)?)?;
    scale_features(&half, &mut values[FEATURES_PER_SCALE..])?;
    QualityFeatures::from_slice(&values)
}

fn scale_features(map: &MscnMap, out: &mut [f64]) -> Result<()> {
    let coeffs = map.coefficients.data();
    check_len(coeffs)?;
    let ggd = fit_ggd_unchecked(coeffs)?;
    out[0] = ggd.shape;
    out[1] = ggd.variance;
    for (i, product) in map.products().iter().enumerate() {
        check_len(product.data())?;
        let aggd = fit_aggd_unchecked(product.data())?;
        let o = 2 + 4 * i;
        out[o] = aggd.shape;
        out[o + 1] = aggd.mean_offset;
        out[o + 2] = aggd.sigma_left * aggd.sigma_left;
        out[o + 3] = aggd.sigma_right * aggd.sigma_right;
    }
    Ok(())
}

fn check_len(samples: &[f64]) -> Result<()> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    Ok(())
}
