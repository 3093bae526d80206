//! Moment-matching fits of the generalized Gaussian (GGD) and asymmetric
//! generalized Gaussian (AGGD) families.
//!
//! The shape parameter is found by exhaustive search over
//! `[SHAPE_MIN, SHAPE_MAX]` in steps of `SHAPE_STEP`, matching
//! `r(b) = G(2/b)^2 / (G(1/b) G(3/b))` against the sample ratio
//! `mean(|x|)^2 / mean(x^2)`.

use std::sync::OnceLock;

use super::gamma::gamma;
use crate::error::{Error, Result};

pub const SHAPE_MIN: f64 = 0.05;
pub const SHAPE_MAX: f64 = 10.0;
pub const SHAPE_STEP: f64 = 0.001;
pub const MIN_SAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GgdFit {
    pub shape: f64,
    pub variance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggdFit {
    pub shape: f64,
    pub sigma_left: f64,
    pub sigma_right: f64,
    pub mean_offset: f64,
}

struct ShapeTable {
    shapes: Vec<f64>,
    ratios: Vec<f64>,
}

fn table() -> &'static ShapeTable {
    static TABLE: OnceLock<ShapeTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let steps = ((SHAPE_MAX - SHAPE_MIN) / SHAPE_STEP).round() as usize;
        let shapes: Vec<f64> = (0..=steps)
            .map(|i| SHAPE_MIN + i as f64 * SHAPE_STEP)
            .collect();
        let ratios = shapes.iter().map(|&b| shape_ratio(b)).collect();
        ShapeTable { shapes, ratios }
    })
}

/// `G(2/b)^2 / (G(1/b) G(3/b))`, which equals `E|x|^2 / E[x^2]` for a GGD.
pub fn shape_ratio(shape: f64) -> f64 {
    let g2 = gamma(2.0 / shape);
    g2 * g2 / (gamma(1.0 / shape) * gamma(3.0 / shape))
}

fn search_shape(target: f64) -> f64 {
    let t = table();
    let mut best = 0;
    let mut best_err = f64::INFINITY;
    for (i, r) in t.ratios.iter().enumerate() {
        let err = (r - target).abs();
        if err < best_err {
            best_err = err;
            best = i;
        }
    }
    t.shapes[best]
}

pub fn fit_ggd(samples: &[f64]) -> Result<GgdFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    fit_ggd_unchecked(samples)
}

pub(crate) fn fit_ggd_unchecked(samples: &[f64]) -> Result<GgdFit> {
    let n = samples.len() as f64;
    let m1 = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    if m2 <= 0.0 || !m2.is_finite() {
        return Err(Error::DegenerateSamples("samples have zero variance"));
    }
    let mean = samples.iter().sum::<f64>() / n;
    if samples.iter().all(|&v| v == mean) {
        return Err(Error::DegenerateSamples("all samples are equal"));
    }
    Ok(GgdFit {
        shape: search_shape(m1 * m1 / m2),
        variance: m2,
    })
}

pub fn fit_aggd(samples: &[f64]) -> Result<AggdFit> {
    if samples.len() < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            needed: MIN_SAMPLES,
            got: samples.len(),
        });
    }
    fit_aggd_unchecked(samples)
}

pub(crate) fn fit_aggd_unchecked(samples: &[f64]) -> Result<AggdFit> {
    let (mut left_sq, mut left_n, mut right_sq, mut right_n) = (0.0, 0usize, 0.0, 0usize);
    for &v in samples {
        if v < 0.0 {
            left_sq += v * v;
            left_n += 1;
        } else if v > 0.0 {
            right_sq += v * v;
            right_n += 1;
        }
    }
    if left_n == 0 || right_n == 0 {
        return Err(Error::OneSidedSamples);
    }
    let sigma_left = (left_sq / left_n as f64).sqrt();
    let sigma_right = (right_sq / right_n as f64).sqrt();
    let gamma_hat = sigma_left / sigma_right;

    let n = samples.len() as f64;
    let m1 = samples.iter().map(|v| v.abs()).sum::<f64>() / n;
    let m2 = samples.iter().map(|v| v * v).sum::<f64>() / n;
    let r_hat = m1 * m1 / m2;
    let g2 = gamma_hat * gamma_hat;
    let r_norm = r_hat * (g2 * gamma_hat + 1.0) * (gamma_hat + 1.0) / ((g2 + 1.0) * (g2 + 1.0));
    let shape = search_shape(r_norm);

    let scale = (gamma(1.0 / shape) / gamma(3.0 / shape)).sqrt();
    let mean_offset =
        (sigma_right - sigma_left) * (gamma(2.0 / shape) / gamma(1.0 / shape)) * scale;
    Ok(AggdFit {
        shape,
        sigma_left,
        sigma_right,
        mean_offset,
    })
}
