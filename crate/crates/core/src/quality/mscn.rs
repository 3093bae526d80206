use crate::error::{Error, Result};
use crate::raster::{convolve_separable, gaussian_kernel, RasterImage, RealGrid};

pub const WINDOW: usize = 7;
pub const WINDOW_SIGMA: f64 = 7.0 / 6.0;
pub const STABILIZER: f64 = 1.0;

/// Mean-subtracted contrast-normalized coefficients and their four
/// neighbour-product maps.
#[derive(Debug, Clone)]
pub struct MscnMap {
    pub coefficients: RealGrid,
    /// `c(x, y) * c(x + 1, y)`, width reduced by one.
    pub horizontal: RealGrid,
    /// `c(x, y) * c(x, y + 1)`, height reduced by one.
    pub vertical: RealGrid,
    /// `c(x, y) * c(x + 1, y + 1)`.
    pub main_diagonal: RealGrid,
    /// `c(x + 1, y) * c(x, y + 1)`.
    pub secondary_diagonal: RealGrid,
}

impl MscnMap {
    pub fn products(&self) -> [&RealGrid; 4] {
        [
            &self.horizontal,
            &self.vertical,
            &self.main_diagonal,
            &self.secondary_diagonal,
        ]
    }
}

pub fn compute_mscn(img: &RasterImage) -> Result<MscnMap> {
    if img.channels() != 1 {
        return Err(Error::InvalidArgument(
            "MSCN needs a single-channel image".into(),
        ));
    }
    compute_mscn_grid(&img.luminance())
}

/// MSCN on a luminance grid (used directly for the half-resolution scale).
pub fn compute_mscn_grid(grid: &RealGrid) -> Result<MscnMap> {
    if grid.width() < WINDOW || grid.height() < WINDOW {
        return Err(Error::TooSmall {
            width: grid.width(),
            height: grid.height(),
            reason: "MSCN window is 7x7",
        });
    }
    let kernel = gaussian_kernel(WINDOW, WINDOW_SIGMA);
    let mu = convolve_separable(grid, &kernel);
    let squared = RealGrid::new(
        grid.width(),
        grid.height(),
        grid.data().iter().map(|v| v * v).collect(),
    )?;
    let mu_sq = convolve_separable(&squared, &kernel);
    let coeffs: Vec<f64> = grid
        .data()
        .iter()
        .zip(mu.data())
        .zip(mu_sq.data())
        .map(|((&v, &m), &m2)| {
            let sigma = (m2 - m * m).abs().sqrt();
            (v - m) / (sigma + STABILIZER)
        })
        .collect();
    let coefficients = RealGrid::new(grid.width(), grid.height(), coeffs)?;
    Ok(pair_products(coefficients))
}

fn pair_products(c: RealGrid) -> MscnMap {
    let (w, h) = (c.width(), c.height());
    let horizontal = RealGrid::from_fn(w - 1, h, |x, y| c.get(x, y) * c.get(x + 1, y));
    let vertical = RealGrid::from_fn(w, h - 1, |x, y| c.get(x, y) * c.get(x, y + 1));
    let main_diagonal = RealGrid::from_fn(w - 1, h - 1, |x, y| c.get(x, y) * c.get(x + 1, y + 1));
    let secondary_diagonal =
        RealGrid::from_fn(w - 1, h - 1, |x, y| c.get(x + 1, y) * c.get(x, y + 1));
    MscnMap {
        coefficients: c,
        horizontal,
        vertical,
        main_diagonal,
        secondary_diagonal,
    }
}
