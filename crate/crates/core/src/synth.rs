//! Procedural test scenes and distortions.
//!
//! Scenes are piecewise-constant shapes over a gradient background with a
//! faint smooth texture, which gives the heavy-tailed MSCN statistics of
//! natural photographs without shipping any image data.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::raster::{gaussian_blur, RealGrid};

pub const BLUR_SIGMAS: [f64; 5] = [0.0, 1.0, 2.0, 3.0, 4.0];
pub const NOISE_SIGMAS: [f64; 5] = [0.0, 5.0, 10.0, 20.0, 40.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Distortion {
    Blur,
    Noise,
}

impl Distortion {
    pub fn levels(self) -> &'static [f64; 5] {
        match self {
            Distortion::Blur => &BLUR_SIGMAS,
            Distortion::Noise => &NOISE_SIGMAS,
        }
    }
}

pub fn scene<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> RealGrid {
    let base = rng.random_range(60.0..190.0);
    let gx = rng.random_range(-60.0..60.0) / width as f64;
    let gy = rng.random_range(-60.0..60.0) / height as f64;
    let mut grid = RealGrid::from_fn(width, height, |x, y| base + gx * x as f64 + gy * y as f64);

    let shapes = rng.random_range(4..9);
    for _ in 0..shapes {
        let value = rng.random_range(20.0..235.0);
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(0.08..0.3) * width as f64;
        let ry = rng.random_range(0.08..0.3) * height as f64;
        let disk = rng.random_bool(0.5);
        fill(
            &mut grid,
            |x, y| {
                let (dx, dy) = ((x - cx) / rx, (y - cy) / ry);
                if disk {
                    dx * dx + dy * dy <= 1.0
                } else {
                    dx.abs() <= 1.0 && dy.abs() <= 1.0
                }
            },
            value,
        );
    }

    let waves: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.15..0.7),
                rng.random_range(0.15..0.7),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(2.0..6.0),
            )
        })
        .collect();
    let (w, h) = (grid.width(), grid.height());
    for y in 0..h {
        for x in 0..w {
            let t: f64 = waves
                .iter()
                .map(|&(fx, fy, ph, amp)| amp * (fx * x as f64 + fy * y as f64 + ph).sin())
                .sum();
            let v = &mut grid.data_mut()[y * w + x];
            *v = (*v + t).clamp(0.0, 255.0);
        }
    }
    grid
}

pub(crate) fn fill(grid: &mut RealGrid, inside: impl Fn(f64, f64) -> bool, value: f64) {
    let w = grid.width();
    let h = grid.height();
    let data = grid.data_mut();
    for y in 0..h {
        for x in 0..w {
            if inside(x as f64 + 0.5, y as f64 + 0.5) {
                data[y * w + x] = value;
            }
        }
    }
}

pub fn add_gaussian_noise<R: Rng + ?Sized>(grid: &RealGrid, sigma: f64, rng: &mut R) -> RealGrid {
    let mut out = grid.clone();
    if sigma > 0.0 {
        for v in out.data_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *v = (*v + sigma * n).clamp(0.0, 255.0);
        }
    }
    out
}

/// Applies the distortion at `level` (an index into the severity table).
pub fn distort<R: Rng + ?Sized>(
    grid: &RealGrid,
    kind: Distortion,
    level: usize,
    rng: &mut R,
) -> RealGrid {
    let amount = kind.levels()[level];
    match kind {
        Distortion::Blur => gaussian_blur(grid, amount),
        Distortion::Noise => add_gaussian_noise(grid, amount, rng),
    }
}

/// Latent attributes of one rendered group photo, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupLatent {
    /// Mouth shape of every face: 0 is a thin frown, 1 a wide open smile.
    pub smile: f64,
    /// Exposure balance: 1 is well exposed, 0 is strongly over- or under-exposed.
    pub brightness: f64,
    /// 1 is in focus; 0 is blurred with sigma 4.
    pub sharpness: f64,
}

pub const FACES: usize = 3;

/// Renders a toy group photo (three faces in a row over a scene) and its
/// saliency map (Gaussian blobs on the faces, peak 1).
pub fn group_scene<R: Rng + ?Sized>(
    rng: &mut R,
    size: usize,
    latent: &GroupLatent,
) -> (RealGrid, RealGrid) {
    let s = size as f64;
    let background = scene(rng, size, size);
    let mut grid = RealGrid::from_fn(size, size, |x, y| {
        128.0 + 0.4 * (background.get(x, y) - 128.0)
    });
    let radius = 0.13 * s;
    let cy = 0.5 * s + rng.random_range(-0.05..0.05) * s;
    let centers: Vec<(f64, f64)> = (0..FACES)
        .map(|i| {
            (
                (i as f64 + 0.5) * s / FACES as f64 + rng.random_range(-0.03..0.03) * s,
                cy,
            )
        })
        .collect();
    let curve = 2.0 * latent.smile - 1.0;
    for &(fx, fy) in &centers {
        fill(&mut grid, |x, y| (x - fx).hypot(y - fy) <= radius, 215.0);
        for side in [-1.0, 1.0] {
            let (ex, ey) = (fx + side * 0.4 * radius, fy - 0.3 * radius);
            fill(
                &mut grid,
                |x, y| (x - ex).hypot(y - ey) <= 0.13 * radius,
                30.0,
            );
        }
        let (my, half) = (fy + 0.35 * radius, 0.6 * radius);
        let opening = (0.08 + 0.3 * latent.smile) * radius + 0.5;
        fill(
            &mut grid,
            |x, y| {
                let u = (x - fx) / half;
                let lip = my + curve * 0.3 * radius * (u * u - 0.5);
                let depth = opening * (1.0 - u * u);
                u.abs() <= 1.0 && y >= lip - 0.5 && y <= lip + depth
            },
            30.0,
        );
    }
    let direction = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    let offset = direction * 90.0 * (1.0 - latent.brightness);
    grid.data_mut()
        .iter_mut()
        .for_each(|v| *v = (*v + offset).clamp(0.0, 255.0));
    let grid = gaussian_blur(&grid, 4.0 * (1.0 - latent.sharpness));

    let spread = 0.8 * radius;
    let saliency = RealGrid::from_fn(size, size, |x, y| {
        centers
            .iter()
            .map(|&(fx, fy)| {
                let d2 = (x as f64 + 0.5 - fx).powi(2) + (y as f64 + 0.5 - fy).powi(2);
                (-d2 / (2.0 * spread * spread)).exp()
            })
            .fold(0.0, f64::max)
    });
    (grid, saliency)
}
