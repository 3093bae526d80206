//! Raster images, real-valued grids and the resampling helpers shared by all
//! scoring channels.
//!
//! Intensities are kept as `f64` in `[0, 255]`. Only 8-bit PGM (P5), PPM (P6)
//! and gray/RGB PNG files are accepted.

use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, Result};

/// Row-major image with one (gray) or three (RGB, interleaved) channels.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!(
                "channels must be 1 or 3, got {channels}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidRaster("zero dimension".into()));
        }
        if data.len() != width * height * channels {
            return Err(Error::InvalidRaster(format!(
                "data length {} does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=255.0).contains(*v)) {
            return Err(Error::InvalidRaster(format!(
                "intensity {v} outside [0, 255]"
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Single-channel image from a grid; values are clamped into `[0, 255]`.
    pub fn from_grid_clamped(grid: &RealGrid) -> Self {
        Self {
            width: grid.width(),
            height: grid.height(),
            channels: 1,
            data: grid.data().iter().map(|v| v.clamp(0.0, 255.0)).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Luminance plane as a grid (converts RGB first).
    pub fn luminance(&self) -> RealGrid {
        let gray = to_grayscale(self);
        RealGrid {
            width: gray.width,
            height: gray.height,
            data: gray.data,
        }
    }

    pub fn mirrored_horizontally(&self) -> Self {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in (0..self.width).rev() {
                let base = (y * self.width + x) * self.channels;
                data.extend_from_slice(&self.data[base..base + self.channels]);
            }
        }
        Self { data, ..*self }
    }
}

/// Row-major grid of unbounded real values.
#[derive(Debug, Clone, PartialEq)]
pub struct RealGrid {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl RealGrid {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::InvalidRaster(format!(
                "grid data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped to the border (replicate padding).
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Ppm,
    Png,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("pgm") => Ok(ImageFormat::Pgm),
            Some("ppm") => Ok(ImageFormat::Ppm),
            Some("png") => Ok(ImageFormat::Png),
            _ => Err(Error::UnsupportedFormat(path.display().to_string())),
        }
    }
}

pub fn decode_image(bytes: &[u8], format: ImageFormat) -> Result<RasterImage> {
    match format {
        ImageFormat::Pgm => decode_netpbm(bytes, b"P5", 1),
        ImageFormat::Ppm => decode_netpbm(bytes, b"P6", 3),
        ImageFormat::Png => decode_png(bytes),
    }
}

pub fn read_image(path: &Path) -> Result<RasterImage> {
    let format = ImageFormat::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes, format)
}

/// Writes a PGM or PPM file depending on the channel count.
pub fn write_netpbm(path: &Path, img: &RasterImage) -> Result<()> {
    std::fs::write(path, encode_netpbm(img)).map_err(|e| Error::io(path, e))
}

/// P5 for gray, P6 for RGB; intensities are rounded to the nearest byte.
pub fn encode_netpbm(img: &RasterImage) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    out
}

fn decode_netpbm(bytes: &[u8], magic: &[u8; 2], channels: usize) -> Result<RasterImage> {
    if bytes.len() < 2 || &bytes[..2] != magic {
        return Err(Error::MalformedHeader(format!(
            "expected magic {}",
            String::from_utf8_lossy(magic)
        )));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while let Some(&b) = bytes.get(pos) {
                        pos += 1;
                        if b == b'\n' {
                            break;
                        }
                    }
                }
                Some(_) => break,
                None => return Err(Error::MalformedHeader("header ends early".into())),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        if start == pos {
            return Err(Error::MalformedHeader(format!(
                "expected a number at byte {start}"
            )));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader("number out of range".into()))?;
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => {
            return Err(Error::MalformedHeader(
                "missing whitespace after maxval".into(),
            ))
        }
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader("zero dimension".into()));
    }
    if maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedHeader(format!("invalid maxval {maxval}")));
    }
    if maxval > 255 {
        return Err(Error::UnsupportedBitDepth(16));
    }
    let expected = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected].iter().map(|&b| b as f64).collect();
    RasterImage::new(width, height, channels, data)
}

fn decode_png(bytes: &[u8]) -> Result<RasterImage> {
    let decoder = png::Decoder::new(Cursor::new(bytes));
    let mut reader = decoder.read_info().map_err(png_error)?;
    let info = reader.info();
    let (width, height) = (info.width as usize, info.height as usize);
    let bit_depth = info.bit_depth as u32;
    if bit_depth != 8 {
        return Err(Error::UnsupportedBitDepth(bit_depth));
    }
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        png::ColorType::GrayscaleAlpha | png::ColorType::Rgba => {
            return Err(Error::AlphaUnsupported)
        }
        png::ColorType::Indexed => {
            return Err(Error::UnsupportedFormat("indexed-color PNG".into()))
        }
    };
    if info.trns.is_some() {
        return Err(Error::AlphaUnsupported);
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::MalformedHeader("PNG dimensions overflow".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(png_error)?;
    let line = frame.line_size;
    let mut data = Vec::with_capacity(width * height * channels);
    for row in buf.chunks(line).take(height) {
        data.extend(row[..width * channels].iter().map(|&b| b as f64));
    }
    RasterImage::new(width, height, channels, data)
}

fn png_error(err: png::DecodingError) -> Error {
    match err {
        png::DecodingError::IoError(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => {
            Error::TruncatedPayload {
                expected: 0,
                found: 0,
            }
        }
        png::DecodingError::IoError(e) => Error::MalformedHeader(e.to_string()),
        other => Error::MalformedHeader(other.to_string()),
    }
}

/// Luma conversion with weights 0.299, 0.587, 0.114. Gray input is returned unchanged.
pub fn to_grayscale(img: &RasterImage) -> RasterImage {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|p| (0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]).clamp(0.0, 255.0))
        .collect();
    RasterImage {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Halves each dimension (floor) by averaging 2x2 blocks.
pub fn downsample_half(grid: &RealGrid) -> Result<RealGrid> {
    if grid.width < 2 || grid.height < 2 {
        return Err(Error::TooSmall {
            width: grid.width,
            height: grid.height,
            reason: "downsampling needs at least 2x2",
        });
    }
    let (w, h) = (grid.width / 2, grid.height / 2);
    Ok(RealGrid::from_fn(w, h, |x, y| {
        let (x0, y0) = (2 * x, 2 * y);
        (grid.get(x0, y0) + grid.get(x0 + 1, y0) + grid.get(x0, y0 + 1) + grid.get(x0 + 1, y0 + 1))
            / 4.0
    }))
}

/// Bilinear resampling with corner-aligned sample positions.
pub fn resize_bilinear(grid: &RealGrid, out_w: usize, out_h: usize) -> Result<RealGrid> {
    if out_w == 0 || out_h == 0 {
        return Err(Error::InvalidArgument("zero output dimension".into()));
    }
    if grid.width == 0 || grid.height == 0 {
        return Err(Error::InvalidArgument("zero input dimension".into()));
    }
    if out_w == grid.width && out_h == grid.height {
        return Ok(grid.clone());
    }
    let scale = |n_in: usize, n_out: usize| {
        if n_out > 1 {
            (n_in - 1) as f64 / (n_out - 1) as f64
        } else {
            0.0
        }
    };
    let (sx, sy) = (scale(grid.width, out_w), scale(grid.height, out_h));
    Ok(RealGrid::from_fn(out_w, out_h, |x, y| {
        let fx = x as f64 * sx;
        let fy = y as f64 * sy;
        let x0 = (fx.floor() as usize).min(grid.width - 1);
        let y0 = (fy.floor() as usize).min(grid.height - 1);
        let x1 = (x0 + 1).min(grid.width - 1);
        let y1 = (y0 + 1).min(grid.height - 1);
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let top = grid.get(x0, y0) * (1.0 - tx) + grid.get(x1, y0) * tx;
        let bottom = grid.get(x0, y1) * (1.0 - tx) + grid.get(x1, y1) * tx;
        let v = top * (1.0 - ty) + bottom * ty;
        // interpolation weights are convex; clamp away rounding drift
        let (lo, hi) = (
            grid.get(x0, y0)
                .min(grid.get(x1, y0))
                .min(grid.get(x0, y1))
                .min(grid.get(x1, y1)),
            grid.get(x0, y0)
                .max(grid.get(x1, y0))
                .max(grid.get(x0, y1))
                .max(grid.get(x1, y1)),
        );
        v.clamp(lo, hi)
    }))
}

/// Normalized 1-D Gaussian kernel of the given length.
pub fn gaussian_kernel(len: usize, sigma: f64) -> Vec<f64> {
    let center = (len as f64 - 1.0) / 2.0;
    let mut k: Vec<f64> = (0..len)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable convolution with an odd-length kernel and replicate padding.
pub fn convolve_separable(grid: &RealGrid, kernel: &[f64]) -> RealGrid {
    let r = (kernel.len() / 2) as isize;
    let horizontal = RealGrid::from_fn(grid.width, grid.height, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * grid.get_clamped(x as isize + i as isize - r, y as isize))
            .sum()
    });
    RealGrid::from_fn(grid.width, grid.height, |x, y| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * horizontal.get_clamped(x as isize, y as isize + i as isize - r))
            .sum()
    })
}

/// Gaussian blur with radius `ceil(3 sigma)`; `sigma <= 0` returns the input.
pub fn gaussian_blur(grid: &RealGrid, sigma: f64) -> RealGrid {
    if sigma <= 0.0 {
        return grid.clone();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    convolve_separable(grid, &gaussian_kernel(2 * radius + 1, sigma))
}
