//! Grayscale image container and the resampling primitives used by view synthesis.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)`; the image
//! covers `[-0.5, w - 0.5] × [-0.5, h - 0.5]`.

mod filter;
mod io;
mod warp;

use thiserror::Error;

pub use filter::{directional_blur, gaussian_blur, gaussian_kernel};
pub use io::{load_image, save_png, save_rgb_png, RgbCanvas};
pub use warp::{downsample, downsample_back_map, resize_bilinear, warp_affine, Warped};

/// Anti-aliasing blur used before every resampling step, in pixels.
pub const SIGMA_BASE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("image data length {len} does not match {width}x{height}")]
    SizeMismatch { width: usize, height: usize, len: usize },
    #[error("image contains non-finite samples")]
    NonFinite,
    #[error("warped output is empty ({0:.3} x {1:.3})")]
    EmptyOutput(f64, f64),
    #[error("transform is singular")]
    SingularTransform,
    #[error("value outside of the operation's domain: {0}")]
    DomainError(String),
    #[error("image i/o: {0}")]
    Io(String),
}

/// Row-major luminance image with samples nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if width * height != data.len() {
            return Err(ImageError::SizeMismatch { width, height, len: data.len() });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(ImageError::NonFinite);
        }
        Ok(Image { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image { width, height, data: vec![0.0; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Image { width, height, data: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Image { width, height, data }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    /// Pixel with coordinates clamped to the border.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Bilinear sample; `None` outside `[0, w-1] × [0, h-1]` (with a 1e-6 slack).
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> Option<f32> {
        const EPS: f64 = 1e-6;
        let (wm, hm) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(x >= -EPS && y >= -EPS && x <= wm + EPS && y <= hm + EPS) {
            return None;
        }
        Some(self.sample_clamped(x, y))
    }

    /// Bilinear sample with border replication.
    #[inline]
    pub fn sample_clamped(&self, x: f64, y: f64) -> f32 {
        let wm = (self.width - 1) as f64;
        let hm = (self.height - 1) as f64;
        let x = x.clamp(0.0, wm);
        let y = y.clamp(0.0, hm);
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = (x - x0) as f32;
        let fy = (y - y0) as f32;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let w = self.width;
        let d = &self.data;
        let top = d[y0 * w + x0] * (1.0 - fx) + d[y0 * w + x1] * fx;
        let bottom = d[y1 * w + x0] * (1.0 - fx) + d[y1 * w + x1] * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Bilinear sample returning zero outside the image.
    #[inline]
    pub fn sample_or_zero(&self, x: f64, y: f64) -> f32 {
        self.sample(x, y).unwrap_or(0.0)
    }

    /// Copy of the rectangle `[x0, x0+w) × [y0, y0+h)`; panics if it does not fit.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Image {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of bounds");
        Image::from_fn(w, h, |x, y| self.get(x0 + x, y0 + y))
    }
}
