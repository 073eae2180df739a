use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use super::{Image, ImageError};

/// Loads PNG/PGM (and anything else the `image` crate decodes) as luminance.
/// Color inputs are converted with BT.601 weights.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image, ImageError> {
    let path = path.as_ref();
    let dynamic = image::open(path).map_err(|e| ImageError::Io(format!("{}: {e}", path.display())))?;
    Ok(from_dynamic(&dynamic))
}

pub(crate) fn from_dynamic(dynamic: &DynamicImage) -> Image {
    let (w, h) = (dynamic.width() as usize, dynamic.height() as usize);
    if dynamic.color().has_color() {
        let rgb = dynamic.to_rgb32f();
        let data = rgb
            .pixels()
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect();
        Image::new(w, h, data).expect("decoded image is finite")
    } else {
        let luma = dynamic.to_luma32f();
        Image::new(w, h, luma.into_raw()).expect("decoded image is finite")
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let buf: Vec<u8> = img.data().iter().map(|&v| to_u8(v)).collect();
    let gray = GrayImage::from_raw(img.width() as u32, img.height() as u32, buf)
        .ok_or_else(|| ImageError::Io("buffer size mismatch".into()))?;
    gray.save(path.as_ref())
        .map_err(|e| ImageError::Io(format!("{}: {e}", path.as_ref().display())))
}

/// 8-bit RGB drawing surface.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbCanvas {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl RgbCanvas {
    pub fn new(width: usize, height: usize) -> Self {
        RgbCanvas { width, height, pixels: vec![[0, 0, 0]; width * height] }
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }

    pub fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = color;
        }
    }

    /// Copies a grayscale image with its top-left corner at `(x0, y0)`.
    pub fn blit_gray(&mut self, img: &Image, x0: usize, y0: usize) {
        for y in 0..img.height() {
            for x in 0..img.width() {
                let v = to_u8(img.get(x, y));
                self.put((x0 + x) as i64, (y0 + y) as i64, [v, v, v]);
            }
        }
    }

    /// Draws a 1-px line between pixel centers (DDA).
    pub fn line(&mut self, from: (f64, f64), to: (f64, f64), color: [u8; 3]) {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let steps = dx.abs().max(dy.abs()).ceil().max(1.0) as usize;
        for i in 0..=steps {
            let a = i as f64 / steps as f64;
            let x = (from.0 + a * dx).round() as i64;
            let y = (from.1 + a * dy).round() as i64;
            self.put(x, y, color);
        }
    }
}

pub fn save_rgb_png(canvas: &RgbCanvas, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let raw: Vec<u8> = canvas.pixels.iter().flatten().copied().collect();
    let rgb = RgbImage::from_raw(canvas.width as u32, canvas.height as u32, raw)
        .ok_or_else(|| ImageError::Io("buffer size mismatch".into()))?;
    rgb.save(path.as_ref())
        .map_err(|e| ImageError::Io(format!("{}: {e}", path.as_ref().display())))
}
