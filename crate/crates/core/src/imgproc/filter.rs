use rayon::prelude::*;

use super::Image;

/// Normalized Gaussian taps for offsets `-r..=r`, `r = ⌈4σ⌉`. Empty for σ ≤ 0.
pub fn gaussian_kernel(sigma: f64) -> Vec<f32> {
    if !(sigma > 0.0) {
        return Vec::new();
    }
    let radius = (4.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter().map(|w| (w / sum) as f32).collect()
}

fn blur_rows(img: &Image, kernel: &[f32]) -> Image {
    let (w, h) = (img.width(), img.height());
    let r = kernel.len() / 2;
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each_with(
        vec![0.0f32; w + 2 * r],
        |padded, (y, dst)| {
            let src = img.row(y);
            padded[..r].fill(src[0]);
            padded[r..r + w].copy_from_slice(src);
            padded[r + w..].fill(src[w - 1]);
            for (x, d) in dst.iter_mut().enumerate() {
                let window = &padded[x..x + kernel.len()];
                *d = window.iter().zip(kernel).map(|(a, b)| a * b).sum();
            }
        },
    );
    Image::new(w, h, out).expect("blur keeps dimensions")
}

fn blur_cols(img: &Image, kernel: &[f32]) -> Image {
    let (w, h) = (img.width(), img.height());
    let r = kernel.len() as isize / 2;
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        for (k, &kw) in kernel.iter().enumerate() {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            for (d, s) in dst.iter_mut().zip(img.row(sy)) {
                *d += kw * s;
            }
        }
    });
    Image::new(w, h, out).expect("blur keeps dimensions")
}

/// Separable Gaussian blur with replicated borders. A zero sigma leaves that
/// direction untouched.
pub fn gaussian_blur(img: &Image, sigma_x: f64, sigma_y: f64) -> Image {
    if img.is_empty() {
        return img.clone();
    }
    let kx = gaussian_kernel(sigma_x);
    let ky = gaussian_kernel(sigma_y);
    let tmp;
    let horizontal = if kx.len() > 1 {
        tmp = blur_rows(img, &kx);
        &tmp
    } else {
        img
    };
    if ky.len() > 1 {
        blur_cols(horizontal, &ky)
    } else {
        horizontal.clone()
    }
}

/// One-dimensional Gaussian blur along the unit direction at `angle` (radians),
/// sampling the line bilinearly with border replication.
pub fn directional_blur(img: &Image, angle: f64, sigma: f64) -> Image {
    let kernel = gaussian_kernel(sigma);
    if kernel.len() <= 1 || img.is_empty() {
        return img.clone();
    }
    let (dy, dx) = angle.sin_cos();
    if dy.abs() < 1e-12 {
        return blur_rows(img, &kernel);
    }
    if dx.abs() < 1e-12 {
        return blur_cols(img, &kernel);
    }
    let (w, h) = (img.width(), img.height());
    let r = kernel.len() as isize / 2;
    let mut out = vec![0.0f32; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        for (x, d) in dst.iter_mut().enumerate() {
            let mut acc = 0.0f32;
            for (k, &kw) in kernel.iter().enumerate() {
                let s = (k as isize - r) as f64;
                acc += kw * img.sample_clamped(x as f64 + s * dx, y as f64 + s * dy);
            }
            *d = acc;
        }
    });
    Image::new(w, h, out).expect("blur keeps dimensions")
}
