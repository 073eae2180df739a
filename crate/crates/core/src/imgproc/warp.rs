use rayon::prelude::*;

use super::{gaussian_blur, Image, ImageError};
use crate::geometry::{Affine2, Mat2, Vec2};

/// Result of [`warp_affine`].
#[derive(Clone, Debug)]
pub struct Warped {
    pub image: Image,
    /// `true` where the output pixel was sampled from inside the source.
    pub mask: Vec<bool>,
    /// Source pixel → output pixel, including the canvas offset.
    pub forward: Affine2,
    /// Output pixel → source pixel.
    pub back_map: Affine2,
}

/// Resamples `img` through the affine map `transform` (source → target).
///
/// The output canvas is the bounding box of the transformed image outline; the
/// translation part of `transform` therefore only matters through `forward`.
/// Pixels that map outside the source are zero and masked out.
pub fn warp_affine(img: &Image, transform: &Affine2) -> Result<Warped, ImageError> {
    if transform.linear.determinant().abs() < 1e-12 {
        return Err(ImageError::SingularTransform);
    }
    let (w, h) = (img.width() as f64, img.height() as f64);
    let corners = [
        Vec2::new(-0.5, -0.5),
        Vec2::new(w - 0.5, -0.5),
        Vec2::new(-0.5, h - 0.5),
        Vec2::new(w - 0.5, h - 0.5),
    ];
    let mapped = corners.map(|c| transform.apply(c));
    let (mut min, mut max) = (mapped[0], mapped[0]);
    for p in &mapped[1..] {
        min = min.inf(p);
        max = max.sup(p);
    }
    let extent = max - min;
    // tolerate round-off so that exact multiples do not grow by a pixel
    let out_w = (extent.x - 1e-7).ceil();
    let out_h = (extent.y - 1e-7).ceil();
    if img.is_empty() || extent.x < 1.0 - 1e-7 || extent.y < 1.0 - 1e-7 {
        return Err(ImageError::EmptyOutput(extent.x, extent.y));
    }
    let (out_w, out_h) = (out_w as usize, out_h as usize);
    let forward = Affine2::translation(-(min.x + 0.5), -(min.y + 0.5)).then_after(transform);
    let back_map = forward.inverse().ok_or(ImageError::SingularTransform)?;

    let mut data = vec![0.0f32; out_w * out_h];
    let mut mask = vec![false; out_w * out_h];
    let l = back_map.linear;
    let t = back_map.translation;
    data.par_chunks_mut(out_w)
        .zip(mask.par_chunks_mut(out_w))
        .enumerate()
        .for_each(|(y, (drow, mrow))| {
            let yf = y as f64;
            for x in 0..out_w {
                let xf = x as f64;
                let sx = l[(0, 0)] * xf + l[(0, 1)] * yf + t.x;
                let sy = l[(1, 0)] * xf + l[(1, 1)] * yf + t.y;
                if let Some(v) = img.sample(sx, sy) {
                    drow[x] = v;
                    mrow[x] = true;
                }
            }
        });
    Ok(Warped {
        image: Image::new(out_w, out_h, data).expect("finite samples"),
        mask,
        forward,
        back_map,
    })
}

/// Bilinear resize where output pixel `i` samples source `(i + 0.5)·sx - 0.5`.
pub fn resize_bilinear(img: &Image, out_w: usize, out_h: usize) -> Image {
    let sx = img.width() as f64 / out_w as f64;
    let sy = img.height() as f64 / out_h as f64;
    let mut data = vec![0.0f32; out_w * out_h];
    data.par_chunks_mut(out_w).enumerate().for_each(|(y, row)| {
        let src_y = (y as f64 + 0.5) * sy - 0.5;
        for (x, v) in row.iter_mut().enumerate() {
            *v = img.sample_clamped((x as f64 + 0.5) * sx - 0.5, src_y);
        }
    });
    Image::new(out_w, out_h, data).expect("finite samples")
}

/// Maps pixels of an image downsampled by `s` back to the source.
pub fn downsample_back_map(s: f64) -> Affine2 {
    Affine2::new(Mat2::identity() / s, Vec2::repeat(0.5 / s - 0.5))
}

/// Anti-aliased downsampling to `⌈s·W⌉ × ⌈s·H⌉`.
///
/// The source is blurred with `σ = sigma_base / s` (`sigma_base` at `s = 1`),
/// which is the `sigma_base` anti-alias level measured in output pixels.
pub fn downsample(img: &Image, s: f64, sigma_base: f64) -> Result<Image, ImageError> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(ImageError::DomainError(format!("scale factor must be in (0, 1], got {s}")));
    }
    let sigma = sigma_base / s;
    let blurred = gaussian_blur(img, sigma, sigma);
    if s == 1.0 {
        return Ok(blurred);
    }
    let out_w = ((img.width() as f64 * s) - 1e-9).ceil().max(1.0) as usize;
    let out_h = ((img.height() as f64 * s) - 1e-9).ceil().max(1.0) as usize;
    // the grid uses the nominal factor so that `downsample_back_map(s)` is exact
    let mut data = vec![0.0f32; out_w * out_h];
    let back = downsample_back_map(s);
    data.par_chunks_mut(out_w).enumerate().for_each(|(y, row)| {
        for (x, v) in row.iter_mut().enumerate() {
            let p = back.apply(Vec2::new(x as f64, y as f64));
            *v = blurred.sample_clamped(p.x, p.y);
        }
    });
    Ok(Image::new(out_w, out_h, data).expect("finite samples"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::rotation;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.gen())
    }

    #[test]
    fn identity_warp_is_identity() {
        let img = noise(23, 17, 1);
        let out = warp_affine(&img, &Affine2::identity()).unwrap();
        assert_eq!(out.image, img);
        assert!(out.mask.iter().all(|&m| m));
        assert_eq!(out.back_map, Affine2::identity());
    }

    #[test]
    fn pure_tilt_halves_width() {
        let img = noise(100, 100, 2);
        let t = Affine2::from_linear(Mat2::new(0.5, 0.0, 0.0, 1.0));
        let out = warp_affine(&img, &t).unwrap();
        assert_eq!((out.image.width(), out.image.height()), (50, 100));
    }

    #[test]
    fn back_map_inverts_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let img = noise(40, 30, 3);
        for _ in 0..20 {
            let lin = rotation(rng.gen_range(0.0..6.28))
                * Mat2::new(rng.gen_range(0.2..1.0), 0.0, 0.0, rng.gen_range(0.5..1.5));
            let t = Affine2::new(lin, Vec2::new(rng.gen_range(-9.0..9.0), 3.0));
            let out = warp_affine(&img, &t).unwrap();
            for (x, y) in [(0.0, 0.0), (5.0, 7.0), (out.image.width() as f64 - 1.0, 2.0)] {
                let p = Vec2::new(x, y);
                let src = out.back_map.apply(p);
                // algebraic round-trip through the independently composed map
                let again = out.forward.apply(src);
                assert!((again - p).norm() <= 1e-9);
            }
            // canvas offset only: forward differs from `t` by a translation
            assert!((out.forward.linear - t.linear).norm() == 0.0);
        }
    }

    #[test]
    fn quarter_turn_permutes_indices() {
        let n = 12;
        let img = noise(n, n, 4);
        let out = warp_affine(&img, &Affine2::from_linear(rotation(std::f64::consts::FRAC_PI_2))).unwrap();
        assert_eq!((out.image.width(), out.image.height()), (n, n));
        for y in 0..n {
            for x in 0..n {
                // (x, y) -> (-y, x), re-anchored on the canvas
                let v = out.image.get(n - 1 - y, x);
                assert!((v - img.get(x, y)).abs() <= 1e-6);
            }
        }
    }

    #[test]
    fn degenerate_warp_is_rejected() {
        let img = noise(4, 4, 5);
        let squash = Affine2::from_linear(Mat2::new(0.1, 0.0, 0.0, 1.0));
        assert!(matches!(warp_affine(&img, &squash), Err(ImageError::EmptyOutput(..))));
        let singular = Affine2::from_linear(Mat2::new(1.0, 1.0, 1.0, 1.0));
        assert!(matches!(warp_affine(&img, &singular), Err(ImageError::SingularTransform)));
    }

    #[test]
    fn warp_is_deterministic() {
        let img = noise(64, 48, 6);
        let t = Affine2::from_linear(rotation(0.3) * Mat2::new(0.4, 0.0, 0.0, 1.0));
        let a = warp_affine(&img, &t).unwrap();
        let b = warp_affine(&img, &t).unwrap();
        assert_eq!(a.image, b.image);
    }

    #[test]
    fn downsample_dimensions() {
        let img = noise(256, 256, 7);
        let same = downsample(&img, 1.0, 0.8).unwrap();
        assert_eq!((same.width(), same.height()), (256, 256));
        let q = downsample(&img, 0.25, 0.8).unwrap();
        assert_eq!((q.width(), q.height()), (64, 64));
        let e = downsample(&noise(100, 30, 8), 0.125, 0.8).unwrap();
        assert_eq!((e.width(), e.height()), (13, 4));
        assert!(downsample(&img, 0.0, 0.8).is_err());
        assert!(downsample(&img, 1.5, 0.8).is_err());
    }

    #[test]
    fn downsample_keeps_constants() {
        let img = Image::filled(50, 40, 0.6);
        for s in [1.0, 0.5, 0.25, 0.125] {
            let out = downsample(&img, s, 0.8).unwrap();
            assert!(out.data().iter().all(|v| (v - 0.6).abs() < 1e-5));
        }
    }
}
