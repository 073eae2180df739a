//! Hessian-determinant blob detector with second-moment-matrix affine adaptation.

use rayon::prelude::*;

use super::scalespace::{self, hessian_at, is_extremum, level_sigma, passes_edge_test, quadratic_fit, SIGMA0};
use super::{rank_and_cap, AffineFrame, DetectorParams, Tier};
use crate::geometry::{singular_values, Mat2, Vec2};
use crate::imgproc::{gaussian_blur, Image};

const EDGE_RATIO: f64 = 10.0;
const BORDER: usize = 5;
/// Half-size of the adaptation patch (the window is 19×19 samples).
const PATCH_HALF: isize = 9;
/// Gaussian integration window over the patch, in patch samples.
const WINDOW_SIGMA: f64 = 3.5;
const MAX_CONDITION: f64 = 20.0;
/// Converged once the update's axis ratio is within 5% of 1.
const CONVERGENCE: f64 = 0.95;

fn determinant_image(level: &Image, sigma: f64) -> Image {
    let (w, h) = (level.width(), level.height());
    let norm = sigma.powi(4);
    Image::from_fn(w, h, |x, y| {
        if x == 0 || y == 0 || x + 1 == w || y + 1 == h {
            return 0.0;
        }
        let (dxx, dyy, dxy) = hessian_at(level, x, y);
        ((dxx * dyy - dxy * dxy) * norm) as f32
    })
}

/// Iteratively estimates the affine shape of the structure at `center`.
///
/// `img` is smoothed at `img_sigma` and `sigma` is the feature scale, both in
/// `img` pixels. Each iteration resamples a patch through the current shape and
/// smooths it in the normalized frame, so that the derivative scale follows the
/// shape. Returns the unit-determinant matrix `U` such that `sigma · U` maps the
/// unit circle to the adapted ellipse, or `None` if the iteration does not
/// converge within `max_iterations` or the shape becomes more elongated than
/// the allowed condition number.
pub fn adapt_affine_shape(
    img: &Image,
    img_sigma: f64,
    center: Vec2,
    sigma: f64,
    max_iterations: usize,
) -> Option<Mat2> {
    let win = 2 * PATCH_HALF as usize + 1;
    let mut weights = vec![0.0f64; win * win];
    for j in 0..win {
        for i in 0..win {
            let (dx, dy) = (i as f64 - PATCH_HALF as f64, j as f64 - PATCH_HALF as f64);
            weights[j * win + i] = (-(dx * dx + dy * dy) / (2.0 * WINDOW_SIGMA * WINDOW_SIGMA)).exp();
        }
    }
    // sample spacing: the feature scale becomes SIGMA0 patch samples
    let ratio = sigma / SIGMA0;
    let present = img_sigma / ratio;
    let extra = (SIGMA0 * SIGMA0 - present * present).max(0.0).sqrt();
    let pad = (4.0 * extra).ceil() as usize + 1;
    let n = win + 2 * pad;
    let half = (n / 2) as f64;
    let mut u = Mat2::identity();
    for _ in 0..max_iterations {
        let m = u * ratio;
        let patch = Image::from_fn(n, n, |i, j| {
            let p = center + m * Vec2::new(i as f64 - half, j as f64 - half);
            img.sample_clamped(p.x, p.y)
        });
        let patch = gaussian_blur(&patch, extra, extra);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for j in 0..win {
            for i in 0..win {
                let (x, y) = (i + pad, j + pad);
                let gx = 0.5 * (patch.get(x + 1, y) as f64 - patch.get(x - 1, y) as f64);
                let gy = 0.5 * (patch.get(x, y + 1) as f64 - patch.get(x, y - 1) as f64);
                let w = weights[j * win + i];
                a += w * gx * gx;
                b += w * gx * gy;
                c += w * gy * gy;
            }
        }
        let smm = nalgebra::Matrix2::new(a, b, b, c);
        let eig = smm.symmetric_eigen();
        let (l1, l2) = (eig.eigenvalues[0].max(eig.eigenvalues[1]), eig.eigenvalues[0].min(eig.eigenvalues[1]));
        if !(l2 > 1e-18) {
            return None;
        }
        let inv_sqrt = eig.eigenvectors
            * Mat2::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
            * eig.eigenvectors.transpose();
        u *= inv_sqrt;
        u /= u.determinant().sqrt();
        let (s1, s2) = singular_values(&u);
        if s1 / s2 > MAX_CONDITION {
            return None;
        }
        if (l2 / l1).sqrt() >= CONVERGENCE {
            return Some(u);
        }
    }
    None
}

struct Candidate {
    octave: usize,
    center: Vec2,
    sigma: f64,
    response: f64,
}

/// Positive Hessian-determinant maxima across scale, refined to sub-pixel
/// accuracy and affine-adapted. Frames whose adaptation fails are dropped;
/// with an iteration cap of 0 the frames stay circular.
pub fn detect_hessaff(img: &Image, params: &DetectorParams) -> Vec<AffineFrame> {
    let intervals = params.levels.max(1);
    let octaves = scalespace::build(img, intervals, false);
    let mut candidates = Vec::new();
    for (oi, octave) in octaves.iter().enumerate() {
        let (w, h) = (octave.width(), octave.height());
        if w <= 2 * BORDER + 2 || h <= 2 * BORDER + 2 {
            continue;
        }
        let responses: Vec<Image> = octave.levels[..intervals + 2]
            .par_iter()
            .enumerate()
            .map(|(s, level)| determinant_image(level, level_sigma(s as f64, intervals)))
            .collect();
        let found: Vec<Candidate> = (1..=intervals)
            .into_par_iter()
            .flat_map_iter(|s| {
                let responses = &responses;
                let levels = &octave.levels;
                (BORDER..h - BORDER).flat_map(move |y| {
                    (BORDER..w - BORDER).filter_map(move |x| {
                        let v = responses[s].get(x, y) as f64;
                        if v <= params.threshold || !is_extremum(responses, s, x, y, true) {
                            return None;
                        }
                        let (dxx, dyy, dxy) = hessian_at(&levels[s], x, y);
                        if !passes_edge_test(dxx, dyy, dxy, EDGE_RATIO) {
                            return None;
                        }
                        let sample = |ds: isize, dy: isize, dx: isize| {
                            responses[(s as isize + ds) as usize]
                                .get((x as isize + dx) as usize, (y as isize + dy) as usize) as f64
                        };
                        let (off, value) = quadratic_fit(sample)?;
                        // keep the integer location when the fit is unreliable
                        let off = if off.iter().all(|o| o.abs() <= 1.0) { off } else { [0.0; 3] };
                        Some(Candidate {
                            octave: oi,
                            center: Vec2::new(x as f64 + off[0], y as f64 + off[1]),
                            sigma: level_sigma(s as f64 + off[2], intervals),
                            response: value.max(v),
                        })
                    })
                })
            })
            .collect();
        candidates.extend(found);
    }
    // adapt the strongest first so that the cap bounds the expensive step
    candidates.sort_by(|a, b| b.response.total_cmp(&a.response));
    candidates.truncate(params.max_features.saturating_mul(2));
    let mut frames: Vec<AffineFrame> = candidates
        .par_iter()
        .filter_map(|c| {
            let octave = &octaves[c.octave];
            let u = if params.adaptation_iterations == 0 {
                Mat2::identity()
            } else {
                adapt_affine_shape(&octave.levels[0], SIGMA0, c.center, c.sigma, params.adaptation_iterations)?
            };
            let shape = u * (c.sigma * octave.step);
            let (_, minor) = singular_values(&shape);
            (minor > 0.5).then(|| AffineFrame {
                center: c.center * octave.step,
                shape,
                response: c.response,
                tier: Tier::HessAff,
                view_id: 0,
            })
        })
        .collect();
    rank_and_cap(&mut frames, params.max_features);
    frames
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{rotation, Affine2};
    use crate::imgproc::warp_affine;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params() -> DetectorParams {
        DetectorParams::for_tier(Tier::HessAff)
    }

    fn ellipse_blob(size: usize, sx: f64, sy: f64, angle: f64) -> Image {
        let c = (size as f64 - 1.0) / 2.0;
        let r = rotation(-angle);
        Image::from_fn(size, size, |x, y| {
            let p = r * Vec2::new(x as f64 - c, y as f64 - c);
            let e = (p.x / sx).powi(2) + (p.y / sy).powi(2);
            (0.1 + 0.8 * (-0.5 * e).exp()) as f32
        })
    }

    fn blob_texture(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blobs: Vec<(f64, f64, f64, f64)> = (0..(w * h / 400))
            .map(|_| {
                (
                    rng.gen_range(0.0..w as f64),
                    rng.gen_range(0.0..h as f64),
                    rng.gen_range(2.5..7.0),
                    rng.gen_range(-0.5..0.5),
                )
            })
            .collect();
        Image::from_fn(w, h, |x, y| {
            let mut v = 0.5;
            for &(bx, by, s, a) in &blobs {
                let d2 = (x as f64 - bx).powi(2) + (y as f64 - by).powi(2);
                if d2 < 16.0 * s * s {
                    v += a * (-d2 / (2.0 * s * s)).exp();
                }
            }
            v as f32
        })
    }

    #[test]
    fn constant_image_has_no_frames() {
        assert!(detect_hessaff(&Image::filled(64, 64, 0.3), &params()).is_empty());
    }

    #[test]
    fn elongated_blob_is_adapted() {
        for angle in [0.0, 0.6] {
            let img = ellipse_blob(128, 12.0, 4.0, angle);
            let frames = detect_hessaff(&img, &params());
            let top = frames.first().expect("blob detected");
            let (a, b) = top.semi_axes();
            assert!((2.2..=3.8).contains(&(a / b)), "axis ratio {}", a / b);
            assert!((top.center - Vec2::new(63.5, 63.5)).norm() < 2.0);
        }
    }

    #[test]
    fn adaptation_converges_to_isotropic_on_round_blob() {
        let img = crate::imgproc::gaussian_blur(&ellipse_blob(64, 5.0, 5.0, 0.0), 1.0, 1.0);
        let u = adapt_affine_shape(&img, 1.0, Vec2::new(31.5, 31.5), 5.0, 16).unwrap();
        let (s1, s2) = singular_values(&u);
        assert!(s1 / s2 < 1.15, "{}", s1 / s2);
    }

    /// Ellipse discrepancy: how far `M = S1⁻¹ S2` is from orthogonal.
    fn shape_discrepancy(s1: &Mat2, s2: &Mat2) -> f64 {
        let m = s1.try_inverse().unwrap() * s2;
        let (a, b) = singular_values(&m);
        (a - 1.0).abs().max((b - 1.0).abs())
    }

    #[test]
    fn affine_covariance() {
        let img = blob_texture(200, 200, 4);
        let a = Affine2::from_linear(rotation(0.4) * Mat2::new(1.0, 0.0, 0.0, 0.6) * rotation(-0.2));
        let warped = warp_affine(&img, &a).unwrap();
        let fa: Vec<AffineFrame> = detect_hessaff(&img, &params())
            .into_iter()
            .filter(|f| {
                // ignore frames whose support leaves the warped canvas
                let p = warped.forward.apply(f.center);
                let r = 3.0 * f.semi_axes().0;
                p.x > r && p.y > r && p.x < warped.image.width() as f64 - r && p.y < warped.image.height() as f64 - r
            })
            .collect();
        let fb = detect_hessaff(&warped.image, &params());
        assert!(fa.len() >= 20, "too few frames: {}", fa.len());
        let hits = fa
            .iter()
            .filter(|f| {
                let c = warped.forward.apply(f.center);
                let s = warped.forward.linear * f.shape;
                fb.iter().any(|g| (g.center - c).norm() <= 3.0 && shape_discrepancy(&s, &g.shape) <= 0.3)
            })
            .count();
        let frac = hits as f64 / fa.len() as f64;
        assert!(frac >= 0.5, "only {hits}/{} frames are covariant", fa.len());
    }

    #[test]
    fn frames_respect_condition_bound() {
        for f in detect_hessaff(&blob_texture(160, 120, 6), &params()) {
            let (a, b) = f.semi_axes();
            assert!(a / b <= MAX_CONDITION + 1e-9 && b > 0.5);
            assert!(f.shape.determinant() > 0.0);
        }
    }
}
