//! FAST-9 corners on a small image pyramid, Harris-ranked, oriented by the
//! intensity centroid (the ORB construction).

use rayon::prelude::*;

use super::{rank_and_cap, AffineFrame, DetectorParams, Tier};
use crate::geometry::{rotation, Vec2};
use crate::imgproc::{resize_bilinear, Image};

const PYRAMID_FACTOR: f64 = 1.2;
/// Frame radius at pyramid level 0; the 3× measurement region then covers
/// ORB's 31-pixel patch.
const FRAME_RADIUS: f64 = 5.0;
const CENTROID_RADIUS: isize = 15;
const HARRIS_K: f64 = 0.04;
const HARRIS_HALF_BLOCK: isize = 3;
/// Circle radius plus the Harris window (Sobel reaches one pixel further).
const BORDER: usize = 4;
const ARC_LENGTH: usize = 9;

/// Bresenham circle of radius 3, clockwise from the top.
const CIRCLE: [(isize, isize); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

/// Segment-test score: the largest threshold at which the pixel still passes,
/// or `None` if it fails at `t`.
fn corner_score(img: &Image, x: usize, y: usize, t: f32) -> Option<f32> {
    let p = img.get(x, y);
    let ring: [f32; 16] = CIRCLE.map(|(dx, dy)| p - img.get((x as isize + dx) as usize, (y as isize + dy) as usize));
    // the best threshold of an arc is its smallest |difference|
    let mut best = f32::NEG_INFINITY;
    for sign in [1.0f32, -1.0] {
        for start in 0..16 {
            let arc_min = (0..ARC_LENGTH).map(|k| sign * ring[(start + k) % 16]).fold(f32::INFINITY, f32::min);
            best = best.max(arc_min);
        }
    }
    (best > t).then_some(best)
}

fn harris(img: &Image, x: usize, y: usize) -> f64 {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let g = |x: isize, y: isize| img.get(x.clamp(0, w - 1) as usize, y.clamp(0, h - 1) as usize) as f64;
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for j in -HARRIS_HALF_BLOCK..=HARRIS_HALF_BLOCK {
        for i in -HARRIS_HALF_BLOCK..=HARRIS_HALF_BLOCK {
            let (px, py) = (x as isize + i, y as isize + j);
            let ix = (g(px + 1, py - 1) + 2.0 * g(px + 1, py) + g(px + 1, py + 1))
                - (g(px - 1, py - 1) + 2.0 * g(px - 1, py) + g(px - 1, py + 1));
            let iy = (g(px - 1, py + 1) + 2.0 * g(px, py + 1) + g(px + 1, py + 1))
                - (g(px - 1, py - 1) + 2.0 * g(px, py - 1) + g(px + 1, py - 1));
            a += ix * ix;
            b += iy * iy;
            c += ix * iy;
        }
    }
    a * b - c * c - HARRIS_K * (a + b) * (a + b)
}

fn centroid_angle(img: &Image, x: usize, y: usize) -> f64 {
    let (mut m10, mut m01) = (0.0, 0.0);
    let r2 = CENTROID_RADIUS * CENTROID_RADIUS;
    for j in -CENTROID_RADIUS..=CENTROID_RADIUS {
        for i in -CENTROID_RADIUS..=CENTROID_RADIUS {
            if i * i + j * j > r2 {
                continue;
            }
            let v = img.get_clamped(x as isize + i, y as isize + j) as f64;
            m10 += i as f64 * v;
            m01 += j as f64 * v;
        }
    }
    m01.atan2(m10)
}

fn detect_level(img: &Image, threshold: f32, level_scale: f64) -> Vec<AffineFrame> {
    let (w, h) = (img.width(), img.height());
    if w <= 2 * BORDER || h <= 2 * BORDER {
        return Vec::new();
    }
    let mut scores = vec![0.0f32; w * h];
    scores.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        if y < BORDER || y >= h - BORDER {
            return;
        }
        for x in BORDER..w - BORDER {
            if let Some(s) = corner_score(img, x, y, threshold) {
                row[x] = s;
            }
        }
    });
    (BORDER..h - BORDER)
        .into_par_iter()
        .flat_map_iter(|y| {
            let scores = &scores;
            (BORDER..w - BORDER).filter_map(move |x| {
                let s = scores[y * w + x];
                if s <= 0.0 {
                    return None;
                }
                // 3×3 non-maximum suppression; equal neighbours all survive so the
                // result does not depend on the raster direction
                for j in 0..3 {
                    for i in 0..3 {
                        if scores[(y + j - 1) * w + x + i - 1] > s {
                            return None;
                        }
                    }
                }
                let theta = centroid_angle(img, x, y);
                let center = Vec2::new((x as f64 + 0.5) * level_scale - 0.5, (y as f64 + 0.5) * level_scale - 0.5);
                Some(AffineFrame {
                    center,
                    shape: rotation(theta) * (FRAME_RADIUS * level_scale),
                    response: harris(img, x, y),
                    tier: Tier::Fast,
                    view_id: 0,
                })
            })
        })
        .filter(|f| f.response > 0.0)
        .collect()
}

/// FAST-9 segment-test corners over `params.levels` pyramid levels (factor 1.2),
/// ranked by Harris response. Frames are similarity frames: `radius · R(θ)`.
pub fn detect_fast(img: &Image, params: &DetectorParams) -> Vec<AffineFrame> {
    let mut frames = Vec::new();
    for level in 0..params.levels.max(1) {
        let scale = PYRAMID_FACTOR.powi(level as i32);
        let (lw, lh) = ((img.width() as f64 / scale).round() as usize, (img.height() as f64 / scale).round() as usize);
        if lw < 16 || lh < 16 {
            break;
        }
        let level_img = if level == 0 { img.clone() } else { resize_bilinear(img, lw, lh) };
        let sx = img.width() as f64 / lw as f64;
        // `resize_bilinear` maps output i to input (i + 0.5)·sx − 0.5
        frames.extend(detect_level(&level_img, params.threshold as f32, sx));
    }
    rank_and_cap(&mut frames, params.max_features);
    frames
}
