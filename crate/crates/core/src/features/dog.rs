//! Difference-of-Gaussians blob detector.

use rayon::prelude::*;

use super::scalespace::{self, hessian_at, is_extremum, level_sigma, passes_edge_test, quadratic_fit};
use super::{rank_and_cap, AffineFrame, DetectorParams, Tier};
use crate::geometry::{Mat2, Vec2};
use crate::imgproc::Image;

const EDGE_RATIO: f64 = 10.0;
const BORDER: usize = 5;
const MAX_REFINE_STEPS: usize = 5;

fn difference(a: &Image, b: &Image) -> Image {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| y - x).collect();
    Image::new(a.width(), a.height(), data).expect("same size")
}

/// Scale-space extrema of the difference of Gaussians, refined to sub-pixel and
/// sub-level accuracy. Frames are circles whose radius is the detected scale.
pub fn detect_dog(img: &Image, params: &DetectorParams) -> Vec<AffineFrame> {
    let intervals = params.levels.max(1);
    let contrast = params.threshold;
    let octaves = scalespace::build(img, intervals, true);
    let mut frames: Vec<AffineFrame> = Vec::new();
    for octave in &octaves {
        let (w, h) = (octave.width(), octave.height());
        if w <= 2 * BORDER + 2 || h <= 2 * BORDER + 2 {
            continue;
        }
        let dogs: Vec<Image> = octave.levels.windows(2).map(|p| difference(&p[0], &p[1])).collect();
        let prelim = 0.5 * contrast / intervals as f64;
        let found: Vec<AffineFrame> = (1..=intervals)
            .into_par_iter()
            .flat_map_iter(|s| {
                let dogs = &dogs;
                (BORDER..h - BORDER).flat_map(move |y| {
                    (BORDER..w - BORDER).filter_map(move |x| {
                        let v = dogs[s].get(x, y) as f64;
                        if v.abs() <= prelim || !is_extremum(dogs, s, x, y, v > 0.0) {
                            return None;
                        }
                        refine(dogs, s, x, y, intervals, contrast, octave.step)
                    })
                })
            })
            .collect();
        frames.extend(found);
    }
    rank_and_cap(&mut frames, params.max_features);
    frames
}

fn refine(
    dogs: &[Image],
    s0: usize,
    x0: usize,
    y0: usize,
    intervals: usize,
    contrast: f64,
    step: f64,
) -> Option<AffineFrame> {
    let (w, h) = (dogs[0].width(), dogs[0].height());
    let (mut s, mut x, mut y) = (s0, x0, y0);
    for _ in 0..MAX_REFINE_STEPS {
        let sample = |ds: isize, dy: isize, dx: isize| {
            dogs[(s as isize + ds) as usize].get((x as isize + dx) as usize, (y as isize + dy) as usize) as f64
        };
        let (off, value) = quadratic_fit(sample)?;
        if off.iter().all(|o| o.abs() < 0.5) {
            if value.abs() * (intervals as f64) < contrast {
                return None;
            }
            let (dxx, dyy, dxy) = hessian_at(&dogs[s], x, y);
            if !passes_edge_test(dxx, dyy, dxy, EDGE_RATIO) {
                return None;
            }
            let sigma = level_sigma(s as f64 + off[2], intervals) * step;
            let center = Vec2::new((x as f64 + off[0]) * step, (y as f64 + off[1]) * step);
            return Some(AffineFrame {
                center,
                shape: Mat2::identity() * sigma,
                response: value.abs(),
                tier: Tier::DoG,
                view_id: 0,
            });
        }
        let nx = x as isize + off[0].round() as isize;
        let ny = y as isize + off[1].round() as isize;
        let ns = s as isize + off[2].round() as isize;
        if ns < 1 || ns > intervals as isize {
            return None;
        }
        if nx < BORDER as isize || ny < BORDER as isize || nx >= (w - BORDER) as isize || ny >= (h - BORDER) as isize {
            return None;
        }
        (s, x, y) = (ns as usize, nx as usize, ny as usize);
    }
    None
}
