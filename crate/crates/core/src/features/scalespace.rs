//! Gaussian scale space shared by the blob detectors.

use crate::imgproc::{gaussian_blur, Image};

/// Blur assumed to be present in any input image.
const NOMINAL_INPUT_SIGMA: f64 = 0.5;
/// Base scale of every octave, in that octave's pixels.
pub(crate) const SIGMA0: f64 = 1.6;
/// Octaves stop once the shorter side would drop below this.
const MIN_OCTAVE_SIZE: usize = 16;

pub(crate) struct Octave {
    /// Pixel size of this octave in input pixels (`2^o`).
    pub step: f64,
    /// `intervals + 3` progressively blurred images.
    pub levels: Vec<Image>,
}

impl Octave {
    pub fn width(&self) -> usize {
        self.levels[0].width()
    }

    pub fn height(&self) -> usize {
        self.levels[0].height()
    }
}

/// Blur of level `s` (fractional allowed) in octave pixels.
pub(crate) fn level_sigma(s: f64, intervals: usize) -> f64 {
    SIGMA0 * 2f64.powf(s / intervals as f64)
}

/// Takes every other pixel, so octave coordinate `x` is input coordinate `2x`.
fn decimate(img: &Image) -> Image {
    let (w, h) = ((img.width() + 1) / 2, (img.height() + 1) / 2);
    Image::from_fn(w, h, |x, y| img.get(2 * x, 2 * y))
}

/// Doubles the resolution; output coordinate `x` samples input coordinate `x / 2`.
fn upsample(img: &Image) -> Image {
    Image::from_fn(2 * img.width(), 2 * img.height(), |x, y| img.sample_clamped(x as f64 * 0.5, y as f64 * 0.5))
}

/// Builds the octave stack. With `double_first`, the input is first upsampled
/// by two so the finest octave has half-pixel steps.
pub(crate) fn build(img: &Image, intervals: usize, double_first: bool) -> Vec<Octave> {
    let mut octaves = Vec::new();
    if img.width().min(img.height()) < MIN_OCTAVE_SIZE {
        return octaves;
    }
    let (mut base, mut step) = if double_first {
        let input_sigma = 2.0 * NOMINAL_INPUT_SIGMA;
        let initial = (SIGMA0 * SIGMA0 - input_sigma * input_sigma).sqrt();
        (gaussian_blur(&upsample(img), initial, initial), 0.5)
    } else {
        let initial = (SIGMA0 * SIGMA0 - NOMINAL_INPUT_SIGMA * NOMINAL_INPUT_SIGMA).sqrt();
        (gaussian_blur(img, initial, initial), 1.0)
    };
    loop {
        let mut levels = Vec::with_capacity(intervals + 3);
        levels.push(base);
        for s in 1..intervals + 3 {
            let prev = level_sigma(s as f64 - 1.0, intervals);
            let cur = level_sigma(s as f64, intervals);
            let inc = (cur * cur - prev * prev).sqrt();
            let next = gaussian_blur(&levels[s - 1], inc, inc);
            levels.push(next);
        }
        let next_base = decimate(&levels[intervals]);
        octaves.push(Octave { step, levels });
        if next_base.width().min(next_base.height()) < MIN_OCTAVE_SIZE {
            break;
        }
        base = next_base;
        step *= 2.0;
    }
    octaves
}

/// Offset of the quadratic-fit extremum of `f` around a 3×3×3 neighbourhood,
/// together with the interpolated value. `f(ds, dy, dx)` samples the stack.
pub(crate) fn quadratic_fit(f: impl Fn(isize, isize, isize) -> f64) -> Option<([f64; 3], f64)> {
    let c = f(0, 0, 0);
    let dx = 0.5 * (f(0, 0, 1) - f(0, 0, -1));
    let dy = 0.5 * (f(0, 1, 0) - f(0, -1, 0));
    let ds = 0.5 * (f(1, 0, 0) - f(-1, 0, 0));
    let dxx = f(0, 0, 1) + f(0, 0, -1) - 2.0 * c;
    let dyy = f(0, 1, 0) + f(0, -1, 0) - 2.0 * c;
    let dss = f(1, 0, 0) + f(-1, 0, 0) - 2.0 * c;
    let dxy = 0.25 * (f(0, 1, 1) - f(0, 1, -1) - f(0, -1, 1) + f(0, -1, -1));
    let dxs = 0.25 * (f(1, 0, 1) - f(1, 0, -1) - f(-1, 0, 1) + f(-1, 0, -1));
    let dys = 0.25 * (f(1, 1, 0) - f(1, -1, 0) - f(-1, 1, 0) + f(-1, -1, 0));
    let h = nalgebra::Matrix3::new(dxx, dxy, dxs, dxy, dyy, dys, dxs, dys, dss);
    let g = nalgebra::Vector3::new(dx, dy, ds);
    let off = -(h.lu().solve(&g)?);
    if !off.iter().all(|v| v.is_finite()) {
        return None;
    }
    let value = c + 0.5 * g.dot(&off);
    Some(([off.x, off.y, off.z], value))
}

/// Spatial Hessian of one image at an integer pixel: `(dxx, dyy, dxy)`.
pub(crate) fn hessian_at(img: &Image, x: usize, y: usize) -> (f64, f64, f64) {
    let v = |dx: isize, dy: isize| img.get((x as isize + dx) as usize, (y as isize + dy) as usize) as f64;
    let c = v(0, 0);
    let dxx = v(1, 0) + v(-1, 0) - 2.0 * c;
    let dyy = v(0, 1) + v(0, -1) - 2.0 * c;
    let dxy = 0.25 * (v(1, 1) - v(1, -1) - v(-1, 1) + v(-1, -1));
    (dxx, dyy, dxy)
}

/// Edge test: ratio of principal curvatures below `r`.
pub(crate) fn passes_edge_test(dxx: f64, dyy: f64, dxy: f64, r: f64) -> bool {
    let tr = dxx + dyy;
    let det = dxx * dyy - dxy * dxy;
    det > 0.0 && tr * tr * r < (r + 1.0) * (r + 1.0) * det
}

/// Whether `stack[s](x, y)` is a strict maximum (or minimum) of its 26 neighbours.
pub(crate) fn is_extremum(stack: &[Image], s: usize, x: usize, y: usize, maximum: bool) -> bool {
    let v = stack[s].get(x, y);
    for (ds, layer) in stack[s - 1..=s + 1].iter().enumerate() {
        for ny in y - 1..=y + 1 {
            for nx in x - 1..=x + 1 {
                if ds == 1 && nx == x && ny == y {
                    continue;
                }
                let n = layer.get(nx, ny);
                if (maximum && n >= v) || (!maximum && n <= v) {
                    return false;
                }
            }
        }
    }
    true
}
