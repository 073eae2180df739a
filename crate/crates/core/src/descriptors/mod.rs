//! Patch normalization, dominant orientation, RootSIFT and BRIEF descriptors.

mod pattern;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{AffineFrame, Tier};
use crate::geometry::{rotation, singular_values, wrap_angle, Affine2, Vec2};
use crate::imgproc::{downsample, downsample_back_map, gaussian_blur, Image};

/// Patch side for RootSIFT.
pub const SIFT_PATCH: usize = 41;
/// Patch side for BRIEF.
pub const BRIEF_PATCH: usize = 32;
/// Smoothing applied to BRIEF patches before the comparisons.
pub const BRIEF_SMOOTHING: f64 = 2.0;
/// Measurement region radius in units of the frame's ellipse.
pub const MEASUREMENT_MAGNIFICATION: f64 = 3.0;

const ORIENTATION_BINS: usize = 36;
const ORIENTATION_PEAK_RATIO: f64 = 0.8;
const MAX_ORIENTATIONS: usize = 2;
const SIFT_CLIP: f32 = 0.2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("patch has no gradient energy")]
    ZeroPatch,
    #[error("patch too small: {0}×{1}")]
    PatchTooSmall(usize, usize),
    #[error("invalid descriptor record: {0}")]
    Parse(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescriptorKind {
    RootSift,
    Binary,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Descriptor {
    /// 128 non-negative entries of unit Euclidean norm.
    RootSift(Vec<f32>),
    /// 256 comparison bits.
    Binary([u64; 4]),
}

impl Descriptor {
    pub fn kind(&self) -> DescriptorKind {
        match self {
            Descriptor::RootSift(_) => DescriptorKind::RootSift,
            Descriptor::Binary(_) => DescriptorKind::Binary,
        }
    }

    /// The all-equal unit-norm RootSIFT vector.
    pub fn uniform_root_sift() -> Self {
        Descriptor::RootSift(vec![1.0 / (128f32).sqrt(); 128])
    }

    /// Euclidean distance for RootSIFT, Hamming distance for binary; `None`
    /// across kinds.
    pub fn distance(&self, other: &Descriptor) -> Option<f64> {
        match (self, other) {
            (Descriptor::RootSift(a), Descriptor::RootSift(b)) => {
                Some(a.iter().zip(b).map(|(x, y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt())
            }
            (Descriptor::Binary(a), Descriptor::Binary(b)) => {
                Some(a.iter().zip(b).map(|(x, y)| (x ^ y).count_ones()).sum::<u32>() as f64)
            }
            _ => None,
        }
    }

    pub fn to_hex(bits: &[u64; 4]) -> String {
        bits.iter().flat_map(|w| w.to_le_bytes()).map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_hex(hex: &str) -> Result<[u64; 4], DescriptorError> {
        if hex.len() != 64 || !hex.is_ascii() {
            return Err(DescriptorError::Parse(format!("expected 64 hex digits, got {:?}", hex)));
        }
        let mut bits = [0u64; 4];
        for (w, word) in bits.iter_mut().enumerate() {
            let mut bytes = [0u8; 8];
            for (i, b) in bytes.iter_mut().enumerate() {
                let at = 2 * (8 * w + i);
                *b = u8::from_str_radix(&hex[at..at + 2], 16).map_err(|e| DescriptorError::Parse(e.to_string()))?;
            }
            *word = u64::from_le_bytes(bytes);
        }
        Ok(bits)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum DescriptorRecord {
    RootSift { values: Vec<f32> },
    Binary { hex: String },
}

impl Serialize for Descriptor {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Descriptor::RootSift(v) => DescriptorRecord::RootSift { values: v.clone() },
            Descriptor::Binary(b) => DescriptorRecord::Binary { hex: Descriptor::to_hex(b) },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Descriptor {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        match DescriptorRecord::deserialize(d)? {
            DescriptorRecord::RootSift { values } if values.len() == 128 => Ok(Descriptor::RootSift(values)),
            DescriptorRecord::RootSift { values } => {
                Err(serde::de::Error::custom(format!("RootSIFT needs 128 values, got {}", values.len())))
            }
            DescriptorRecord::Binary { hex } => {
                Descriptor::from_hex(&hex).map(Descriptor::Binary).map_err(serde::de::Error::custom)
            }
        }
    }
}

/// A frame with one orientation and its descriptor. The patch was sampled
/// through `frame.shape · R(orientation)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DescribedFeature {
    pub frame: AffineFrame,
    pub descriptor: Descriptor,
    pub orientation: f64,
}

impl DescribedFeature {
    /// The oriented local affine frame `shape · R(orientation)`.
    pub fn laf(&self) -> crate::geometry::Mat2 {
        self.frame.shape * rotation(self.orientation)
    }
}

/// Samples a `size × size` patch through the frame: patch pixel `(i, j)` reads
/// the image at `c + 3·shape·R(orientation)·p` where `p ∈ (−1, 1)²` is the
/// pixel's center in normalized patch coordinates. Bilinear; zero outside.
pub fn normalize_patch(img: &Image, frame: &AffineFrame, orientation: f64, size: usize) -> Image {
    let m = frame.shape * rotation(orientation) * MEASUREMENT_MAGNIFICATION;
    let map = Affine2::new(m, frame.center);
    sample_patch(img, &map, size)
}

fn sample_patch(img: &Image, map: &Affine2, size: usize) -> Image {
    let n = size as f64;
    Image::from_fn(size, size, |i, j| {
        let p = Vec2::new(2.0 * (i as f64 + 0.5) / n - 1.0, 2.0 * (j as f64 + 0.5) / n - 1.0);
        let q = map.apply(p);
        img.sample_or_zero(q.x, q.y)
    })
}

/// Image pyramid used to sample large measurement regions without aliasing.
pub struct PatchSampler {
    /// Each level with the map from input coordinates to level coordinates.
    levels: Vec<(Image, Affine2)>,
}

impl PatchSampler {
    pub fn new(img: &Image) -> Self {
        let mut levels = vec![(img.clone(), Affine2::identity())];
        loop {
            let (prev, to_prev) = levels.last().expect("non-empty");
            if prev.width().min(prev.height()) < 16 {
                break;
            }
            let next = downsample(prev, 0.5, crate::imgproc::SIGMA_BASE).expect("valid factor");
            let to_next = downsample_back_map(0.5).inverse().expect("invertible").then_after(to_prev);
            levels.push((next, to_next));
        }
        PatchSampler { levels }
    }

    /// [`normalize_patch`] evaluated on the coarsest level whose pixels are
    /// still no larger than the patch sample spacing.
    pub fn patch(&self, frame: &AffineFrame, orientation: f64, size: usize) -> Image {
        let m = frame.shape * rotation(orientation) * MEASUREMENT_MAGNIFICATION;
        let (_, minor) = singular_values(&m);
        let spacing = 2.0 * minor / size as f64;
        let level = if spacing > 1.0 { (spacing.log2().floor() as usize).min(self.levels.len() - 1) } else { 0 };
        let (img, to_level) = &self.levels[level];
        let map = to_level.then_after(&Affine2::new(m, frame.center));
        sample_patch(img, &map, size)
    }
}

fn gradients(patch: &Image) -> Vec<(f64, f64)> {
    let (w, h) = (patch.width(), patch.height());
    let mut g = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (xi, yi) = (x as isize, y as isize);
            let gx = 0.5 * (patch.get_clamped(xi + 1, yi) - patch.get_clamped(xi - 1, yi)) as f64;
            let gy = 0.5 * (patch.get_clamped(xi, yi + 1) - patch.get_clamped(xi, yi - 1)) as f64;
            g.push((gx, gy));
        }
    }
    g
}

/// Dominant gradient orientations of a patch (radians in `[0, 2π)`, strongest
/// first, at most two). Gradient angles follow image axes (y down).
pub fn dominant_orientations(patch: &Image) -> Vec<f64> {
    let (w, h) = (patch.width(), patch.height());
    let grads = gradients(patch);
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let sigma = w.min(h) as f64 / 4.0;
    let mut hist = [0.0f64; ORIENTATION_BINS];
    let tau = std::f64::consts::TAU;
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = grads[y * w + x];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let weight = (-r2 / (2.0 * sigma * sigma)).exp();
            let angle = wrap_angle(gy.atan2(gx), tau);
            // linear vote between the two nearest bins
            let b = angle / tau * ORIENTATION_BINS as f64 - 0.5;
            let b0 = b.floor();
            let frac = b - b0;
            let i0 = (b0 as isize).rem_euclid(ORIENTATION_BINS as isize) as usize;
            hist[i0] += weight * mag * (1.0 - frac);
            hist[(i0 + 1) % ORIENTATION_BINS] += weight * mag * frac;
        }
    }
    for _ in 0..2 {
        let prev = hist;
        for i in 0..ORIENTATION_BINS {
            let l = prev[(i + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
            let r = prev[(i + 1) % ORIENTATION_BINS];
            hist[i] = 0.25 * l + 0.5 * prev[i] + 0.25 * r;
        }
    }
    let max = hist.iter().cloned().fold(0.0, f64::max);
    if !(max > 1e-12) {
        return vec![0.0];
    }
    let mut peaks: Vec<(f64, f64)> = (0..ORIENTATION_BINS)
        .filter_map(|i| {
            let l = hist[(i + ORIENTATION_BINS - 1) % ORIENTATION_BINS];
            let c = hist[i];
            let r = hist[(i + 1) % ORIENTATION_BINS];
            if c < ORIENTATION_PEAK_RATIO * max || c <= l || c < r {
                return None;
            }
            let denom = l - 2.0 * c + r;
            let offset = if denom.abs() > 1e-18 { 0.5 * (l - r) / denom } else { 0.0 };
            let angle = (i as f64 + 0.5 + offset) / ORIENTATION_BINS as f64 * tau;
            Some((c, wrap_angle(angle, tau)))
        })
        .collect();
    peaks.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)));
    peaks.truncate(MAX_ORIENTATIONS);
    peaks.into_iter().map(|(_, a)| a).collect()
}

/// SIFT histogram (4×4 cells × 8 orientations, Gaussian-weighted, trilinear
/// votes, clipped at 0.2) mapped through the RootSIFT transform.
pub fn root_sift(patch: &Image) -> Result<Descriptor, DescriptorError> {
    let (w, h) = (patch.width(), patch.height());
    if w < 8 || h < 8 {
        return Err(DescriptorError::PatchTooSmall(w, h));
    }
    let grads = gradients(patch);
    let tau = std::f64::consts::TAU;
    let (cx, cy) = ((w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0);
    let sigma = 0.5 * w as f64;
    let mut hist = [0.0f64; 128];
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = grads[y * w + x];
            let mag = (gx * gx + gy * gy).sqrt();
            if mag == 0.0 {
                continue;
            }
            let r2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            let m = mag * (-r2 / (2.0 * sigma * sigma)).exp();
            let bx = (x as f64 + 0.5) / w as f64 * 4.0 - 0.5;
            let by = (y as f64 + 0.5) / h as f64 * 4.0 - 0.5;
            let bo = wrap_angle(gy.atan2(gx), tau) / tau * 8.0;
            let (x0, y0, o0) = (bx.floor(), by.floor(), bo.floor());
            let (fx, fy, fo) = (bx - x0, by - y0, bo - o0);
            for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
                let yi = y0 as isize + dy;
                if !(0..4).contains(&yi) {
                    continue;
                }
                for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
                    let xi = x0 as isize + dx;
                    if !(0..4).contains(&xi) {
                        continue;
                    }
                    for (dob, wo) in [(0, 1.0 - fo), (1, fo)] {
                        let oi = (o0 as usize + dob) % 8;
                        hist[(yi as usize * 4 + xi as usize) * 8 + oi] += m * wy * wx * wo;
                    }
                }
            }
        }
    }
    let norm = hist.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(DescriptorError::ZeroPatch);
    }
    let mut v: Vec<f32> = hist.iter().map(|x| ((x / norm) as f32).min(SIFT_CLIP)).collect();
    let l1: f32 = v.iter().sum();
    for x in &mut v {
        *x = (*x / l1).sqrt();
    }
    // the square root of an L1-normalized vector already has unit L2 norm;
    // renormalize only to remove round-off
    let l2 = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    for x in &mut v {
        *x /= l2;
    }
    Ok(Descriptor::RootSift(v))
}

/// 256 intensity comparisons at the frozen point pairs; bit `k` is set when
/// the first point of pair `k` is darker than the second. The patch must be
/// at least 32×32 and already smoothed.
pub fn brief(patch: &Image) -> Result<Descriptor, DescriptorError> {
    let (w, h) = (patch.width(), patch.height());
    if w < BRIEF_PATCH || h < BRIEF_PATCH {
        return Err(DescriptorError::PatchTooSmall(w, h));
    }
    let (ox, oy) = ((w - BRIEF_PATCH) / 2, (h - BRIEF_PATCH) / 2);
    let mut bits = [0u64; 4];
    for (k, [x1, y1, x2, y2]) in pattern::PATTERN.iter().enumerate() {
        let a = patch.get(ox + *x1 as usize, oy + *y1 as usize);
        let b = patch.get(ox + *x2 as usize, oy + *y2 as usize);
        if a < b {
            bits[k / 64] |= 1 << (k % 64);
        }
    }
    Ok(Descriptor::Binary(bits))
}

/// Describes frames detected in `img`. Each frame yields one feature per
/// dominant orientation (FAST frames are already oriented and yield one);
/// patches without gradient energy are skipped. Output follows frame order.
pub fn describe(img: &Image, frames: &[AffineFrame], kind: DescriptorKind) -> Vec<DescribedFeature> {
    let sampler = PatchSampler::new(img);
    frames
        .par_iter()
        .flat_map_iter(|frame| {
            let orientations = if frame.tier == Tier::Fast {
                vec![0.0]
            } else {
                dominant_orientations(&sampler.patch(frame, 0.0, SIFT_PATCH))
            };
            let sampler = &sampler;
            orientations.into_iter().filter_map(move |orientation| {
                let descriptor = match kind {
                    DescriptorKind::RootSift => root_sift(&sampler.patch(frame, orientation, SIFT_PATCH)).ok()?,
                    DescriptorKind::Binary => {
                        let patch = sampler.patch(frame, orientation, BRIEF_PATCH);
                        brief(&gaussian_blur(&patch, BRIEF_SMOOTHING, BRIEF_SMOOTHING)).ok()?
                    }
                };
                Some(DescribedFeature { frame: *frame, descriptor, orientation })
            })
        })
        .collect()
}
