//! Local feature detectors and reprojection of their frames.
//!
//! Every detector returns [`AffineFrame`]s: a center plus a 2×2 matrix mapping the
//! unit circle onto the feature's characteristic ellipse (its scale, not the
//! larger measurement region used for description).

mod dog;
mod fast;
mod hessaff;
mod scalespace;

use serde::{Deserialize, Serialize};

use crate::geometry::{singular_values, Mat2, Vec2};
use crate::imgproc::Image;
use crate::synth::SynthView;

pub use dog::detect_dog;
pub use fast::detect_fast;
pub use hessaff::{adapt_affine_shape, detect_hessaff};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Tier {
    Fast,
    DoG,
    HessAff,
}

impl Tier {
    pub fn name(&self) -> &'static str {
        match self {
            Tier::Fast => "fast",
            Tier::DoG => "dog",
            Tier::HessAff => "hessaff",
        }
    }
}

/// An oriented local feature in some image's pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "FrameRecord", into = "FrameRecord")]
pub struct AffineFrame {
    pub center: Vec2,
    pub shape: Mat2,
    pub response: f64,
    pub tier: Tier,
    pub view_id: usize,
}

/// Flat serialized form of a frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub x: f64,
    pub y: f64,
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub response: f64,
    pub tier: Tier,
    pub view_id: usize,
}

impl From<FrameRecord> for AffineFrame {
    fn from(r: FrameRecord) -> Self {
        AffineFrame {
            center: Vec2::new(r.x, r.y),
            shape: Mat2::new(r.a11, r.a12, r.a21, r.a22),
            response: r.response,
            tier: r.tier,
            view_id: r.view_id,
        }
    }
}

impl From<AffineFrame> for FrameRecord {
    fn from(f: AffineFrame) -> Self {
        FrameRecord {
            x: f.center.x,
            y: f.center.y,
            a11: f.shape[(0, 0)],
            a12: f.shape[(0, 1)],
            a21: f.shape[(1, 0)],
            a22: f.shape[(1, 1)],
            response: f.response,
            tier: f.tier,
            view_id: f.view_id,
        }
    }
}

impl AffineFrame {
    pub fn circular(center: Vec2, radius: f64, response: f64, tier: Tier) -> Self {
        AffineFrame { center, shape: Mat2::identity() * radius, response, tier, view_id: 0 }
    }

    /// Geometric mean of the ellipse semi-axes.
    pub fn scale(&self) -> f64 {
        self.shape.determinant().abs().sqrt()
    }

    /// Ellipse semi-axes `(major, minor)`.
    pub fn semi_axes(&self) -> (f64, f64) {
        singular_values(&self.shape)
    }
}

/// Knobs shared by all detectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorParams {
    /// Detector-specific response threshold (intensities are in `[0, 1]`).
    pub threshold: f64,
    pub max_features: usize,
    /// Pyramid levels (FAST) or intervals per octave (DoG, Hessian).
    pub levels: usize,
    pub adaptation_iterations: usize,
}

impl DetectorParams {
    pub fn for_tier(tier: Tier) -> Self {
        match tier {
            Tier::Fast => DetectorParams {
                threshold: 0.06,
                max_features: 3000,
                levels: 4,
                adaptation_iterations: 0,
            },
            Tier::DoG => DetectorParams {
                threshold: 0.04 / 3.0,
                max_features: 3000,
                levels: 3,
                adaptation_iterations: 0,
            },
            Tier::HessAff => DetectorParams {
                threshold: 1e-4,
                max_features: 3000,
                levels: 3,
                adaptation_iterations: 16,
            },
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.threshold >= 0.0) {
            return Err("detector threshold must be >= 0".into());
        }
        if self.max_features < 1 || self.levels < 1 {
            return Err("detector caps must be >= 1".into());
        }
        Ok(())
    }
}

/// Runs the detector of `tier` on a plain image.
pub fn detect(img: &Image, tier: Tier, params: &DetectorParams) -> Vec<AffineFrame> {
    match tier {
        Tier::Fast => detect_fast(img, params),
        Tier::DoG => detect_dog(img, params),
        Tier::HessAff => detect_hessaff(img, params),
    }
}

/// Sorts by descending response, ties by `(y, x)`, and truncates to `cap`.
pub(crate) fn rank_and_cap(frames: &mut Vec<AffineFrame>, cap: usize) {
    frames.sort_by(|a, b| {
        b.response
            .total_cmp(&a.response)
            .then(a.center.y.total_cmp(&b.center.y))
            .then(a.center.x.total_cmp(&b.center.x))
    });
    frames.truncate(cap);
}

/// Detects on a synthesized view, dropping frames that touch the view's empty
/// (zero-filled) margin. Frames stay in view coordinates.
pub fn detect_in_view(view: &SynthView, view_id: usize, tier: Tier, params: &DetectorParams) -> Vec<AffineFrame> {
    let mut frames = detect(&view.image, tier, params);
    if view.valid.is_some() {
        frames.retain(|f| {
            (0..8).all(|k| {
                let a = k as f64 * std::f64::consts::FRAC_PI_4;
                let p = f.center + f.shape * Vec2::new(a.cos(), a.sin()) * 1.5;
                view.is_valid_at(p.x, p.y)
            }) && view.is_valid_at(f.center.x, f.center.y)
        });
    }
    for f in &mut frames {
        f.view_id = view_id;
    }
    frames
}

/// Maps frames detected in `view` into the original image, dropping those whose
/// center falls outside it. `original_size` is `(width, height)`.
pub fn reproject_frames(frames: &[AffineFrame], view: &SynthView, original_size: (usize, usize)) -> Vec<AffineFrame> {
    let (w, h) = (original_size.0 as f64, original_size.1 as f64);
    frames
        .iter()
        .filter_map(|f| {
            let center = view.back_map.apply(f.center);
            let inside = center.x >= -0.5 && center.y >= -0.5 && center.x <= w - 0.5 && center.y <= h - 0.5;
            inside.then(|| AffineFrame { center, shape: view.back_map.linear * f.shape, ..*f })
        })
        .collect()
}
