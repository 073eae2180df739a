//! Affine view synthesis: scale, in-plane rotation, anti-aliasing and tilt.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rotation, Affine2, Mat2};
use crate::imgproc::{
    directional_blur, downsample, downsample_back_map, gaussian_blur, warp_affine, Image,
    ImageError, SIGMA_BASE,
};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthesis config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Which views to synthesize: every scale × tilt, and for each tilt `t > 1`
/// longitudes `0, Δφ, 2Δφ, … < 360°` with `Δφ = delta_phi_base / t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub scales: Vec<f64>,
    pub tilts: Vec<f64>,
    /// Degrees.
    pub delta_phi_base: f64,
    #[serde(default = "default_sigma_base")]
    pub sigma_base: f64,
}

fn default_sigma_base() -> f64 {
    SIGMA_BASE
}

impl SynthesisConfig {
    pub fn new(scales: &[f64], tilts: &[f64], delta_phi_base: f64) -> Self {
        SynthesisConfig {
            scales: scales.to_vec(),
            tilts: tilts.to_vec(),
            delta_phi_base,
            sigma_base: SIGMA_BASE,
        }
    }

    /// Only the original image.
    pub fn identity() -> Self {
        SynthesisConfig::new(&[1.0], &[1.0], 360.0)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidConfig(m.to_string()));
        if self.scales.is_empty() {
            return bad("empty scale set");
        }
        if self.tilts.is_empty() {
            return bad("empty tilt set");
        }
        if self.scales.iter().any(|s| !(*s > 0.0 && *s <= 1.0)) {
            return bad("scales must lie in (0, 1]");
        }
        if self.tilts.iter().any(|t| !(*t >= 1.0) || !t.is_finite()) {
            return bad("tilts must be finite and >= 1");
        }
        if !(self.delta_phi_base > 0.0 && self.delta_phi_base <= 360.0) {
            return bad("delta_phi_base must lie in (0, 360]");
        }
        if !(self.sigma_base >= 0.0) {
            return bad("sigma_base must be >= 0");
        }
        Ok(())
    }
}

/// Parameters of one synthesized view. `phi_deg` is the longitude in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewParams {
    pub scale: f64,
    pub tilt: f64,
    pub phi_deg: f64,
}

impl ViewParams {
    pub const ORIGINAL: ViewParams = ViewParams { scale: 1.0, tilt: 1.0, phi_deg: 0.0 };

    pub fn is_original(&self) -> bool {
        self.scale == 1.0 && self.tilt == 1.0 && self.phi_deg == 0.0
    }

    /// Linear part of the map from the (scaled) image to the view.
    pub fn tilt_rotation(&self) -> Mat2 {
        Mat2::new(1.0 / self.tilt, 0.0, 0.0, 1.0) * rotation(self.phi_deg.to_radians())
    }

    /// Synthesized area relative to the original image.
    pub fn relative_area(&self) -> f64 {
        self.scale * self.scale / self.tilt
    }
}

fn sorted_unique(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

pub fn enumerate_views(cfg: &SynthesisConfig) -> Vec<ViewParams> {
    let mut out = Vec::new();
    for &scale in &sorted_unique(&cfg.scales) {
        for &tilt in &sorted_unique(&cfg.tilts) {
            if tilt == 1.0 {
                out.push(ViewParams { scale, tilt, phi_deg: 0.0 });
                continue;
            }
            let step = cfg.delta_phi_base / tilt;
            let mut k = 0u32;
            loop {
                let phi_deg = k as f64 * step;
                if phi_deg >= 360.0 - 1e-9 {
                    break;
                }
                out.push(ViewParams { scale, tilt, phi_deg });
                k += 1;
            }
        }
    }
    out
}

/// A synthesized image and the affine map from its pixels back to the original.
#[derive(Clone, Debug)]
pub struct SynthView {
    pub image: Image,
    pub back_map: Affine2,
    pub params: ViewParams,
    /// Pixels sampled from inside the source; `None` when every pixel is.
    pub valid: Option<Vec<bool>>,
}

impl SynthView {
    pub fn original(img: &Image) -> Self {
        SynthView {
            image: img.clone(),
            back_map: Affine2::identity(),
            params: ViewParams::ORIGINAL,
            valid: None,
        }
    }

    /// Original pixel → view pixel.
    pub fn forward_map(&self) -> Affine2 {
        self.back_map.inverse().expect("view maps are nonsingular")
    }

    /// Whether the view pixel nearest to `(x, y)` exists and was sampled from the source.
    pub fn is_valid_at(&self, x: f64, y: f64) -> bool {
        let (w, h) = (self.image.width() as f64, self.image.height() as f64);
        if !(x >= -0.5 && y >= -0.5 && x < w - 0.5 && y < h - 0.5) {
            return false;
        }
        match &self.valid {
            None => true,
            Some(mask) => {
                let xi = (x.round() as usize).min(self.image.width() - 1);
                let yi = (y.round() as usize).min(self.image.height() - 1);
                mask[yi * self.image.width() + xi]
            }
        }
    }
}

/// Synthesizes a single view.
pub fn synthesize_view(img: &Image, params: ViewParams, sigma_base: f64) -> Result<SynthView, SynthError> {
    if params.is_original() {
        return Ok(SynthView::original(img));
    }
    let (scaled, scale_back) = if params.scale < 1.0 {
        (downsample(img, params.scale, sigma_base)?, downsample_back_map(params.scale))
    } else {
        (img.clone(), Affine2::identity())
    };
    if params.tilt == 1.0 {
        return Ok(SynthView { image: scaled, back_map: scale_back, params, valid: None });
    }
    let phi = params.phi_deg.to_radians();
    // σx = t·σbase, σy = σbase in the rotated frame, applied before resampling:
    // an isotropic σbase plus σbase·√(t²−1) along the preimage of the x axis.
    let blurred = if params.phi_deg == 0.0 {
        gaussian_blur(&scaled, params.tilt * sigma_base, sigma_base)
    } else {
        let iso = gaussian_blur(&scaled, sigma_base, sigma_base);
        let along = sigma_base * (params.tilt * params.tilt - 1.0).sqrt();
        directional_blur(&iso, -phi, along)
    };
    let warped = warp_affine(&blurred, &Affine2::from_linear(params.tilt_rotation()))?;
    let valid = if warped.mask.iter().all(|&m| m) { None } else { Some(warped.mask) };
    Ok(SynthView {
        image: warped.image,
        back_map: scale_back.then_after(&warped.back_map),
        params,
        valid,
    })
}

/// All views of `cfg`, in [`enumerate_views`] order.
pub fn synthesize(img: &Image, cfg: &SynthesisConfig) -> Result<Vec<SynthView>, SynthError> {
    cfg.validate()?;
    enumerate_views(cfg)
        .into_par_iter()
        .map(|p| synthesize_view(img, p, cfg.sigma_base))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn count_oracle(cfg: &SynthesisConfig) -> usize {
        let per_scale: usize = cfg
            .tilts
            .iter()
            .map(|&t| if t == 1.0 { 1 } else { (360.0 * t / cfg.delta_phi_base - 1e-9).ceil() as usize })
            .sum();
        per_scale * cfg.scales.len()
    }

    #[test]
    fn enumerate_examples() {
        let one = enumerate_views(&SynthesisConfig::identity());
        assert_eq!(one, vec![ViewParams::ORIGINAL]);

        let v = enumerate_views(&SynthesisConfig::new(&[1.0], &[1.0, 5.0, 9.0], 360.0));
        assert_eq!(v.len(), 15);
        let t5: Vec<f64> = v.iter().filter(|p| p.tilt == 5.0).map(|p| p.phi_deg).collect();
        assert_eq!(t5, vec![0.0, 72.0, 144.0, 216.0, 288.0]);
        let t9: Vec<f64> = v.iter().filter(|p| p.tilt == 9.0).map(|p| p.phi_deg).collect();
        assert_eq!(t9.len(), 9);
        assert!((t9[1] - 40.0).abs() < 1e-12);

        let scales = enumerate_views(&SynthesisConfig::new(&[1.0, 0.25, 0.125], &[1.0], 360.0));
        assert_eq!(scales.len(), 3);
        assert_eq!(scales.iter().map(|p| p.scale).collect::<Vec<_>>(), vec![0.125, 0.25, 1.0]);
    }

    #[test]
    fn view_counts_follow_the_step_rule() {
        let step7 = SynthesisConfig::new(&[1.0], &[1.0, 2.0, 4.0, 6.0, 8.0, 10.0], 60.0);
        assert_eq!(enumerate_views(&step7).len(), count_oracle(&step7));
        assert_eq!(count_oracle(&step7), 181);
        let step4 = SynthesisConfig::new(&[1.0, 0.25, 0.125], &[1.0, 3.0, 6.0, 9.0], 360.0);
        assert_eq!(enumerate_views(&step4).len(), count_oracle(&step4));
    }

    #[test]
    fn doubling_delta_phi_halves_longitudes() {
        for t in [2.0, 3.0, 5.0, 6.0, 8.0, 9.0] {
            for base in [45.0, 60.0, 72.0, 90.0, 120.0, 180.0] {
                let n = enumerate_views(&SynthesisConfig::new(&[1.0], &[t], base)).len() as i64;
                let m = enumerate_views(&SynthesisConfig::new(&[1.0], &[t], 2.0 * base)).len() as i64;
                assert!((n - 2 * m).abs() <= 1, "t={t} base={base}: {n} vs {m}");
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(SynthesisConfig::new(&[1.0], &[], 360.0).validate().is_err());
        assert!(SynthesisConfig::new(&[], &[1.0], 360.0).validate().is_err());
        assert!(SynthesisConfig::new(&[1.5], &[1.0], 360.0).validate().is_err());
        assert!(SynthesisConfig::new(&[1.0], &[0.5], 360.0).validate().is_err());
        assert!(SynthesisConfig::new(&[1.0], &[1.0], 0.0).validate().is_err());
        assert!(SynthesisConfig::new(&[1.0], &[1.0], 361.0).validate().is_err());
    }

    #[test]
    fn identity_config_returns_the_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let img = Image::from_fn(33, 21, |_, _| rng.gen());
        let views = synthesize(&img, &SynthesisConfig::identity()).unwrap();
        assert_eq!(views.len(), 1);
        assert_eq!(views[0].image, img);
        assert_eq!(views[0].back_map, Affine2::identity());
    }

    #[test]
    fn strong_tilt_shrinks_width() {
        let img = Image::from_fn(400, 400, |x, y| ((x * 7 + y * 3) % 11) as f32 / 10.0);
        let view = synthesize_view(&img, ViewParams { scale: 1.0, tilt: 8.0, phi_deg: 0.0 }, SIGMA_BASE).unwrap();
        let w = view.image.width() as f64;
        assert!((w - 50.0).abs() <= 1.0);
        assert_eq!(view.image.height(), 400);
        // outline corners land on the original outline
        let h = view.image.height() as f64;
        let tl = view.back_map.apply(Vec2::new(-0.5, -0.5));
        let br = view.back_map.apply(Vec2::new(w - 0.5, h - 0.5));
        assert!((tl - Vec2::new(-0.5, -0.5)).norm() <= 0.5);
        assert!((br - Vec2::new(399.5, 399.5)).norm() <= 0.5);
    }

    #[test]
    fn back_map_inverts_the_synthesis_map() {
        let img = Image::from_fn(120, 90, |x, y| ((x ^ y) & 15) as f32 / 15.0);
        let cfg = SynthesisConfig::new(&[1.0, 0.5], &[1.0, 3.0], 180.0);
        for view in synthesize(&img, &cfg).unwrap() {
            let fwd = view.forward_map();
            let composed = view.back_map.then_after(&fwd);
            assert!((composed.linear - Mat2::identity()).norm() <= 1e-9);
            assert!(composed.translation.norm() <= 1e-9);
            // original center stays inside the original after the round trip
            let c = Vec2::new(59.5, 44.5);
            let vc = fwd.apply(c);
            assert!(view.is_valid_at(vc.x, vc.y), "{:?}", view.params);
        }
    }

    #[test]
    fn views_are_ordered_and_deterministic() {
        let img = Image::from_fn(64, 64, |x, y| ((x * y) % 13) as f32 / 12.0);
        let cfg = SynthesisConfig::new(&[1.0], &[1.0, 2.0, 4.0], 120.0);
        let a = synthesize(&img, &cfg).unwrap();
        let b = synthesize(&img, &cfg).unwrap();
        let params: Vec<_> = a.iter().map(|v| v.params).collect();
        assert_eq!(params, enumerate_views(&cfg));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.image, y.image);
        }
    }

    #[test]
    fn rotated_views_mask_the_empty_corners() {
        let img = Image::filled(50, 50, 1.0);
        let view = synthesize_view(&img, ViewParams { scale: 1.0, tilt: 2.0, phi_deg: 45.0 }, SIGMA_BASE).unwrap();
        let mask = view.valid.as_ref().unwrap();
        assert!(!mask[0]);
        assert!(!view.is_valid_at(0.0, 0.0));
        let w = view.image.width();
        let h = view.image.height();
        assert!(mask[(h / 2) * w + w / 2]);
    }

    #[test]
    fn synthesized_area_tracks_the_rule() {
        let img = Image::filled(200, 160, 0.5);
        let cfg = SynthesisConfig::new(&[1.0, 0.5], &[1.0, 2.0, 4.0], 180.0);
        let views = synthesize(&img, &cfg).unwrap();
        let area: f64 = views.iter().map(|v| (v.image.width() * v.image.height()) as f64).sum();
        let predicted: f64 = enumerate_views(&cfg).iter().map(|p| p.relative_area()).sum::<f64>() * 200.0 * 160.0;
        // rotated canvases are bounding boxes, so they only ever exceed the rule
        assert!(area >= 0.95 * predicted && area <= 2.5 * predicted, "{area} vs {predicted}");
    }
}
