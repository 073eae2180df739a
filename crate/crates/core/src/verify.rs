//! Robust geometric verification: LO-RANSAC for homographies and fundamental
//! matrices, a homography-degeneracy test for choosing the model kind, and the
//! local-affine-frame check.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{enforce_rank2, GeometryModel, Mat2, Mat3, ModelKind, Vec2, Vec3};
use crate::matching::TentativeCorrespondence;

/// A fundamental matrix whose support is at least this fraction explained by a
/// single homography is reported as that homography.
pub const H_DEGENERACY_FRACTION: f64 = 0.8;
/// The frame check tolerates this multiple of the point threshold.
pub const LAF_THRESHOLD_FACTOR: f64 = 2.0;

const H_SAMPLE: usize = 4;
const F_SAMPLE: usize = 7;
/// Sine of the smallest angle accepted between sample points in a minimal
/// homography sample.
const MIN_SAMPLE_SINE: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientCorrespondences { needed: usize, got: usize },
    #[error("no model has enough support")]
    NoModel,
    #[error("invalid RANSAC configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    /// Symmetric transfer distance accepted for homography inliers.
    pub homography_threshold_px: f64,
    /// Sampson distance accepted for fundamental-matrix inliers.
    pub fundamental_threshold_px: f64,
    pub confidence: f64,
    pub max_iterations: usize,
    pub lo_refit_rounds: usize,
    pub rng_seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        RansacConfig {
            homography_threshold_px: 2.0,
            fundamental_threshold_px: 1.0,
            confidence: 0.999,
            max_iterations: 10_000,
            lo_refit_rounds: 3,
            rng_seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), VerifyError> {
        let bad = |m: &str| Err(VerifyError::InvalidConfig(m.to_string()));
        if !(self.homography_threshold_px > 0.0) || !(self.fundamental_threshold_px > 0.0) {
            return bad("thresholds must be positive");
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return bad("confidence must lie in (0, 1)");
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive");
        }
        Ok(())
    }

    pub fn threshold(&self, kind: ModelKind) -> f64 {
        match kind {
            ModelKind::Homography => self.homography_threshold_px,
            ModelKind::Fundamental => self.fundamental_threshold_px,
        }
    }
}

/// A model together with the inliers that also passed the frame check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifiedResult {
    pub model: GeometryModel,
    /// Indices into the correspondence list, a subset of `model.inliers`.
    pub inliers_after_laf: Vec<usize>,
    pub discarded_by_laf: usize,
}

type Pair = (Vec2, Vec2);

fn pairs(tcs: &[TentativeCorrespondence]) -> Vec<Pair> {
    tcs.iter().map(|t| (t.feat1.center(), t.feat2.center())).collect()
}

// ---------------------------------------------------------------------------
// residuals

fn project(h: &Mat3, p: Vec2) -> Option<Vec2> {
    let q = h * Vec3::new(p.x, p.y, 1.0);
    (q.z.abs() > f64::EPSILON * q.xy().norm().max(1.0)).then(|| q.xy() / q.z)
}

/// Larger of the forward and backward transfer distances.
fn transfer_residuals(h: &Mat3, pts: &[Pair]) -> Vec<f64> {
    let Some(hinv) = h.try_inverse() else {
        return vec![f64::INFINITY; pts.len()];
    };
    pts.iter()
        .map(|&(a, b)| match (project(h, a), project(&hinv, b)) {
            (Some(fa), Some(bb)) => (fa - b).norm().max((bb - a).norm()),
            _ => f64::INFINITY,
        })
        .collect()
}

fn sampson(f: &Mat3, a: Vec2, b: Vec2) -> f64 {
    let x1 = Vec3::new(a.x, a.y, 1.0);
    let x2 = Vec3::new(b.x, b.y, 1.0);
    let fx1 = f * x1;
    let ftx2 = f.transpose() * x2;
    let denom = fx1.x * fx1.x + fx1.y * fx1.y + ftx2.x * ftx2.x + ftx2.y * ftx2.y;
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    x2.dot(&fx1).abs() / denom.sqrt()
}

fn sampson_residuals(f: &Mat3, pts: &[Pair]) -> Vec<f64> {
    pts.iter().map(|&(a, b)| sampson(f, a, b)).collect()
}

/// Distance from `p` to the line `l = (a, b, c)`.
fn line_distance(l: &Vec3, p: Vec2) -> f64 {
    let n = l.xy().norm();
    if n == 0.0 {
        return f64::INFINITY;
    }
    (l.x * p.x + l.y * p.y + l.z).abs() / n
}

// ---------------------------------------------------------------------------
// solvers

/// Similarity moving the centroid to the origin and the mean distance to √2.
fn normalization(points: impl Iterator<Item = Vec2> + Clone) -> Option<Mat3> {
    let n = points.clone().count() as f64;
    let c = points.clone().fold(Vec2::zeros(), |s, p| s + p) / n;
    let mean = points.map(|p| (p - c).norm()).sum::<f64>() / n;
    if !(mean > 0.0) || !mean.is_finite() {
        return None;
    }
    let s = std::f64::consts::SQRT_2 / mean;
    Some(Mat3::new(s, 0.0, -s * c.x, 0.0, s, -s * c.y, 0.0, 0.0, 1.0))
}

fn apply(t: &Mat3, p: Vec2) -> Vec2 {
    Vec2::new(t[(0, 0)] * p.x + t[(0, 2)], t[(1, 1)] * p.y + t[(1, 2)])
}

/// Right singular vectors of `rows` (each of length 9) ordered by increasing
/// singular value.
fn null_vectors(rows: &[[f64; 9]], count: usize) -> Vec<[f64; 9]> {
    let m = rows.len().max(9);
    let a = DMatrix::from_fn(m, 9, |r, c| rows.get(r).map_or(0.0, |row| row[c]));
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested V");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    order.iter().take(count).map(|&i| std::array::from_fn(|c| vt[(i, c)])).collect()
}

fn mat_from(v: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(v)
}

/// Normalized direct linear transform from ≥4 correspondences.
fn homography_dlt(pts: &[Pair]) -> Option<Mat3> {
    let t1 = normalization(pts.iter().map(|p| p.0))?;
    let t2 = normalization(pts.iter().map(|p| p.1))?;
    let mut rows = Vec::with_capacity(2 * pts.len());
    for &(a, b) in pts {
        let (p, q) = (apply(&t1, a), apply(&t2, b));
        rows.push([-p.x, -p.y, -1.0, 0.0, 0.0, 0.0, q.x * p.x, q.x * p.y, q.x]);
        rows.push([0.0, 0.0, 0.0, -p.x, -p.y, -1.0, q.y * p.x, q.y * p.y, q.y]);
    }
    let hn = mat_from(&null_vectors(&rows, 1)[0]);
    let h = t2.try_inverse()? * hn * t1;
    (h.iter().all(|v| v.is_finite()) && h.norm() > 0.0).then_some(h)
}

fn sine_between(u: Vec2, v: Vec2) -> f64 {
    let d = u.norm() * v.norm();
    if d == 0.0 {
        0.0
    } else {
        (u.x * v.y - u.y * v.x).abs() / d
    }
}

fn has_collinear_triple(points: &[Vec2]) -> bool {
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            for k in j + 1..points.len() {
                if sine_between(points[j] - points[i], points[k] - points[i]) < MIN_SAMPLE_SINE {
                    return true;
                }
            }
        }
    }
    false
}

fn minimal_homography(sample: &[Pair]) -> Vec<Mat3> {
    let p1: Vec<Vec2> = sample.iter().map(|p| p.0).collect();
    let p2: Vec<Vec2> = sample.iter().map(|p| p.1).collect();
    if has_collinear_triple(&p1) || has_collinear_triple(&p2) {
        return Vec::new();
    }
    let Some(h) = homography_dlt(sample) else { return Vec::new() };
    // all sample points must lie on the same side of the horizon line
    let w: Vec<f64> = p1.iter().map(|p| (h * Vec3::new(p.x, p.y, 1.0)).z).collect();
    if w.iter().all(|&z| z > 0.0) || w.iter().all(|&z| z < 0.0) {
        vec![h]
    } else {
        Vec::new()
    }
}

fn epipolar_rows(pts: &[Pair], t1: &Mat3, t2: &Mat3) -> Vec<[f64; 9]> {
    pts.iter()
        .map(|&(a, b)| {
            let (p, q) = (apply(t1, a), apply(t2, b));
            [q.x * p.x, q.x * p.y, q.x, q.y * p.x, q.y * p.y, q.y, p.x, p.y, 1.0]
        })
        .collect()
}

/// Real roots of `c3·x³ + c2·x² + c1·x + c0`.
pub(crate) fn real_cubic_roots(c3: f64, c2: f64, c1: f64, c0: f64) -> Vec<f64> {
    let scale = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if c3.abs() <= 1e-12 * scale {
        // quadratic or linear
        if c2.abs() <= 1e-12 * scale {
            return if c1 != 0.0 { vec![-c0 / c1] } else { Vec::new() };
        }
        let disc = c1 * c1 - 4.0 * c2 * c0;
        if disc < 0.0 {
            return Vec::new();
        }
        let sign = if c1 >= 0.0 { 1.0 } else { -1.0 };
        let q = -0.5 * (c1 + sign * disc.sqrt());
        let mut roots = vec![q / c2];
        if q != 0.0 {
            roots.push(c0 / q);
        }
        return roots;
    }
    let (a, b, c) = (c2 / c3, c1 / c3, c0 / c3);
    // depressed cubic t³ + p·t + q with x = t − a/3
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let disc = q * q / 4.0 + p * p * p / 27.0;
    let mut roots = if disc > 0.0 {
        let s = disc.sqrt();
        vec![(-q / 2.0 + s).cbrt() + (-q / 2.0 - s).cbrt() + shift]
    } else if p == 0.0 {
        vec![shift]
    } else {
        let r = (-p / 3.0).sqrt();
        let arg = (3.0 * q / (2.0 * p) / r).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        (0..3).map(|k| 2.0 * r * (phi - 2.0 * std::f64::consts::PI * k as f64 / 3.0).cos() + shift).collect()
    };
    // one Newton step polishes the closed-form roots
    for x in roots.iter_mut() {
        let f = ((c3 * *x + c2) * *x + c1) * *x + c0;
        let df = (3.0 * c3 * *x + 2.0 * c2) * *x + c1;
        if df != 0.0 {
            *x -= f / df;
        }
    }
    roots
}

fn minimal_fundamental(sample: &[Pair]) -> Vec<Mat3> {
    let Some(t1) = normalization(sample.iter().map(|p| p.0)) else { return Vec::new() };
    let Some(t2) = normalization(sample.iter().map(|p| p.1)) else { return Vec::new() };
    let rows = epipolar_rows(sample, &t1, &t2);
    let null = null_vectors(&rows, 2);
    let (f1, f2) = (mat_from(&null[0]), mat_from(&null[1]));
    let det = |a: f64| (f1 * a + f2 * (1.0 - a)).determinant();
    let (p0, p1, pm1, p2) = (det(0.0), det(1.0), det(-1.0), det(2.0));
    let c0 = p0;
    let c2 = (p1 + pm1) / 2.0 - c0;
    let odd = (p1 - pm1) / 2.0;
    let c3 = (p2 - c0 - 4.0 * c2 - 2.0 * odd) / 6.0;
    let c1 = odd - c3;
    real_cubic_roots(c3, c2, c1, c0)
        .into_iter()
        .map(|a| t2.transpose() * (f1 * a + f2 * (1.0 - a)) * t1)
        .filter(|f| f.iter().all(|v| v.is_finite()) && f.norm() > 0.0)
        .collect()
}

/// Normalized eight-point least squares with rank 2 enforced.
fn fundamental_lsq(pts: &[Pair]) -> Option<Mat3> {
    if pts.len() < 8 {
        return None;
    }
    let t1 = normalization(pts.iter().map(|p| p.0))?;
    let t2 = normalization(pts.iter().map(|p| p.1))?;
    let fn_ = enforce_rank2(&mat_from(&null_vectors(&epipolar_rows(pts, &t1, &t2), 1)[0]));
    let f = t2.transpose() * fn_ * t1;
    (f.iter().all(|v| v.is_finite()) && f.norm() > 0.0).then_some(f)
}

// ---------------------------------------------------------------------------
// the RANSAC loop

struct Support {
    inliers: Vec<usize>,
    residuals: Vec<f64>,
    sse: f64,
}

impl Support {
    fn of(residuals: &[f64], threshold: f64) -> Self {
        let mut inliers = Vec::new();
        let mut kept = Vec::new();
        let mut sse = 0.0;
        for (i, &r) in residuals.iter().enumerate() {
            if r <= threshold {
                inliers.push(i);
                kept.push(r);
                sse += r * r;
            }
        }
        Support { inliers, residuals: kept, sse }
    }

    fn beats(&self, other: Option<&Support>) -> bool {
        match other {
            None => !self.inliers.is_empty(),
            Some(o) => self.inliers.len() > o.inliers.len() || (self.inliers.len() == o.inliers.len() && self.sse < o.sse),
        }
    }
}

struct Estimator<'a> {
    sample_size: usize,
    threshold: f64,
    minimal: &'a dyn Fn(&[Pair]) -> Vec<Mat3>,
    refit: &'a dyn Fn(&[Pair]) -> Option<Mat3>,
    residuals: &'a dyn Fn(&Mat3, &[Pair]) -> Vec<f64>,
}

fn needed_iterations(inliers: usize, n: usize, sample: usize, confidence: f64, cap: usize) -> usize {
    let w = (inliers as f64 / n as f64).powi(sample as i32);
    if w >= 1.0 {
        return 1;
    }
    if w <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - w).ln();
    if k.is_finite() { (k.ceil() as usize).clamp(1, cap) } else { cap }
}

fn ransac(pts: &[Pair], cfg: &RansacConfig, est: &Estimator) -> Option<(Mat3, Support)> {
    let n = pts.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut best: Option<(Mat3, Support)> = None;
    let mut budget = cfg.max_iterations;
    let mut iteration = 0;
    let mut sample = Vec::with_capacity(est.sample_size);
    while iteration < budget {
        iteration += 1;
        sample.clear();
        sample.extend(rand::seq::index::sample(&mut rng, n, est.sample_size).into_iter().map(|i| pts[i]));
        for model in (est.minimal)(&sample) {
            let support = Support::of(&(est.residuals)(&model, pts), est.threshold);
            if !support.beats(best.as_ref().map(|b| &b.1)) {
                continue;
            }
            best = Some(local_optimization(pts, cfg, est, model, support));
            let count = best.as_ref().map_or(0, |b| b.1.inliers.len());
            budget = needed_iterations(count, n, est.sample_size, cfg.confidence, cfg.max_iterations);
        }
    }
    best
}

/// Least-squares refits on the current inliers, accepted only while they
/// improve the support, so local optimization never loses inliers.
fn local_optimization(pts: &[Pair], cfg: &RansacConfig, est: &Estimator, model: Mat3, support: Support) -> (Mat3, Support) {
    let mut best = (model, support);
    for _ in 0..cfg.lo_refit_rounds {
        let subset: Vec<Pair> = best.1.inliers.iter().map(|&i| pts[i]).collect();
        let Some(refit) = (est.refit)(&subset) else { break };
        let support = Support::of(&(est.residuals)(&refit, pts), est.threshold);
        if !support.beats(Some(&best.1)) {
            break;
        }
        best = (refit, support);
    }
    best
}

fn finish(kind: ModelKind, found: Option<(Mat3, Support)>, min_support: usize) -> Result<GeometryModel, VerifyError> {
    match found {
        Some((m, s)) if s.inliers.len() >= min_support => Ok(GeometryModel::new(kind, m, s.inliers, s.residuals)),
        _ => Err(VerifyError::NoModel),
    }
}

fn homography_of_pairs(pts: &[Pair], cfg: &RansacConfig) -> Result<GeometryModel, VerifyError> {
    cfg.validate()?;
    if pts.len() < H_SAMPLE {
        return Err(VerifyError::InsufficientCorrespondences { needed: H_SAMPLE, got: pts.len() });
    }
    let est = Estimator {
        sample_size: H_SAMPLE,
        threshold: cfg.homography_threshold_px,
        minimal: &minimal_homography,
        refit: &homography_dlt,
        residuals: &transfer_residuals,
    };
    finish(ModelKind::Homography, ransac(pts, cfg, &est), H_SAMPLE)
}

fn fundamental_of_pairs(pts: &[Pair], cfg: &RansacConfig) -> Result<GeometryModel, VerifyError> {
    cfg.validate()?;
    if pts.len() < F_SAMPLE {
        return Err(VerifyError::InsufficientCorrespondences { needed: F_SAMPLE, got: pts.len() });
    }
    let est = Estimator {
        sample_size: F_SAMPLE,
        threshold: cfg.fundamental_threshold_px,
        minimal: &minimal_fundamental,
        refit: &fundamental_lsq,
        residuals: &sampson_residuals,
    };
    finish(ModelKind::Fundamental, ransac(pts, cfg, &est), F_SAMPLE)
}

/// Homography with the largest support, refined by local optimization.
/// Residuals are symmetric transfer distances in pixels.
pub fn estimate_homography(tcs: &[TentativeCorrespondence], cfg: &RansacConfig) -> Result<GeometryModel, VerifyError> {
    homography_of_pairs(&pairs(tcs), cfg)
}

/// Fundamental matrix from seven-point samples, refined by eight-point least
/// squares. Residuals are Sampson distances in pixels.
pub fn estimate_fundamental(tcs: &[TentativeCorrespondence], cfg: &RansacConfig) -> Result<GeometryModel, VerifyError> {
    fundamental_of_pairs(&pairs(tcs), cfg)
}

/// Residuals of `model` on every correspondence, in pixels.
pub fn model_residuals(model: &Mat3, kind: ModelKind, tcs: &[TentativeCorrespondence]) -> Vec<f64> {
    let pts = pairs(tcs);
    match kind {
        ModelKind::Homography => transfer_residuals(model, &pts),
        ModelKind::Fundamental => sampson_residuals(model, &pts),
    }
}

/// Estimates epipolar geometry and reports a homography instead when one
/// explains most of its support. With fewer than seven correspondences only a
/// homography is attempted.
pub fn auto_model(tcs: &[TentativeCorrespondence], cfg: &RansacConfig) -> Result<GeometryModel, VerifyError> {
    let pts = pairs(tcs);
    if pts.len() < F_SAMPLE {
        return homography_of_pairs(&pts, cfg);
    }
    let f = match fundamental_of_pairs(&pts, cfg) {
        Ok(f) => f,
        Err(VerifyError::NoModel) => return homography_of_pairs(&pts, cfg),
        Err(e) => return Err(e),
    };
    // homography hypotheses: one restricted to the epipolar support, one over
    // all correspondences (planes with low inlier ratios are found far more
    // easily from four-point than seven-point samples)
    let rescore = |h: GeometryModel| {
        let s = Support::of(&transfer_residuals(&h.matrix, &pts), cfg.homography_threshold_px);
        GeometryModel::new(ModelKind::Homography, h.matrix, s.inliers, s.residuals)
    };
    let subset: Vec<Pair> = f.inliers.iter().map(|&i| pts[i]).collect();
    let candidates = [homography_of_pairs(&subset, cfg).ok().map(rescore), homography_of_pairs(&pts, cfg).ok()];
    let best_h = candidates.into_iter().flatten().fold(None::<GeometryModel>, |acc, h| match acc {
        Some(a) if a.inliers.len() >= h.inliers.len() => Some(a),
        _ => Some(h),
    });
    match best_h {
        Some(h) if h.inliers.len() as f64 >= H_DEGENERACY_FRACTION * f.inliers.len() as f64 => Ok(h),
        _ => Ok(f),
    }
}

// ---------------------------------------------------------------------------
// frame check

/// The closest and the furthest ellipse points of `shape` around `center`.
fn extremal_points(center: Vec2, shape: &Mat2) -> [Vec2; 2] {
    let svd = shape.svd(true, false);
    let u = svd.u.expect("requested U");
    let (i_max, i_min) = if svd.singular_values[0] >= svd.singular_values[1] { (0, 1) } else { (1, 0) };
    [
        center + u.column(i_min) * svd.singular_values[i_min],
        center + u.column(i_max) * svd.singular_values[i_max],
    ]
}

fn frame_consistent(tc: &TentativeCorrespondence, model: &GeometryModel, limit: f64) -> bool {
    let (l1, l2) = (tc.feat1.laf(), tc.feat2.laf());
    let Some(l1_inv) = l1.try_inverse() else { return false };
    let (c1, c2) = (tc.feat1.center(), tc.feat2.center());
    let hinv = match model.kind {
        ModelKind::Homography => match model.matrix.try_inverse() {
            Some(m) => Some(m),
            None => return false,
        },
        ModelKind::Fundamental => None,
    };
    extremal_points(c1, &tc.feat1.frame.shape).iter().all(|&p1| {
        // the point the second frame associates with p1
        let p2 = c2 + l2 * (l1_inv * (p1 - c1));
        match model.kind {
            ModelKind::Homography => {
                let fwd = project(&model.matrix, p1).map(|q| (q - p2).norm());
                let bwd = hinv.as_ref().and_then(|hi| project(hi, p2)).map(|q| (q - p1).norm());
                matches!((fwd, bwd), (Some(a), Some(b)) if a <= limit && b <= limit)
            }
            ModelKind::Fundamental => {
                let f = &model.matrix;
                let d2 = line_distance(&(f * Vec3::new(p1.x, p1.y, 1.0)), p2);
                let d1 = line_distance(&(f.transpose() * Vec3::new(p2.x, p2.y, 1.0)), p1);
                d1 <= limit && d2 <= limit
            }
        }
    })
}

/// Keeps the model inliers whose whole affine frame, not only the center, is
/// consistent with the model.
pub fn laf_check(tcs: &[TentativeCorrespondence], model: &GeometryModel, cfg: &RansacConfig) -> VerifiedResult {
    let limit = LAF_THRESHOLD_FACTOR * cfg.threshold(model.kind);
    let inliers_after_laf: Vec<usize> =
        model.inliers.iter().copied().filter(|&i| tcs.get(i).is_some_and(|tc| frame_consistent(tc, model, limit))).collect();
    VerifiedResult {
        discarded_by_laf: model.inliers.len() - inliers_after_laf.len(),
        model: model.clone(),
        inliers_after_laf,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{AffineFrame, Tier};
    use crate::geometry::{rotation, skew};
    use crate::matching::MatchedFeature;
    use rand::Rng;

    fn mf(c: Vec2, shape: Mat2, orientation: f64) -> MatchedFeature {
        let mut frame = AffineFrame::circular(c, 1.0, 1.0, Tier::HessAff);
        frame.shape = shape;
        MatchedFeature { index: 0, frame, orientation }
    }

    fn tc(a: Vec2, b: Vec2) -> TentativeCorrespondence {
        TentativeCorrespondence {
            feat1: mf(a, Mat2::identity() * 2.0, 0.0),
            feat2: mf(b, Mat2::identity() * 2.0, 0.0),
            distance_ratio: 0.5,
            prune_count: 0,
        }
    }

    fn random_h(rng: &mut ChaCha8Rng) -> Mat3 {
        Mat3::new(
            rng.gen_range(0.8..1.2),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-0.2..0.2),
            rng.gen_range(0.8..1.2),
            rng.gen_range(-20.0..20.0),
            rng.gen_range(-4e-4..4e-4),
            rng.gen_range(-4e-4..4e-4),
            1.0,
        )
    }

    fn map(h: &Mat3, p: Vec2) -> Vec2 {
        let q = h * Vec3::new(p.x, p.y, 1.0);
        q.xy() / q.z
    }

    fn disk(rng: &mut ChaCha8Rng, r: f64) -> Vec2 {
        let (a, s): (f64, f64) = (rng.gen_range(0.0..std::f64::consts::TAU), rng.gen());
        Vec2::new(a.cos(), a.sin()) * r * s.sqrt()
    }

    fn planted(rng: &mut ChaCha8Rng, h: &Mat3, inliers: usize, outliers: usize) -> Vec<TentativeCorrespondence> {
        let mut tcs = Vec::new();
        for _ in 0..inliers {
            let p = Vec2::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..300.0));
            // at most 1 px of combined noise
            tcs.push(tc(p + disk(rng, 0.5), map(h, p) + disk(rng, 0.5)));
        }
        for _ in 0..outliers {
            let a = Vec2::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..300.0));
            let b = Vec2::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..300.0));
            tcs.push(tc(a, b));
        }
        tcs
    }

    fn same_up_to_scale(a: &Mat3, b: &Mat3) -> f64 {
        let (a, b) = (crate::geometry::normalize_matrix(a), crate::geometry::normalize_matrix(b));
        (a - b).norm()
    }

    #[test]
    fn four_exact_points_recover_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let h = random_h(&mut rng);
            let tcs: Vec<_> = [(10.0, 20.0), (380.0, 15.0), (360.0, 290.0), (30.0, 270.0)]
                .iter()
                .map(|&(x, y)| tc(Vec2::new(x, y), map(&h, Vec2::new(x, y))))
                .collect();
            let m = estimate_homography(&tcs, &RansacConfig::default()).unwrap();
            assert_eq!(m.inliers, vec![0, 1, 2, 3]);
            assert!(same_up_to_scale(&m.matrix, &h) <= 1e-6);
        }
    }

    #[test]
    fn planted_homography_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let h = random_h(&mut rng);
            let tcs = planted(&mut rng, &h, 70, 30);
            let m = estimate_homography(&tcs, &RansacConfig::default()).unwrap();
            assert!(m.inliers.len() >= 63, "{} inliers", m.inliers.len());
            let worst = tcs[..70].iter().map(|t| (map(&m.matrix, t.feat1.center()) - t.feat2.center()).norm()).fold(0.0, f64::max);
            assert!(worst <= 2.0, "max planted transfer error {worst}");
            assert!(m.inliers.iter().zip(&m.residuals).all(|(_, r)| *r <= 2.0));
        }
    }

    #[test]
    fn ransac_is_deterministic_and_seed_sensitive_only_in_sampling() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = random_h(&mut rng);
        let tcs = planted(&mut rng, &h, 40, 60);
        let cfg = RansacConfig::default();
        let a = estimate_homography(&tcs, &cfg).unwrap();
        let b = estimate_homography(&tcs, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(auto_model(&tcs, &cfg).unwrap(), auto_model(&tcs, &cfg).unwrap());
    }

    #[test]
    fn collinear_points_have_no_model() {
        let tcs: Vec<_> = (0..30).map(|i| tc(Vec2::new(i as f64 * 5.0, 2.0 * i as f64), Vec2::new(i as f64 * 3.0, 7.0))).collect();
        assert_eq!(estimate_homography(&tcs, &RansacConfig::default()), Err(VerifyError::NoModel));
        assert!(matches!(
            estimate_homography(&tcs[..3], &RansacConfig::default()),
            Err(VerifyError::InsufficientCorrespondences { needed: 4, got: 3 })
        ));
    }

    struct Scene {
        k: Mat3,
        r: Mat3,
        t: Vec3,
    }

    impl Scene {
        fn new(rng: &mut ChaCha8Rng) -> Self {
            let k = Mat3::new(500.0, 0.0, 200.0, 0.0, 500.0, 150.0, 0.0, 0.0, 1.0);
            let axis = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)).normalize();
            let r = *nalgebra::Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), rng.gen_range(0.05..0.2)).matrix();
            let t = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-0.3..0.3), rng.gen_range(-0.2..0.2));
            Scene { k, r, t }
        }

        fn project(&self, x: Vec3) -> (Vec2, Vec2) {
            let a = self.k * x;
            let b = self.k * (self.r * x + self.t);
            (a.xy() / a.z, b.xy() / b.z)
        }

        fn random_point(&self, rng: &mut ChaCha8Rng) -> Vec3 {
            let z = rng.gen_range(4.0..8.0);
            Vec3::new(rng.gen_range(-0.4..0.4) * z, rng.gen_range(-0.3..0.3) * z, z)
        }

        fn fundamental(&self) -> Mat3 {
            let ki = self.k.try_inverse().unwrap();
            ki.transpose() * skew(&self.t) * self.r * ki
        }
    }

    #[test]
    fn eight_exact_projections_satisfy_estimated_f() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let scene = Scene::new(&mut rng);
            let pts: Vec<_> = (0..8).map(|_| scene.project(scene.random_point(&mut rng))).collect();
            let tcs: Vec<_> = pts.iter().map(|&(a, b)| tc(a, b)).collect();
            let m = estimate_fundamental(&tcs, &RansacConfig::default()).unwrap();
            assert_eq!(m.inliers.len(), 8);
            for &(a, b) in &pts {
                let alg = Vec3::new(b.x, b.y, 1.0).dot(&(m.matrix * Vec3::new(a.x, a.y, 1.0)));
                assert!(alg.abs() <= 1e-8, "algebraic error {alg}");
            }
            // the estimate agrees with the analytic matrix on unseen points
            let truth = scene.fundamental();
            for _ in 0..20 {
                let (a, b) = scene.project(scene.random_point(&mut rng));
                assert!(sampson(&truth, a, b) < 1e-9);
                assert!(sampson(&m.matrix, a, b) < 1e-4);
            }
        }
    }

    #[test]
    fn planted_epipolar_inliers_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..5 {
            let scene = Scene::new(&mut rng);
            let mut tcs = Vec::new();
            for _ in 0..60 {
                let (a, b) = scene.project(scene.random_point(&mut rng));
                tcs.push(tc(a + disk(&mut rng, 0.2), b + disk(&mut rng, 0.2)));
            }
            for _ in 0..40 {
                tcs.push(tc(
                    Vec2::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..300.0)),
                    Vec2::new(rng.gen_range(0.0..400.0), rng.gen_range(0.0..300.0)),
                ));
            }
            let m = estimate_fundamental(&tcs, &RansacConfig::default()).unwrap();
            let planted = m.inliers.iter().filter(|&&i| i < 60).count();
            assert!(planted >= 54, "{planted} planted inliers recovered");
        }
    }

    #[test]
    fn planar_scene_yields_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let scene = Scene::new(&mut rng);
        // points on the plane z = 6 + 0.3x
        let tcs: Vec<_> = (0..80)
            .map(|_| {
                let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
                let (a, b) = scene.project(Vec3::new(x, y, 6.0 + 0.3 * x));
                tc(a, b)
            })
            .collect();
        let m = auto_model(&tcs, &RansacConfig::default()).unwrap();
        assert_eq!(m.kind, ModelKind::Homography);
        assert_eq!(m.inliers.len(), 80);
        assert!(m.residuals.iter().all(|&r| r <= 2.0));
    }

    #[test]
    fn two_plane_scene_yields_fundamental() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut scene = Scene::new(&mut rng);
        scene.t = Vec3::new(1.0, 0.1, 0.0);
        let mut tcs = Vec::new();
        for i in 0..120 {
            let (x, y) = (rng.gen_range(-2.0..2.0), rng.gen_range(-1.5..1.5));
            let z = if i % 2 == 0 { 4.0 + 0.2 * y } else { 9.0 - 0.4 * x };
            let (a, b) = scene.project(Vec3::new(x * z / 6.0, y * z / 6.0, z));
            tcs.push(tc(a, b));
        }
        let m = auto_model(&tcs, &RansacConfig::default()).unwrap();
        assert_eq!(m.kind, ModelKind::Fundamental);
        assert!(m.inliers.len() >= 114);
    }

    #[test]
    fn few_correspondences_fall_back_to_homography() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let h = random_h(&mut rng);
        let tcs: Vec<_> =
            [(0.0, 0.0), (100.0, 5.0), (90.0, 120.0), (5.0, 80.0), (50.0, 40.0)].iter().map(|&(x, y)| tc(Vec2::new(x, y), map(&h, Vec2::new(x, y)))).collect();
        let m = auto_model(&tcs, &RansacConfig::default()).unwrap();
        assert_eq!(m.kind, ModelKind::Homography);
        assert_eq!(m.inliers.len(), 5);
    }

    #[test]
    fn local_optimization_never_loses_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = random_h(&mut rng);
        let tcs = planted(&mut rng, &h, 60, 40);
        let pts = pairs(&tcs);
        let cfg = RansacConfig::default();
        let est = Estimator {
            sample_size: H_SAMPLE,
            threshold: cfg.homography_threshold_px,
            minimal: &minimal_homography,
            refit: &homography_dlt,
            residuals: &transfer_residuals,
        };
        for _ in 0..50 {
            let mut perturbed = h;
            perturbed[(0, 2)] += rng.gen_range(-1.5..1.5);
            perturbed[(1, 1)] *= 1.0 + rng.gen_range(-0.004..0.004);
            let before = Support::of(&transfer_residuals(&perturbed, &pts), 2.0);
            let n0 = before.inliers.len();
            let (_, after) = local_optimization(&pts, &cfg, &est, perturbed, before);
            assert!(after.inliers.len() >= n0);
        }
    }

    #[test]
    fn cubic_roots() {
        let roots = |mut r: Vec<f64>| {
            r.sort_by(f64::total_cmp);
            r
        };
        let r = roots(real_cubic_roots(2.0, -4.0, -22.0, 24.0)); // 2(x-1)(x+3)(x-4)
        for (a, b) in r.iter().zip([-3.0, 1.0, 4.0]) {
            assert!((a - b).abs() < 1e-10);
        }
        let r = real_cubic_roots(1.0, 0.0, 1.0, -2.0); // (x-1)(x²+x+2)
        assert_eq!(r.len(), 1);
        assert!((r[0] - 1.0).abs() < 1e-12);
        let r = roots(real_cubic_roots(0.0, 1.0, -3.0, 2.0));
        assert!((r[0] - 1.0).abs() < 1e-12 && (r[1] - 2.0).abs() < 1e-12);
    }

    fn laf_tc(c1: Vec2, s1: Mat2, c2: Vec2, s2: Mat2) -> TentativeCorrespondence {
        TentativeCorrespondence { feat1: mf(c1, s1, 0.0), feat2: mf(c2, s2, 0.0), distance_ratio: 0.5, prune_count: 0 }
    }

    fn model(kind: ModelKind, m: Mat3, n: usize) -> GeometryModel {
        GeometryModel::new(kind, m, (0..n).collect(), vec![0.0; n])
    }

    #[test]
    fn laf_check_keeps_exactly_mapped_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let cfg = RansacConfig::default();
        let h = Mat3::new(0.9, 0.1, 5.0, -0.05, 1.1, -3.0, 1e-4, -5e-5, 1.0);
        let tcs: Vec<_> = (0..50)
            .map(|_| {
                let c = Vec2::new(rng.gen_range(20.0..380.0), rng.gen_range(20.0..280.0));
                let s = rotation(rng.gen_range(0.0..3.0)) * Mat2::new(rng.gen_range(2.0..8.0), 0.0, 0.0, rng.gen_range(1.0..3.0));
                let jac = crate::geometry::homography_jacobian(&h, c).unwrap();
                laf_tc(c, s, map(&h, c), jac * s)
            })
            .collect();
        let r = laf_check(&tcs, &model(ModelKind::Homography, h, tcs.len()), &cfg);
        assert_eq!(r.discarded_by_laf, 0);
        assert_eq!(r.inliers_after_laf.len(), 50);
        // identity model and identical frames
        let same: Vec<_> = tcs.iter().map(|t| laf_tc(t.feat1.center(), t.feat1.frame.shape, t.feat1.center(), t.feat1.frame.shape)).collect();
        assert_eq!(laf_check(&same, &model(ModelKind::Homography, Mat3::identity(), 50), &cfg).discarded_by_laf, 0);
    }

    #[test]
    fn laf_check_discards_rotated_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = RansacConfig::default();
        let tcs: Vec<_> = (0..50)
            .map(|_| {
                let c = Vec2::new(rng.gen_range(20.0..380.0), rng.gen_range(20.0..280.0));
                let s = rotation(rng.gen_range(0.0..3.0)) * Mat2::new(rng.gen_range(5.0..10.0), 0.0, 0.0, rng.gen_range(1.5..3.0));
                laf_tc(c, s, c, rotation(std::f64::consts::FRAC_PI_2) * s)
            })
            .collect();
        let r = laf_check(&tcs, &model(ModelKind::Homography, Mat3::identity(), 50), &cfg);
        assert_eq!(r.discarded_by_laf, 50);
        assert!(r.inliers_after_laf.is_empty());
    }

    #[test]
    fn laf_check_under_epipolar_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let scene = Scene::new(&mut rng);
        let f = scene.fundamental();
        let cfg = RansacConfig::default();
        let (mut good, mut bad) = (Vec::new(), Vec::new());
        for _ in 0..30 {
            // a small planar patch: its frames are related by the local homography
            let x = scene.random_point(&mut rng);
            let e = 0.01;
            let (c1, c2) = scene.project(x);
            let (px1, px2) = scene.project(x + Vec3::new(e, 0.0, 0.0));
            let (py1, py2) = scene.project(x + Vec3::new(0.0, e, 0.0));
            let j1 = Mat2::from_columns(&[px1 - c1, py1 - c1]);
            let j2 = Mat2::from_columns(&[px2 - c2, py2 - c2]);
            let s1 = Mat2::new(6.0, 0.0, 0.0, 2.0);
            let s2 = j2 * j1.try_inverse().unwrap() * s1;
            good.push(laf_tc(c1, s1, c2, s2));
            bad.push(laf_tc(c1, s1, c2, rotation(std::f64::consts::FRAC_PI_2) * s2));
        }
        let g = laf_check(&good, &model(ModelKind::Fundamental, f, 30), &cfg);
        assert_eq!(g.discarded_by_laf, 0);
        let b = laf_check(&bad, &model(ModelKind::Fundamental, f, 30), &cfg);
        assert!(b.discarded_by_laf >= 27, "{} discarded", b.discarded_by_laf);
    }

    #[test]
    fn config_validation() {
        assert!(RansacConfig::default().validate().is_ok());
        assert!(RansacConfig { confidence: 1.0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { homography_threshold_px: 0.0, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { max_iterations: 0, ..Default::default() }.validate().is_err());
    }
}
