//! Affine and projective helpers shared by the whole pipeline.
//!
//! Conventions: points are `(x, y)` in pixel coordinates with pixel centers at
//! integer positions; 3×3 matrices act on column vectors `(x, y, 1)ᵀ`.

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;

use nalgebra::{Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Mat2 = Matrix2<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("matrix is singular (|det| = {0:e})")]
    SingularMatrix(f64),
    #[error("matrix has negative determinant; mirroring is not representable")]
    MirrorMatrix,
    #[error("value outside of the operation's domain: {0}")]
    DomainError(String),
    #[error("jacobian of the homography is degenerate at ({0}, {1})")]
    DegenerateJacobian(f64, f64),
    #[error("both epipolar lines are undefined for this point pair")]
    ZeroLine,
    #[error("zero camera translation, the fundamental matrix vanishes")]
    DegenerateMotion,
    #[error("could not parse matrix: {0}")]
    Parse(String),
}

/// Counter-clockwise rotation by `angle` radians.
pub fn rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2::new(c, -s, s, c)
}

/// Wraps an angle into `[0, period)`.
pub fn wrap_angle(angle: f64, period: f64) -> f64 {
    let r = angle.rem_euclid(period);
    // rem_euclid can round up to exactly `period`
    if r >= period {
        0.0
    } else {
        r
    }
}

/// A 2×3 affine map `p ↦ linear·p + translation`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[[f64; 3]; 2]", into = "[[f64; 3]; 2]")]
pub struct Affine2 {
    pub linear: Mat2,
    pub translation: Vec2,
}

impl From<[[f64; 3]; 2]> for Affine2 {
    fn from(r: [[f64; 3]; 2]) -> Self {
        Affine2 {
            linear: Mat2::new(r[0][0], r[0][1], r[1][0], r[1][1]),
            translation: Vec2::new(r[0][2], r[1][2]),
        }
    }
}

impl From<Affine2> for [[f64; 3]; 2] {
    fn from(a: Affine2) -> Self {
        [
            [a.linear[(0, 0)], a.linear[(0, 1)], a.translation.x],
            [a.linear[(1, 0)], a.linear[(1, 1)], a.translation.y],
        ]
    }
}

impl Affine2 {
    pub fn new(linear: Mat2, translation: Vec2) -> Self {
        Affine2 { linear, translation }
    }

    pub fn identity() -> Self {
        Affine2::new(Mat2::identity(), Vec2::zeros())
    }

    pub fn from_linear(linear: Mat2) -> Self {
        Affine2::new(linear, Vec2::zeros())
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Affine2::new(Mat2::identity(), Vec2::new(tx, ty))
    }

    #[inline]
    pub fn apply(&self, p: Vec2) -> Vec2 {
        self.linear * p + self.translation
    }

    /// `self ∘ other`: applies `other` first.
    pub fn then_after(&self, other: &Affine2) -> Affine2 {
        Affine2::new(
            self.linear * other.linear,
            self.linear * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Option<Affine2> {
        let inv = self.linear.try_inverse()?;
        Some(Affine2::new(inv, -(inv * self.translation)))
    }

    pub fn to_mat3(&self) -> Mat3 {
        let l = &self.linear;
        let t = &self.translation;
        Mat3::new(l[(0, 0)], l[(0, 1)], t.x, l[(1, 0)], l[(1, 1)], t.y, 0.0, 0.0, 1.0)
    }
}

/// The factors of `A = λ·R(ψ)·diag(t, 1)·R(φ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineDecomposition {
    pub lambda: f64,
    pub psi: f64,
    pub tilt: f64,
    pub phi: f64,
    /// `arccos(1 / tilt)`.
    pub latitude: f64,
}

impl AffineDecomposition {
    pub fn compose(&self) -> Mat2 {
        compose_affine(self.lambda, self.psi, self.tilt, self.phi)
    }
}

pub fn compose_affine(lambda: f64, psi: f64, tilt: f64, phi: f64) -> Mat2 {
    rotation(psi) * Mat2::new(tilt, 0.0, 0.0, 1.0) * rotation(phi) * lambda
}

/// Closed-form 2×2 SVD in rotation form: `m = R(alpha)·diag(s1, s2)·R(beta)`
/// with `s1 ≥ |s2|`. `s2` is negative when `det(m) < 0`.
fn rotation_svd(m: &Mat2) -> (f64, f64, f64, f64) {
    let (a, b, c, d) = (m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)]);
    let e = 0.5 * (a + d);
    let f = 0.5 * (a - d);
    let g = 0.5 * (c + b);
    let h = 0.5 * (c - b);
    let q = e.hypot(h);
    let r = f.hypot(g);
    let a1 = if r == 0.0 { 0.0 } else { g.atan2(f) };
    let a2 = if q == 0.0 { 0.0 } else { h.atan2(e) };
    let alpha = 0.5 * (a2 + a1);
    let beta = 0.5 * (a2 - a1);
    (q + r, q - r, alpha, beta)
}

/// Singular values `(σ1, σ2)`, `σ1 ≥ σ2 ≥ 0`.
pub fn singular_values(m: &Mat2) -> (f64, f64) {
    let (s1, s2, _, _) = rotation_svd(m);
    (s1, s2.abs())
}

pub fn decompose_affine(a: &Mat2) -> Result<AffineDecomposition, GeometryError> {
    let det = a.determinant();
    if det.abs() < 1e-12 {
        return Err(GeometryError::SingularMatrix(det));
    }
    if det < 0.0 {
        return Err(GeometryError::MirrorMatrix);
    }
    let (s1, s2, mut psi, mut phi) = rotation_svd(a);
    let tilt = s1 / s2;
    if tilt <= 1.0 + 1e-14 {
        // φ is unidentifiable; fold the whole rotation into ψ.
        psi += phi;
        phi = 0.0;
    } else {
        // R(φ + π) = -R(φ) and -I commutes with the diagonal, so shift both by π.
        let k = (phi / PI).floor();
        phi -= k * PI;
        psi -= k * PI;
        if phi >= PI {
            phi -= PI;
            psi += PI;
        }
    }
    let tilt = tilt.max(1.0);
    Ok(AffineDecomposition {
        lambda: s2,
        psi: wrap_angle(psi, TAU),
        tilt,
        phi,
        latitude: (1.0 / tilt).acos(),
    })
}

pub fn latitude_of_tilt(t: f64) -> Result<f64, GeometryError> {
    if !(t >= 1.0) || !t.is_finite() {
        return Err(GeometryError::DomainError(format!("tilt must be >= 1, got {t}")));
    }
    Ok((1.0 / t).acos())
}

pub fn tilt_of_latitude(theta: f64) -> Result<f64, GeometryError> {
    if !(0.0..PI / 2.0).contains(&theta) {
        return Err(GeometryError::DomainError(format!(
            "latitude must be in [0, pi/2), got {theta}"
        )));
    }
    Ok(1.0 / theta.cos())
}

/// Applies a homography to a point. Returns `None` on the line at infinity.
pub fn apply_homography(h: &Mat3, p: Vec2) -> Option<Vec2> {
    let q = h * Vec3::new(p.x, p.y, 1.0);
    if q.z.abs() < 1e-300 {
        None
    } else {
        Some(Vec2::new(q.x / q.z, q.y / q.z))
    }
}

/// First-order (affine) approximation of `h` at `p`.
pub fn homography_jacobian(h: &Mat3, p: Vec2) -> Option<Mat2> {
    let w = h[(2, 0)] * p.x + h[(2, 1)] * p.y + h[(2, 2)];
    if w.abs() < 1e-12 {
        return None;
    }
    let q = apply_homography(h, p)?;
    Some(
        Mat2::new(
            h[(0, 0)] - q.x * h[(2, 0)],
            h[(0, 1)] - q.x * h[(2, 1)],
            h[(1, 0)] - q.y * h[(2, 0)],
            h[(1, 1)] - q.y * h[(2, 1)],
        ) / w,
    )
}

/// Tilt of the local affine approximation of `h` at `p`.
pub fn transition_tilt(h: &Mat3, p: Vec2) -> Result<f64, GeometryError> {
    let j = homography_jacobian(h, p).ok_or(GeometryError::DegenerateJacobian(p.x, p.y))?;
    let (s1, s2) = singular_values(&j);
    if s2 <= 1e-12 * s1.max(1e-300) {
        return Err(GeometryError::DegenerateJacobian(p.x, p.y));
    }
    Ok(s1 / s2)
}

/// Symmetric epipolar error `(vᵀFu)²·(1/|(Fu)₁₂|² + 1/|(Fᵀv)₁₂|²)` in squared pixels.
pub fn sym_epipolar_error(f: &Mat3, u: Vec2, v: Vec2) -> Result<f64, GeometryError> {
    let uh = Vec3::new(u.x, u.y, 1.0);
    let vh = Vec3::new(v.x, v.y, 1.0);
    let fu = f * uh;
    let ftv = f.transpose() * vh;
    let d1 = fu.x * fu.x + fu.y * fu.y;
    let d2 = ftv.x * ftv.x + ftv.y * ftv.y;
    if d1 == 0.0 && d2 == 0.0 {
        return Err(GeometryError::ZeroLine);
    }
    let alg = vh.dot(&fu);
    let num = alg * alg;
    if num == 0.0 {
        return Ok(0.0);
    }
    Ok(num / d1 + num / d2)
}

/// Cross-product matrix `[v]ₓ`.
pub fn skew(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Scales to unit Frobenius norm and makes the largest-magnitude entry positive.
///
/// Ties on magnitude resolve to the first entry in row-major order.
pub fn normalize_matrix(m: &Mat3) -> Mat3 {
    let norm = m.norm();
    if norm == 0.0 || !norm.is_finite() {
        return *m;
    }
    let mut out = m / norm;
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for r in 0..3 {
        for c in 0..3 {
            let v = out[(r, c)];
            if v.abs() > best {
                best = v.abs();
                sign = v.signum();
            }
        }
    }
    if sign < 0.0 {
        out = -out;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Homography,
    Fundamental,
}

/// A verified two-view model with its support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryModel {
    pub kind: ModelKind,
    #[serde(with = "mat3_row_major")]
    pub matrix: Mat3,
    /// Indices into the correspondence list the model was estimated from.
    pub inliers: Vec<usize>,
    /// Per-inlier residual in pixels, aligned with `inliers`.
    pub residuals: Vec<f64>,
}

impl GeometryModel {
    /// Builds a model with a normalized matrix. Fundamental matrices are
    /// projected onto rank 2 first.
    pub fn new(kind: ModelKind, matrix: Mat3, inliers: Vec<usize>, residuals: Vec<f64>) -> Self {
        let matrix = match kind {
            ModelKind::Homography => normalize_matrix(&matrix),
            ModelKind::Fundamental => normalize_matrix(&enforce_rank2(&matrix)),
        };
        GeometryModel { kind, matrix, inliers, residuals }
    }
}

/// Zeroes the smallest singular value. Matrices that are already singular to
/// working precision are returned unchanged: rebuilding them from their SVD
/// would only add rounding noise, which badly conditioned epipolar matrices
/// amplify.
pub fn enforce_rank2(m: &Mat3) -> Mat3 {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut s = svd.singular_values;
    let (imin, smin) = s.argmin();
    if smin <= 1e-14 * s.max() {
        return *m;
    }
    s[imin] = 0.0;
    u * Mat3::from_diagonal(&s) * vt
}

/// Serializes a 3×3 matrix as 9 numbers in row-major order.
pub mod mat3_row_major {
    use super::Mat3;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn to_array(m: &Mat3) -> [f64; 9] {
        let mut out = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                out[3 * r + c] = m[(r, c)];
            }
        }
        out
    }

    pub fn from_array(a: &[f64; 9]) -> Mat3 {
        Mat3::from_row_slice(a)
    }

    pub fn serialize<S: Serializer>(m: &Mat3, s: S) -> Result<S::Ok, S::Error> {
        to_array(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat3, D::Error> {
        let a = <[f64; 9]>::deserialize(d)?;
        Ok(from_array(&a))
    }
}

/// Formats a 3×3 matrix as three whitespace-separated lines.
pub fn format_matrix(m: &Mat3) -> String {
    let mut out = String::new();
    for r in 0..3 {
        let _ = writeln!(out, "{:.17e} {:.17e} {:.17e}", m[(r, 0)], m[(r, 1)], m[(r, 2)]);
    }
    out
}

/// Parses 9 whitespace-separated numbers (row-major). Lines starting with `#` are ignored.
pub fn parse_matrix(text: &str) -> Result<Mat3, GeometryError> {
    let values: Vec<f64> = text
        .lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(|c: char| c.is_whitespace() || c == ','))
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| GeometryError::Parse(format!("{s:?}: {e}"))))
        .collect::<Result<_, _>>()?;
    if values.len() != 9 {
        return Err(GeometryError::Parse(format!("expected 9 numbers, got {}", values.len())));
    }
    Ok(Mat3::from_row_slice(&values))
}

/// Turntable camera as read from EXIF: metric focal length, focal-plane resolution,
/// sensor size in pixels, distance to the rotation axis and the rotation angle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TurntableCamera {
    pub focal: f64,
    pub focal_plane_res_x: f64,
    pub focal_plane_res_y: f64,
    pub width_px: f64,
    pub height_px: f64,
    pub distance: f64,
    pub phi: f64,
}

impl TurntableCamera {
    pub fn intrinsics(&self) -> Mat3 {
        Mat3::new(
            self.width_px * self.focal / self.focal_plane_res_x,
            0.0,
            self.width_px / 2.0,
            0.0,
            self.height_px * self.focal / self.focal_plane_res_y,
            self.height_px / 2.0,
            0.0,
            0.0,
            1.0,
        )
    }

    /// Orientation of the second camera.
    pub fn rotation(&self) -> Mat3 {
        let (s, c) = self.phi.sin_cos();
        Mat3::new(c, 0.0, -s, 0.0, 1.0, 0.0, s, 0.0, c)
    }

    /// Translation of the second camera.
    pub fn translation(&self) -> Vec3 {
        let (s, c) = self.phi.sin_cos();
        Vec3::new(s, 0.0, 1.0 - c) * self.distance
    }

    fn validate(&self) -> Result<(), GeometryError> {
        let positive = [
            self.focal,
            self.focal_plane_res_x,
            self.focal_plane_res_y,
            self.width_px,
            self.height_px,
            self.distance,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !self.phi.is_finite() {
            return Err(GeometryError::DomainError("turntable camera parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Ground-truth fundamental matrix `K⁻ᵀ R Kᵀ [K Rᵀ t]ₓ` of a turntable pair.
pub fn turntable_fundamental(cam: &TurntableCamera) -> Result<GeometryModel, GeometryError> {
    cam.validate()?;
    let t = cam.translation();
    if t.norm() <= 1e-12 * cam.distance {
        return Err(GeometryError::DegenerateMotion);
    }
    let k = cam.intrinsics();
    let k_inv = k.try_inverse().ok_or(GeometryError::SingularMatrix(k.determinant()))?;
    let r = cam.rotation();
    let f = k_inv.transpose() * r * k.transpose() * skew(&(k * r.transpose() * t));
    Ok(GeometryModel::new(ModelKind::Fundamental, f, Vec::new(), Vec::new()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn identity_decomposes_trivially() {
        let d = decompose_affine(&Mat2::identity()).unwrap();
        assert!(close(d.lambda, 1.0, 1e-15));
        assert!(close(d.psi, 0.0, 1e-15));
        assert!(close(d.tilt, 1.0, 1e-15));
        assert_eq!(d.phi, 0.0);
        assert_eq!(d.latitude, 0.0);
    }

    #[test]
    fn pure_tilt() {
        let d = decompose_affine(&Mat2::new(2.0, 0.0, 0.0, 1.0)).unwrap();
        assert!(close(d.lambda, 1.0, 1e-15));
        assert!(close(d.psi, 0.0, 1e-15) || close(d.psi, TAU, 1e-12));
        assert!(close(d.tilt, 2.0, 1e-15));
        assert!(close(d.phi, 0.0, 1e-15));
        assert!(close(d.latitude.to_degrees(), 60.0, 1e-12));
    }

    #[test]
    fn decompose_rejects_bad_input() {
        assert!(matches!(
            decompose_affine(&Mat2::new(1.0, 2.0, 2.0, 4.0)),
            Err(GeometryError::SingularMatrix(_))
        ));
        assert_eq!(
            decompose_affine(&Mat2::new(-1.0, 0.0, 0.0, 1.0)),
            Err(GeometryError::MirrorMatrix)
        );
    }

    #[test]
    fn decompose_ranges() {
        // φ lands in [π, 2π) before folding
        let a = compose_affine(0.7, 1.0, 3.0, 4.0);
        let d = decompose_affine(&a).unwrap();
        assert!((0.0..PI).contains(&d.phi));
        assert!((0.0..TAU).contains(&d.psi));
        assert!(close(d.phi, 4.0 - PI, 1e-12));
        assert!((d.compose() - a).norm() <= 1e-12 * a.norm());
    }

    #[test]
    fn latitude_examples() {
        assert_eq!(latitude_of_tilt(1.0).unwrap(), 0.0);
        assert!(close(latitude_of_tilt(2.0).unwrap().to_degrees(), 60.0, 1e-12));
        assert!(close(latitude_of_tilt(11.47).unwrap().to_degrees(), 85.0, 0.01));
        assert!(latitude_of_tilt(0.99).is_err());
        assert!(latitude_of_tilt(f64::NAN).is_err());
    }

    #[test]
    fn paper_tilt_series() {
        let thetas = [0.0, 20.0, 40.0, 60.0, 65.0, 70.0, 75.0, 80.0, 85.0];
        let tilts = [1.00, 1.06, 1.30, 2.00, 2.36, 2.92, 3.86, 5.75, 11.47];
        for (th, t) in thetas.iter().zip(tilts) {
            let got = tilt_of_latitude(f64::to_radians(*th)).unwrap();
            assert!(close(got, t, 0.01), "{th}: {got}");
        }
    }

    #[test]
    fn transition_tilt_of_affine_maps() {
        let p = Vec2::new(13.0, -4.0);
        assert!(close(transition_tilt(&Mat3::identity(), p).unwrap(), 1.0, 1e-12));
        let h = Mat3::from_diagonal(&Vec3::new(3.0, 1.0, 1.0));
        for p in [Vec2::new(0.0, 0.0), Vec2::new(100.0, 50.0), Vec2::new(-7.0, 3.0)] {
            assert!(close(transition_tilt(&h, p).unwrap(), 3.0, 1e-12));
        }
    }

    #[test]
    fn transition_tilt_of_composed_tilts_matches_direct_svd() {
        let t = Mat3::from_diagonal(&Vec3::new(2.0, 1.0, 1.0));
        let r = Mat3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        let t_inv = t.try_inverse().unwrap();
        for h in [t * r * t, t * r * t_inv] {
            let tau = transition_tilt(&h, Vec2::zeros()).unwrap();
            let sv = h.fixed_view::<2, 2>(0, 0).into_owned().svd(false, false).singular_values;
            let oracle = sv.max() / sv.min();
            assert!(close(tau, oracle, 1e-12), "{tau} vs {oracle}");
        }
        // tilt 2 followed by the inverse tilt across a quarter turn compounds to 4
        assert!(close(transition_tilt(&(t * r * t_inv), Vec2::zeros()).unwrap(), 4.0, 1e-12));
    }

    #[test]
    fn transition_tilt_degenerate() {
        let h = Mat3::new(1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            transition_tilt(&h, Vec2::new(1.0, 1.0)),
            Err(GeometryError::DegenerateJacobian(..))
        ));
        let h = Mat3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0);
        assert!(transition_tilt(&h, Vec2::new(1.0, 5.0)).is_err());
    }

    #[test]
    fn epipolar_error_basics() {
        // pure horizontal translation: epipolar lines are rows
        let f = Mat3::new(0.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        let u = Vec2::new(10.0, 20.0);
        assert_eq!(sym_epipolar_error(&f, u, Vec2::new(55.0, 20.0)).unwrap(), 0.0);
        // 3 px off the line: 3² + 3²
        let e = sym_epipolar_error(&f, u, Vec2::new(55.0, 23.0)).unwrap();
        assert!(close(e, 18.0, 1e-12));
        let e7 = sym_epipolar_error(&(f * 7.0), u, Vec2::new(55.0, 23.0)).unwrap();
        assert!(((e7 - e) / e).abs() <= 1e-12);
        assert_eq!(sym_epipolar_error(&Mat3::zeros(), u, u), Err(GeometryError::ZeroLine));
    }

    #[test]
    fn normalize_is_canonical() {
        let m = Mat3::new(1.0, -5.0, 2.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        let a = normalize_matrix(&m);
        let b = normalize_matrix(&(m * -3.5));
        assert!((a - b).norm() < 1e-15);
        assert!(close(a.norm(), 1.0, 1e-15));
        assert!(a[(0, 1)] > 0.0);
    }

    #[test]
    fn turntable_degenerate_and_rank() {
        let mut cam = TurntableCamera {
            focal: 7.0,
            focal_plane_res_x: 5.0,
            focal_plane_res_y: 5.0,
            width_px: 640.0,
            height_px: 480.0,
            distance: 500.0,
            phi: 0.0,
        };
        assert_eq!(turntable_fundamental(&cam), Err(GeometryError::DegenerateMotion));
        cam.phi = 20f64.to_radians();
        let f = turntable_fundamental(&cam).unwrap();
        assert_eq!(f.kind, ModelKind::Fundamental);
        assert!(f.matrix.determinant().abs() <= 1e-6);
        assert!(close(f.matrix.norm(), 1.0, 1e-12));
        let k = cam.intrinsics();
        assert_eq!(k[(2, 2)], 1.0);
        assert_eq!(k[(1, 0)], 0.0);
    }

    #[test]
    fn matrix_text_roundtrip() {
        let m = Mat3::new(1.5, -2.0, 3.25e-7, 4.0, 5.0, 6.0, 7.0, 8.0, 9.125);
        let parsed = parse_matrix(&format_matrix(&m)).unwrap();
        assert_eq!(parsed, m);
        assert!(parse_matrix("1 2 3").is_err());
        assert!(parse_matrix("# comment\n1 0 0\n0 1 0\n0 0 1\n").is_ok());
    }

    #[test]
    fn affine_inverse_roundtrip() {
        let a = Affine2::new(Mat2::new(2.0, 0.3, -0.1, 0.5), Vec2::new(3.0, -4.0));
        let inv = a.inverse().unwrap();
        let p = Vec2::new(7.0, 11.0);
        assert!((inv.apply(a.apply(p)) - p).norm() < 1e-12);
        let json = serde_json::to_string(&a).unwrap();
        let back: Affine2 = serde_json::from_str(&json).unwrap();
        assert_eq!(a, back);
    }
}
