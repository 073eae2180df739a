//! Evaluation harness: tilt series with exact ground truth, procedural test
//! scenes, ground-truth scoring, difficulty labels, overlays and CSV output.
//!
//! The scoring code deliberately shares no error computation with the
//! matcher; it works on plain arrays so that it can serve as an independent
//! check of the matcher's geometry.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{tilt_of_latitude, Affine2, GeometryError, Mat3};
use crate::imgproc::{gaussian_blur, load_image, Image, ImageError, RgbCanvas, SIGMA_BASE};
use crate::orchestrator::{run_mods, MatchReport, ModsConfig, ModsError};
use crate::synth::{synthesize_view, SynthError, ViewParams};

/// Latitudes (degrees) of the standard tilt series.
pub const LATITUDES_DEG: [f64; 9] = [0.0, 20.0, 40.0, 60.0, 65.0, 70.0, 75.0, 80.0, 85.0];
/// Narrowest warped image the series may produce.
pub const MIN_WARP_WIDTH: usize = 32;
/// Correct correspondences needed on synthetic pairs.
pub const SYNTHETIC_SOLVE_COUNT: usize = 50;
/// Correct correspondences needed on real pairs.
pub const REAL_SOLVE_COUNT: usize = 10;
/// Median symmetric epipolar error accepted on 3D scenes.
pub const EPIPOLAR_SOLVE_MEDIAN_PX: f64 = 6.0;
/// Error below which a correspondence counts as correct.
pub const CORRECT_THRESHOLD_PX: f64 = 1.0;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("image width {width} gives a {warped} px wide warp at tilt {tilt:.2}; at least {MIN_WARP_WIDTH} is needed")]
    ImageTooSmall { width: usize, tilt: f64, warped: usize },
    #[error("scoring needs a ground-truth model")]
    MissingGroundTruth,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Mods(#[from] ModsError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Io(String),
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> BenchError {
    BenchError::Io(format!("{}: {e}", path.display()))
}

// ---------------------------------------------------------------------------
// tilt series

/// A source image seen from latitude `latitude_deg`: horizontally compressed
/// by `tilt`, with the exact source → warped affine map.
#[derive(Clone, Debug)]
pub struct WarpCase {
    pub latitude_deg: f64,
    pub tilt: f64,
    pub gt: Affine2,
    pub image: Image,
}

impl WarpCase {
    /// The ground truth as a 3×3 homography.
    pub fn homography(&self) -> Mat3 {
        self.gt.to_mat3()
    }
}

/// One warp per latitude, produced with the same anti-aliasing and bilinear
/// resampling as view synthesis.
pub fn make_warp_series(img: &Image, latitudes_deg: &[f64]) -> Result<Vec<WarpCase>, BenchError> {
    latitudes_deg
        .iter()
        .map(|&lat| {
            let tilt = tilt_of_latitude(lat.to_radians())?;
            let warped = (img.width() as f64 / tilt).floor() as usize;
            if warped < MIN_WARP_WIDTH {
                return Err(BenchError::ImageTooSmall { width: img.width(), tilt, warped });
            }
            let view = synthesize_view(img, ViewParams { scale: 1.0, tilt, phi_deg: 0.0 }, SIGMA_BASE)?;
            Ok(WarpCase { latitude_deg: lat, tilt, gt: view.forward_map(), image: view.image })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// scenes

/// A procedural "dead leaves" scene: overlapping ellipses, rotated rectangles
/// and triangles of many sizes over a smooth gradient. Its structure spans
/// all scales, so every detector finds plenty of features.
pub fn textured_scene(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as f64, height as f64);
    let (g0, gx, gy): (f64, f64, f64) = (rng.gen_range(0.3..0.7), rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2));
    let mut img = Image::from_fn(width, height, |x, y| (g0 + gx * x as f64 / w + gy * y as f64 / h) as f32);

    let count = (width * height / 250).max(8);
    let max_size = (w.max(h) / 6.0).max(4.0);
    let mut shapes: Vec<Shape> = (0..count)
        .map(|_| {
            // log-uniform sizes: equally many shapes per octave
            let size = (rng.gen_range(1.5f64.ln()..max_size.ln())).exp();
            Shape {
                kind: rng.gen_range(0..3),
                cx: rng.gen_range(-0.05 * w..1.05 * w),
                cy: rng.gen_range(-0.05 * h..1.05 * h),
                a: size,
                b: size * rng.gen_range(0.3..1.0),
                angle: rng.gen_range(0.0..std::f64::consts::PI),
                value: rng.gen_range(0.0..1.0),
            }
        })
        .collect();
    // paint large shapes first so small ones stay visible
    shapes.sort_by(|p, q| q.a.total_cmp(&p.a));
    for s in &shapes {
        s.paint(&mut img);
    }
    gaussian_blur(&img, 0.6, 0.6)
}

struct Shape {
    kind: u8,
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    angle: f64,
    value: f32,
}

impl Shape {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (c, s) = (self.angle.cos(), self.angle.sin());
        let (dx, dy) = (x - self.cx, y - self.cy);
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        match self.kind {
            0 => (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0,
            1 => u.abs() <= self.a && v.abs() <= self.b,
            _ => {
                // triangle with apex at (a, 0) and base at u = -a
                u >= -self.a && u <= self.a && v.abs() <= self.b * (self.a - u) / (2.0 * self.a)
            }
        }
    }

    /// Paints with 2×2 supersampling.
    fn paint(&self, img: &mut Image) {
        let r = self.a.max(self.b) + 1.0;
        let x0 = (self.cx - r).floor().max(0.0) as usize;
        let y0 = (self.cy - r).floor().max(0.0) as usize;
        let x1 = ((self.cx + r).ceil().max(0.0) as usize).min(img.width());
        let y1 = ((self.cy + r).ceil().max(0.0) as usize).min(img.height());
        for y in y0..y1 {
            for x in x0..x1 {
                let hits = [(-0.25, -0.25), (0.25, -0.25), (-0.25, 0.25), (0.25, 0.25)]
                    .iter()
                    .filter(|(ox, oy)| self.contains(x as f64 + ox, y as f64 + oy))
                    .count();
                if hits > 0 {
                    let cover = hits as f32 / 4.0;
                    let old = img.get(x, y);
                    img.set(x, y, old + cover * (self.value - old));
                }
            }
        }
    }
}

/// A `width`×`height` window at a random position of `img`.
pub fn random_crop(img: &Image, width: usize, height: usize, rng: &mut impl Rng) -> Image {
    let x0 = rng.gen_range(0..=img.width().saturating_sub(width));
    let y0 = rng.gen_range(0..=img.height().saturating_sub(height));
    img.crop(x0, y0, width.min(img.width()), height.min(img.height()))
}

/// `n` pairs of crops taken from independently generated scenes, so no pair
/// shares any content.
pub fn unrelated_crop_pairs(n: usize, size: usize, seed: u64) -> Vec<(Image, Image)> {
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let scene1 = textured_scene(2 * size, 2 * size, rng.gen());
            let scene2 = textured_scene(2 * size, 2 * size, rng.gen());
            (random_crop(&scene1, size, size, &mut rng), random_crop(&scene2, size, size, &mut rng))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// scoring

type M3 = [[f64; 3]; 3];

fn to_rows(m: &Mat3) -> M3 {
    std::array::from_fn(|r| std::array::from_fn(|c| m[(r, c)]))
}

fn mul(m: &M3, p: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|r| m[r][0] * p[0] + m[r][1] * p[1] + m[r][2] * p[2])
}

fn transpose(m: &M3) -> M3 {
    std::array::from_fn(|r| std::array::from_fn(|c| m[c][r]))
}

/// Inverse through the adjugate.
fn invert(m: &M3) -> Option<M3> {
    let cof = |r: usize, c: usize| {
        let (r1, r2) = ((r + 1) % 3, (r + 2) % 3);
        let (c1, c2) = ((c + 1) % 3, (c + 2) % 3);
        m[r1][c1] * m[r2][c2] - m[r1][c2] * m[r2][c1]
    };
    let det = m[0][0] * cof(0, 0) + m[0][1] * cof(0, 1) + m[0][2] * cof(0, 2);
    if det.abs() < 1e-300 {
        return None;
    }
    Some(std::array::from_fn(|r| std::array::from_fn(|c| cof(c, r) / det)))
}

fn transfer(m: &M3, x: f64, y: f64) -> Option<(f64, f64)> {
    let q = mul(m, [x, y, 1.0]);
    (q[2] != 0.0).then(|| (q[0] / q[2], q[1] / q[2]))
}

/// Mean of the forward and backward transfer distances.
pub fn symmetric_transfer_error(h: &Mat3, p: [f64; 4]) -> f64 {
    let m = to_rows(h);
    let Some(inv) = invert(&m) else { return f64::INFINITY };
    match (transfer(&m, p[0], p[1]), transfer(&inv, p[2], p[3])) {
        (Some(f), Some(b)) => (f64::hypot(f.0 - p[2], f.1 - p[3]) + f64::hypot(b.0 - p[0], b.1 - p[1])) / 2.0,
        _ => f64::INFINITY,
    }
}

/// Square root of the symmetric epipolar error: distances of each point to
/// the other's epipolar line, combined in quadrature.
pub fn symmetric_epipolar_distance(f: &Mat3, p: [f64; 4]) -> f64 {
    let m = to_rows(f);
    let l2 = mul(&m, [p[0], p[1], 1.0]);
    let l1 = mul(&transpose(&m), [p[2], p[3], 1.0]);
    let e = p[2] * l2[0] + p[3] * l2[1] + l2[2];
    let (n1, n2) = (l1[0] * l1[0] + l1[1] * l1[1], l2[0] * l2[0] + l2[1] * l2[1]);
    if n1 == 0.0 || n2 == 0.0 {
        return f64::INFINITY;
    }
    (e * e * (1.0 / n1 + 1.0 / n2)).sqrt()
}

/// First-order geometric error of a point pair under `f`.
pub fn sampson_distance(f: &Mat3, p: [f64; 4]) -> f64 {
    let m = to_rows(f);
    let l2 = mul(&m, [p[0], p[1], 1.0]);
    let l1 = mul(&transpose(&m), [p[2], p[3], 1.0]);
    let e = p[2] * l2[0] + p[3] * l2[1] + l2[2];
    let d = l1[0] * l1[0] + l1[1] * l1[1] + l2[0] * l2[0] + l2[1] * l2[1];
    if d == 0.0 {
        f64::INFINITY
    } else {
        e.abs() / d.sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth {
    /// Also covers affine ground truth.
    Homography(Mat3),
    Fundamental(Mat3),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SolveMode {
    /// Solved when at least this many correspondences are correct.
    GtCorrespondenceCount(usize),
    /// Solved when the median symmetric epipolar distance is at most this.
    MedianSymEpipolar(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveCriteria {
    pub mode: SolveMode,
    pub gt: Option<GroundTruth>,
    pub correct_threshold_px: f64,
}

impl SolveCriteria {
    pub fn synthetic(h: Mat3) -> Self {
        SolveCriteria {
            mode: SolveMode::GtCorrespondenceCount(SYNTHETIC_SOLVE_COUNT),
            gt: Some(GroundTruth::Homography(h)),
            correct_threshold_px: CORRECT_THRESHOLD_PX,
        }
    }

    pub fn real(gt: GroundTruth) -> Self {
        SolveCriteria {
            mode: SolveMode::GtCorrespondenceCount(REAL_SOLVE_COUNT),
            gt: Some(gt),
            correct_threshold_px: CORRECT_THRESHOLD_PX,
        }
    }

    pub fn epipolar(f: Mat3) -> Self {
        SolveCriteria {
            mode: SolveMode::MedianSymEpipolar(EPIPOLAR_SOLVE_MEDIAN_PX),
            gt: Some(GroundTruth::Fundamental(f)),
            correct_threshold_px: CORRECT_THRESHOLD_PX,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub solved: bool,
    pub correct_count: usize,
    /// Median per-correspondence error in pixels; `None` without correspondences.
    pub median_error: Option<f64>,
}

/// Scores `(x1, y1, x2, y2)` point pairs against the ground truth.
///
/// Homographies are judged by symmetric transfer error; fundamental matrices
/// by Sampson distance for correctness and symmetric epipolar distance for the
/// median.
pub fn score_points(points: &[[f64; 4]], crit: &SolveCriteria) -> Result<Score, BenchError> {
    let gt = crit.gt.as_ref().ok_or(BenchError::MissingGroundTruth)?;
    let (errors, correct_count): (Vec<f64>, usize) = match gt {
        GroundTruth::Homography(h) => {
            let e: Vec<f64> = points.iter().map(|&p| symmetric_transfer_error(h, p)).collect();
            let c = e.iter().filter(|&&v| v <= crit.correct_threshold_px).count();
            (e, c)
        }
        GroundTruth::Fundamental(f) => {
            let c = points.iter().filter(|&&p| sampson_distance(f, p) <= crit.correct_threshold_px).count();
            (points.iter().map(|&p| symmetric_epipolar_distance(f, p)).collect(), c)
        }
    };
    let median_error = median(errors);
    let solved = match crit.mode {
        SolveMode::GtCorrespondenceCount(n) => correct_count >= n,
        SolveMode::MedianSymEpipolar(limit) => median_error.is_some_and(|m| m <= limit),
    };
    Ok(Score { solved, correct_count, median_error })
}

/// Scores the verified correspondences of a report.
pub fn score_correspondences(report: &MatchReport, crit: &SolveCriteria) -> Result<Score, BenchError> {
    let points: Vec<[f64; 4]> = report.verified().map(|c| [c.x1, c.y1, c.x2, c.y2]).collect();
    score_points(&points, crit)
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    Unsolved,
    Easy,
    Medium,
    Hard,
}

/// The hardest label a configuration earns from the fraction `f` of pairs it
/// solves: easy from 50 %, medium from 90 %, hard from 99 %.
pub fn classify_difficulty(f: f64) -> Difficulty {
    if f >= 0.99 {
        Difficulty::Hard
    } else if f >= 0.90 {
        Difficulty::Medium
    } else if f >= 0.50 {
        Difficulty::Easy
    } else {
        Difficulty::Unsolved
    }
}

// ---------------------------------------------------------------------------
// rendering

pub const INLIER_COLOR: [u8; 3] = [40, 220, 60];
pub const LAF_REJECT_COLOR: [u8; 3] = [230, 40, 40];

/// Side-by-side canvas with one line per model inlier: green when the frame
/// check passed, red when it did not.
pub fn render_overlay(img1: &Image, img2: &Image, report: &MatchReport) -> RgbCanvas {
    let mut canvas = RgbCanvas::new(img1.width() + img2.width(), img1.height().max(img2.height()));
    canvas.blit_gray(img1, 0, 0);
    canvas.blit_gray(img2, img1.width(), 0);
    let dx = img1.width() as f64;
    // rejected first so that verified lines stay on top
    for pass in [false, true] {
        for c in report.correspondences.iter().filter(|c| c.laf_consistent == pass) {
            let color = if pass { INLIER_COLOR } else { LAF_REJECT_COLOR };
            canvas.line((c.x1, c.y1), (c.x2 + dx, c.y2), color);
        }
    }
    canvas
}

// ---------------------------------------------------------------------------
// warp benchmark

/// One CSV row of the warp benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub pair_id: String,
    pub config_id: String,
    pub solved: bool,
    pub step: usize,
    pub inliers: usize,
    pub correct: usize,
    pub median_err_px: Option<f64>,
    pub ms_total: f64,
    pub ms_synth: f64,
    pub ms_detect: f64,
    pub ms_describe: f64,
    pub ms_match: f64,
    pub ms_verify: f64,
}

/// Loads every PNG/PNM image of `dir`, sorted by file name.
pub fn load_image_dir(dir: &Path) -> Result<Vec<(String, Image)>, BenchError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| io_err(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "pgm" | "ppm" | "pnm"))
        })
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            Ok((stem, load_image(&p)?))
        })
        .collect()
}

/// Matches every image against its tilt series and scores the results.
/// When `report_dir` is given each report is written there as JSON.
pub fn run_warp_benchmark(
    images: &[(String, Image)],
    latitudes_deg: &[f64],
    cfg: &ModsConfig,
    config_id: &str,
    report_dir: Option<&Path>,
) -> Result<Vec<BenchRow>, BenchError> {
    let series: Vec<(String, Image, WarpCase)> = images
        .iter()
        .map(|(name, img)| {
            Ok(make_warp_series(img, latitudes_deg)?
                .into_iter()
                .map(|case| (format!("{name}_lat{:02}", case.latitude_deg.round() as i64), img.clone(), case))
                .collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>, BenchError>>()?
        .into_iter()
        .flatten()
        .collect();
    series
        .par_iter()
        .map(|(pair_id, img, case)| {
            let report = match run_mods(img, &case.image, cfg) {
                Ok(r) => r,
                Err(ModsError::NoSolution(r)) => *r,
                Err(e) => return Err(e.into()),
            };
            if let Some(dir) = report_dir {
                write_json_atomic(&dir.join(format!("{pair_id}.json")), &report)?;
            }
            let score = score_correspondences(&report, &SolveCriteria::synthetic(case.homography()))?;
            Ok(bench_row(pair_id, config_id, &report, &score))
        })
        .collect()
}

pub fn bench_row(pair_id: &str, config_id: &str, report: &MatchReport, score: &Score) -> BenchRow {
    let t = &report.timings;
    BenchRow {
        pair_id: pair_id.to_string(),
        config_id: config_id.to_string(),
        solved: score.solved,
        step: report.step,
        inliers: report.inliers,
        correct: score.correct_count,
        median_err_px: score.median_error,
        ms_total: t.total_ms,
        ms_synth: t.synth_ms,
        ms_detect: t.detect_ms,
        ms_describe: t.describe_ms,
        ms_match: t.match_ms,
        ms_verify: t.verify_ms,
    }
}

/// Writes `contents` through a temporary file in the same directory, so
/// readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), BenchError> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| io_err(dir, e))?;
    tmp.write_all(contents).map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

pub fn write_json_atomic<T: Serialize>(path: &Path, value: &T) -> Result<(), BenchError> {
    let text = serde_json::to_vec_pretty(value).map_err(|e| io_err(path, e))?;
    write_atomic(path, &text)
}

/// Column order of the benchmark CSV.
pub const CSV_COLUMNS: [&str; 13] = [
    "pair_id",
    "config_id",
    "solved",
    "step",
    "inliers",
    "correct",
    "median_err_px",
    "ms_total",
    "ms_synth",
    "ms_detect",
    "ms_describe",
    "ms_match",
    "ms_verify",
];

/// Serializes rows as CSV with a header line.
pub fn rows_to_csv(rows: &[BenchRow]) -> Result<String, BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| BenchError::Io(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_csv(rows: &[BenchRow], path: &Path) -> Result<(), BenchError> {
    write_atomic(path, rows_to_csv(rows)?.as_bytes())
}
