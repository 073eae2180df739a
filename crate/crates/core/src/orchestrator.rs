//! The escalating matcher: runs a list of (detector, descriptor, view
//! synthesis) steps, accumulating features, until enough correspondences
//! survive geometric verification.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::descriptors::{describe, DescribedFeature, DescriptorKind};
use crate::features::{detect_in_view, reproject_frames, AffineFrame, DetectorParams, Tier};
use crate::geometry::{GeometryModel, Mat3, ModelKind};
use crate::imgproc::Image;
use crate::matching::{filter_duplicates, match_features, MatchingConfig, TentativeCorrespondence};
use crate::synth::{enumerate_views, synthesize_view, SynthView, SynthesisConfig};
use crate::verify::{auto_model, laf_check, RansacConfig, VerifiedResult, VerifyError};

/// Smallest image side accepted as input.
pub const MIN_IMAGE_SIDE: usize = 16;

#[derive(Debug, Error)]
pub enum ModsError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("image is {0}x{1}, at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE} is required")]
    ImageTooSmall(usize, usize),
    #[error("no step produced enough verified correspondences (best: {} inliers)", .0.inliers)]
    NoSolution(Box<MatchReport>),
}

impl ModsError {
    /// The best attempt carried by [`ModsError::NoSolution`].
    pub fn report(&self) -> Option<&MatchReport> {
        match self {
            ModsError::NoSolution(r) => Some(r),
            _ => None,
        }
    }
}

/// One escalation step: which detector and descriptor run on which views.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub tier: Tier,
    pub descriptor: DescriptorKind,
    pub synthesis: SynthesisConfig,
    pub matching: MatchingConfig,
    /// Detector settings; the tier's defaults when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorParams>,
}

impl StepConfig {
    /// A step with the descriptor and matching defaults that suit `tier`.
    pub fn new(tier: Tier, synthesis: SynthesisConfig) -> Self {
        let descriptor = match tier {
            Tier::Fast => DescriptorKind::Binary,
            Tier::DoG | Tier::HessAff => DescriptorKind::RootSift,
        };
        StepConfig { tier, descriptor, synthesis, matching: MatchingConfig::for_kind(descriptor), detector: None }
    }

    pub fn detector_params(&self) -> DetectorParams {
        self.detector.clone().unwrap_or_else(|| DetectorParams::for_tier(self.tier))
    }

    pub fn validate(&self) -> Result<(), ModsError> {
        let compatible = matches!(
            (self.tier, self.descriptor),
            (Tier::Fast, DescriptorKind::Binary) | (Tier::DoG | Tier::HessAff, DescriptorKind::RootSift)
        );
        if !compatible {
            return Err(ModsError::InvalidConfig(format!(
                "descriptor {:?} does not fit detector {}",
                self.descriptor,
                self.tier.name()
            )));
        }
        self.synthesis.validate().map_err(|e| ModsError::InvalidConfig(e.to_string()))?;
        self.matching.validate().map_err(|e| ModsError::InvalidConfig(e.to_string()))?;
        self.detector_params().validate().map_err(ModsError::InvalidConfig)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModsConfig {
    pub steps: Vec<StepConfig>,
    /// Verified correspondences needed to stop.
    pub theta_m: usize,
    /// Maximum number of steps to run; all of them when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_max: Option<usize>,
    pub ransac: RansacConfig,
    /// Radius of the tentative-correspondence duplicate filter.
    pub duplicate_radius_px: f64,
}

impl Default for ModsConfig {
    fn default() -> Self {
        ModsConfig {
            steps: default_steps(),
            theta_m: 15,
            s_max: None,
            ransac: RansacConfig::default(),
            duplicate_radius_px: 5.0,
        }
    }
}

/// The seven default escalation steps, from cheap to expensive.
pub fn default_steps() -> Vec<StepConfig> {
    let multi_scale = [1.0, 0.25, 0.125];
    vec![
        StepConfig::new(Tier::Fast, SynthesisConfig::identity()),
        StepConfig::new(Tier::Fast, SynthesisConfig::new(&[1.0], &[1.0, 5.0, 9.0], 360.0)),
        StepConfig::new(Tier::DoG, SynthesisConfig::new(&multi_scale, &[1.0], 360.0)),
        StepConfig::new(Tier::DoG, SynthesisConfig::new(&multi_scale, &[1.0, 3.0, 6.0, 9.0], 360.0)),
        StepConfig::new(Tier::HessAff, SynthesisConfig::new(&[1.0], &[1.0, 2.0, 4.0, 6.0, 8.0], 360.0)),
        StepConfig::new(Tier::HessAff, SynthesisConfig::new(&[1.0], &[1.0, 2.0, 4.0, 6.0, 8.0], 120.0)),
        StepConfig::new(Tier::HessAff, SynthesisConfig::new(&[1.0], &[1.0, 2.0, 4.0, 6.0, 8.0, 10.0], 60.0)),
    ]
}

impl ModsConfig {
    /// A configuration running exactly one step.
    pub fn single(step: StepConfig, theta_m: usize) -> Self {
        ModsConfig { steps: vec![step], theta_m, s_max: None, ..Default::default() }
    }

    pub fn step_limit(&self) -> usize {
        self.s_max.unwrap_or(self.steps.len())
    }

    pub fn validate(&self) -> Result<(), ModsError> {
        let bad = |m: String| Err(ModsError::InvalidConfig(m));
        if self.steps.is_empty() {
            return bad("at least one step is required".into());
        }
        if self.theta_m < 4 {
            return bad(format!("theta_m must be at least 4, got {}", self.theta_m));
        }
        let s_max = self.step_limit();
        if s_max == 0 || s_max > self.steps.len() {
            return bad(format!("s_max must lie in 1..={}, got {s_max}", self.steps.len()));
        }
        if !(self.duplicate_radius_px >= 0.0) {
            return bad("duplicate_radius_px must be non-negative".into());
        }
        self.ransac.validate().map_err(|e| ModsError::InvalidConfig(e.to_string()))?;
        for (i, step) in self.steps.iter().enumerate() {
            step.validate().map_err(|e| ModsError::InvalidConfig(format!("step {}: {e}", i + 1)))?;
        }
        Ok(())
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub synth_ms: f64,
    pub detect_ms: f64,
    pub describe_ms: f64,
    pub match_ms: f64,
    pub verify_ms: f64,
    pub total_ms: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.synth_ms + self.detect_ms + self.describe_ms + self.match_ms + self.verify_ms
    }

    fn add(&mut self, o: &StageTimings) {
        self.synth_ms += o.synth_ms;
        self.detect_ms += o.detect_ms;
        self.describe_ms += o.describe_ms;
        self.match_ms += o.match_ms;
        self.verify_ms += o.verify_ms;
        self.total_ms += o.total_ms;
    }
}

/// What one executed step did.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based step number.
    pub step: usize,
    pub tier: Tier,
    pub views: [usize; 2],
    pub new_features: [usize; 2],
    /// Size of the cumulative feature lists after the step, all descriptor kinds.
    pub total_features: [usize; 2],
    pub tentative: usize,
    pub model_inliers: usize,
    pub inliers_after_laf: usize,
    pub timings: StageTimings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportModel {
    pub kind: ModelKind,
    /// Row-major matrix entries.
    pub matrix: [f64; 9],
}

impl ReportModel {
    pub fn matrix(&self) -> Mat3 {
        Mat3::from_row_slice(&self.matrix)
    }
}

/// A model-inlier correspondence in original-image coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportCorrespondence {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub distance_ratio: f64,
    pub prune_count: usize,
    pub residual_px: f64,
    /// Whether the whole affine frame agreed with the model.
    pub laf_consistent: bool,
    pub tier: Tier,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub solved: bool,
    /// 1-based step whose result is reported: the solving step, or the best
    /// attempt when unsolved. 0 if nothing ran.
    pub step: usize,
    pub steps_run: usize,
    /// Correspondences that passed the frame check.
    pub inliers: usize,
    pub model: Option<ReportModel>,
    pub correspondences: Vec<ReportCorrespondence>,
    pub image_sizes: [[usize; 2]; 2],
    pub steps: Vec<StepRecord>,
    pub timings: StageTimings,
    pub config: ModsConfig,
}

impl MatchReport {
    /// Correspondences that passed the frame check.
    pub fn verified(&self) -> impl Iterator<Item = &ReportCorrespondence> {
        self.correspondences.iter().filter(|c| c.laf_consistent)
    }

    /// The report with every timing zeroed; equal across runs and thread
    /// counts for identical inputs.
    pub fn without_timings(&self) -> MatchReport {
        let mut r = self.clone();
        r.timings = StageTimings::default();
        for s in &mut r.steps {
            s.timings = StageTimings::default();
        }
        r
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Cumulative features of one descriptor kind, plus the tentative
/// correspondences of the last matching pass.
struct Pool {
    kind: DescriptorKind,
    feats: [Vec<DescribedFeature>; 2],
    matched: Option<([usize; 2], Vec<TentativeCorrespondence>)>,
}

struct Attempt {
    step: usize,
    tcs: Vec<TentativeCorrespondence>,
    verified: Option<VerifiedResult>,
}

impl Attempt {
    fn inliers(&self) -> usize {
        self.verified.as_ref().map_or(0, |v| v.inliers_after_laf.len())
    }
}

/// Runs the escalation until `theta_m` correspondences survive verification.
/// On failure the error carries the best attempt.
pub fn run_mods(img1: &Image, img2: &Image, cfg: &ModsConfig) -> Result<MatchReport, ModsError> {
    cfg.validate()?;
    for img in [img1, img2] {
        if img.width() < MIN_IMAGE_SIDE || img.height() < MIN_IMAGE_SIDE {
            return Err(ModsError::ImageTooSmall(img.width(), img.height()));
        }
    }
    let images = [img1, img2];
    let sizes = [(img1.width(), img1.height()), (img2.width(), img2.height())];
    let mut pools: Vec<Pool> = Vec::new();
    let mut records = Vec::new();
    let mut best: Option<Attempt> = None;
    let mut solved = false;

    for (si, step) in cfg.steps.iter().take(cfg.step_limit()).enumerate() {
        let step_start = Instant::now();
        let mut timings = StageTimings::default();
        let params = step.detector_params();

        // synthesis, both images at once
        let t = Instant::now();
        let view_params = enumerate_views(&step.synthesis);
        let jobs: Vec<(usize, usize)> = (0..2).flat_map(|i| (0..view_params.len()).map(move |v| (i, v))).collect();
        let views: Vec<(usize, usize, SynthView)> = jobs
            .par_iter()
            .filter_map(|&(i, v)| {
                synthesize_view(images[i], view_params[v], step.synthesis.sigma_base).ok().map(|view| (i, v, view))
            })
            .collect();
        timings.synth_ms = ms_since(t);

        let t = Instant::now();
        let frames: Vec<Vec<AffineFrame>> =
            views.par_iter().map(|(_, v, view)| detect_in_view(view, *v, step.tier, &params)).collect();
        timings.detect_ms = ms_since(t);

        let t = Instant::now();
        let described: Vec<Vec<DescribedFeature>> = views
            .par_iter()
            .zip(frames.par_iter())
            .map(|((i, _, view), frames)| {
                describe(&view.image, frames, step.descriptor)
                    .into_iter()
                    .filter_map(|f| {
                        let frame = reproject_frames(std::slice::from_ref(&f.frame), view, sizes[*i]).pop()?;
                        Some(DescribedFeature { frame, ..f })
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let pool_idx = match pools.iter().position(|p| p.kind == step.descriptor) {
            Some(p) => p,
            None => {
                pools.push(Pool { kind: step.descriptor, feats: [Vec::new(), Vec::new()], matched: None });
                pools.len() - 1
            }
        };
        let mut view_count = [0usize; 2];
        let mut new_features = [0usize; 2];
        for ((i, _, _), feats) in views.iter().zip(described) {
            view_count[*i] += 1;
            new_features[*i] += feats.len();
            pools[pool_idx].feats[*i].extend(feats);
        }
        timings.describe_ms = ms_since(t);

        // re-match every pool whose contents changed
        let t = Instant::now();
        for (pi, pool) in pools.iter_mut().enumerate() {
            let sizes_now = [pool.feats[0].len(), pool.feats[1].len()];
            if pool.matched.as_ref().is_some_and(|(s, _)| *s == sizes_now) {
                continue;
            }
            let matching = if pi == pool_idx { step.matching.clone() } else { MatchingConfig::for_kind(pool.kind) };
            let tcs = if sizes_now.contains(&0) {
                Vec::new()
            } else {
                match_features(&pool.feats[0], &pool.feats[1], &matching)
                    .map_err(|e| ModsError::InvalidConfig(e.to_string()))?
            };
            pool.matched = Some((sizes_now, tcs));
        }
        let all_tcs: Vec<TentativeCorrespondence> =
            pools.iter().flat_map(|p| p.matched.as_ref().map(|m| m.1.clone()).unwrap_or_default()).collect();
        let tcs = filter_duplicates(&all_tcs, cfg.duplicate_radius_px);
        timings.match_ms = ms_since(t);

        let t = Instant::now();
        let verified = match auto_model(&tcs, &cfg.ransac) {
            Ok(model) => Some(laf_check(&tcs, &model, &cfg.ransac)),
            Err(VerifyError::NoModel | VerifyError::InsufficientCorrespondences { .. }) => None,
            Err(e) => return Err(ModsError::InvalidConfig(e.to_string())),
        };
        timings.verify_ms = ms_since(t);
        timings.total_ms = ms_since(step_start);

        let attempt = Attempt { step: si + 1, tcs, verified };
        records.push(StepRecord {
            step: si + 1,
            tier: step.tier,
            views: view_count,
            new_features,
            total_features: [0, 1].map(|i| pools.iter().map(|p| p.feats[i].len()).sum()),
            tentative: attempt.tcs.len(),
            model_inliers: attempt.verified.as_ref().map_or(0, |v| v.model.inliers.len()),
            inliers_after_laf: attempt.inliers(),
            timings,
        });
        solved = attempt.inliers() >= cfg.theta_m;
        if best.as_ref().is_none_or(|b| attempt.inliers() > b.inliers()) || solved {
            best = Some(attempt);
        }
        if solved {
            break;
        }
    }

    let report = build_report(best, solved, records, sizes, cfg);
    if report.solved {
        Ok(report)
    } else {
        Err(ModsError::NoSolution(Box::new(report)))
    }
}

/// Runs a single step without escalation.
pub fn run_single_config(img1: &Image, img2: &Image, step: &StepConfig, theta_m: usize) -> Result<MatchReport, ModsError> {
    run_mods(img1, img2, &ModsConfig::single(step.clone(), theta_m))
}

fn build_report(
    best: Option<Attempt>,
    solved: bool,
    steps: Vec<StepRecord>,
    sizes: [(usize, usize); 2],
    cfg: &ModsConfig,
) -> MatchReport {
    let mut timings = StageTimings::default();
    for s in &steps {
        timings.add(&s.timings);
    }
    let (step, inliers, model, correspondences) = match &best {
        Some(a) => {
            let (model, corr) = match &a.verified {
                Some(v) => (Some(report_model(&v.model)), report_correspondences(&a.tcs, v)),
                None => (None, Vec::new()),
            };
            (a.step, a.inliers(), model, corr)
        }
        None => (0, 0, None, Vec::new()),
    };
    MatchReport {
        solved,
        step,
        steps_run: steps.len(),
        inliers,
        model,
        correspondences,
        image_sizes: sizes.map(|(w, h)| [w, h]),
        steps,
        timings,
        config: cfg.clone(),
    }
}

fn report_model(m: &GeometryModel) -> ReportModel {
    let mut matrix = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            matrix[3 * r + c] = m.matrix[(r, c)];
        }
    }
    ReportModel { kind: m.kind, matrix }
}

fn report_correspondences(tcs: &[TentativeCorrespondence], v: &VerifiedResult) -> Vec<ReportCorrespondence> {
    v.model
        .inliers
        .iter()
        .zip(&v.model.residuals)
        .map(|(&i, &residual_px)| {
            let tc = &tcs[i];
            ReportCorrespondence {
                x1: tc.feat1.frame.center.x,
                y1: tc.feat1.frame.center.y,
                x2: tc.feat2.frame.center.x,
                y2: tc.feat2.frame.center.y,
                distance_ratio: tc.distance_ratio,
                prune_count: tc.prune_count,
                residual_px,
                laf_consistent: v.inliers_after_laf.binary_search(&i).is_ok(),
                tier: tc.feat1.frame.tier,
            }
        })
        .collect()
}
