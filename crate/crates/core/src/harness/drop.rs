//! One Monte-Carlo drop: scene, per-SAP acquisition and detection, fusion, scoring.

use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::evaluation::{match_detections, occlusion_counts, Counts, MetricsReport, OcclusionCounts};
use crate::extraction::{extract_peaks, PeakReport};
use crate::fusion::{fuse, FusedEstimate};
use crate::ofdm::{apply_channel_and_noise, equalize, generate_symbols};
use crate::periodogram::{compute_periodogram, Periodogram};
use crate::raytracer::{build_ctf, trace_paths, PathSet};
use crate::rng::{child_seed, rng_from_seed, stream};
use crate::scenario::{SapPose, Scene};
use crate::{Error, Result};

/// Everything one SAP produces for a drop.
#[derive(Debug, Clone)]
pub struct SapAcquisition {
    pub pose: SapPose,
    pub paths: PathSet,
    pub peaks: Vec<PeakReport>,
    pub periodogram: Option<Periodogram>,
}

#[derive(Debug, Clone)]
pub struct Acquisition {
    pub scene: Scene,
    pub saps: Vec<SapAcquisition>,
}

fn draw_target_count(cfg: &SimConfig, seed: u64) -> usize {
    let (lo, hi) = (cfg.scene.min_targets, cfg.scene.max_targets);
    if lo == hi {
        lo
    } else {
        rng_from_seed(child_seed(seed, stream::TARGET_COUNT)).random_range(lo..=hi)
    }
}

/// Acquires and processes a single SAP of `scene`.
pub fn acquire_sap(cfg: &SimConfig, scene: &Scene, pose: &SapPose, seed: u64, keep_periodogram: bool) -> Result<SapAcquisition> {
    let ofdm = cfg.ofdm();
    let noise = cfg.noise();
    let sigma2 = noise.per_sample_variance(ofdm.n_sub);
    let paths = trace_paths(scene, pose, &cfg.radio.link)?;
    let ctf = build_ctf(&paths, &cfg.ctf_layout());
    let id = pose.id as u64;
    let x = generate_symbols(ofdm.n_sub, ofdm.symbol_power(), child_seed(seed, stream::SYMBOLS + 2 * id))?;
    let y = apply_channel_and_noise(&ctf, &x, sigma2, child_seed(seed, stream::NOISE + 2 * id))?;
    let est = equalize(&y, &x, sigma2)?;
    let p = compute_periodogram(&est, &cfg.ctf_geometry(), &cfg.processing.window, &cfg.processing.padding)?;
    let mut cfar = cfg.processing.cfar;
    cfar.sidelobe_db = match cfg.processing.window.kind {
        crate::periodogram::WindowKind::Chebyshev => cfg.processing.window.sidelobe_db,
        crate::periodogram::WindowKind::Rectangular => cfar.sidelobe_db,
    };
    let peaks = extract_peaks(&p, &cfar, p.noise_floor, pose.id)?;
    Ok(SapAcquisition { pose: *pose, paths, peaks, periodogram: keep_periodogram.then_some(p) })
}

/// Builds the drop's scene and runs every configured SAP.
pub fn acquire(cfg: &SimConfig, seed: u64, keep_periodograms: bool) -> Result<Acquisition> {
    let wrap = |e: Error| Error::Drop { seed, source: Box::new(e) };
    let n_targets = draw_target_count(cfg, seed);
    let scene = Scene::generate(
        cfg.scene.room,
        cfg.scene.n_saps,
        cfg.scene.sap_mount_height,
        n_targets,
        &cfg.scene.target,
        child_seed(seed, stream::SCENE),
    )
    .map_err(wrap)?;
    let saps = scene
        .saps
        .iter()
        .map(|pose| acquire_sap(cfg, &scene, pose, seed, keep_periodograms))
        .collect::<Result<Vec<_>>>()
        .map_err(wrap)?;
    Ok(Acquisition { scene, saps })
}

/// Fusion and scoring of the first `n_saps` SAPs of an acquisition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_saps: usize,
    pub require_multinode: bool,
    pub estimates: Vec<FusedEstimate>,
    pub counts: Counts,
    pub occlusion: OcclusionCounts,
}

impl Acquisition {
    pub fn truths(&self) -> Vec<[f64; 2]> {
        self.scene.targets.iter().map(|t| t.center.xy()).collect()
    }

    pub fn evaluate(&self, cfg: &SimConfig, n_saps: usize, require_multinode: bool) -> Result<Evaluation> {
        if n_saps == 0 || n_saps > self.saps.len() {
            return Err(Error::invalid(format!("cannot evaluate {n_saps} of {} SAPs", self.saps.len())));
        }
        let used = &self.saps[..n_saps];
        let inputs: Vec<(SapPose, Vec<PeakReport>)> = used.iter().map(|s| (s.pose, s.peaks.clone())).collect();
        let estimates = fuse(&inputs, &cfg.fusion_config(require_multinode))?;
        let positions: Vec<[f64; 2]> = estimates.iter().map(|e| e.position).collect();
        let matched = match_detections(&positions, &self.truths(), cfg.evaluation.match_radius)?;
        let paths: Vec<PathSet> = used.iter().map(|s| s.paths.clone()).collect();
        Ok(Evaluation {
            n_saps,
            require_multinode,
            estimates,
            counts: matched.counts(),
            occlusion: occlusion_counts(self.scene.targets.len(), &paths),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DropResult {
    pub seed: u64,
    pub n_targets: usize,
    pub per_sap_peaks: Vec<usize>,
    pub fused: usize,
    pub metrics: MetricsReport,
    /// Wall-clock time, excluded from equality-sensitive outputs.
    pub elapsed_ms: f64,
}

impl DropResult {
    /// Same drop outcome, ignoring timing.
    pub fn same_outcome(&self, other: &DropResult) -> bool {
        DropResult { elapsed_ms: 0.0, ..self.clone() } == DropResult { elapsed_ms: 0.0, ..other.clone() }
    }
}

/// Full pipeline for `cfg.scene.n_saps` SAPs with the configured fusion filter.
pub fn run_drop(cfg: &SimConfig, seed: u64) -> Result<DropResult> {
    let start = Instant::now();
    let acq = acquire(cfg, seed, false)?;
    let eval = acq
        .evaluate(cfg, cfg.scene.n_saps, cfg.fusion.require_multinode)
        .map_err(|e| Error::Drop { seed, source: Box::new(e) })?;
    let mut metrics = eval.counts.report()?;
    metrics.p_occ = Some(eval.occlusion.fraction());
    Ok(DropResult {
        seed,
        n_targets: acq.scene.targets.len(),
        per_sap_peaks: acq.saps.iter().map(|s| s.peaks.len()).collect(),
        fused: eval.estimates.len(),
        metrics,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}
