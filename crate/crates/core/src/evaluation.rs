//! Scoring of fused estimates against ground truth: probability of detection,
//! precision, F1, and occlusion diagnostics.

use serde::{Deserialize, Serialize};

use crate::extraction::{interpolate_peak, PeakReport};
use crate::fusion::to_global;
use crate::periodogram::Periodogram;
use crate::raytracer::PathSet;
use crate::scenario::SapPose;
use crate::{watts_to_dbm, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub estimate: usize,
    pub truth: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub pairs: Vec<MatchPair>,
    pub unmatched_estimates: Vec<usize>,
    pub unmatched_truths: Vec<usize>,
    pub radius: f64,
}

impl MatchResult {
    pub fn counts(&self) -> Counts {
        Counts {
            positives: (self.pairs.len() + self.unmatched_truths.len()) as u64,
            detections: (self.pairs.len() + self.unmatched_estimates.len()) as u64,
            true_positives: self.pairs.len() as u64,
        }
    }
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// One-to-one greedy matching by ascending distance, keeping pairs within `radius`.
pub fn match_detections(estimates: &[[f64; 2]], truths: &[[f64; 2]], radius: f64) -> Result<MatchResult> {
    if !(radius > 0.0) {
        return Err(Error::invalid(format!("matching radius must be positive, got {radius}")));
    }
    let mut candidates: Vec<MatchPair> = estimates
        .iter()
        .enumerate()
        .flat_map(|(e, &pe)| {
            truths.iter().enumerate().filter_map(move |(t, &pt)| {
                let d = dist(pe, pt);
                (d <= radius).then_some(MatchPair { estimate: e, truth: t, distance: d })
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.distance.total_cmp(&b.distance).then(a.estimate.cmp(&b.estimate)).then(a.truth.cmp(&b.truth))
    });
    let mut est_used = vec![false; estimates.len()];
    let mut truth_used = vec![false; truths.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !est_used[c.estimate] && !truth_used[c.truth] {
            est_used[c.estimate] = true;
            truth_used[c.truth] = true;
            pairs.push(c);
        }
    }
    let unused = |used: &[bool]| used.iter().enumerate().filter(|(_, u)| !**u).map(|(i, _)| i).collect();
    Ok(MatchResult {
        pairs,
        unmatched_estimates: unused(&est_used),
        unmatched_truths: unused(&truth_used),
        radius,
    })
}

/// Pooled detection counts; aggregating drops adds counts, never ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    /// Ground-truth targets, `|O+|`.
    pub positives: u64,
    /// Reported estimates, `|O_det+|`.
    pub detections: u64,
    /// Matched estimates, `|O_true+|`.
    pub true_positives: u64,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.positives += o.positives;
        self.detections += o.detections;
        self.true_positives += o.true_positives;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub p_det: f64,
    /// Defined as 1 when nothing was detected.
    pub precision: f64,
    pub f1: f64,
    pub counts: Counts,
    pub p_occ: Option<f64>,
}

impl Counts {
    pub fn report(&self) -> Result<MetricsReport> {
        if self.positives == 0 {
            return Err(Error::invalid("metrics need at least one ground-truth target"));
        }
        let p_det = self.true_positives as f64 / self.positives as f64;
        let precision =
            if self.detections == 0 { 1.0 } else { self.true_positives as f64 / self.detections as f64 };
        Ok(MetricsReport { p_det, precision, f1: f1_score(p_det, precision), counts: *self, p_occ: None })
    }
}

pub fn f1_score(p_det: f64, precision: f64) -> f64 {
    if p_det + precision == 0.0 {
        0.0
    } else {
        2.0 * p_det * precision / (p_det + precision)
    }
}

pub fn detection_metrics(m: &MatchResult) -> Result<MetricsReport> {
    m.counts().report()
}

/// Fully occluded (target, SAP) pairs and the number of pairs considered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OcclusionCounts {
    pub occluded: u64,
    pub pairs: u64,
}

impl OcclusionCounts {
    pub fn fraction(&self) -> f64 {
        if self.pairs == 0 {
            0.0
        } else {
            self.occluded as f64 / self.pairs as f64
        }
    }
}

impl std::ops::AddAssign for OcclusionCounts {
    fn add_assign(&mut self, o: OcclusionCounts) {
        self.occluded += o.occluded;
        self.pairs += o.pairs;
    }
}

pub fn occlusion_counts(n_targets: usize, paths: &[PathSet]) -> OcclusionCounts {
    let occluded = paths
        .iter()
        .map(|set| (0..n_targets).filter(|&t| set.target_fully_occluded(t)).count() as u64)
        .sum();
    OcclusionCounts { occluded, pairs: (n_targets * paths.len()) as u64 }
}

/// Fraction of (target, SAP) pairs where every scatter path of the target is occluded.
pub fn occlusion_fraction(n_targets: usize, paths: &[PathSet]) -> f64 {
    occlusion_counts(n_targets, paths).fraction()
}

/// Reference estimator for a single impulsive target: the interpolated global
/// maximum of the periodogram, in global coordinates.
pub fn baseline_single_target(p: &Periodogram, pose: &SapPose) -> [f64; 2] {
    let (n, k, _) = p.global_max();
    let interp = interpolate_peak(&p.values, (n, k));
    let cal = &p.calibration;
    let pos = cal.bin_to_physical(n as f64 + interp.offset.0, k as f64 + interp.offset.1);
    let peak = PeakReport {
        sap_id: pose.id,
        roundtrip_length: pos.roundtrip_length.max(0.0),
        azimuth: pos.sin_azimuth.clamp(-1.0, 1.0).asin(),
        power_dbm: watts_to_dbm(interp.power * p.power_scale),
        bin: (n, k),
        fractional_bin: (n as f64 + interp.offset.0, k as f64 + interp.offset.1),
        cancel_radii: (0, 0),
        noise_power_dbm: watts_to_dbm(p.noise_power_watts),
    };
    to_global(&peak, pose)
}

/// Wilson score interval for `successes / trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;
