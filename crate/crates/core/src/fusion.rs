//! Central fusion of SAP peak reports into global 2D target estimates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::extraction::PeakReport;
use crate::scenario::{Room, SapPose};
use crate::{dbm_to_watts, watts_to_dbm, Error, Result};

/// A detection in the global xy frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalDetection {
    pub position: [f64; 2],
    pub power_dbm: f64,
    pub sources: BTreeSet<usize>,
    pub members: usize,
}

impl GlobalDetection {
    fn power_watts(&self) -> f64 {
        dbm_to_watts(self.power_dbm)
    }
}

pub type FusedEstimate = GlobalDetection;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    /// DBSCAN neighborhood radius, twice the range resolution by default.
    pub merge_eps: f64,
    /// Keep only estimates seen by at least two SAPs.
    pub require_multinode: bool,
    pub room: Room,
    pub room_margin: f64,
}

impl FusionConfig {
    pub fn new(range_resolution: f64, room: Room) -> Self {
        Self { merge_eps: 2.0 * range_resolution, require_multinode: false, room, room_margin: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.merge_eps > 0.0) {
            return Err(Error::invalid(format!("merge eps must be positive, got {}", self.merge_eps)));
        }
        self.room.validate()
    }
}

/// Peak position in the global frame: `R = l / 2`, local `(R sin(theta), R cos(theta))`
/// with `y` along the boresight, then rotated and translated by the pose.
pub fn to_global(peak: &PeakReport, pose: &SapPose) -> [f64; 2] {
    let range = peak.roundtrip_length / 2.0;
    let (s, c) = peak.azimuth.sin_cos();
    let (lx, ly) = (range * s, range * c);
    let a = pose.array_axis();
    let b = pose.boresight();
    [pose.position.x + lx * a.x + ly * b.x, pose.position.y + lx * a.y + ly * b.y]
}

/// Inverse of [`to_global`]: `(roundtrip_length, azimuth)`.
pub fn from_global(point: [f64; 2], pose: &SapPose) -> (f64, f64) {
    let (dx, dy) = (point[0] - pose.position.x, point[1] - pose.position.y);
    let a = pose.array_axis();
    let b = pose.boresight();
    let (lx, ly) = (dx * a.x + dy * a.y, dx * b.x + dy * b.y);
    (2.0 * lx.hypot(ly), lx.atan2(ly))
}

/// DBSCAN with `min_points = 1`: connected components of the graph linking
/// points no farther apart than `eps`. Clusters are ordered by their first
/// member; members are ascending.
pub fn cluster(points: &[[f64; 2]], eps: f64) -> Result<Vec<Vec<usize>>> {
    if !(eps > 0.0) {
        return Err(Error::invalid(format!("cluster eps must be positive, got {eps}")));
    }
    let mut label: Vec<Option<usize>> = vec![None; points.len()];
    let mut clusters = Vec::new();
    for seed in 0..points.len() {
        if label[seed].is_some() {
            continue;
        }
        let id = clusters.len();
        label[seed] = Some(id);
        let mut members = vec![seed];
        let mut frontier = vec![seed];
        while let Some(i) = frontier.pop() {
            for j in 0..points.len() {
                if label[j].is_none() && dist(points[i], points[j]) <= eps {
                    label[j] = Some(id);
                    members.push(j);
                    frontier.push(j);
                }
            }
        }
        members.sort_unstable();
        clusters.push(members);
    }
    Ok(clusters)
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Replaces each cluster by its linear-power-weighted centroid.
fn merge(dets: &[GlobalDetection], eps: f64) -> Result<Vec<GlobalDetection>> {
    let points: Vec<[f64; 2]> = dets.iter().map(|d| d.position).collect();
    cluster(&points, eps)?
        .into_iter()
        .map(|members| {
            let total: f64 = members.iter().map(|&i| dets[i].power_watts()).sum();
            let mut pos = [0.0; 2];
            for &i in &members {
                let w = if total > 0.0 { dets[i].power_watts() / total } else { 1.0 / members.len() as f64 };
                pos[0] += w * dets[i].position[0];
                pos[1] += w * dets[i].position[1];
            }
            Ok(GlobalDetection {
                position: pos,
                power_dbm: watts_to_dbm(total),
                sources: members.iter().flat_map(|&i| dets[i].sources.iter().copied()).collect(),
                members: members.iter().map(|&i| dets[i].members).sum(),
            })
        })
        .collect()
}

/// Full fusion: global transform, intra-SAP clustering, inter-SAP clustering,
/// room filter and the optional multi-node filter.
pub fn fuse(per_sap: &[(SapPose, Vec<PeakReport>)], cfg: &FusionConfig) -> Result<Vec<FusedEstimate>> {
    cfg.validate()?;
    let mut representatives = Vec::new();
    for (pose, peaks) in per_sap {
        let local: Vec<GlobalDetection> = peaks
            .iter()
            .map(|p| GlobalDetection {
                position: to_global(p, pose),
                power_dbm: p.power_dbm,
                sources: BTreeSet::from([pose.id]),
                members: 1,
            })
            .collect();
        representatives.extend(merge(&local, cfg.merge_eps)?);
    }
    let mut fused: Vec<FusedEstimate> = merge(&representatives, cfg.merge_eps)?
        .into_iter()
        .filter(|d| cfg.room.contains_xy(d.position, cfg.room_margin))
        .filter(|d| !cfg.require_multinode || d.sources.len() >= 2)
        .collect();
    fused.sort_by(|a, b| a.position[0].total_cmp(&b.position[0]).then(a.position[1].total_cmp(&b.position[1])));
    Ok(fused)
}
