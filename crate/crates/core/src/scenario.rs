//! Rooms, SAP placement and randomized scattering-point targets.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec3};
use crate::rng::rng_from_seed;
use crate::{Error, Result};

pub const MAX_SAPS: usize = 4;
pub const MAX_TARGETS: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Room {
    pub side_x: f64,
    pub side_y: f64,
    pub height: f64,
}

impl Default for Room {
    fn default() -> Self {
        Self { side_x: 10.0, side_y: 10.0, height: 3.0 }
    }
}

impl Room {
    pub fn new(side_x: f64, side_y: f64, height: f64) -> Result<Self> {
        let room = Self { side_x, side_y, height };
        room.validate()?;
        Ok(room)
    }

    pub fn square(side: f64, height: f64) -> Result<Self> {
        Self::new(side, side, height)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [self.side_x, self.side_y, self.height]
            .iter()
            .all(|v| v.is_finite() && *v > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("room extents must be positive, got {self:?}")))
        }
    }

    /// True if the xy projection of `p` lies in the footprint grown by `margin`.
    pub fn contains_xy(&self, p: [f64; 2], margin: f64) -> bool {
        p[0] >= -margin && p[0] <= self.side_x + margin && p[1] >= -margin && p[1] <= self.side_y + margin
    }
}

/// A sensing access point mounted on a wall.
///
/// The local frame has `y` along the boresight, `x` along the receive array
/// axis (boresight rotated by -90 degrees) and `z` up. Positive azimuth is
/// towards local `+x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SapPose {
    pub id: usize,
    pub position: Vec3,
    /// Boresight direction measured from the global `+x` axis, radians.
    pub boresight_azimuth: f64,
}

impl SapPose {
    pub fn boresight(&self) -> Vec3 {
        let (s, c) = self.boresight_azimuth.sin_cos();
        Vec3::new(c, s, 0.0)
    }

    pub fn array_axis(&self) -> Vec3 {
        let (s, c) = self.boresight_azimuth.sin_cos();
        Vec3::new(s, -c, 0.0)
    }

    /// Coordinates of a global point in the SAP frame.
    pub fn to_local(&self, p: Vec3) -> Vec3 {
        let d = p - self.position;
        Vec3::new(d.dot(self.array_axis()), d.dot(self.boresight()), d.z)
    }
}

/// Places `n` SAPs at wall midpoints in the fixed order `-x, +x, -y, +y`.
pub fn place_saps(room: &Room, n: usize, mount_height: f64) -> Result<Vec<SapPose>> {
    if !(1..=MAX_SAPS).contains(&n) {
        return Err(Error::invalid(format!("SAP count must be in 1..={MAX_SAPS}, got {n}")));
    }
    room.validate()?;
    use std::f64::consts::{FRAC_PI_2, PI};
    let (hx, hy) = (room.side_x / 2.0, room.side_y / 2.0);
    let walls = [
        (Vec3::new(0.0, hy, mount_height), 0.0),
        (Vec3::new(room.side_x, hy, mount_height), PI),
        (Vec3::new(hx, 0.0, mount_height), FRAC_PI_2),
        (Vec3::new(hx, room.side_y, mount_height), -FRAC_PI_2),
    ];
    Ok(walls
        .iter()
        .take(n)
        .enumerate()
        .map(|(id, &(position, boresight_azimuth))| SapPose { id, position, boresight_azimuth })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub center: Vec3,
    pub scatter_points: Vec<Vec3>,
    /// RCS of each scatter point, m^2.
    pub per_point_rcs: f64,
}

impl Target {
    pub fn total_rcs(&self) -> f64 {
        self.per_point_rcs * self.scatter_points.len() as f64
    }
}

/// Statistical shape of a human-like scattering target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TargetModel {
    pub scatter_points: usize,
    /// Per-axis standard deviation of scatter points about the center, m.
    pub spread: [f64; 3],
    /// Incoherent total RCS split evenly over the points, m^2.
    pub total_rcs: f64,
    pub center_height: f64,
}

impl Default for TargetModel {
    fn default() -> Self {
        Self { scatter_points: 15, spread: [0.1, 0.03, 0.5], total_rcs: 1.0, center_height: 1.0 }
    }
}

impl TargetModel {
    /// A single point scatterer carrying the full RCS.
    pub fn impulsive() -> Self {
        Self { scatter_points: 1, spread: [0.0; 3], ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.scatter_points == 0 {
            return Err(Error::invalid("target model needs at least one scatter point"));
        }
        if self.spread.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid(format!("invalid scatter spread {:?}", self.spread)));
        }
        if !(self.total_rcs > 0.0) {
            return Err(Error::invalid("total RCS must be positive"));
        }
        Ok(())
    }
}

/// Draws `n_targets` targets with centers uniform over the room footprint.
pub fn spawn_targets(room: &Room, n_targets: usize, model: &TargetModel, seed: u64) -> Result<Vec<Target>> {
    if n_targets == 0 {
        return Err(Error::invalid("at least one target is required"));
    }
    room.validate()?;
    model.validate()?;
    let mut rng = rng_from_seed(seed);
    // Normal::new only fails for negative or non-finite sigma, checked above.
    let axes: Vec<Normal<f64>> = model.spread.iter().map(|&s| Normal::new(0.0, s).unwrap()).collect();
    let per_point_rcs = model.total_rcs / model.scatter_points as f64;

    Ok((0..n_targets)
        .map(|_| {
            let center = Vec3::new(
                rng.random_range(0.0..=room.side_x),
                rng.random_range(0.0..=room.side_y),
                model.center_height,
            );
            let scatter_points = (0..model.scatter_points)
                .map(|_| {
                    let d = Vec3::new(axes[0].sample(&mut rng), axes[1].sample(&mut rng), axes[2].sample(&mut rng));
                    center + d
                })
                .collect();
            Target { center, scatter_points, per_point_rcs }
        })
        .collect())
}

/// Tight bounding box of a target's scatter points.
pub fn target_bounding_box(target: &Target) -> Result<Aabb> {
    let mut it = target.scatter_points.iter();
    let first = *it.next().ok_or_else(|| Error::invalid("target has no scatter points"))?;
    Ok(it.fold(Aabb { min: first, max: first }, |b, p| Aabb {
        min: Vec3::new(b.min.x.min(p.x), b.min.y.min(p.y), b.min.z.min(p.z)),
        max: Vec3::new(b.max.x.max(p.x), b.max.y.max(p.y), b.max.z.max(p.z)),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub room: Room,
    pub saps: Vec<SapPose>,
    pub targets: Vec<Target>,
    pub seed: u64,
}

impl Scene {
    pub fn new(room: Room, saps: Vec<SapPose>, targets: Vec<Target>, seed: u64) -> Result<Self> {
        room.validate()?;
        if !(1..=MAX_SAPS).contains(&saps.len()) {
            return Err(Error::invalid(format!("scene needs 1..={MAX_SAPS} SAPs, got {}", saps.len())));
        }
        if !(1..=MAX_TARGETS).contains(&targets.len()) {
            return Err(Error::invalid(format!("scene needs 1..={MAX_TARGETS} targets, got {}", targets.len())));
        }
        if let Some(t) = targets.iter().find(|t| !room.contains_xy(t.center.xy(), 0.0)) {
            return Err(Error::invalid(format!("target center {:?} outside room", t.center)));
        }
        Ok(Self { room, saps, targets, seed })
    }

    pub fn generate(
        room: Room,
        n_saps: usize,
        mount_height: f64,
        n_targets: usize,
        model: &TargetModel,
        seed: u64,
    ) -> Result<Self> {
        let saps = place_saps(&room, n_saps, mount_height)?;
        let targets = spawn_targets(&room, n_targets, model, seed)?;
        Self::new(room, saps, targets, seed)
    }

    pub fn bounding_boxes(&self) -> Result<Vec<Aabb>> {
        self.targets.iter().map(target_bounding_box).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn four_saps_on_wall_midpoints() {
        let saps = place_saps(&Room::default(), 4, 1.5).unwrap();
        let expect = [
            (Vec3::new(0.0, 5.0, 1.5), Vec3::new(1.0, 0.0, 0.0)),
            (Vec3::new(10.0, 5.0, 1.5), Vec3::new(-1.0, 0.0, 0.0)),
            (Vec3::new(5.0, 0.0, 1.5), Vec3::new(0.0, 1.0, 0.0)),
            (Vec3::new(5.0, 10.0, 1.5), Vec3::new(0.0, -1.0, 0.0)),
        ];
        for (sap, (pos, bore)) in saps.iter().zip(expect) {
            assert_eq!(sap.position, pos);
            assert!(sap.boresight().distance(bore) < 1e-12);
        }
        // every boresight points at the room center
        for sap in &saps {
            let local = sap.to_local(Vec3::new(5.0, 5.0, 1.5));
            assert_abs_diff_eq!(local.x, 0.0, epsilon = 1e-12);
            assert_abs_diff_eq!(local.y, 5.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sap_count_bounds() {
        let room = Room::default();
        assert_eq!(place_saps(&room, 1, 1.5).unwrap()[0].position, Vec3::new(0.0, 5.0, 1.5));
        assert!(place_saps(&room, 5, 1.5).is_err());
        assert!(place_saps(&room, 0, 1.5).is_err());
    }

    #[test]
    fn spawn_is_deterministic() {
        let room = Room::default();
        let a = spawn_targets(&room, 1, &TargetModel::default(), 7).unwrap();
        let b = spawn_targets(&room, 1, &TargetModel::default(), 7).unwrap();
        assert_eq!(a, b);
        let c = spawn_targets(&room, 1, &TargetModel::default(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn spawn_rejects_zero_targets() {
        assert!(spawn_targets(&Room::default(), 0, &TargetModel::default(), 1).is_err());
    }

    #[test]
    fn rcs_sums_to_total() {
        let targets = spawn_targets(&Room::default(), 8, &TargetModel::default(), 3).unwrap();
        for t in &targets {
            assert_eq!(t.scatter_points.len(), 15);
            assert_abs_diff_eq!(t.total_rcs(), 1.0, epsilon = 1e-15);
            assert!(Room::default().contains_xy(t.center.xy(), 0.0));
            assert!(t.scatter_points.iter().all(|p| p.is_finite()));
        }
    }

    #[test]
    fn scatter_spread_matches_model() {
        // Sample-statistics oracle over 10^4 seeds of 8 targets each.
        let room = Room::default();
        let model = TargetModel::default();
        let mut sum = [0.0f64; 3];
        let mut sum_sq = [0.0f64; 3];
        let mut n = 0usize;
        for seed in 0..10_000u64 {
            for t in spawn_targets(&room, 8, &model, seed).unwrap() {
                for p in &t.scatter_points {
                    let d = *p - t.center;
                    for i in 0..3 {
                        sum[i] += d.axis(i);
                        sum_sq[i] += d.axis(i) * d.axis(i);
                    }
                    n += 1;
                }
            }
        }
        for i in 0..3 {
            let mean = sum[i] / n as f64;
            let std = (sum_sq[i] / n as f64 - mean * mean).sqrt();
            assert!((std - model.spread[i]).abs() < 0.05 * model.spread[i], "axis {i}: std {std}");
        }
    }

    #[test]
    fn bounding_box_cases() {
        let t = Target {
            center: Vec3::default(),
            scatter_points: vec![Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 2.0, 3.0)],
            per_point_rcs: 0.5,
        };
        let b = target_bounding_box(&t).unwrap();
        assert_eq!(b.min, Vec3::new(0.0, 0.0, 0.0));
        assert_eq!(b.max, Vec3::new(1.0, 2.0, 3.0));

        let p = Vec3::new(1.5, -2.0, 0.25);
        let single = Target { center: p, scatter_points: vec![p], per_point_rcs: 1.0 };
        let b = target_bounding_box(&single).unwrap();
        assert_eq!((b.min, b.max), (p, p));

        let empty = Target { center: p, scatter_points: vec![], per_point_rcs: 1.0 };
        assert!(target_bounding_box(&empty).is_err());
    }

    #[test]
    fn bounding_box_matches_scan() {
        for t in spawn_targets(&Room::default(), 9, &TargetModel::default(), 11).unwrap() {
            let b = target_bounding_box(&t).unwrap();
            for axis in 0..3 {
                let lo = t.scatter_points.iter().map(|p| p.axis(axis)).fold(f64::INFINITY, f64::min);
                let hi = t.scatter_points.iter().map(|p| p.axis(axis)).fold(f64::NEG_INFINITY, f64::max);
                assert_eq!(b.min.axis(axis), lo);
                assert_eq!(b.max.axis(axis), hi);
            }
        }
    }

    #[test]
    fn scene_validation() {
        let room = Room::default();
        let model = TargetModel::default();
        let scene = Scene::generate(room, 4, 1.5, 8, &model, 99).unwrap();
        assert_eq!(scene, Scene::generate(room, 4, 1.5, 8, &model, 99).unwrap());
        assert!(Scene::generate(room, 4, 1.5, 10, &model, 99).is_err());
        assert!(Room::new(0.0, 1.0, 1.0).is_err());
        let json = scene.to_json().unwrap();
        let back: Scene = serde_json::from_str(&json).unwrap();
        assert_eq!(back, scene);
    }
}
