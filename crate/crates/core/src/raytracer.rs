//! Free-space propagation paths between a SAP and every scatter point, and
//! synthesis of the bandwidth-limited channel transfer function (CTF).

use std::f64::consts::{PI, TAU};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::geometry::{Aabb, Vec3};
use crate::scenario::{Scene, SapPose};
use crate::{db_to_lin, Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    /// Boresight gain of a single TX patch element.
    pub tx_element_gain_dbi: f64,
    /// Boresight gain of a single RX patch element.
    pub rx_element_gain_dbi: f64,
    pub noise_figure_db: f64,
    pub carrier_hz: f64,
    pub pathloss_exponent: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power_dbm: 30.0,
            tx_element_gain_dbi: 5.0,
            rx_element_gain_dbi: 5.0,
            noise_figure_db: 8.0,
            carrier_hz: 26e9,
            pathloss_exponent: 2.0,
        }
    }
}

impl LinkBudget {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.carrier_hz > 0.0) || !(self.pathloss_exponent > 0.0) {
            return Err(Error::Config(format!("invalid link budget {self:?}")));
        }
        Ok(())
    }
}

/// Patch element power gain, `g_max * cos^2(az) * cos^2(el)`, zero behind the wall.
pub fn patch_gain(g_max_dbi: f64, azimuth: f64, elevation: f64) -> f64 {
    if azimuth.abs() >= PI / 2.0 || elevation.abs() >= PI / 2.0 {
        return 0.0;
    }
    db_to_lin(g_max_dbi) * azimuth.cos().powi(2) * elevation.cos().powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Path {
    pub target: usize,
    pub point: usize,
    /// TX -> scatterer -> RX length, twice the scatterer distance.
    pub roundtrip_length: f64,
    /// Angle of arrival on the ULA: `sin(theta)` is the direction cosine along the array axis.
    pub azimuth: f64,
    /// Horizontal azimuth and elevation used for the element pattern.
    pub pattern_azimuth: f64,
    pub elevation: f64,
    pub rcs: f64,
    pub coefficient: Complex64,
    pub occluded: bool,
}

impl Path {
    pub fn delay(&self) -> f64 {
        self.roundtrip_length / SPEED_OF_LIGHT
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    pub sap_id: usize,
    pub paths: Vec<Path>,
}

impl PathSet {
    pub fn visible(&self) -> impl Iterator<Item = &Path> {
        self.paths.iter().filter(|p| !p.occluded)
    }

    /// True if every path of `target` is occluded.
    pub fn target_fully_occluded(&self, target: usize) -> bool {
        let mut any = false;
        for p in self.paths.iter().filter(|p| p.target == target) {
            if !p.occluded {
                return false;
            }
            any = true;
        }
        any
    }
}

/// Closed segment against closed box, slab method.
pub fn segment_intersects_aabb(a: Vec3, b: Vec3, bx: &Aabb) -> bool {
    let d = b - a;
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for i in 0..3 {
        let (o, v, lo, hi) = (a.axis(i), d.axis(i), bx.min.axis(i), bx.max.axis(i));
        if v == 0.0 {
            if o < lo || o > hi {
                return false;
            }
            continue;
        }
        let (mut ta, mut tb) = ((lo - o) / v, (hi - o) / v);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        t0 = t0.max(ta);
        t1 = t1.min(tb);
        if t0 > t1 {
            return false;
        }
    }
    true
}

/// Complex amplitude of a visible path per unit transmit symbol amplitude.
///
/// `|alpha|^2 = G_tx G_rx lambda^2 sigma / ((4 pi)^3 R^(2 eta))` with `R = l / 2`, and the
/// phase is the carrier delay `-2 pi f_c l / c`.
pub fn path_coefficient(path: &Path, lb: &LinkBudget, rcs: f64) -> Result<Complex64> {
    if path.occluded {
        return Err(Error::ContractViolation(format!(
            "coefficient requested for occluded path (target {}, point {})",
            path.target, path.point
        )));
    }
    let g_tx = patch_gain(lb.tx_element_gain_dbi, path.pattern_azimuth, path.elevation);
    let g_rx = patch_gain(lb.rx_element_gain_dbi, path.pattern_azimuth, path.elevation);
    let lambda = lb.wavelength();
    let range = path.roundtrip_length / 2.0;
    let power = g_tx * g_rx * lambda * lambda * rcs
        / ((4.0 * PI).powi(3) * range.powf(2.0 * lb.pathloss_exponent));
    let cycles = (lb.carrier_hz * path.roundtrip_length / SPEED_OF_LIGHT).fract();
    Ok(Complex64::from_polar(power.sqrt(), -TAU * cycles))
}

/// Traces one path per scatter point of every target as seen from `sap`.
///
/// A path is occluded when the SAP-to-scatterer segment crosses the bounding
/// box of any other target. Occluded paths keep a zero coefficient.
pub fn trace_paths(scene: &Scene, sap: &SapPose, lb: &LinkBudget) -> Result<PathSet> {
    let boxes = scene.bounding_boxes()?;
    let mut paths = Vec::with_capacity(scene.targets.iter().map(|t| t.scatter_points.len()).sum());
    for (ti, target) in scene.targets.iter().enumerate() {
        for (pi, &p) in target.scatter_points.iter().enumerate() {
            let local = sap.to_local(p);
            let dist = local.norm();
            let horizontal = local.x.hypot(local.y);
            let occluded = boxes
                .iter()
                .enumerate()
                .any(|(bi, bx)| bi != ti && segment_intersects_aabb(sap.position, p, bx));
            let mut path = Path {
                target: ti,
                point: pi,
                roundtrip_length: 2.0 * dist,
                azimuth: (local.x / dist).clamp(-1.0, 1.0).asin(),
                pattern_azimuth: local.x.atan2(local.y),
                elevation: local.z.atan2(horizontal),
                rcs: target.per_point_rcs,
                coefficient: Complex64::new(0.0, 0.0),
                occluded,
            };
            if !occluded {
                path.coefficient = path_coefficient(&path, lb, target.per_point_rcs)?;
            }
            paths.push(path);
        }
    }
    Ok(PathSet { sap_id: sap.id, paths })
}

/// Channel transfer function, `n_sub x n_ant`, subcarrier-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Ctf {
    pub values: Array2<Complex64>,
    pub subcarrier_spacing: f64,
    pub element_spacing: f64,
    pub carrier_hz: f64,
}

impl Ctf {
    pub fn n_sub(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_ant(&self) -> usize {
        self.values.ncols()
    }
}

/// Array geometry and numerology needed to synthesize a CTF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CtfLayout {
    pub n_sub: usize,
    pub n_ant: usize,
    pub subcarrier_spacing: f64,
    pub element_spacing: f64,
    pub carrier_hz: f64,
}

// Resynchronize the subcarrier phasor recursion this often to bound rounding drift.
const RESYNC: usize = 128;

/// Superposition of all visible paths:
/// `h[n,k] = sum_p alpha_p exp(j 2 pi (-n df tau_p + d k f_c / c sin(theta_p)))`.
pub fn build_ctf(paths: &PathSet, layout: &CtfLayout) -> Ctf {
    let CtfLayout { n_sub, n_ant, subcarrier_spacing, element_spacing, carrier_hz } = *layout;
    let mut h = Array2::<Complex64>::zeros((n_sub, n_ant));
    let mut steer = vec![Complex64::new(0.0, 0.0); n_ant];
    for path in paths.visible() {
        if path.coefficient == Complex64::new(0.0, 0.0) {
            continue;
        }
        let spatial = element_spacing * carrier_hz / SPEED_OF_LIGHT * path.azimuth.sin();
        for (k, s) in steer.iter_mut().enumerate() {
            *s = path.coefficient * Complex64::cis(TAU * (k as f64 * spatial).fract());
        }
        let cycles_per_sub = subcarrier_spacing * path.delay();
        let step = Complex64::cis(-TAU * cycles_per_sub.fract());
        let mut phasor = Complex64::new(1.0, 0.0);
        for (n, mut row) in h.outer_iter_mut().enumerate() {
            if n % RESYNC == 0 {
                phasor = Complex64::cis(-TAU * (n as f64 * cycles_per_sub).fract());
            }
            for (hk, s) in row.iter_mut().zip(&steer) {
                *hk += phasor * s;
            }
            phasor *= step;
        }
    }
    Ctf { values: h, subcarrier_spacing, element_spacing, carrier_hz }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{place_saps, Room, Target};
    use approx::assert_relative_eq;

    fn unit_box() -> Aabb {
        Aabb { min: Vec3::new(-1.0, -1.0, -1.0), max: Vec3::new(1.0, 1.0, 1.0) }
    }

    #[test]
    fn segment_box_basic() {
        let b = unit_box();
        assert!(segment_intersects_aabb(Vec3::new(-3.0, 0.0, 0.0), Vec3::new(3.0, 0.0, 0.0), &b));
        assert!(!segment_intersects_aabb(Vec3::new(-3.0, 2.0, 0.0), Vec3::new(3.0, 2.0, 0.0), &b));
        // stops short of the box
        assert!(!segment_intersects_aabb(Vec3::new(-3.0, 0.0, 0.0), Vec3::new(-1.5, 0.0, 0.0), &b));
        // touching a face counts (closed)
        assert!(segment_intersects_aabb(Vec3::new(-3.0, 1.0, 0.0), Vec3::new(3.0, 1.0, 0.0), &b));
        // degenerate segment inside
        assert!(segment_intersects_aabb(Vec3::new(0.5, 0.5, 0.5), Vec3::new(0.5, 0.5, 0.5), &b));
    }

    #[test]
    fn segment_box_matches_sampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let mut checked = 0;
        for _ in 0..1000 {
            let mut v = || Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            let (a, b, c0, c1) = (v(), v(), v(), v());
            let bx = Aabb {
                min: Vec3::new(c0.x.min(c1.x), c0.y.min(c1.y), c0.z.min(c1.z)),
                max: Vec3::new(c0.x.max(c1.x), c0.y.max(c1.y), c0.z.max(c1.z)),
            };
            let sampled = (0..=10_000).any(|i| bx.contains(a + (b - a) * (i as f64 / 10_000.0)));
            let exact = segment_intersects_aabb(a, b, &bx);
            // sampling can only miss grazing hits
            if sampled {
                assert!(exact);
            }
            if exact && !sampled {
                continue;
            }
            assert_eq!(exact, sampled);
            assert_eq!(exact, segment_intersects_aabb(b, a, &bx));
            checked += 1;
        }
        assert!(checked > 990);
    }

    fn point_target(p: Vec3, rcs: f64) -> Target {
        Target { center: p, scatter_points: vec![p], per_point_rcs: rcs }
    }

    fn scene_with(targets: Vec<Target>) -> Scene {
        let room = Room::default();
        Scene::new(room, place_saps(&room, 1, 1.5).unwrap(), targets, 0).unwrap()
    }

    #[test]
    fn collinear_target_occludes() {
        // SAP 0 sits at (0, 5, 1.5) looking along +x.
        let blocker = Target {
            center: Vec3::new(3.0, 5.0, 1.5),
            scatter_points: vec![Vec3::new(2.9, 4.9, 0.5), Vec3::new(3.1, 5.1, 2.5)],
            per_point_rcs: 0.5,
        };
        let hidden = point_target(Vec3::new(6.0, 5.0, 1.5), 1.0);
        let scene = scene_with(vec![hidden, blocker]);
        let set = trace_paths(&scene, &scene.saps[0], &LinkBudget::default()).unwrap();
        assert!(set.target_fully_occluded(0));
        assert!(!set.target_fully_occluded(1));
        assert!(set.paths.iter().filter(|p| p.occluded).all(|p| p.coefficient == Complex64::new(0.0, 0.0)));

        let alone = scene_with(vec![point_target(Vec3::new(6.0, 5.0, 1.5), 1.0)]);
        let set = trace_paths(&alone, &alone.saps[0], &LinkBudget::default()).unwrap();
        assert!(set.paths.iter().all(|p| !p.occluded));
    }

    #[test]
    fn r4_law_and_boresight_gain() {
        let lb = LinkBudget::default();
        let near = scene_with(vec![point_target(Vec3::new(2.0, 5.0, 1.5), 1.0)]);
        let far = scene_with(vec![point_target(Vec3::new(4.0, 5.0, 1.5), 1.0)]);
        let a = trace_paths(&near, &near.saps[0], &lb).unwrap().paths[0];
        let b = trace_paths(&far, &far.saps[0], &lb).unwrap().paths[0];
        let drop_db = 10.0 * (a.coefficient.norm_sqr() / b.coefficient.norm_sqr()).log10();
        assert_relative_eq!(drop_db, 40.0 * 2f64.log10(), epsilon = 1e-9);
        assert_relative_eq!(drop_db, 12.041, epsilon = 1e-3);

        // boresight: full element gain at TX and RX
        let lambda = lb.wavelength();
        let expect = db_to_lin(10.0) * lambda * lambda / ((4.0 * PI).powi(3) * 2f64.powi(4));
        assert_relative_eq!(a.coefficient.norm_sqr(), expect, max_relative = 1e-12);
        assert_eq!(patch_gain(5.0, 0.0, 0.0), db_to_lin(5.0));
        assert!(patch_gain(5.0, 0.3, 0.0) < patch_gain(5.0, 0.0, 0.0));
        assert_eq!(patch_gain(5.0, PI / 2.0, 0.0), 0.0);
    }

    #[test]
    fn integer_carrier_cycles_give_zero_phase() {
        let lb = LinkBudget::default();
        let cycles = 1000.0;
        let l = cycles * SPEED_OF_LIGHT / lb.carrier_hz;
        let path = Path {
            target: 0,
            point: 0,
            roundtrip_length: l,
            azimuth: 0.0,
            pattern_azimuth: 0.0,
            elevation: 0.0,
            rcs: 1.0,
            coefficient: Complex64::new(0.0, 0.0),
            occluded: false,
        };
        let alpha = path_coefficient(&path, &lb, 1.0).unwrap();
        assert!(alpha.arg().abs() < 1e-6, "phase {}", alpha.arg());
        let occluded = Path { occluded: true, ..path };
        assert!(matches!(path_coefficient(&occluded, &lb, 1.0), Err(Error::ContractViolation(_))));
    }

    fn layout(n_sub: usize, n_ant: usize) -> CtfLayout {
        let fc = 26e9;
        CtfLayout {
            n_sub,
            n_ant,
            subcarrier_spacing: 800e6 / 2984.0,
            element_spacing: SPEED_OF_LIGHT / fc / 2.0,
            carrier_hz: fc,
        }
    }

    fn single_path(alpha: Complex64, l: f64, theta: f64) -> PathSet {
        PathSet {
            sap_id: 0,
            paths: vec![Path {
                target: 0,
                point: 0,
                roundtrip_length: l,
                azimuth: theta,
                pattern_azimuth: theta,
                elevation: 0.0,
                rcs: 1.0,
                coefficient: alpha,
                occluded: false,
            }],
        }
    }

    #[test]
    fn ctf_trivial_cases() {
        let empty = PathSet { sap_id: 0, paths: vec![] };
        let h = build_ctf(&empty, &layout(16, 4));
        assert!(h.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)));

        let alpha = Complex64::new(0.3, -0.4);
        let h = build_ctf(&single_path(alpha, 7.3, 0.2), &layout(300, 8));
        assert!((h.values[[0, 0]] - alpha).norm() < 1e-15);

        let h = build_ctf(&single_path(alpha, 7.3, 0.0), &layout(300, 8));
        for v in h.values.iter() {
            assert_relative_eq!(v.norm(), alpha.norm(), max_relative = 1e-12);
        }
        let energy: f64 = h.values.iter().map(|v| v.norm_sqr()).sum();
        assert_relative_eq!(energy, 300.0 * 8.0 * alpha.norm_sqr(), max_relative = 1e-12);
    }

    #[test]
    fn ctf_matches_direct_formula() {
        let alpha = Complex64::new(1e-4, 2e-4);
        let (l, theta) = (13.37, -0.7);
        let lay = layout(1000, 8);
        let h = build_ctf(&single_path(alpha, l, theta), &lay);
        let tau = l / SPEED_OF_LIGHT;
        for &(n, k) in &[(0usize, 0usize), (1, 3), (127, 7), (128, 2), (999, 5)] {
            let phase = TAU
                * (-(n as f64) * lay.subcarrier_spacing * tau
                    + lay.element_spacing * k as f64 * lay.carrier_hz / SPEED_OF_LIGHT * theta.sin());
            let expect = alpha * Complex64::cis(phase);
            assert!((h.values[[n, k]] - expect).norm() < 1e-12 * alpha.norm(), "({n},{k})");
        }
    }
}
