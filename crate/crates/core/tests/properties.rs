use msense_core::evaluation::{match_detections, wilson_interval, Z95};
use msense_core::extraction::{cfar_threshold, extract_peaks, CfarSpec, PeakReport};
use msense_core::fusion::{cluster, from_global, fuse, to_global, FusionConfig};
use msense_core::harness::SimConfig;
use msense_core::ofdm::{apply_channel_and_noise, equalize, generate_symbols};
use msense_core::periodogram::compute_periodogram;
use msense_core::raytracer::{build_ctf, Path, PathSet};
use msense_core::scenario::{place_saps, spawn_targets, Room, TargetModel};
use num_complex::Complex64;
use proptest::prelude::*;

fn point() -> impl Strategy<Value = [f64; 2]> {
    (0.0..10.0f64, 0.0..10.0f64).prop_map(|(x, y)| [x, y])
}

/// Connected components by repeated relaxation of a label vector.
fn components_oracle(points: &[[f64; 2]], eps: f64) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for i in 0..n {
            for j in 0..n {
                let d = (points[i][0] - points[j][0]).hypot(points[i][1] - points[j][1]);
                if d <= eps && label[j] < label[i] {
                    label[i] = label[j];
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in 0..n {
        match groups.iter_mut().find(|g| label[g[0]] == label[i]) {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

fn peak(sap_id: usize, l: f64, az: f64, power_dbm: f64) -> PeakReport {
    PeakReport {
        sap_id,
        roundtrip_length: l,
        azimuth: az,
        power_dbm,
        bin: (0, 0),
        fractional_bin: (0.0, 0.0),
        cancel_radii: (1, 1),
        noise_power_dbm: -80.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cluster_matches_connected_components(points in prop::collection::vec(point(), 0..60), eps in 0.05..1.5f64) {
        prop_assert_eq!(cluster(&points, eps).unwrap(), components_oracle(&points, eps));
    }

    #[test]
    fn global_round_trip(l in 0.2..30.0f64, az in -1.5..1.5f64, sap in 0usize..4) {
        let pose = place_saps(&Room::default(), 4, 1.5).unwrap()[sap];
        let g = to_global(&peak(sap, l, az, 0.0), &pose);
        let (l2, az2) = from_global(g, &pose);
        prop_assert!((l2 - l).abs() < 1e-9);
        prop_assert!((az2 - az).abs() < 1e-9);
    }

    #[test]
    fn fusion_ignores_report_order(
        reports in prop::collection::vec((0usize..4, 1.0..16.0f64, -1.2..1.2f64, -90.0..-40.0f64), 1..25),
        rotate in 0usize..25,
    ) {
        let saps = place_saps(&Room::default(), 4, 1.5).unwrap();
        let build = |rs: &[(usize, f64, f64, f64)]| -> Vec<_> {
            saps.iter()
                .map(|pose| (*pose, rs.iter().filter(|r| r.0 == pose.id).map(|r| peak(r.0, r.1, r.2, r.3)).collect()))
                .collect()
        };
        let mut shuffled = reports.clone();
        shuffled.rotate_left(rotate % reports.len());
        shuffled.reverse();
        let mut cfg = FusionConfig::new(0.1874, Room::default());
        for multinode in [false, true] {
            cfg.require_multinode = multinode;
            let a = fuse(&build(&reports), &cfg).unwrap();
            let b = fuse(&build(&shuffled), &cfg).unwrap();
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x.position[0] - y.position[0]).abs() < 1e-9);
                prop_assert!((x.position[1] - y.position[1]).abs() < 1e-9);
                prop_assert_eq!(&x.sources, &y.sources);
                prop_assert_eq!(x.members, y.members);
                prop_assert!(!multinode || x.sources.len() >= 2);
            }
        }
    }

    /// With truths more than 2r apart every estimate can reach at most one
    /// truth, so the greedy matching is optimal and easy to count directly.
    #[test]
    fn matching_on_separated_truths(
        cells in prop::collection::btree_set((0u8..4, 0u8..4), 1..8),
        estimates in prop::collection::vec(point(), 0..12),
    ) {
        let r = 1.0;
        let truths: Vec<[f64; 2]> = cells.iter().map(|&(i, j)| [1.0 + 2.5 * i as f64, 1.0 + 2.5 * j as f64]).collect();
        let m = match_detections(&estimates, &truths, r).unwrap();
        let reachable = truths.iter()
            .filter(|t| estimates.iter().any(|e| (e[0] - t[0]).hypot(e[1] - t[1]) <= r))
            .count();
        prop_assert_eq!(m.pairs.len(), reachable);
        let c = m.counts();
        prop_assert_eq!(c.positives as usize, truths.len());
        prop_assert_eq!(c.detections as usize, estimates.len());
        prop_assert!(m.pairs.iter().all(|p| p.distance <= r));
    }

    #[test]
    fn wilson_contains_estimate(trials in 1u64..5000, frac in 0.0..=1.0f64) {
        let s = ((trials as f64) * frac).round() as u64;
        let (lo, hi) = wilson_interval(s, trials, Z95);
        let p = s as f64 / trials as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }

    #[test]
    fn cfar_threshold_falls_with_p_fa(a in 1e-6..0.5f64, b in 1e-6..0.5f64, n in 1usize..4096, k in 1usize..64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(hi - lo > 1e-9);
        prop_assert!(cfar_threshold(1.0, lo, n, k).unwrap() >= cfar_threshold(1.0, hi, n, k).unwrap());
    }

    #[test]
    fn spawned_scene_respects_room_and_rcs(side in 3.0..30.0f64, n in 1usize..=9, seed in any::<u64>()) {
        let room = Room::square(side, 3.0).unwrap();
        let targets = spawn_targets(&room, n, &TargetModel::default(), seed).unwrap();
        prop_assert_eq!(targets.len(), n);
        for t in &targets {
            prop_assert!(room.contains_xy(t.center.xy(), 0.0));
            prop_assert!((t.total_rcs() - 1.0).abs() < 1e-12);
            prop_assert!(t.scatter_points.iter().all(|p| p.is_finite()));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    /// The cancellation sequence does not depend on the threshold, so a
    /// stricter false-alarm rate can only truncate the peak list.
    #[test]
    fn stricter_threshold_yields_prefix(
        targets in prop::collection::vec((2.0..14.0f64, -1.0..1.0f64, 0.1..1.0f64), 1..5),
        seed in any::<u64>(),
    ) {
        let mut cfg = SimConfig::default();
        cfg.radio.n_sub = 256;
        cfg.radio.n_ant = 8;
        cfg.radio.bandwidth_hz = 256.0 * 800e6 / 2984.0;
        let layout = cfg.ctf_layout();
        let paths = targets.iter().enumerate().map(|(i, &(l, az, a))| Path {
            target: i,
            point: 0,
            roundtrip_length: l,
            azimuth: az,
            pattern_azimuth: az,
            elevation: 0.0,
            rcs: 1.0,
            coefficient: Complex64::new(a, 0.0),
            occluded: false,
        }).collect();
        let h = build_ctf(&PathSet { sap_id: 0, paths }, &layout);
        let ofdm = cfg.ofdm();
        let sigma2 = 1e-3 * ofdm.symbol_power();
        let x = generate_symbols(ofdm.n_sub, ofdm.symbol_power(), seed).unwrap();
        let y = apply_channel_and_noise(&h, &x, sigma2, seed ^ 1).unwrap();
        let est = equalize(&y, &x, sigma2).unwrap();
        let p = compute_periodogram(&est, &(&h).into(), &cfg.processing.window, &cfg.processing.padding).unwrap();
        let mut previous: Option<Vec<PeakReport>> = None;
        for p_fa in [0.3, 0.01, 1e-4, 1e-8] {
            let peaks = extract_peaks(&p, &CfarSpec { p_fa, kappa: 1.0, sidelobe_db: 60.0 }, p.noise_floor, 0).unwrap();
            if let Some(prev) = &previous {
                prop_assert!(peaks.len() <= prev.len());
                prop_assert_eq!(&peaks[..], &prev[..peaks.len()]);
            }
            previous = Some(peaks);
        }
    }
}
