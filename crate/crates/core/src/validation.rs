//! Self-checks run by `msense validate`: calibration, noise statistics and
//! end-to-end sanity of the configured pipeline.

use serde::Serialize;

use crate::extraction::cfar_threshold;
use crate::harness::{run_drop, thermal_operating_point, SimConfig};
use crate::ofdm::{apply_channel_and_noise, equalize, generate_symbols, NoiseSpec};
use crate::periodogram::{chebyshev_window, compute_periodogram, Padding, WindowSpec};
use crate::raytracer::{build_ctf, PathSet};
use crate::rng::child_seed;
use crate::scenario::TargetModel;
use crate::Result;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }
}

fn thermal_floor() -> Result<Check> {
    let p = thermal_operating_point(800e6, 0.0)?;
    Ok(Check::new("thermal_floor_800mhz", (p - -84.969).abs() < 0.01, format!("{p:.3} dBm")))
}

fn chebyshev_sidelobes() -> Result<Check> {
    let w = chebyshev_window(64, 30.0)?;
    let len = 64 * 64;
    let resp: Vec<f64> = (0..len)
        .map(|i| {
            let f = i as f64 / len as f64;
            let (re, im) = w.iter().enumerate().fold((0.0, 0.0), |(re, im), (n, &wn)| {
                let ph = -std::f64::consts::TAU * f * n as f64;
                (re + wn * ph.cos(), im + wn * ph.sin())
            });
            re.hypot(im)
        })
        .collect();
    let peak = resp[0];
    let first_null = (1..len / 2).find(|&i| resp[i + 1] > resp[i]).unwrap_or(len / 2);
    let side = resp[first_null..len - first_null].iter().cloned().fold(0.0, f64::max);
    let db = 20.0 * (side / peak).log10();
    Ok(Check::new("chebyshev_sidelobes", (db + 30.0).abs() < 0.5, format!("{db:.2} dB")))
}

fn calibration_round_trip(cfg: &SimConfig) -> Result<Check> {
    let est = noise_map_ctf(cfg, 1.0, 0)?;
    let p = compute_periodogram(&est, &cfg.ctf_geometry(), &cfg.processing.window, &cfg.processing.padding)?;
    let cal = p.calibration;
    let mut worst: f64 = 0.0;
    for &(l, az) in &[(2.0, 0.0), (7.5, 0.4), (13.0, -0.9), (20.0, 1.2)] {
        let (n, k) = cal.physical_to_bin(l, az);
        let back = cal.bin_to_physical(n, k);
        let az_back = back.azimuth().unwrap_or(f64::NAN);
        worst = worst.max((back.roundtrip_length - l).abs()).max((az_back - az).abs());
    }
    Ok(Check::new("calibration_round_trip", worst < 1e-9, format!("max error {worst:.2e}")))
}

fn noise_map_ctf(cfg: &SimConfig, sigma2: f64, seed: u64) -> Result<crate::ofdm::EstimatedCtf> {
    let ofdm = cfg.ofdm();
    let layout = cfg.ctf_layout();
    let h = build_ctf(&PathSet { sap_id: 0, paths: Vec::new() }, &layout);
    let x = generate_symbols(ofdm.n_sub, ofdm.symbol_power(), child_seed(seed, 0))?;
    let y = apply_channel_and_noise(&h, &x, sigma2, child_seed(seed, 1))?;
    equalize(&y, &x, sigma2)
}

/// Mean of a noise-only map against the analytic floor, and the false-alarm
/// rate of the CFAR threshold on small unpadded rectangular maps.
fn noise_statistics(cfg: &SimConfig, seed: u64) -> Result<Vec<Check>> {
    // Mean over maps against the analytic floor. A long Chebyshev window puts
    // most of its energy in the two end samples, so the tolerance follows the
    // standard deviation of the map mean, `sqrt(sum w^4) / sum w^2` per axis.
    let seeds = 100;
    let sigma2 = cfg.noise().per_sample_variance(cfg.radio.n_sub).max(1e-30);
    let mut ratio = 0.0;
    for s in 0..seeds {
        let est = noise_map_ctf(cfg, sigma2, child_seed(seed, s))?;
        let p = compute_periodogram(&est, &cfg.ctf_geometry(), &cfg.processing.window, &cfg.processing.padding)?;
        ratio += p.values.mean().unwrap_or(0.0) / p.noise_floor / seeds as f64;
    }
    let spread = |len: usize| -> Result<f64> {
        let w = cfg.processing.window.weights(len)?;
        let s2: f64 = w.iter().map(|v| v * v).sum();
        Ok(w.iter().map(|v| v.powi(4)).sum::<f64>().sqrt() / s2)
    };
    let sd = spread(cfg.radio.n_sub)? * spread(cfg.radio.n_ant)? / (seeds as f64).sqrt();
    let tol = (4.0 * sd).max(0.02);
    let floor = Check::new(
        "noise_floor",
        (ratio - 1.0).abs() < tol,
        format!("mean/analytic = {ratio:.4} over {seeds} maps (tolerance {tol:.3})"),
    );

    let mut small = cfg.clone();
    small.radio.n_sub = 64;
    small.radio.n_ant = 8;
    let trials = 2000;
    let p_fa = cfg.processing.cfar.p_fa;
    let mut alarms = 0;
    for t in 0..trials {
        let est = noise_map_ctf(&small, 1.0, child_seed(seed, 100 + t))?;
        let p = compute_periodogram(&est, &small.ctf_geometry(), &WindowSpec::RECTANGULAR, &Padding::NONE)?;
        let zeta = cfar_threshold(p.noise_floor, p_fa, 64, 8)?;
        if p.values.iter().any(|&v| v.sqrt() > zeta) {
            alarms += 1;
        }
    }
    let rate = alarms as f64 / trials as f64;
    let sd = (p_fa * (1.0 - p_fa) / trials as f64).sqrt();
    let cfar = Check::new(
        "cfar_false_alarm_rate",
        (rate - p_fa).abs() <= 4.0 * sd + 1e-12,
        format!("{rate:.4} vs {p_fa} over {trials} maps"),
    );
    Ok(vec![floor, cfar])
}

fn noiseless_drops(cfg: &SimConfig, seed: u64, drops: usize) -> Result<Vec<Check>> {
    let mut ideal = cfg.clone();
    ideal.radio.noise_power_dbm = Some(NoiseSpec::NONE.power_dbm);
    ideal.scene.n_saps = 1;
    ideal.scene.min_targets = 1;
    ideal.scene.max_targets = 1;
    ideal.scene.target = TargetModel { center_height: cfg.scene.target.center_height, ..TargetModel::impulsive() };
    let (mut detected, mut deterministic) = (0, 0);
    for i in 0..drops {
        let s = child_seed(seed, i as u64);
        let a = run_drop(&ideal, s)?;
        let b = run_drop(&ideal, s)?;
        if a.metrics.p_det == 1.0 && a.metrics.precision == 1.0 {
            detected += 1;
        }
        if a.same_outcome(&b) {
            deterministic += 1;
        }
    }
    Ok(vec![
        Check::new("noiseless_single_target", detected == drops, format!("{detected}/{drops} drops exact")),
        Check::new("drop_determinism", deterministic == drops, format!("{deterministic}/{drops} drops repeatable")),
    ])
}

/// Runs every check against `cfg`.
pub fn run_checks(cfg: &SimConfig, seed: u64, drops: usize) -> Result<Vec<Check>> {
    cfg.validate()?;
    let mut checks = vec![thermal_floor()?, chebyshev_sidelobes()?, calibration_round_trip(cfg)?];
    checks.extend(noise_statistics(cfg, seed)?);
    checks.extend(noiseless_drops(cfg, seed, drops.max(1))?);
    Ok(checks)
}
