//! Per-SAP detector: CFAR threshold with a sidelobe guard, binary successive
//! cancellation and quadratic peak interpolation.

use std::io::{BufRead, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::periodogram::{Calibration, Periodogram};
use crate::{watts_to_dbm, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfarSpec {
    /// Probability that a target-less map produces at least one detection.
    pub p_fa: f64,
    /// Margin over the expected sidelobe level of the strongest peak (amplitude).
    pub kappa: f64,
    /// Sidelobe attenuation of the window used for the periodogram, dB.
    pub sidelobe_db: f64,
}

impl Default for CfarSpec {
    fn default() -> Self {
        Self { p_fa: 1e-2, kappa: 4.0, sidelobe_db: 30.0 }
    }
}

impl CfarSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::invalid(format!("P_FA must lie in (0, 1), got {}", self.p_fa)));
        }
        if !(self.kappa >= 1.0) {
            return Err(Error::invalid(format!("kappa must be >= 1, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// What a SAP reports to the fusion center for one extracted peak.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub sap_id: usize,
    pub roundtrip_length: f64,
    pub azimuth: f64,
    /// Interpolated peak power as received echo power.
    pub power_dbm: f64,
    pub bin: (usize, usize),
    /// Interpolated position in padded bins, angle bin wrapped to `[-K'/2, K'/2)`.
    pub fractional_bin: (f64, f64),
    pub cancel_radii: (usize, usize),
    /// `-inf` (serialized as `null`) for a noiseless receiver.
    #[serde(with = "crate::serde_dbm")]
    pub noise_power_dbm: f64,
}

/// Amplitude threshold for which a noise-only map of `n_sub * n_ant`
/// independent exponential bins with mean `noise_floor` exceeds it somewhere
/// with probability `p_fa`:
/// `sqrt(-P_N ln(1 - (1 - P_FA)^(1 / (N_sub K))))`.
pub fn cfar_threshold(noise_floor: f64, p_fa: f64, n_sub: usize, n_ant: usize) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::invalid(format!("P_FA must lie in (0, 1), got {p_fa}")));
    }
    let cells = (n_sub * n_ant) as f64;
    // 1 - (1 - p)^(1/M), evaluated without cancellation
    let per_cell = -((-p_fa).ln_1p() / cells).exp_m1();
    Ok((-noise_floor * per_cell.ln()).sqrt())
}

/// `max(zeta_cfar, kappa * zeta_sl)` with `zeta_sl` the strongest peak's
/// amplitude lowered by the window sidelobe attenuation.
pub fn effective_threshold(zeta_cfar: f64, max_peak_amplitude: f64, kappa: f64, sidelobe_db: f64) -> f64 {
    let sidelobe = max_peak_amplitude * 10f64.powf(-sidelobe_db / 20.0);
    zeta_cfar.max(kappa * sidelobe)
}

/// Result of quadratic interpolation around a peak bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interpolated {
    /// Fractional offsets `(range, angle)` in padded bins, each in `[-0.5, 0.5]`.
    pub offset: (f64, f64),
    /// Refined peak power in the units of the map.
    pub power: f64,
}

/// Vertex of the parabola through `(l, c, r)` in dB: `(offset, value correction)`.
pub fn parabolic_vertex(l: f64, c: f64, r: f64) -> (f64, f64) {
    let curvature = l - 2.0 * c + r;
    if !(curvature < 0.0) || !l.is_finite() || !r.is_finite() {
        return (0.0, 0.0);
    }
    let delta = ((l - r) / (2.0 * curvature)).clamp(-0.5, 0.5);
    (delta, -(l - r) * delta / 4.0)
}

/// Per-axis three-point parabola on dB power. The angle axis wraps; range
/// bins on the map edge are not interpolated.
pub fn interpolate_peak(values: &Array2<f64>, bin: (usize, usize)) -> Interpolated {
    let (rows, cols) = values.dim();
    let (n, k) = bin;
    let db = |v: f64| if v > 0.0 { 10.0 * v.log10() } else { f64::NEG_INFINITY };
    let c = values[[n, k]];
    if !(c > 0.0) {
        return Interpolated { offset: (0.0, 0.0), power: c };
    }
    let c_db = db(c);
    let (dn, gain_n) = if n > 0 && n + 1 < rows {
        parabolic_vertex(db(values[[n - 1, k]]), c_db, db(values[[n + 1, k]]))
    } else {
        (0.0, 0.0)
    };
    let (dk, gain_k) = if cols >= 3 {
        parabolic_vertex(db(values[[n, (k + cols - 1) % cols]]), c_db, db(values[[n, (k + 1) % cols]]))
    } else {
        (0.0, 0.0)
    };
    Interpolated { offset: (dn, dk), power: 10f64.powf((c_db + gain_n + gain_k) / 10.0) }
}

// Longest profile walk, in multiples of the mainlobe half-width.
const MAX_EXTENT_FACTOR: usize = 8;

/// Steps along one axis until the profile stops decreasing or drops below the floor.
fn profile_extent(work: &Array2<f64>, bin: (usize, usize), axis: usize, floor: f64, limit: usize) -> usize {
    let (rows, cols) = work.dim();
    let at = |s: isize| -> Option<f64> {
        if axis == 0 {
            let n = bin.0 as isize + s;
            (n >= 0 && (n as usize) < rows).then(|| work[[n as usize, bin.1]])
        } else {
            let k = (bin.1 as isize + s).rem_euclid(cols as isize) as usize;
            Some(work[[bin.0, k]])
        }
    };
    let mut extent = 0;
    for dir in [-1isize, 1] {
        let mut prev = work[[bin.0, bin.1]];
        let mut s = 1;
        while s <= limit {
            let Some(v) = at(dir * s as isize) else { break };
            if v < floor {
                break;
            }
            if v >= prev {
                s -= 1;
                break;
            }
            prev = v;
            s += 1;
        }
        extent = extent.max(s.min(limit));
    }
    extent
}

/// Zeroes the ellipse with radii `(rn, rk)` around `bin`; angle wraps, range clips.
fn cancel_ellipse(work: &mut Array2<f64>, bin: (usize, usize), radii: (usize, usize)) {
    let (rows, cols) = work.dim();
    let (rn, rk) = (radii.0 as isize, radii.1 as isize);
    for dn in -rn..=rn {
        let n = bin.0 as isize + dn;
        if n < 0 || n as usize >= rows {
            continue;
        }
        let u = dn as f64 / rn as f64;
        let span = ((1.0 - u * u).max(0.0).sqrt() * rk as f64).floor() as isize;
        for dk in -span..=span {
            let k = (bin.1 as isize + dk).rem_euclid(cols as isize) as usize;
            work[[n as usize, k]] = 0.0;
        }
    }
}

fn argmax(work: &Array2<f64>) -> (usize, usize, f64) {
    let cols = work.ncols();
    let (idx, v) = work
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    (idx / cols, idx % cols, v)
}

fn peak_location(cal: &Calibration, bin: (usize, usize), offset: (f64, f64)) -> (f64, f64, f64, f64) {
    let n = bin.0 as f64 + offset.0;
    let k = cal.wrap_angle_bin(bin.1 as f64 + offset.1);
    let pos = cal.bin_to_physical(n, k);
    let sin = pos.sin_azimuth.clamp(-1.0 + 1e-12, 1.0 - 1e-12);
    (pos.roundtrip_length.max(0.0), sin.asin(), n, k)
}

/// Successive cancellation on a private copy of the map.
///
/// The strongest bin fixes the effective threshold; every further maximum
/// above it is interpolated on the original map, reported, and cancelled with
/// an ellipse sized from the peak's profile (at least the window mainlobe).
pub fn extract_peaks(p: &Periodogram, spec: &CfarSpec, noise_floor: f64, sap_id: usize) -> Result<Vec<PeakReport>> {
    spec.validate()?;
    let cal = &p.calibration;
    let zeta = cfar_threshold(noise_floor, spec.p_fa, cal.n_sub, cal.n_ant)?;
    let mut work = p.values.clone();
    for k in (0..cal.k_pad).filter(|&k| cal.is_invisible_column(k)) {
        work.column_mut(k).fill(0.0);
    }
    let floor_radii = p.mainlobe_halfwidth;
    let noise_dbm = watts_to_dbm(p.noise_power_watts);

    let mut threshold = None;
    let mut peaks = Vec::new();
    for _ in 0..work.len() {
        let (n, k, v) = argmax(&work);
        let amplitude = v.max(0.0).sqrt();
        let zeta_eff =
            *threshold.get_or_insert_with(|| effective_threshold(zeta, amplitude, spec.kappa, spec.sidelobe_db));
        if amplitude <= zeta_eff {
            break;
        }
        let interp = interpolate_peak(&p.values, (n, k));
        let (length, azimuth, fn_, fk) = peak_location(cal, (n, k), interp.offset);
        let radii = (
            profile_extent(&work, (n, k), 0, noise_floor, floor_radii.0 * MAX_EXTENT_FACTOR).max(floor_radii.0),
            profile_extent(&work, (n, k), 1, noise_floor, floor_radii.1 * MAX_EXTENT_FACTOR).max(floor_radii.1),
        );
        peaks.push(PeakReport {
            sap_id,
            roundtrip_length: length,
            azimuth,
            power_dbm: watts_to_dbm(interp.power * p.power_scale),
            bin: (n, k),
            fractional_bin: (fn_, fk),
            cancel_radii: radii,
            noise_power_dbm: noise_dbm,
        });
        cancel_ellipse(&mut work, (n, k), radii);
    }
    Ok(peaks)
}

/// Writes one JSON object per line.
pub fn write_peaks_jsonl<W: Write>(mut out: W, peaks: &[PeakReport]) -> Result<()> {
    for p in peaks {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_peaks_jsonl<R: BufRead>(input: R) -> Result<Vec<PeakReport>> {
    let mut peaks = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            peaks.push(serde_json::from_str(&line)?);
        }
    }
    Ok(peaks)
}
