//! Windowed, zero-padded 2D DFT power map of an estimated CTF and the mapping
//! between its bins and round-trip length / azimuth.
//!
//! The transform follows the OFDM radar convention: a forward DFT across the
//! antennas (angle) and an inverse DFT across the subcarriers (range),
//!
//! ```text
//! P[n',k'] = 1/(N'K') | sum_m ( sum_i h'[m,i] e^{-j2pi i k'/K'} ) e^{+j2pi m n'/N'} |^2
//! ```

use std::cell::RefCell;
use std::f64::consts::{PI, TAU};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path as FsPath;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::ofdm::EstimatedCtf;
use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Rectangular,
    Chebyshev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WindowSpec {
    pub kind: WindowKind,
    /// Equiripple sidelobe attenuation for the Chebyshev window, dB.
    pub sidelobe_db: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { kind: WindowKind::Chebyshev, sidelobe_db: 30.0 }
    }
}

impl WindowSpec {
    pub const RECTANGULAR: WindowSpec = WindowSpec { kind: WindowKind::Rectangular, sidelobe_db: 0.0 };

    pub fn weights(&self, len: usize) -> Result<Vec<f64>> {
        match self.kind {
            WindowKind::Rectangular => Ok(vec![1.0; len]),
            WindowKind::Chebyshev => chebyshev_window(len, self.sidelobe_db),
        }
    }
}

/// Dolph-Chebyshev window with equiripple sidelobes `attenuation_db` below the
/// mainlobe, normalized to a peak weight of one.
///
/// Built by sampling the Chebyshev polynomial response and transforming it
/// back to the sample domain.
pub fn chebyshev_window(len: usize, attenuation_db: f64) -> Result<Vec<f64>> {
    if len < 2 {
        return Err(Error::invalid(format!("Chebyshev window needs length >= 2, got {len}")));
    }
    if !(attenuation_db > 0.0) {
        return Err(Error::invalid(format!("sidelobe attenuation must be positive, got {attenuation_db}")));
    }
    let order = (len - 1) as f64;
    let ripple = 10f64.powf(attenuation_db / 20.0);
    let beta = (ripple.acosh() / order).cosh();
    let m = len as f64;

    let mut spectrum: Vec<Complex64> = (0..len)
        .map(|k| {
            let x = beta * (PI * k as f64 / m).cos();
            let t = if x > 1.0 {
                (order * x.acosh()).cosh()
            } else if x < -1.0 {
                let sign = if len % 2 == 1 { 1.0 } else { -1.0 };
                sign * (order * (-x).acosh()).cosh()
            } else {
                (order * x.acos()).cos()
            };
            if len.is_multiple_of(2) {
                Complex64::from_polar(t, PI * k as f64 / m)
            } else {
                Complex64::new(t, 0.0)
            }
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut spectrum);
    let w: Vec<f64> = spectrum.iter().map(|c| c.re).collect();

    let out: Vec<f64> = if len % 2 == 1 {
        let half = len.div_ceil(2);
        w[1..half].iter().rev().chain(&w[..half]).copied().collect()
    } else {
        let half = len / 2 + 1;
        w[1..half].iter().rev().chain(&w[1..half]).copied().collect()
    };
    let peak = out.iter().copied().fold(f64::MIN, f64::max);
    Ok(out.into_iter().map(|v| v / peak).collect())
}

/// Magnitude of the window's DTFT at `cycles` per sample.
fn window_response(w: &[f64], cycles: f64) -> f64 {
    w.iter()
        .enumerate()
        .map(|(m, &wm)| Complex64::from_polar(wm, -TAU * cycles * m as f64))
        .sum::<Complex64>()
        .norm()
}

/// Distance in padded bins from the mainlobe peak to its first null.
pub fn mainlobe_halfwidth(w: &[f64], padded_len: usize) -> usize {
    let peak = window_response(w, 0.0);
    let mut prev = peak;
    for j in 1..padded_len / 2 {
        let next = window_response(w, j as f64 / padded_len as f64);
        if next < 1e-9 * peak || next >= prev {
            return if next < 1e-9 * peak { j } else { j - 1 }.max(1);
        }
        prev = next;
    }
    padded_len / 2
}

/// Zero-padding rule for both periodogram axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Padding {
    pub factor: usize,
    /// Round the padded size up to the next power of two.
    pub power_of_two: bool,
}

impl Default for Padding {
    fn default() -> Self {
        Self { factor: 4, power_of_two: true }
    }
}

impl Padding {
    pub const NONE: Padding = Padding { factor: 1, power_of_two: false };

    pub fn padded_len(&self, len: usize) -> usize {
        let n = len * self.factor.max(1);
        if self.power_of_two {
            n.next_power_of_two()
        } else {
            n
        }
    }
}

/// Everything needed to map periodogram bins to physical quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub n_sub: usize,
    pub n_ant: usize,
    pub n_pad: usize,
    pub k_pad: usize,
    pub subcarrier_spacing: f64,
    pub element_spacing: f64,
    pub carrier_hz: f64,
}

/// Physical coordinates of a (possibly fractional) bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinPosition {
    pub roundtrip_length: f64,
    pub sin_azimuth: f64,
}

impl BinPosition {
    /// False in the invisible region `|sin(theta)| >= 1`.
    pub fn is_visible(&self) -> bool {
        self.sin_azimuth.abs() < 1.0
    }

    pub fn azimuth(&self) -> Option<f64> {
        self.is_visible().then(|| self.sin_azimuth.asin())
    }
}

impl Calibration {
    /// Round-trip length per padded range bin.
    pub fn length_per_bin(&self) -> f64 {
        SPEED_OF_LIGHT / (self.n_pad as f64 * self.subcarrier_spacing)
    }

    /// `sin(theta)` per padded angle bin.
    pub fn sine_per_bin(&self) -> f64 {
        SPEED_OF_LIGHT / (self.element_spacing * self.carrier_hz * self.k_pad as f64)
    }

    /// Target range resolution `c / 2B`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.subcarrier_spacing * self.n_sub as f64)
    }

    /// Signed angle bin in `[-K'/2, K'/2)`.
    pub fn wrap_angle_bin(&self, k: f64) -> f64 {
        let kp = self.k_pad as f64;
        (k + kp / 2.0).rem_euclid(kp) - kp / 2.0
    }

    pub fn bin_to_physical(&self, n: f64, k: f64) -> BinPosition {
        BinPosition {
            roundtrip_length: n * self.length_per_bin(),
            sin_azimuth: self.wrap_angle_bin(k) * self.sine_per_bin(),
        }
    }

    /// Fractional `(n', k')` with `k'` in `[0, K')`.
    pub fn physical_to_bin(&self, roundtrip_length: f64, azimuth: f64) -> (f64, f64) {
        let n = roundtrip_length / self.length_per_bin();
        let k = (azimuth.sin() / self.sine_per_bin()).rem_euclid(self.k_pad as f64);
        (n, k)
    }

    /// The padded angle column whose direction is `sin(theta) = -1` for `d = lambda/2`.
    pub fn is_invisible_column(&self, k: usize) -> bool {
        !self.bin_to_physical(0.0, k as f64).is_visible()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Periodogram {
    /// Power map, `N' x K'`, range-major.
    pub values: Array2<f64>,
    pub calibration: Calibration,
    /// Expected value of a noise-only bin, in the units of `values`.
    pub noise_floor: f64,
    /// Converts `values` to received echo power in watts for an on-bin point target.
    pub power_scale: f64,
    /// Ground-truth receiver noise power over the band, watts.
    pub noise_power_watts: f64,
    /// First-null distance of the window mainlobe in padded bins, `(range, angle)`.
    pub mainlobe_halfwidth: (usize, usize),
    pub window: WindowSpec,
}

impl Periodogram {
    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Location and value of the largest visible bin.
    pub fn global_max(&self) -> (usize, usize, f64) {
        let mut best = (0, 0, f64::NEG_INFINITY);
        for ((n, k), &v) in self.values.indexed_iter() {
            if v > best.2 && !self.calibration.is_invisible_column(k) {
                best = (n, k, v);
            }
        }
        best
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

pub fn compute_periodogram(
    est: &EstimatedCtf,
    calibration_in: &CtfGeometry,
    window: &WindowSpec,
    padding: &Padding,
) -> Result<Periodogram> {
    let (n_sub, n_ant) = est.values.dim();
    if n_sub == 0 || n_ant == 0 {
        return Err(Error::invalid("empty CTF"));
    }
    let n_pad = padding.padded_len(n_sub);
    let k_pad = padding.padded_len(n_ant);
    let wn = window.weights(n_sub)?;
    let wk = window.weights(n_ant)?;

    // Forward DFT across antennas, stored column-major for the range pass.
    let fwd = plan(k_pad, false);
    let mut columns = vec![Complex64::new(0.0, 0.0); k_pad * n_pad];
    let mut row = vec![Complex64::new(0.0, 0.0); k_pad];
    let mut scratch = vec![Complex64::new(0.0, 0.0); fwd.get_inplace_scratch_len()];
    for (m, h_row) in est.values.outer_iter().enumerate() {
        row.fill(Complex64::new(0.0, 0.0));
        for (i, h) in h_row.iter().enumerate() {
            row[i] = h * (wn[m] * wk[i]);
        }
        fwd.process_with_scratch(&mut row, &mut scratch);
        for (k, v) in row.iter().enumerate() {
            columns[k * n_pad + m] = *v;
        }
    }

    // Inverse (unnormalized) DFT across subcarriers.
    let inv = plan(n_pad, true);
    let mut scratch = vec![Complex64::new(0.0, 0.0); inv.get_inplace_scratch_len()];
    let norm = 1.0 / (n_pad * k_pad) as f64;
    let mut values = Array2::<f64>::zeros((n_pad, k_pad));
    for (k, col) in columns.chunks_exact_mut(n_pad).enumerate() {
        inv.process_with_scratch(col, &mut scratch);
        for (n, v) in col.iter().enumerate() {
            values[[n, k]] = v.norm_sqr() * norm;
        }
    }

    let sum = |w: &[f64]| w.iter().sum::<f64>();
    let sum_sq = |w: &[f64]| w.iter().map(|v| v * v).sum::<f64>();
    let coherent = (sum(&wn) * sum(&wk)).powi(2) * norm;
    let calibration = Calibration {
        n_sub,
        n_ant,
        n_pad,
        k_pad,
        subcarrier_spacing: calibration_in.subcarrier_spacing,
        element_spacing: calibration_in.element_spacing,
        carrier_hz: calibration_in.carrier_hz,
    };
    Ok(Periodogram {
        values,
        calibration,
        noise_floor: est.noise_variance * sum_sq(&wn) * sum_sq(&wk) * norm,
        power_scale: est.tx_power / coherent,
        noise_power_watts: est.noise_variance * est.tx_power,
        mainlobe_halfwidth: (mainlobe_halfwidth(&wn, n_pad), mainlobe_halfwidth(&wk, k_pad)),
        window: *window,
    })
}

/// Subcarrier spacing and array geometry the periodogram is calibrated against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CtfGeometry {
    pub subcarrier_spacing: f64,
    pub element_spacing: f64,
    pub carrier_hz: f64,
}

impl From<&crate::raytracer::Ctf> for CtfGeometry {
    fn from(h: &crate::raytracer::Ctf) -> Self {
        Self { subcarrier_spacing: h.subcarrier_spacing, element_spacing: h.element_spacing, carrier_hz: h.carrier_hz }
    }
}

/// JSON sidecar written next to a binary periodogram dump.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DumpHeader {
    pub format: String,
    pub rows: usize,
    pub cols: usize,
    pub row_axis: String,
    pub col_axis: String,
    pub calibration: Calibration,
    pub noise_floor: f64,
    pub power_scale: f64,
    #[serde(with = "crate::serde_dbm")]
    pub noise_power_dbm: f64,
    pub sap_id: Option<usize>,
}

/// Writes `values` as little-endian `f32`, row-major, to `<stem>.bin` and the
/// header to `<stem>.json`.
pub fn dump_periodogram(p: &Periodogram, stem: &FsPath, sap_id: Option<usize>) -> Result<()> {
    let (rows, cols) = p.dims();
    let mut bin = BufWriter::new(File::create(stem.with_extension("bin"))?);
    for v in p.values.iter() {
        bin.write_all(&(*v as f32).to_le_bytes())?;
    }
    bin.flush()?;
    let header = DumpHeader {
        format: "f32le-row-major".into(),
        rows,
        cols,
        row_axis: "range_bin".into(),
        col_axis: "angle_bin".into(),
        calibration: p.calibration,
        noise_floor: p.noise_floor,
        power_scale: p.power_scale,
        noise_power_dbm: crate::watts_to_dbm(p.noise_power_watts),
        sap_id,
    };
    std::fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}
