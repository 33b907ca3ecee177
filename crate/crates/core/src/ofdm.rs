//! Transmit symbols, AWGN and single-tap equalization.

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::raytracer::Ctf;
use crate::rng::rng_from_seed;
use crate::{dbm_to_watts, lin_to_db, Error, Result};

/// Thermal noise density at 290 K, dBm/Hz.
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OfdmConfig {
    pub n_sub: usize,
    pub n_ant: usize,
    pub bandwidth_hz: f64,
    /// Total transmit power, spread evenly over the subcarriers.
    pub tx_power_dbm: f64,
}

impl OfdmConfig {
    pub fn subcarrier_spacing(&self) -> f64 {
        self.bandwidth_hz / self.n_sub as f64
    }

    /// Power of every transmit symbol, watts.
    pub fn symbol_power(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm) / self.n_sub as f64
    }

    pub fn tx_power_watts(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sub == 0 || self.n_ant == 0 || !(self.bandwidth_hz > 0.0) {
            return Err(Error::Config(format!("invalid OFDM config {self:?}")));
        }
        Ok(())
    }
}

/// Receiver noise over the whole band. `P_N = sigma^2 * N_sub`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub power_dbm: f64,
}

impl NoiseSpec {
    /// A noiseless receiver.
    pub const NONE: NoiseSpec = NoiseSpec { power_dbm: f64::NEG_INFINITY };

    pub fn thermal(bandwidth_hz: f64, noise_figure_db: f64) -> Self {
        Self { power_dbm: thermal_noise_dbm(bandwidth_hz, noise_figure_db) }
    }

    pub fn power_watts(&self) -> f64 {
        dbm_to_watts(self.power_dbm)
    }

    pub fn per_sample_variance(&self, n_sub: usize) -> f64 {
        self.power_watts() / n_sub as f64
    }
}

/// `-174 dBm/Hz + 10 log10(B) + NF`.
pub fn thermal_noise_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + lin_to_db(bandwidth_hz) + noise_figure_db
}

/// Equalized, noisy CTF estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatedCtf {
    pub values: Array2<Complex64>,
    /// Variance of the noise on each entry after equalization.
    pub noise_variance: f64,
    /// Total transmit power `sum |x_n|^2`, watts.
    pub tx_power: f64,
}

/// Uniform QPSK symbols with constant power `symbol_power`.
pub fn generate_symbols(n_sub: usize, symbol_power: f64, seed: u64) -> Result<Vec<Complex64>> {
    if n_sub == 0 {
        return Err(Error::invalid("symbol vector needs at least one subcarrier"));
    }
    let amp = (symbol_power / 2.0).sqrt();
    let mut rng = rng_from_seed(seed);
    Ok((0..n_sub)
        .map(|_| {
            let q: u8 = rng.random_range(0..4);
            let re = if q & 1 == 0 { amp } else { -amp };
            let im = if q & 2 == 0 { amp } else { -amp };
            Complex64::new(re, im)
        })
        .collect())
}

/// `y[n,k] = x[n] h[n,k] + z[n,k]` with `z ~ CN(0, sigma2)`.
pub fn apply_channel_and_noise(h: &Ctf, x: &[Complex64], sigma2: f64, seed: u64) -> Result<Array2<Complex64>> {
    if x.len() != h.n_sub() {
        return Err(Error::invalid(format!("{} symbols for {} subcarriers", x.len(), h.n_sub())));
    }
    let mut y = h.values.clone();
    for (mut row, &xn) in y.outer_iter_mut().zip(x) {
        row.mapv_inplace(|v| v * xn);
    }
    if sigma2 > 0.0 {
        let scale = (sigma2 / 2.0).sqrt();
        let mut rng = rng_from_seed(seed);
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(re, im) * scale;
        }
    }
    Ok(y)
}

/// Single-tap equalization `h_hat = y / x`.
///
/// `sigma2` is the noise variance of `y`; the returned estimate carries the
/// per-entry variance after division, which is exact for constant-modulus symbols.
pub fn equalize(y: &Array2<Complex64>, x: &[Complex64], sigma2: f64) -> Result<EstimatedCtf> {
    if x.len() != y.nrows() {
        return Err(Error::invalid(format!("{} symbols for {} subcarriers", x.len(), y.nrows())));
    }
    if let Some(n) = x.iter().position(|v| v.norm_sqr() == 0.0) {
        return Err(Error::invalid(format!("transmit symbol {n} is zero")));
    }
    let mut values = y.clone();
    for (mut row, &xn) in values.outer_iter_mut().zip(x) {
        let inv = xn.inv();
        row.mapv_inplace(|v| v * inv);
    }
    let mean_inv_power = x.iter().map(|v| 1.0 / v.norm_sqr()).sum::<f64>() / x.len() as f64;
    let tx_power = x.iter().map(|v| v.norm_sqr()).sum();
    Ok(EstimatedCtf { values, noise_variance: sigma2 * mean_inv_power, tx_power })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    /// Received signal power over the band divided by `P_N`.
    pub com: f64,
    /// `com * N_sub * K`, the periodogram peak-to-floor ratio for an impulsive target.
    pub imag: f64,
}

impl SnrReport {
    pub fn com_db(&self) -> f64 {
        lin_to_db(self.com)
    }

    pub fn imag_db(&self) -> f64 {
        lin_to_db(self.imag)
    }
}

pub fn snr_report(h: &Ctf, cfg: &OfdmConfig, noise: &NoiseSpec) -> SnrReport {
    let mean_gain = h.values.iter().map(|v| v.norm_sqr()).sum::<f64>() / h.values.len() as f64;
    let com = cfg.tx_power_watts() * mean_gain / noise.power_watts();
    SnrReport { com, imag: com * (h.n_sub() * h.n_ant()) as f64 }
}

/// Processing gain of the periodogram, `N_sub * K`.
pub fn processing_gain(n_sub: usize, n_ant: usize) -> f64 {
    (n_sub * n_ant) as f64
}

/// Sample variance of complex entries about their mean.
pub fn complex_variance(values: &Array2<Complex64>) -> f64 {
    let n = values.len() as f64;
    let mean = values.sum() / n;
    let mut acc = 0.0;
    Zip::from(values).for_each(|v| acc += (v - mean).norm_sqr());
    acc / (n - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raytracer::Ctf;
    use approx::assert_relative_eq;

    fn ctf_of(values: Array2<Complex64>) -> Ctf {
        Ctf { values, subcarrier_spacing: 1.0, element_spacing: 0.5, carrier_hz: 1.0 }
    }

    #[test]
    fn symbols_constant_modulus_and_reproducible() {
        let x = generate_symbols(2984, 3.0, 1).unwrap();
        assert!(x.iter().all(|v| (v.norm_sqr() - 3.0).abs() < 1e-12));
        assert_eq!(x, generate_symbols(2984, 3.0, 1).unwrap());
        assert!(generate_symbols(0, 1.0, 1).is_err());
    }

    #[test]
    fn symbol_mean_is_zero() {
        let x = generate_symbols(100_000, 1.0, 2).unwrap();
        let mean = x.iter().sum::<Complex64>() / x.len() as f64;
        // per-component std of the mean is sqrt(0.5 / n)
        let bound = 3.0 * (0.5 / x.len() as f64).sqrt();
        assert!(mean.re.abs() < bound && mean.im.abs() < bound, "{mean}");
    }

    #[test]
    fn noiseless_channel_and_equalization() {
        let h = ctf_of(Array2::from_shape_fn((64, 4), |(n, k)| Complex64::new(n as f64 * 0.1, k as f64 - 1.5)));
        let x = generate_symbols(64, 0.25, 3).unwrap();
        let y = apply_channel_and_noise(&h, &x, 0.0, 0).unwrap();
        for ((n, k), v) in y.indexed_iter() {
            assert_eq!(*v, x[n] * h.values[[n, k]]);
        }
        let est = equalize(&y, &x, 0.0).unwrap();
        for (a, b) in est.values.iter().zip(h.values.iter()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-300));
        }

        let ones = ctf_of(Array2::from_elem((8, 2), Complex64::new(1.0, 0.0)));
        let y = apply_channel_and_noise(&ones, &[Complex64::new(1.0, 0.0); 8], 0.0, 0).unwrap();
        assert!(y.iter().all(|v| *v == Complex64::new(1.0, 0.0)));
    }

    #[test]
    fn zero_symbol_rejected() {
        let y = Array2::from_elem((2, 2), Complex64::new(1.0, 0.0));
        assert!(equalize(&y, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn noise_variance_before_and_after_equalization() {
        let sigma2 = 0.37;
        let h = ctf_of(Array2::zeros((125_000, 8)));
        let x = generate_symbols(125_000, 2.0, 4).unwrap();
        let y = apply_channel_and_noise(&h, &x, sigma2, 5).unwrap();
        let var = complex_variance(&y);
        assert!((var / sigma2 - 1.0).abs() < 0.01, "{var}");

        // unit-power symbols keep the noise variance
        let x = generate_symbols(125_000, 1.0, 4).unwrap();
        let y = apply_channel_and_noise(&h, &x, sigma2, 6).unwrap();
        let est = equalize(&y, &x, sigma2).unwrap();
        let var = complex_variance(&est.values);
        assert!((var / sigma2 - 1.0).abs() < 0.01, "{var}");
        assert_relative_eq!(est.noise_variance, sigma2, max_relative = 1e-12);
    }

    #[test]
    fn snr_definitions() {
        assert_eq!(processing_gain(2984, 8), 23_872.0);
        assert_relative_eq!(lin_to_db(processing_gain(2984, 8)), 43.779, epsilon = 1e-3);

        let h = ctf_of(Array2::from_elem((1, 1), Complex64::new(1.0, 0.0)));
        let cfg = OfdmConfig { n_sub: 1, n_ant: 1, bandwidth_hz: 1.0, tx_power_dbm: 30.0 };
        let r = snr_report(&h, &cfg, &NoiseSpec { power_dbm: 30.0 });
        assert_relative_eq!(r.com, 1.0, max_relative = 1e-12);
        assert_relative_eq!(r.imag, 1.0, max_relative = 1e-12);

        let h = ctf_of(Array2::from_elem((2984, 8), Complex64::new(1e-5, 0.0)));
        let cfg = OfdmConfig { n_sub: 2984, n_ant: 8, bandwidth_hz: 800e6, tx_power_dbm: 30.0 };
        let a = snr_report(&h, &cfg, &NoiseSpec { power_dbm: -70.0 });
        let b = snr_report(&h, &cfg, &NoiseSpec { power_dbm: -70.0 + lin_to_db(2.0) });
        assert_relative_eq!(a.com / b.com, 2.0, max_relative = 1e-12);
        assert_relative_eq!(a.imag / b.imag, 2.0, max_relative = 1e-12);
        assert_relative_eq!(a.imag / a.com, 23_872.0, max_relative = 1e-12);
    }

    #[test]
    fn thermal_floor() {
        assert!((thermal_noise_dbm(800e6, 0.0) - -84.97).abs() < 0.01);
        assert!((thermal_noise_dbm(100e6, 8.0) - -86.0).abs() < 1e-9);
    }
}
