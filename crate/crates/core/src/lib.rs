//! Multi-static OFDM radar sensing simulator.
//!
//! The processing chain mirrors a cellular sensing deployment: a scene of
//! scattering targets is raytraced per sensing access point (SAP), the
//! resulting channel transfer function is modulated, corrupted with noise and
//! equalized, turned into a range-angle periodogram, and searched for peaks.
//! Peak reports from all SAPs are fused centrally and scored against the
//! ground truth.
//!
//! ```text
//! scenario -> raytracer -> ofdm -> periodogram -> extraction -> fusion -> evaluation
//! ```
//!
//! [`harness`] wires the stages into Monte-Carlo drops and parameter sweeps.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod evaluation;
pub mod extraction;
pub mod fusion;
pub mod geometry;
pub mod harness;
pub mod ofdm;
pub mod periodogram;
pub mod raytracer;
pub mod rng;
pub mod scenario;
pub mod validation;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub(crate) fn db_to_lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub(crate) fn lin_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

/// Serializes powers in dBm with `-inf` as `null`.
pub(crate) mod serde_dbm {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_lin(dbm - 30.0)
}

/// Converts a power in watts to dBm.
pub fn watts_to_dbm(watts: f64) -> f64 {
    lin_to_db(watts) + 30.0
}
