//! Monte-Carlo drops, parameter sweeps and their outputs.

pub mod config;
pub mod drop;
pub mod output;
pub mod sweep;

pub use config::{thermal_operating_point, SimConfig};
pub use drop::{acquire, run_drop, Acquisition, DropResult, Evaluation};
pub use output::{rows_to_csv, CsvSink, Manifest, CSV_HEADER, CSV_SCHEMA};
pub use sweep::{run_baseline, run_point, run_sweep, SweepAxis, SweepRow, SweepSpec};

/// Noise powers from -80 to -10 dBm in 5 dB steps.
pub fn default_noise_grid() -> Vec<f64> {
    (0..15).map(|i| -80.0 + 5.0 * i as f64).collect()
}
