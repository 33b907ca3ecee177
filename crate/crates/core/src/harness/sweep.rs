//! Parameter sweeps over Monte-Carlo drops.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use super::drop::{acquire, acquire_sap};
use crate::evaluation::{
    baseline_single_target, match_detections, wilson_interval, Counts, OcclusionCounts, Z95,
};
use crate::rng::{child_seed, stream};
use crate::scenario::{Scene, TargetModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NoisePowerDbm,
    NSaps,
    NAntennas,
    Bandwidth,
    NTargets,
    RoomSide,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 6] = [
        SweepAxis::NoisePowerDbm,
        SweepAxis::NSaps,
        SweepAxis::NAntennas,
        SweepAxis::Bandwidth,
        SweepAxis::NTargets,
        SweepAxis::RoomSide,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::NoisePowerDbm => "noise_power_dbm",
            SweepAxis::NSaps => "n_saps",
            SweepAxis::NAntennas => "n_antennas",
            SweepAxis::Bandwidth => "bandwidth",
            SweepAxis::NTargets => "n_targets",
            SweepAxis::RoomSide => "room_side",
        }
    }

    /// Returns `base` with this axis set to `value`.
    ///
    /// Bandwidth keeps the subcarrier spacing of `base`; with no explicit
    /// noise power the thermal floor follows the new bandwidth.
    pub fn apply(&self, base: &SimConfig, value: f64) -> Result<SimConfig> {
        let count = || -> Result<usize> {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::invalid(format!("{} needs a positive integer, got {value}", self.name())))
            }
        };
        let mut cfg = base.clone();
        match self {
            SweepAxis::NoisePowerDbm => cfg.radio.noise_power_dbm = Some(value),
            SweepAxis::NSaps => cfg.scene.n_saps = count()?,
            SweepAxis::NAntennas => cfg.radio.n_ant = count()?,
            SweepAxis::Bandwidth => {
                let spacing = base.radio.bandwidth_hz / base.radio.n_sub as f64;
                cfg.radio.n_sub = ((value / spacing).round() as usize).max(1);
                cfg.radio.bandwidth_hz = value;
            }
            SweepAxis::NTargets => {
                let n = count()?;
                cfg.scene.min_targets = n;
                cfg.scene.max_targets = n;
            }
            SweepAxis::RoomSide => {
                cfg.scene.room.side_x = value;
                cfg.scene.room.side_y = value;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::invalid(format!("unknown sweep axis `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub drops_per_point: usize,
    pub root_seed: u64,
    /// SAP counts evaluated per drop (prefixes of the fixed wall order).
    pub sap_counts: Vec<usize>,
    pub filters: Vec<bool>,
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>, drops_per_point: usize, root_seed: u64) -> Self {
        Self { axis, values, drops_per_point, root_seed, sap_counts: vec![1, 2, 3, 4], filters: vec![false, true] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::invalid("sweep needs at least one value"));
        }
        if self.drops_per_point == 0 {
            return Err(Error::invalid("sweep needs at least one drop per point"));
        }
        if self.sap_counts.is_empty() || self.sap_counts.iter().any(|&n| n == 0 || n > crate::scenario::MAX_SAPS) {
            return Err(Error::invalid(format!("invalid SAP counts {:?}", self.sap_counts)));
        }
        if self.filters.is_empty() {
            return Err(Error::invalid("sweep needs at least one filter setting"));
        }
        Ok(())
    }

    fn cells(&self, value: f64) -> Vec<(usize, bool)> {
        let counts = if self.axis == SweepAxis::NSaps { vec![value as usize] } else { self.sap_counts.clone() };
        counts.iter().flat_map(|&n| self.filters.iter().map(move |&f| (n, f))).collect()
    }
}

/// Pooled result of one (axis value, SAP count, filter) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis_value: f64,
    pub n_saps: usize,
    pub filter: bool,
    pub p_det: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub precision: f64,
    pub f1: f64,
    pub p_occ: f64,
    pub drops: usize,
    pub counts: Counts,
}

impl SweepRow {
    pub fn from_counts(
        axis_value: f64,
        n_saps: usize,
        filter: bool,
        drops: usize,
        counts: Counts,
        occlusion: OcclusionCounts,
    ) -> Result<Self> {
        let report = counts.report()?;
        let (ci_lo, ci_hi) = wilson_interval(counts.true_positives, counts.positives, Z95);
        Ok(Self {
            axis_value,
            n_saps,
            filter,
            p_det: report.p_det,
            ci_lo,
            ci_hi,
            precision: report.precision,
            f1: report.f1,
            p_occ: occlusion.fraction(),
            drops,
            counts,
        })
    }
}

type CellTotals = Vec<(Counts, OcclusionCounts)>;

fn sum_cells(mut acc: CellTotals, other: CellTotals) -> CellTotals {
    for (a, b) in acc.iter_mut().zip(other) {
        a.0 += b.0;
        a.1 += b.1;
    }
    acc
}

/// Runs one axis value; drops execute on the rayon pool.
pub fn run_point(base: &SimConfig, spec: &SweepSpec, value: f64) -> Result<Vec<SweepRow>> {
    let cells = spec.cells(value);
    let mut cfg = spec.axis.apply(base, value)?;
    cfg.scene.n_saps = cells.iter().map(|c| c.0).max().unwrap_or(1);
    cfg.validate()?;
    let zero: CellTotals = vec![Default::default(); cells.len()];
    let totals = (0..spec.drops_per_point)
        .into_par_iter()
        .map(|i| -> Result<CellTotals> {
            let acq = acquire(&cfg, child_seed(spec.root_seed, i as u64), false)?;
            cells
                .iter()
                .map(|&(n, f)| acq.evaluate(&cfg, n, f).map(|e| (e.counts, e.occlusion)))
                .collect()
        })
        .try_reduce(|| zero.clone(), |a, b| Ok(sum_cells(a, b)))?;
    cells
        .iter()
        .zip(totals)
        .map(|(&(n, f), (counts, occ))| SweepRow::from_counts(value, n, f, spec.drops_per_point, counts, occ))
        .collect()
}

/// Runs every axis value in order, handing each finished row to `sink` before
/// starting the next point, so completed points survive a later failure.
pub fn run_sweep<F>(base: &SimConfig, spec: &SweepSpec, mut sink: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SweepRow) -> Result<()>,
{
    spec.validate()?;
    base.validate()?;
    let mut rows = Vec::new();
    for &value in &spec.values {
        log::info!("sweep {} = {value}: {} drops", spec.axis, spec.drops_per_point);
        for row in run_point(base, spec, value)? {
            sink(&row)?;
            rows.push(row);
        }
    }
    Ok(rows)
}

/// The single-SAP reference: one impulsive target, estimate = interpolated
/// global periodogram maximum, swept over noise power.
pub fn run_baseline<F>(base: &SimConfig, noise_dbm: &[f64], drops: usize, root_seed: u64, mut sink: F) -> Result<Vec<SweepRow>>
where
    F: FnMut(&SweepRow) -> Result<()>,
{
    if noise_dbm.is_empty() || drops == 0 {
        return Err(Error::invalid("baseline needs noise values and at least one drop"));
    }
    let mut rows = Vec::new();
    for &noise in noise_dbm {
        let mut cfg = SweepAxis::NoisePowerDbm.apply(base, noise)?;
        cfg.scene.n_saps = 1;
        cfg.scene.min_targets = 1;
        cfg.scene.max_targets = 1;
        cfg.scene.target = TargetModel { center_height: base.scene.target.center_height, ..TargetModel::impulsive() };
        let (counts, occ) = (0..drops)
            .into_par_iter()
            .map(|i| -> Result<(Counts, OcclusionCounts)> {
                let seed = child_seed(root_seed, i as u64);
                let scene = Scene::generate(
                    cfg.scene.room,
                    1,
                    cfg.scene.sap_mount_height,
                    1,
                    &cfg.scene.target,
                    child_seed(seed, stream::SCENE),
                )?;
                let sap = acquire_sap(&cfg, &scene, &scene.saps[0], seed, true)?;
                let p = sap.periodogram.as_ref().expect("periodogram kept");
                let estimate = baseline_single_target(p, &sap.pose);
                let truth = [scene.targets[0].center.xy()];
                let m = match_detections(&[estimate], &truth, cfg.evaluation.match_radius)?;
                Ok((m.counts(), OcclusionCounts { occluded: 0, pairs: 1 }))
            })
            .try_reduce(
                || (Counts::default(), OcclusionCounts::default()),
                |mut a, b| {
                    a.0 += b.0;
                    a.1 += b.1;
                    Ok(a)
                },
            )?;
        let row = SweepRow::from_counts(noise, 1, false, drops, counts, occ)?;
        sink(&row)?;
        rows.push(row);
    }
    Ok(rows)
}
