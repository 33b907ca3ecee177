//! Simulation configuration: defaults, TOML file layer, `key=value` overrides.

use serde::{Deserialize, Serialize};

use crate::extraction::CfarSpec;
use crate::fusion::FusionConfig;
use crate::ofdm::{thermal_noise_dbm, NoiseSpec, OfdmConfig};
use crate::periodogram::{CtfGeometry, Padding, WindowSpec};
use crate::raytracer::{CtfLayout, LinkBudget};
use crate::scenario::{Room, TargetModel, MAX_SAPS, MAX_TARGETS};
use crate::{Error, Result, SPEED_OF_LIGHT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub room: Room,
    pub sap_mount_height: f64,
    pub n_saps: usize,
    /// Target count is drawn uniformly from `min_targets..=max_targets` per drop.
    pub min_targets: usize,
    pub max_targets: usize,
    pub target: TargetModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            room: Room::default(),
            sap_mount_height: 1.5,
            n_saps: 4,
            min_targets: 1,
            max_targets: 8,
            target: TargetModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub bandwidth_hz: f64,
    pub n_sub: usize,
    pub n_ant: usize,
    /// ULA element spacing; half a carrier wavelength when absent.
    pub element_spacing_m: Option<f64>,
    pub link: LinkBudget,
    /// Receiver noise over the band; the thermal floor plus noise figure when absent.
    pub noise_power_dbm: Option<f64>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        Self {
            bandwidth_hz: 800e6,
            n_sub: 2984,
            n_ant: 8,
            element_spacing_m: None,
            link: LinkBudget::default(),
            noise_power_dbm: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProcessingConfig {
    pub window: WindowSpec,
    pub padding: Padding,
    pub cfar: CfarSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSettings {
    /// Clustering distance; twice the range resolution when absent.
    pub merge_eps: Option<f64>,
    pub room_margin: f64,
    pub require_multinode: bool,
}

impl Default for FusionSettings {
    fn default() -> Self {
        Self { merge_eps: None, room_margin: 0.5, require_multinode: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub match_radius: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { match_radius: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub scene: SceneConfig,
    pub radio: RadioConfig,
    pub processing: ProcessingConfig,
    pub fusion: FusionSettings,
    pub evaluation: EvaluationConfig,
}

/// `-174 dBm/Hz + 10 log10(B) + NF`, the receiver noise used when no explicit
/// noise power is configured.
pub fn thermal_operating_point(bandwidth_hz: f64, noise_figure_db: f64) -> Result<f64> {
    if !(bandwidth_hz > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth_hz}")));
    }
    Ok(thermal_noise_dbm(bandwidth_hz, noise_figure_db))
}

impl SimConfig {
    /// Parses TOML text, then applies dotted `key=value` overrides.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("config parse error: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: SimConfig = table.try_into().map_err(|e| Error::Config(format!("config error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.scene;
        s.room.validate()?;
        if !(1..=MAX_SAPS).contains(&s.n_saps) {
            return Err(Error::Config(format!("scene.n_saps must be in 1..={MAX_SAPS}")));
        }
        if s.min_targets == 0 || s.min_targets > s.max_targets || s.max_targets > MAX_TARGETS {
            return Err(Error::Config(format!(
                "target count range {}..={} must lie in 1..={MAX_TARGETS}",
                s.min_targets, s.max_targets
            )));
        }
        self.ofdm().validate()?;
        self.radio.link.validate()?;
        self.processing.cfar.validate()?;
        if self.processing.padding.factor == 0 {
            return Err(Error::Config("padding factor must be >= 1".into()));
        }
        if !(self.evaluation.match_radius > 0.0) {
            return Err(Error::Config("evaluation.match_radius must be positive".into()));
        }
        self.fusion_config(false).validate()
    }

    pub fn ofdm(&self) -> OfdmConfig {
        OfdmConfig {
            n_sub: self.radio.n_sub,
            n_ant: self.radio.n_ant,
            bandwidth_hz: self.radio.bandwidth_hz,
            tx_power_dbm: self.radio.link.tx_power_dbm,
        }
    }

    pub fn noise(&self) -> NoiseSpec {
        match self.radio.noise_power_dbm {
            Some(power_dbm) => NoiseSpec { power_dbm },
            None => NoiseSpec::thermal(self.radio.bandwidth_hz, self.radio.link.noise_figure_db),
        }
    }

    pub fn element_spacing(&self) -> f64 {
        self.radio
            .element_spacing_m
            .unwrap_or(SPEED_OF_LIGHT / self.radio.link.carrier_hz / 2.0)
    }

    pub fn ctf_layout(&self) -> CtfLayout {
        CtfLayout {
            n_sub: self.radio.n_sub,
            n_ant: self.radio.n_ant,
            subcarrier_spacing: self.ofdm().subcarrier_spacing(),
            element_spacing: self.element_spacing(),
            carrier_hz: self.radio.link.carrier_hz,
        }
    }

    pub fn ctf_geometry(&self) -> CtfGeometry {
        let l = self.ctf_layout();
        CtfGeometry { subcarrier_spacing: l.subcarrier_spacing, element_spacing: l.element_spacing, carrier_hz: l.carrier_hz }
    }

    /// Target range resolution `c / 2B`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.radio.bandwidth_hz)
    }

    pub fn fusion_config(&self, require_multinode: bool) -> FusionConfig {
        let mut f = FusionConfig::new(self.range_resolution(), self.scene.room);
        if let Some(eps) = self.fusion.merge_eps {
            f.merge_eps = eps;
        }
        f.room_margin = self.fusion.room_margin;
        f.require_multinode = require_multinode;
        f
    }
}

/// Sets `a.b.c = value` in a TOML table; the value is parsed as TOML, or
/// taken as a bare string if that fails.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override key `{key}`: `{p}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
