//! Scenario and solver configuration.
//!
//! Every section has defaults matching the reference indoor setup, so an empty
//! TOML document is a valid configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DeviceConstants, LedLayout, RoomGeometry};
use crate::power::PowerConstants;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoomConfig {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub led_mount_height: f64,
    pub receiver_plane_height: f64,
}

impl Default for RoomConfig {
    fn default() -> Self {
        Self { length: 5.0, width: 5.0, height: 3.0, led_mount_height: 2.5, receiver_plane_height: 0.85 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub rows: usize,
    pub cols: usize,
    /// Grid pitch in meters. `None` picks 2 m for a 2x2 grid and 1.5 m otherwise.
    pub pitch: Option<f64>,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { rows: 2, cols: 2, pitch: None }
    }
}

impl LayoutConfig {
    pub fn effective_pitch(&self) -> f64 {
        self.pitch.unwrap_or(if self.rows == 2 && self.cols == 2 { 2.0 } else { 1.5 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserConfig {
    pub count: usize,
    pub min_separation: f64,
    pub max_resample: usize,
}

impl Default for UserConfig {
    fn default() -> Self {
        Self { count: 3, min_separation: 0.3, max_resample: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeamAngleConvention {
    /// The configured beam angle is the full angle; the semiangle is half of it.
    Full,
    /// The configured beam angle already is the half-intensity semiangle.
    Half,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceConfig {
    pub bandwidth: f64,
    pub beam_angle_deg: f64,
    pub beam_angle_convention: BeamAngleConvention,
    pub conversion_factor: f64,
    pub pd_area: f64,
    pub responsivity: f64,
    pub fov_deg: f64,
    pub filter_gain: f64,
    pub concentrator_index: f64,
    pub ambient_photocurrent: f64,
    pub preamp_noise_density: f64,
    pub elementary_charge: f64,
}

impl Default for DeviceConfig {
    fn default() -> Self {
        Self {
            bandwidth: 20e6,
            beam_angle_deg: 120.0,
            beam_angle_convention: BeamAngleConvention::Full,
            conversion_factor: 2.0,
            pd_area: 1e-4,
            responsivity: 0.54,
            fov_deg: 60.0,
            filter_gain: 1.0,
            concentrator_index: 1.5,
            ambient_photocurrent: 10.93,
            preamp_noise_density: 5e-12,
            elementary_charge: 1.602176634e-19,
        }
    }
}

impl DeviceConfig {
    pub fn constants(&self) -> DeviceConstants {
        let half = match self.beam_angle_convention {
            BeamAngleConvention::Full => self.beam_angle_deg / 2.0,
            BeamAngleConvention::Half => self.beam_angle_deg,
        };
        DeviceConstants {
            bandwidth: self.bandwidth,
            half_intensity_semiangle_deg: half,
            conversion_factor: self.conversion_factor,
            pd_area: self.pd_area,
            responsivity: self.responsivity,
            fov_deg: self.fov_deg,
            filter_gain: self.filter_gain,
            concentrator_index: self.concentrator_index,
            ambient_photocurrent: self.ambient_photocurrent,
            preamp_noise_density: self.preamp_noise_density,
            elementary_charge: self.elementary_charge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriveConfig {
    /// Average emitted optical power per luminary, dBm.
    pub optical_power_dbm: f64,
    /// Maximum drive current in amperes. `None` means twice the DC bias.
    pub i_max: Option<f64>,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self { optical_power_dbm: 30.0, i_max: None }
    }
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl DriveConfig {
    /// DC bias current per LED from the optical power target: `I_dc = P / eta`.
    pub fn dc_bias(&self, conversion_factor: f64) -> f64 {
        dbm_to_watts(self.optical_power_dbm) / conversion_factor
    }

    pub fn max_current(&self, i_dc: f64) -> f64 {
        self.i_max.unwrap_or(2.0 * i_dc)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerConfig {
    pub led_forward_voltage: f64,
    pub dc_circuitry: f64,
    pub xi: f64,
}

impl Default for PowerConfig {
    fn default() -> Self {
        Self { led_forward_voltage: 3.3, dc_circuitry: 8.0, xi: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SecrecyConfig {
    /// Per-user secrecy-rate threshold in bits/s/Hz, applied to every user.
    pub threshold: f64,
}

impl Default for SecrecyConfig {
    fn default() -> Self {
        Self { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    ZeroForcing,
    RandomFeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_outer: usize,
    pub eps_dinkelbach: f64,
    pub max_inner: usize,
    pub eps_cccp: f64,
    pub init: InitMode,
    /// Fixed starting Dinkelbach parameter; `None` starts from the efficiency of the initial precoder.
    pub mu0: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_outer: 30,
            eps_dinkelbach: 1e-4,
            max_inner: 200,
            eps_cccp: 1e-4,
            init: InitMode::ZeroForcing,
            mu0: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub room: RoomConfig,
    pub layout: LayoutConfig,
    pub users: UserConfig,
    pub device: DeviceConfig,
    pub drive: DriveConfig,
    pub power: PowerConfig,
    pub secrecy: SecrecyConfig,
    pub solver: SolverConfig,
}

impl SystemConfig {
    /// Reference setup with a `rows x cols` LED grid and `users` receivers.
    pub fn with_layout(rows: usize, cols: usize, users: usize) -> Self {
        let mut cfg = Self { layout: LayoutConfig { rows, cols, pitch: None }, ..Self::default() };
        cfg.users.count = users;
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml_from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn room_geometry(&self) -> Result<RoomGeometry> {
        RoomGeometry::new(
            self.room.length,
            self.room.width,
            self.room.height,
            self.room.led_mount_height,
            self.room.receiver_plane_height,
        )
    }

    pub fn led_layout(&self) -> Result<LedLayout> {
        LedLayout::centered_grid(
            &self.room_geometry()?,
            self.layout.rows,
            self.layout.cols,
            self.layout.effective_pitch(),
        )
    }

    pub fn power_constants(&self) -> PowerConstants {
        PowerConstants {
            led_forward_voltage: self.power.led_forward_voltage,
            dc_circuitry: self.power.dc_circuitry,
            xi: self.power.xi,
        }
    }

    pub fn thresholds(&self) -> Vec<f64> {
        vec![self.secrecy.threshold; self.users.count]
    }

    pub fn n_leds(&self) -> usize {
        self.layout.rows * self.layout.cols
    }

    pub fn validate(&self) -> Result<()> {
        let room = self.room_geometry()?;
        LedLayout::centered_grid(&room, self.layout.rows, self.layout.cols, self.layout.effective_pitch())?;
        self.device.constants().validate()?;
        self.power_constants().validate()?;
        if self.users.count == 0 {
            return Err(Error::InvalidConfig("at least one user is required".into()));
        }
        if self.n_leds() < self.users.count {
            return Err(Error::InvalidConfig(format!(
                "{} LEDs cannot zero-force {} users (need N_T >= K)",
                self.n_leds(),
                self.users.count
            )));
        }
        if !(self.users.min_separation >= 0.0) || self.users.max_resample == 0 {
            return Err(Error::InvalidConfig("user placement settings out of range".into()));
        }
        if !self.drive.optical_power_dbm.is_finite() {
            return Err(Error::InvalidConfig("optical power must be finite".into()));
        }
        let i_dc = self.drive.dc_bias(self.device.conversion_factor);
        let i_max = self.drive.max_current(i_dc);
        if !(i_dc > 0.0 && i_dc < i_max) {
            return Err(Error::InvalidConfig(format!("need 0 < I_dc ({i_dc}) < I_max ({i_max})")));
        }
        if !(self.secrecy.threshold >= 0.0) {
            return Err(Error::InvalidConfig("secrecy threshold must be non-negative".into()));
        }
        let s = &self.solver;
        if s.max_outer == 0 || s.max_inner == 0 || !(s.eps_dinkelbach > 0.0) || !(s.eps_cccp > 0.0) {
            return Err(Error::InvalidConfig("solver caps must be >= 1 and tolerances > 0".into()));
        }
        if let Some(mu0) = s.mu0 {
            if !(mu0 >= 0.0) {
                return Err(Error::InvalidConfig("mu0 must be non-negative".into()));
            }
        }
        Ok(())
    }
}

fn toml_from_str<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
}
