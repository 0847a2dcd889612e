use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{wavelength, ArrayGeometry, ChannelModel, PolarLocation};
use crate::error::{Error, Result};
use crate::stage1::BcdSettings;
use crate::stage2::AoSettings;

/// Stopping rule used by the alternating projection in a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AoStopRule {
    /// Secrecy capacity of the hybrid design changes by at most `eps2`.
    Secrecy,
    /// Beam-similarity residual changes by at most `eps2 · ‖W_FD‖²`.
    Residual,
}

/// Full description of one simulated system. Key names carry their units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub f_hz: f64,
    /// Element spacing shared by all arrays; half a wavelength when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing_m: Option<f64>,
    /// BS antennas (M).
    pub m_tx: usize,
    pub m_u: usize,
    pub m_e: usize,
    /// RF chains (M_R).
    pub m_rf: usize,
    /// Data streams (K).
    pub k_streams: usize,
    pub noise_dbm: f64,
    pub p_max_dbm: f64,
    pub u_distance_m: f64,
    pub u_angle_deg: f64,
    pub e_distance_m: f64,
    pub e_angle_deg: f64,
    pub trials: usize,
    pub seed: u64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
    pub max_bcd_iters: usize,
    pub max_ao_iters: usize,
    pub max_bisection_iters: usize,
    pub channel_model: ChannelModel,
    pub ao_stop: AoStopRule,
}

/// Converts dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SystemConfig {
    /// Reference geometry and tolerances at test-suite scale: 32 BS antennas,
    /// 20 trials.
    pub fn desk() -> Self {
        Self {
            f_hz: 28e9,
            spacing_m: None,
            m_tx: 32,
            m_u: 8,
            m_e: 8,
            m_rf: 4,
            k_streams: 2,
            noise_dbm: -105.0,
            p_max_dbm: -10.0,
            u_distance_m: 15.0,
            u_angle_deg: 45.0,
            e_distance_m: 5.0,
            e_angle_deg: 45.0,
            trials: 20,
            seed: 1,
            eps1: 1e-4,
            eps2: 1e-6,
            eps3: 1e-6,
            max_bcd_iters: 500,
            max_ao_iters: 200,
            max_bisection_iters: 200,
            channel_model: ChannelModel::Near,
            ao_stop: AoStopRule::Secrecy,
        }
    }

    /// The full-size setup: 256 BS antennas, 100 trials.
    pub fn paper() -> Self {
        Self {
            m_tx: 256,
            trials: 100,
            ..Self::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Argument(format!("unknown preset '{other}' (expected desk or paper)"))),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn spacing(&self) -> f64 {
        self.spacing_m.unwrap_or_else(|| wavelength(self.f_hz) / 2.0)
    }

    pub fn noise_watts(&self) -> f64 {
        dbm_to_watts(self.noise_dbm)
    }

    pub fn p_max_watts(&self) -> f64 {
        dbm_to_watts(self.p_max_dbm)
    }

    pub fn u_location(&self) -> Result<PolarLocation> {
        PolarLocation::from_degrees(self.u_distance_m, self.u_angle_deg)
    }

    pub fn e_location(&self) -> Result<PolarLocation> {
        PolarLocation::from_degrees(self.e_distance_m, self.e_angle_deg)
    }

    pub fn base_station(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::base_station(self.m_tx, self.spacing())
    }

    pub fn bcd_settings(&self) -> BcdSettings {
        BcdSettings {
            p_max: self.p_max_watts(),
            eps1: self.eps1,
            eps3: self.eps3,
            max_iterations: self.max_bcd_iters,
            max_bisection: self.max_bisection_iters,
        }
    }

    pub fn ao_settings(&self) -> AoSettings {
        AoSettings {
            eps2: self.eps2,
            max_iterations: self.max_ao_iters,
            p_max: self.p_max_watts(),
        }
    }

    /// Checks every invariant and reports all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let mut positive = |name: &str, value: f64| {
            if !(value.is_finite() && value > 0.0) {
                errors.push(format!("{name} must be positive and finite, got {value}"));
            }
        };
        positive("f_hz", self.f_hz);
        if let Some(d) = self.spacing_m {
            positive("spacing_m", d);
        }
        positive("u_distance_m", self.u_distance_m);
        positive("e_distance_m", self.e_distance_m);
        positive("eps1", self.eps1);
        positive("eps2", self.eps2);
        positive("eps3", self.eps3);
        for (name, value) in [
            ("noise_dbm", self.noise_dbm),
            ("p_max_dbm", self.p_max_dbm),
            ("u_angle_deg", self.u_angle_deg),
            ("e_angle_deg", self.e_angle_deg),
        ] {
            if !value.is_finite() {
                errors.push(format!("{name} must be finite, got {value}"));
            }
        }
        for (name, value) in [
            ("m_tx", self.m_tx),
            ("m_u", self.m_u),
            ("m_e", self.m_e),
            ("m_rf", self.m_rf),
            ("k_streams", self.k_streams),
            ("trials", self.trials),
            ("max_bcd_iters", self.max_bcd_iters),
            ("max_ao_iters", self.max_ao_iters),
            ("max_bisection_iters", self.max_bisection_iters),
        ] {
            if value == 0 {
                errors.push(format!("{name} must be at least 1"));
            }
        }
        if self.k_streams > self.m_rf {
            errors.push(format!(
                "k_streams ({}) must not exceed m_rf ({})",
                self.k_streams, self.m_rf
            ));
        }
        if self.m_rf > self.m_tx {
            errors.push(format!("m_rf ({}) must not exceed m_tx ({})", self.m_rf, self.m_tx));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errors))
        }
    }
}
