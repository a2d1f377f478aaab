//! Simulation configuration shared by meshing, forward solves, and dataset
//! generation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical and protocol parameters of the simulated panel.
///
/// Defaults model a 0.9 m square CNF/epoxy panel with 16 boundary
/// electrodes, each one ninth of the domain width, driven with 1 mA in the
/// adjacent injection scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Side length of the square domain, meters.
    pub domain_size: f64,
    /// Number of boundary electrodes.
    pub n_electrodes: usize,
    /// Width of each electrode, meters.
    pub electrode_width: f64,
    /// Background conductivity, S/m.
    pub background_conductivity: f64,
    /// Contact impedance per electrode, Ohm-meter.
    pub contact_impedance: f64,
    /// Drive current amplitude, amperes.
    pub injection_current: f64,
    /// Measurement noise level in dB, or None for noise-free frames.
    pub snr_db: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            domain_size: 0.9,
            n_electrodes: 16,
            electrode_width: 0.1,
            background_conductivity: 9.16e-5,
            contact_impedance: 0.01,
            injection_current: 1e-3,
            snr_db: Some(85.0),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("domain_size", self.domain_size),
            ("electrode_width", self.electrode_width),
            ("background_conductivity", self.background_conductivity),
            ("contact_impedance", self.contact_impedance),
            ("injection_current", self.injection_current),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.n_electrodes < 4 {
            return Err(Error::InvalidConfig(format!(
                "need at least 4 electrodes, got {}",
                self.n_electrodes
            )));
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(Error::InvalidConfig("snr_db must be finite".into()));
            }
        }
        Ok(())
    }

    /// Number of differential measurements in one full adjacent-scheme
    /// cycle: every electrode drives once, and each drive records all
    /// adjacent pairs that do not touch a drive electrode.
    pub fn frame_len(&self) -> usize {
        self.n_electrodes * (self.n_electrodes - 3)
    }

    /// Noise-free copy.
    pub fn without_noise(&self) -> Self {
        Self { snr_db: None, ..self.clone() }
    }
}
