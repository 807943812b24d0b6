//! Physical constants and unit scales.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduced Planck constant in J s.
pub const HBAR_SI: f64 = 1.054_571_817e-34;
/// Mass of a rubidium-87 atom in kg.
pub const RB87_MASS_SI: f64 = 86.909_180_527 * 1.660_539_066_60e-27;

/// Particle and laser constants shared by every module.
///
/// With the defaults (`hbar = mass = k0 = 1`) lengths are measured in
/// `L = 1/k0` and times in `t0 = m / (hbar k0^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    pub hbar: f64,
    pub mass: f64,
    /// Effective two-photon wavenumber along gravity.
    pub k0: f64,
    /// Working-point acceleration around which `g` derivatives are taken.
    pub g_offset: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            k0: 1.0,
            g_offset: 0.0,
        }
    }
}

impl PhysicalParams {
    pub fn new(hbar: f64, mass: f64, k0: f64) -> Result<Self> {
        let params = Self {
            hbar,
            mass,
            k0,
            g_offset: 0.0,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [("hbar", self.hbar), ("mass", self.mass), ("k0", self.k0)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")));
            }
        }
        if !self.g_offset.is_finite() {
            return Err(Error::InvalidParameter("g_offset must be finite".into()));
        }
        Ok(())
    }

    pub fn length_unit(&self) -> f64 {
        1.0 / self.k0
    }

    pub fn time_unit(&self) -> f64 {
        self.mass / (self.hbar * self.k0 * self.k0)
    }

    /// Recoil velocity `hbar k0 / m`.
    pub fn recoil_velocity(&self) -> f64 {
        self.hbar * self.k0 / self.mass
    }

    /// Two-photon resonance detuning `hbar k0^2 / (2 m)` as an angular frequency.
    pub fn resonance_detuning(&self) -> f64 {
        self.hbar * self.k0 * self.k0 / (2.0 * self.mass)
    }

    /// Semiclassical Kasevich-Chu information `k0^2 T_pi^4`; also the unit in
    /// which every reported Fisher value is expressed.
    pub fn fq_semiclassical(&self, t_pi: f64) -> f64 {
        self.k0 * self.k0 * t_pi.powi(4)
    }
}

/// Length and time scales of the natural unit system for given SI constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NaturalScales {
    /// `L = 1/k0` in metres.
    pub length: f64,
    /// `t0 = m/(hbar k0^2)` in seconds.
    pub time: f64,
}

pub fn natural_units(k0_si: f64, m_si: f64, hbar_si: f64) -> Result<NaturalScales> {
    for (name, value) in [("k0", k0_si), ("mass", m_si), ("hbar", hbar_si)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter(format!("{name} must be positive, got {value}")));
        }
    }
    Ok(NaturalScales {
        length: 1.0 / k0_si,
        time: m_si / (hbar_si * k0_si * k0_si),
    })
}

impl NaturalScales {
    /// Momentum unit `hbar k0` expressed through the scales: `m L / t0`.
    pub fn momentum(&self, m_si: f64) -> f64 {
        m_si * self.length / self.time
    }

    /// Acceleration unit `L / t0^2`.
    pub fn acceleration(&self) -> f64 {
        self.length / (self.time * self.time)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_in_natural_units() {
        let s = natural_units(1.0, 1.0, 1.0).unwrap();
        assert_eq!((s.length, s.time), (1.0, 1.0));
    }

    #[test]
    fn doubled_wavenumber() {
        let s = natural_units(2.0, 1.0, 1.0).unwrap();
        assert!((s.length - 0.5).abs() < 1e-15);
        assert!((s.time - 0.25).abs() < 1e-15);
    }

    #[test]
    fn rubidium_scales() {
        let s = natural_units(1.6e7, RB87_MASS_SI, HBAR_SI).unwrap();
        assert!((s.length - 62.5e-9).abs() < 1e-15);
        let expected = RB87_MASS_SI / (HBAR_SI * 1.6e7 * 1.6e7);
        assert!((s.time - expected).abs() / expected < 1e-14);
        // ~5.35 microseconds
        assert!((s.time - 5.345e-6).abs() < 5e-9);
        // recoil momentum hbar k0 round trips through the scales
        assert!((s.momentum(RB87_MASS_SI) - HBAR_SI * 1.6e7).abs() / (HBAR_SI * 1.6e7) < 1e-12);
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(natural_units(0.0, 1.0, 1.0).is_err());
        assert!(natural_units(1.0, -1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn default_units_are_unity() {
        let p = PhysicalParams::default();
        assert_eq!(p.length_unit(), 1.0);
        assert_eq!(p.time_unit(), 1.0);
        assert_eq!(p.fq_semiclassical(100.0), 1e8);
        assert_eq!(p.resonance_detuning(), 0.5);
    }
}
