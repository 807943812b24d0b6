//! Run configuration: the JSON schema read by every subcommand.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use mwgrav::fisher::{Basis, PROBABILITY_FLOOR};
use mwgrav::grid::GridSpec;
use mwgrav::sequences::{FreeMethod, InitialState, PulseMode, ScanConfig};
use mwgrav::units::{natural_units, NaturalScales, HBAR_SI, RB87_MASS_SI};
use mwgrav::{PhysicalParams, Preset};

use crate::CliError;

/// Effective two-photon wavenumber of counter-propagating 780 nm beams, in 1/m.
pub const RB87_K0_SI: f64 = 2.0 * 2.0 * std::f64::consts::PI / 780.241e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(format!("unknown format '{other}' (expected csv or json)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateConfig {
    /// Defaults to the preset's own initial state.
    pub kind: Option<InitialState>,
    pub sigma: f64,
}

impl Default for StateConfig {
    fn default() -> Self {
        Self { kind: None, sigma: 10.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    pub t_pi: f64,
    /// Explicit evaluation times in units of `t_pi`.
    pub t_over_tpi: Vec<f64>,
    /// Evenly spaced points over `[0, 2 t_pi]`; ignored when times are given.
    pub points: Option<usize>,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            t_pi: 100.0,
            t_over_tpi: Vec::new(),
            points: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FisherConfig {
    pub dg: Option<f64>,
    pub floor: f64,
    pub bases: Vec<Basis>,
    pub per_state: bool,
}

impl Default for FisherConfig {
    fn default() -> Self {
        Self {
            dg: None,
            floor: PROBABILITY_FLOOR,
            bases: vec![Basis::Population, Basis::Position, Basis::Momentum],
            per_state: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolutionConfig {
    /// Momentum resolutions in units of `hbar k0`.
    pub sigma_p: Vec<f64>,
}

impl Default for ResolutionConfig {
    fn default() -> Self {
        Self {
            sigma_p: vec![0.0, 0.005, 0.01, 0.02, 0.035, 0.05, 0.07, 0.1, 0.2, 0.35, 0.5, 1.0, 1.5, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSweepConfig {
    /// Pulse durations in units of `t_pi`.
    pub delta_t_over_tpi: Vec<f64>,
}

impl Default for PulseSweepConfig {
    fn default() -> Self {
        Self {
            delta_t_over_tpi: vec![1e-3, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapConfig {
    pub omega: Option<f64>,
    pub dt: Option<f64>,
}

/// SI constants used only for `--si` reporting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SiConfig {
    pub k0: f64,
    pub mass: f64,
}

impl Default for SiConfig {
    fn default() -> Self {
        Self {
            k0: RB87_K0_SI,
            mass: RB87_MASS_SI,
        }
    }
}

impl SiConfig {
    pub fn scales(&self) -> Result<NaturalScales, CliError> {
        natural_units(self.k0, self.mass, HBAR_SI).map_err(|e| CliError::Config(format!("si: {e}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Destination file; standard output when absent.
    pub path: Option<PathBuf>,
    /// Defaults to the file extension, then CSV.
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: Option<Preset>,
    pub physical: PhysicalParams,
    pub grid: GridSpec,
    pub state: StateConfig,
    pub timing: TimingConfig,
    pub fisher: FisherConfig,
    pub resolution: ResolutionConfig,
    pub pulses: PulseMode,
    pub pulse_sweep: PulseSweepConfig,
    pub trap: TrapConfig,
    pub free_method: FreeMethod,
    pub si: SiConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or(Preset::Kc)
    }

    pub fn format(&self) -> Format {
        self.output.format.unwrap_or_else(|| {
            match self.output.path.as_ref().and_then(|p| p.extension()).and_then(|e| e.to_str()) {
                Some("json") => Format::Json,
                _ => Format::Csv,
            }
        })
    }

    /// Checks every field and produces the scan configuration.
    pub fn scan_config(&self) -> Result<ScanConfig, CliError> {
        let t_pi = self.timing.t_pi;
        let times = if !self.timing.t_over_tpi.is_empty() {
            self.timing.t_over_tpi.iter().map(|x| x * t_pi).collect()
        } else if let Some(n) = self.timing.points {
            if n == 0 {
                return Err(CliError::Config("timing.points must be at least 1".into()));
            }
            let step = if n > 1 { 2.0 * t_pi / (n - 1) as f64 } else { 0.0 };
            (0..n).map(|i| i as f64 * step).collect()
        } else {
            Vec::new()
        };
        let cfg = ScanConfig {
            preset: self.preset(),
            params: self.physical,
            grid: self.grid,
            initial: self.state.kind,
            sigma: self.state.sigma,
            t_pi,
            times,
            bases: self.fisher.bases.clone(),
            per_state: self.fisher.per_state,
            dg: self.fisher.dg,
            floor: self.fisher.floor,
            free_method: self.free_method,
            pulses: self.pulses,
            trap_omega: self.trap.omega,
            trap_dt: self.trap.dt,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let grid = cfg.build_grid().map_err(|e| CliError::Config(e.to_string()))?;
        cfg.initial_spinor(&grid).map_err(|e| CliError::Config(e.to_string()))?;
        for &s in &self.resolution.sigma_p {
            if !(s.is_finite() && s >= 0.0) {
                return Err(CliError::Config(format!("resolution.sigma_p entries must be >= 0, got {s}")));
            }
        }
        for &d in &self.pulse_sweep.delta_t_over_tpi {
            if !(d.is_finite() && d > 0.0) {
                return Err(CliError::Config(format!("pulse_sweep.delta_t_over_tpi entries must be > 0, got {d}")));
            }
        }
        self.si.scales()?;
        Ok(cfg)
    }
}
