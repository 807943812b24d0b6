//! Command-line driver for `mwgrav` scans.
//!
//! Each subcommand reads a [`config::RunConfig`] (JSON, all fields optional),
//! applies scalar flag overrides, validates everything, runs the matching
//! scan and writes CSV or JSON atomically.

pub mod config;
pub mod output;

use std::path::PathBuf;

use serde_json::{json, Value};

use mwgrav::sequences::{pulse_duration_sweep, resolution_sweep, run_sequence, scan, ScanConfig};
use mwgrav::wavepacket::moments;
use mwgrav::Preset;

use config::{Format, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Numerics(String),
    /// Output was written but some rows carry validity flags.
    #[error("{} result(s) failed validity checks", invalid.len())]
    Validity { invalid: Vec<Value> },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerics(_) | CliError::Validity { .. } => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
            CliError::Numerics(_) => "numerics",
            CliError::Validity { .. } => "validity",
        }
    }

    /// Single-line JSON for standard error.
    pub fn to_json(&self) -> Value {
        let mut v = json!({ "error": { "kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string() } });
        if let CliError::Validity { invalid } = self {
            v["error"]["invalid"] = Value::Array(invalid.clone());
        }
        v
    }
}

fn numerics(e: mwgrav::Error) -> CliError {
    CliError::Numerics(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Command {
    Scan(Preset),
    ResolutionSweep,
    PulseDuration,
    StateDump { t_over_tpi: f64, g: Option<f64> },
    Validate,
}

/// Scalar overrides taken from flags.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub preset: Option<Preset>,
    pub sigma: Option<f64>,
    pub t_pi: Option<f64>,
    pub points: Option<usize>,
    pub dg: Option<f64>,
    pub floor: Option<f64>,
    pub n_points: Option<usize>,
    pub z_min: Option<f64>,
    pub z_max: Option<f64>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(p) = self.preset {
            cfg.preset = Some(p);
        }
        if let Some(v) = self.sigma {
            cfg.state.sigma = v;
        }
        if let Some(v) = self.t_pi {
            cfg.timing.t_pi = v;
        }
        if let Some(v) = self.points {
            cfg.timing.points = Some(v);
            cfg.timing.t_over_tpi.clear();
        }
        if let Some(v) = self.dg {
            cfg.fisher.dg = Some(v);
        }
        if let Some(v) = self.floor {
            cfg.fisher.floor = v;
        }
        if let Some(v) = self.n_points {
            cfg.grid.n_points = v;
        }
        if let Some(v) = self.z_min {
            cfg.grid.z_min = v;
        }
        if let Some(v) = self.z_max {
            cfg.grid.z_max = v;
        }
        if let Some(v) = &self.output {
            cfg.output.path = Some(v.clone());
        }
        if let Some(v) = self.format {
            cfg.output.format = Some(v);
        }
    }
}

/// Resolves the preset a command runs with.
fn bind_preset(cmd: Command, cfg: &mut RunConfig) -> Result<(), CliError> {
    match cmd {
        Command::Scan(p) => match cfg.preset {
            Some(q) if q != p => {
                return Err(CliError::Config(format!(
                    "config preset '{}' conflicts with subcommand preset '{}'",
                    q.name(),
                    p.name()
                )))
            }
            _ => cfg.preset = Some(p),
        },
        Command::ResolutionSweep => {
            if cfg.preset() == Preset::Trap {
                return Err(CliError::Config("resolution-sweep supports the kc, kc_chirped and ramsey presets".into()));
            }
        }
        Command::PulseDuration => {
            if !matches!(cfg.preset(), Preset::Kc | Preset::KcChirped) {
                return Err(CliError::Config("pulse-duration supports the kc and kc_chirped presets".into()));
            }
        }
        Command::StateDump { t_over_tpi, g } => {
            if !(t_over_tpi.is_finite() && t_over_tpi >= 0.0) {
                return Err(CliError::Config(format!("--t must be >= 0, got {t_over_tpi}")));
            }
            if g.is_some_and(|g| !g.is_finite()) {
                return Err(CliError::Config("--g must be finite".into()));
            }
        }
        Command::Validate => {}
    }
    cfg.preset = Some(cfg.preset());
    Ok(())
}

/// Initial momentum spread `delta p` in units of `hbar k0`.
fn delta_p(scan: &ScanConfig) -> Result<f64, CliError> {
    let grid = scan.build_grid().map_err(numerics)?;
    let m = moments(&scan.initial_spinor(&grid).map_err(numerics)?, &scan.params).map_err(numerics)?;
    Ok(m.var_p.sqrt() / (scan.params.hbar * scan.params.k0))
}

fn derived(scan: &ScanConfig) -> Result<Value, CliError> {
    let grid = scan.build_grid().map_err(numerics)?;
    let times = scan.times();
    let settings = scan.settings(&times).map_err(|e| CliError::Config(e.to_string()))?;
    let hk = scan.params.hbar * scan.params.k0;
    let mut v = json!({
        "delta_p_over_hbar_k0": delta_p(scan)?,
        "dz": grid.dz(),
        "p_nyquist_over_hbar_k0": scan.params.hbar * grid.k_nyquist() / hk,
        "dg": settings.dg,
        "fisher_unit": scan.scale(),
        "scan_points": times.len(),
        "t_first": times.first(),
        "t_last": times.last(),
    });
    if scan.preset == Preset::Trap {
        v["trap_omega"] = json!(scan.trap_omega());
        v["trap_dt"] = json!(scan.trap_dt());
    }
    Ok(v)
}

/// SI equivalents of the natural-unit quantities of a run.
pub fn si_report(cfg: &RunConfig, scan: &ScanConfig) -> Result<Value, CliError> {
    let s = cfg.si.scales()?;
    let accel = s.acceleration();
    Ok(json!({
        "length_unit_m": s.length,
        "time_unit_s": s.time,
        "acceleration_unit_m_s2": accel,
        "sigma_m": scan.sigma * s.length,
        "t_pi_s": scan.t_pi * s.time,
        "fisher_unit_s4_m2": scan.scale() / (accel * accel),
    }))
}

fn emit(cfg: &RunConfig, contents: &str) -> Result<(), CliError> {
    match &cfg.output.path {
        Some(path) => output::write_atomic(path, contents),
        None => {
            use std::io::Write;
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Io(format!("stdout: {e}")))
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Runs one command. `report` receives optional side-channel JSON (SI
/// conversions) destined for standard error.
pub fn run(cmd: Command, mut cfg: RunConfig, si: bool, report: &mut dyn FnMut(Value)) -> Result<(), CliError> {
    bind_preset(cmd, &mut cfg)?;
    let scan_cfg = cfg.scan_config()?;
    if si && cmd != Command::Validate {
        report(json!({ "si": si_report(&cfg, &scan_cfg)? }));
    }
    match cmd {
        Command::Validate => {
            let mut v = json!({ "config": cfg, "derived": derived(&scan_cfg)? });
            if si {
                v["si"] = si_report(&cfg, &scan_cfg)?;
            }
            emit(&cfg, &to_json(&v)?)
        }
        Command::Scan(_) => {
            let trace = scan(&scan_cfg).map_err(numerics)?;
            let text = match cfg.format() {
                Format::Csv => output::trace_csv(&trace),
                Format::Json => output::trace_json(&trace)?,
            };
            emit(&cfg, &text)?;
            let t_pi = scan_cfg.t_pi;
            let invalid: Vec<Value> = trace
                .rows
                .iter()
                .filter(|r| !r.is_valid())
                .map(|r| {
                    json!({ "t_over_Tpi": r.t / t_pi, "flags": r.diagnostics.flags, "error": r.diagnostics.error })
                })
                .collect();
            validity(invalid)
        }
        Command::ResolutionSweep => {
            let hk = scan_cfg.params.hbar * scan_cfg.params.k0;
            let sigmas: Vec<f64> = cfg.resolution.sigma_p.iter().map(|s| s * hk).collect();
            let sweep = resolution_sweep(&scan_cfg, &sigmas).map_err(numerics)?;
            let text = match cfg.format() {
                Format::Csv => output::resolution_csv(&sweep, delta_p(&scan_cfg)? * hk),
                Format::Json => to_json(&sweep)?,
            };
            emit(&cfg, &text)?;
            validity(
                sweep
                    .rows
                    .iter()
                    .filter(|r| !r.flags.is_empty())
                    .map(|r| json!({ "sigma_p_over_hbar_k0": r.sigma_p / hk, "flags": r.flags }))
                    .collect(),
            )
        }
        Command::PulseDuration => {
            let t_pi = scan_cfg.t_pi;
            let durations: Vec<f64> = cfg.pulse_sweep.delta_t_over_tpi.iter().map(|d| d * t_pi).collect();
            let sweep = pulse_duration_sweep(&scan_cfg, &durations).map_err(numerics)?;
            let text = match cfg.format() {
                Format::Csv => output::pulse_csv(&sweep),
                Format::Json => to_json(&sweep)?,
            };
            emit(&cfg, &text)?;
            validity(
                sweep
                    .rows
                    .iter()
                    .filter(|r| !r.row.is_valid())
                    .map(|r| {
                        json!({
                            "delta_t_over_Tpi": r.delta_t / t_pi,
                            "flags": r.row.diagnostics.flags,
                            "error": r.row.diagnostics.error,
                        })
                    })
                    .collect(),
            )
        }
        Command::StateDump { t_over_tpi, g } => {
            let grid = scan_cfg.build_grid().map_err(numerics)?;
            let initial = scan_cfg.initial_spinor(&grid).map_err(numerics)?;
            let seq = scan_cfg.build_sequence(t_over_tpi * scan_cfg.t_pi).map_err(numerics)?;
            let g = g.unwrap_or(scan_cfg.params.g_offset);
            let outcome = run_sequence(&seq, g, &initial).map_err(numerics)?;
            emit(&cfg, &output::state_table(&outcome.state))
        }
    }
}

fn validity(invalid: Vec<Value>) -> Result<(), CliError> {
    if invalid.is_empty() {
        Ok(())
    } else {
        Err(CliError::Validity { invalid })
    }
}
