//! Interferometer sequences, experiment presets and Fisher-information scans.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{
    cfi_from_samples, convolve_resolution, default_dg, qfi_from_samples, qfi_kc_analytic, Basis, FisherEstimate,
    FisherSettings, StencilSamples, PROBABILITY_FLOOR,
};
use crate::grid::{Grid, GridSpec, EDGE_LIMIT};
use crate::propagator::{
    apply_ug_analytic, evolve_hbs, evolve_split_step, split_duration, FinitePulse, PotentialSpec, SplitStepper,
    NORM_DRIFT_LIMIT, PULSE_STEPS,
};
use crate::pulses::{apply_final_bs, apply_momentum_reunite, apply_pulse, PulseSpec};
use crate::units::PhysicalParams;
use crate::wavepacket::{chirped_gaussian, gaussian, measure_distribution, moments, Moments, Spinor};

/// Relative slack allowed when checking `F_C <= F_Q` on numeric values.
pub const QCRB_TOLERANCE: f64 = 2e-2;

/// How free-flight segments are propagated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeMethod {
    /// Closed-form propagator for `p^2/2m + m g z`.
    #[default]
    Exact,
    /// Strang split-step with the given step.
    SplitStep { dt: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Event {
    /// Free flight; `gravity` selects whether `m g z` acts.
    Free { duration: f64, gravity: bool },
    Pulse { pulse: PulseSpec },
    FinitePulse { pulse: FinitePulse },
    /// Harmonic trap centred at `z0`, integrated with step `dt`.
    Trap { omega: f64, z0: f64, duration: f64, dt: f64 },
    /// Removes the momentum kick carried by `|b>`.
    Reunite,
    /// Final internal-state beam splitter.
    FinalBs,
    /// Gravity stays off for all later events.
    GravityOff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub events: Vec<Event>,
    pub params: PhysicalParams,
    pub free_method: FreeMethod,
}

impl SequenceSpec {
    pub fn new(params: PhysicalParams) -> Self {
        Self {
            events: Vec::new(),
            params,
            free_method: FreeMethod::Exact,
        }
    }

    pub fn with_free_method(mut self, method: FreeMethod) -> Self {
        self.free_method = method;
        self
    }

    pub fn push(&mut self, event: Event) -> &mut Self {
        self.events.push(event);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if let FreeMethod::SplitStep { dt } = self.free_method {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(Error::InvalidParameter(format!("free-flight dt must be positive, got {dt}")));
            }
        }
        let check = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        for event in &self.events {
            match *event {
                Event::Free { duration, .. } => check("free duration", duration)?,
                Event::FinitePulse { pulse } => check("pulse duration", pulse.duration)?,
                Event::Trap { omega, duration, dt, .. } => {
                    check("trap duration", duration)?;
                    if !(omega > 0.0 && omega.is_finite()) {
                        return Err(Error::InvalidParameter(format!("trap frequency must be positive, got {omega}")));
                    }
                    if !(dt > 0.0 && dt.is_finite()) {
                        return Err(Error::InvalidParameter(format!("trap dt must be positive, got {dt}")));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Wall-clock length of the sequence.
    pub fn total_duration(&self) -> f64 {
        self.events
            .iter()
            .map(|e| match *e {
                Event::Free { duration, .. } | Event::Trap { duration, .. } => duration,
                Event::FinitePulse { pulse } => pulse.duration,
                _ => 0.0,
            })
            .sum()
    }

    /// Total time during which gravity acts.
    pub fn gravity_duration(&self) -> f64 {
        let mut on = true;
        let mut total = 0.0;
        for e in &self.events {
            match *e {
                Event::GravityOff => on = false,
                Event::Free { duration, gravity } if gravity && on => total += duration,
                Event::Trap { duration, .. } if on => total += duration,
                _ => {}
            }
        }
        total
    }
}

/// Free times `(T1, T2)` of the Kasevich-Chu sequence truncated at `t`.
pub fn kc_times(t_pi: f64, t: f64) -> (f64, f64) {
    if t <= t_pi {
        (t, 0.0)
    } else {
        (t_pi, t - t_pi)
    }
}

fn check_time(name: &str, t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be finite and >= 0, got {t}")))
    }
}

/// Kasevich-Chu events up to (not including) the final splitter.
fn kc_body(params: &PhysicalParams, t_pi: f64, t: f64) -> Result<SequenceSpec> {
    check_time("t_pi", t_pi)?;
    check_time("t", t)?;
    let (t1, t2) = kc_times(t_pi, t);
    let mut seq = SequenceSpec::new(*params);
    seq.push(Event::Pulse { pulse: PulseSpec::beam_splitter(0.0) })
        .push(Event::Free { duration: t1, gravity: true });
    if t > t_pi {
        seq.push(Event::Pulse { pulse: PulseSpec::mirror(0.0) })
            .push(Event::Free { duration: t2, gravity: true });
    }
    Ok(seq)
}

/// pi/2 - T1 - pi - T2 - pi/2 with `T1 = min(t, t_pi)`; the mirror is only
/// present for `t > t_pi`. The closing splitter has phase pi/2.
pub fn build_kc(params: &PhysicalParams, t_pi: f64, t: f64) -> Result<SequenceSpec> {
    let mut seq = kc_body(params, t_pi, t)?;
    seq.push(Event::Pulse { pulse: PulseSpec::beam_splitter(FRAC_PI_2) });
    Ok(seq)
}

/// pi/2 - t - pi/2 without a mirror.
pub fn build_ramsey(params: &PhysicalParams, t: f64) -> Result<SequenceSpec> {
    check_time("t", t)?;
    let mut seq = SequenceSpec::new(*params);
    seq.push(Event::Pulse { pulse: PulseSpec::beam_splitter(0.0) })
        .push(Event::Free { duration: t, gravity: true })
        .push(Event::Pulse { pulse: PulseSpec::beam_splitter(FRAC_PI_2) });
    Ok(seq)
}

/// Kasevich-Chu to `2 t_pi` without its last splitter, followed by the
/// momentum reunion, gravity switched off, a harmonic trap centred at the
/// output position `hbar k0 t_pi / m` for `t - 2 t_pi`, and a final beam
/// splitter. For `t < 2 t_pi` this is [`build_kc`].
pub fn build_trap_scheme(params: &PhysicalParams, t_pi: f64, omega: f64, t: f64, dt: f64) -> Result<SequenceSpec> {
    if t < 2.0 * t_pi {
        return build_kc(params, t_pi, t);
    }
    let mut seq = trap_prefix(params, t_pi)?;
    seq.push(Event::Trap {
        omega,
        z0: trap_centre(params, t_pi),
        duration: t - 2.0 * t_pi,
        dt,
    })
    .push(Event::FinalBs);
    seq.validate()?;
    Ok(seq)
}

fn trap_centre(params: &PhysicalParams, t_pi: f64) -> f64 {
    params.recoil_velocity() * t_pi
}

fn trap_prefix(params: &PhysicalParams, t_pi: f64) -> Result<SequenceSpec> {
    let mut seq = kc_body(params, t_pi, 2.0 * t_pi)?;
    seq.push(Event::Reunite).push(Event::GravityOff);
    Ok(seq)
}

/// Kasevich-Chu truncated at `t` with pulses of finite duration: splitters
/// last `delta_t`, the mirror `2 delta_t`, all with Rabi frequency
/// `pi / (2 delta_t)`. Free times are unchanged, so the sequence is
/// `4 delta_t` longer than its instantaneous counterpart.
pub fn build_kc_finite(params: &PhysicalParams, t_pi: f64, t: f64, delta_t: f64) -> Result<SequenceSpec> {
    check_time("delta_t", delta_t)?;
    if delta_t == 0.0 {
        return build_kc(params, t_pi, t);
    }
    let finite = |area: f64, phi: f64, duration: f64| Event::FinitePulse {
        pulse: FinitePulse {
            area,
            phi,
            duration,
            detuning: None,
        },
    };
    let mut seq = kc_body(params, t_pi, t)?;
    for event in seq.events.iter_mut() {
        if let Event::Pulse { pulse } = *event {
            let duration = if pulse.theta > FRAC_PI_2 { 2.0 * delta_t } else { delta_t };
            *event = finite(pulse.theta, pulse.phi, duration);
        }
    }
    seq.push(finite(FRAC_PI_2, FRAC_PI_2, delta_t));
    Ok(seq)
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub state: Spinor,
    /// Largest edge-band norm fraction seen after any event.
    pub edge_max: f64,
    pub norm_drift: f64,
}

/// Executes the events in order at acceleration `g`.
pub fn run_sequence(seq: &SequenceSpec, g: f64, initial: &Spinor) -> Result<RunOutcome> {
    seq.validate()?;
    let params = &seq.params;
    let initial_norm = initial.norm_sqr();
    let mut state = initial.clone();
    let mut gravity_on = true;
    let mut edge_max = state.edge_fraction();
    for event in &seq.events {
        state = match *event {
            Event::Free { duration, gravity } => {
                let g_eff = if gravity && gravity_on { g } else { 0.0 };
                match seq.free_method {
                    FreeMethod::Exact => apply_ug_analytic(&state, params, duration, g_eff),
                    FreeMethod::SplitStep { dt } => {
                        evolve_split_step(&state, params, duration, &PotentialSpec::gravity(g_eff), dt)?
                    }
                }
            }
            Event::Pulse { pulse } => apply_pulse(&state, params, pulse),
            Event::FinitePulse { pulse } => {
                evolve_hbs(&state, params, &pulse, pulse.duration / PULSE_STEPS as f64)?
            }
            Event::Trap { omega, z0, duration, dt } => {
                let pot = PotentialSpec::harmonic(omega, z0)?.with_gravity(g, gravity_on);
                evolve_split_step(&state, params, duration, &pot, dt)?
            }
            Event::Reunite => apply_momentum_reunite(&state, params),
            Event::FinalBs => apply_final_bs(&state),
            Event::GravityOff => {
                gravity_on = false;
                state
            }
        };
        let edge = state.edge_fraction();
        edge_max = edge_max.max(edge);
        if edge > EDGE_LIMIT {
            return Err(Error::EdgeViolation {
                fraction: edge,
                limit: EDGE_LIMIT,
            });
        }
    }
    let norm_drift = (state.norm_sqr() - initial_norm).abs();
    if norm_drift > NORM_DRIFT_LIMIT {
        return Err(Error::NormDrift { drift: norm_drift });
    }
    Ok(RunOutcome {
        state,
        edge_max,
        norm_drift,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Kc,
    KcChirped,
    Ramsey,
    Trap,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Kc => "kc",
            Preset::KcChirped => "kc_chirped",
            Preset::Ramsey => "ramsey",
            Preset::Trap => "trap",
        }
    }

    pub fn default_initial(&self) -> InitialState {
        match self {
            Preset::KcChirped => InitialState::Chirped,
            _ => InitialState::Gaussian,
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "kc" => Ok(Preset::Kc),
            "kc_chirped" => Ok(Preset::KcChirped),
            "ramsey" => Ok(Preset::Ramsey),
            "trap" => Ok(Preset::Trap),
            other => Err(Error::InvalidParameter(format!("unknown preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Gaussian,
    Chirped,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseMode {
    #[default]
    Instantaneous,
    Finite { delta_t: f64 },
}

/// Everything needed to reproduce a scan. Times are absolute (units of `t0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    pub preset: Preset,
    pub params: PhysicalParams,
    pub grid: GridSpec,
    /// Overrides the preset's initial state.
    pub initial: Option<InitialState>,
    pub sigma: f64,
    pub t_pi: f64,
    /// Evaluation times; empty selects the preset's default sampling.
    pub times: Vec<f64>,
    pub bases: Vec<Basis>,
    /// Resolve position and momentum outcomes by internal state.
    pub per_state: bool,
    /// Finite-difference step; `None` derives it from the longest gravity time.
    pub dg: Option<f64>,
    pub floor: f64,
    pub free_method: FreeMethod,
    pub pulses: PulseMode,
    pub trap_omega: Option<f64>,
    pub trap_dt: Option<f64>,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            preset: Preset::Kc,
            params: PhysicalParams::default(),
            grid: GridSpec::default(),
            initial: None,
            sigma: 10.0,
            t_pi: 100.0,
            times: Vec::new(),
            bases: vec![Basis::Population, Basis::Position, Basis::Momentum],
            per_state: true,
            dg: None,
            floor: PROBABILITY_FLOOR,
            free_method: FreeMethod::Exact,
            pulses: PulseMode::Instantaneous,
            trap_omega: None,
            trap_dt: None,
        }
    }
}

/// Samples per trap period in the default trap window.
pub const TRAP_WINDOW_POINTS: usize = 400;
/// Intervals over `[0, 2 t_pi]` in the default scan.
pub const SCAN_INTERVALS: usize = 200;

impl ScanConfig {
    pub fn for_preset(preset: Preset) -> Self {
        Self {
            preset,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.grid.build()?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("sigma", self.sigma)?;
        positive("t_pi", self.t_pi)?;
        if let Some(dg) = self.dg {
            positive("dg", dg)?;
        }
        if let Some(w) = self.trap_omega {
            positive("trap_omega", w)?;
        }
        if let Some(dt) = self.trap_dt {
            positive("trap_dt", dt)?;
        }
        if !(self.floor.is_finite() && self.floor >= 0.0 && self.floor < 1.0) {
            return Err(Error::InvalidParameter(format!("floor must lie in [0, 1), got {}", self.floor)));
        }
        if let FreeMethod::SplitStep { dt } = self.free_method {
            positive("free dt", dt)?;
        }
        if let PulseMode::Finite { delta_t } = self.pulses {
            positive("pulse duration", delta_t)?;
            if self.preset != Preset::Kc && self.preset != Preset::KcChirped {
                return Err(Error::Unsupported("finite pulses are available for the kc presets".into()));
            }
        }
        for &t in &self.times {
            check_time("scan time", t)?;
        }
        Ok(())
    }

    pub fn initial_state(&self) -> InitialState {
        self.initial.unwrap_or_else(|| self.preset.default_initial())
    }

    pub fn build_grid(&self) -> Result<Arc<Grid>> {
        Ok(self.grid.build()?.shared())
    }

    pub fn initial_spinor(&self, grid: &Arc<Grid>) -> Result<Spinor> {
        match self.initial_state() {
            InitialState::Gaussian => gaussian(grid, &self.params, self.sigma, 0.0, 0.0),
            InitialState::Chirped => chirped_gaussian(grid, self.sigma),
        }
    }

    /// Reporting unit `k0^2 t_pi^4`.
    pub fn scale(&self) -> f64 {
        self.params.fq_semiclassical(self.t_pi)
    }

    pub fn trap_omega(&self) -> f64 {
        self.trap_omega.unwrap_or(3.0 * PI / (2.0 * self.t_pi))
    }

    /// Trap step: the window spacing `P/400` split into the fewest equal
    /// substeps no longer than `0.01/omega`.
    pub fn trap_dt(&self) -> f64 {
        if let Some(dt) = self.trap_dt {
            return dt;
        }
        let omega = self.trap_omega();
        let spacing = 2.0 * PI / omega / TRAP_WINDOW_POINTS as f64;
        let sub = (spacing / (0.01 / omega)).ceil().max(1.0);
        spacing / sub
    }

    pub fn times(&self) -> Vec<f64> {
        if !self.times.is_empty() {
            return self.times.clone();
        }
        let step = 2.0 * self.t_pi / SCAN_INTERVALS as f64;
        match self.preset {
            Preset::Trap => {
                let period = 2.0 * PI / self.trap_omega();
                let mut t: Vec<f64> = (0..SCAN_INTERVALS).map(|i| i as f64 * step).collect();
                t.extend(
                    (0..=TRAP_WINDOW_POINTS)
                        .map(|i| 2.0 * self.t_pi + i as f64 * period / TRAP_WINDOW_POINTS as f64),
                );
                t
            }
            _ => (0..=SCAN_INTERVALS).map(|i| i as f64 * step).collect(),
        }
    }

    pub fn build_sequence(&self, t: f64) -> Result<SequenceSpec> {
        let seq = match (self.preset, self.pulses) {
            (Preset::Kc | Preset::KcChirped, PulseMode::Instantaneous) => build_kc(&self.params, self.t_pi, t)?,
            (Preset::Kc | Preset::KcChirped, PulseMode::Finite { delta_t }) => {
                build_kc_finite(&self.params, self.t_pi, t, delta_t)?
            }
            (Preset::Ramsey, _) => build_ramsey(&self.params, t)?,
            (Preset::Trap, _) => build_trap_scheme(&self.params, self.t_pi, self.trap_omega(), t, self.trap_dt())?,
        };
        Ok(seq.with_free_method(self.free_method))
    }

    /// Closed-form QFI at `t` for the preset, from the initial moments.
    pub fn analytic_qfi(&self, t: f64, initial: &Moments) -> f64 {
        let (t1, t2) = match self.preset {
            Preset::Ramsey => (t, 0.0),
            Preset::Trap => kc_times(self.t_pi, t.min(2.0 * self.t_pi)),
            _ => kc_times(self.t_pi, t),
        };
        qfi_kc_analytic(t1, t2, initial, &self.params)
    }

    /// Finite-difference settings for a set of scan times.
    pub fn settings(&self, times: &[f64]) -> Result<FisherSettings> {
        let dg = match self.dg {
            Some(dg) => dg,
            None => {
                let mut t_ref = 0.0_f64;
                for &t in times {
                    t_ref = t_ref.max(self.build_sequence(t)?.gravity_duration());
                }
                if t_ref <= 0.0 {
                    t_ref = self.t_pi;
                }
                default_dg(&self.params, t_ref)
            }
        };
        let mut settings = FisherSettings::new(self.params.g_offset, dg, self.scale())?;
        settings.floor = self.floor;
        Ok(settings)
    }
}

/// Column identifiers of a trace, in output order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Column {
    FqNumeric,
    FqAnalytic,
    FcPop,
    FcPos,
    FcMom,
}

impl Column {
    pub const ALL: [Column; 5] = [
        Column::FqNumeric,
        Column::FqAnalytic,
        Column::FcPop,
        Column::FcPos,
        Column::FcMom,
    ];

    pub fn header(&self) -> &'static str {
        match self {
            Column::FqNumeric => "FQ_numeric",
            Column::FqAnalytic => "FQ_analytic",
            Column::FcPop => "FC_pop",
            Column::FcPos => "FC_pos",
            Column::FcMom => "FC_mom",
        }
    }

    fn for_basis(basis: Basis) -> Self {
        match basis {
            Basis::Population => Column::FcPop,
            Basis::Position => Column::FcPos,
            Basis::Momentum => Column::FcMom,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowDiagnostics {
    /// Step-refinement relative change per column header.
    pub convergence: BTreeMap<String, f64>,
    /// Probability-floor sensitivity per column header.
    pub floor_sensitivity: BTreeMap<String, f64>,
    pub edge_max: f64,
    pub norm_drift: f64,
    pub flags: Vec<String>,
    /// Set when the row could not be evaluated.
    pub error: Option<String>,
}

/// One scan time. Fisher values are in units of `k0^2 t_pi^4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub fq_numeric: Option<f64>,
    pub fq_analytic: Option<f64>,
    pub fc_pop: Option<f64>,
    pub fc_pos: Option<f64>,
    pub fc_mom: Option<f64>,
    pub diagnostics: RowDiagnostics,
}

impl TraceRow {
    fn empty(t: f64) -> Self {
        Self {
            t,
            fq_numeric: None,
            fq_analytic: None,
            fc_pop: None,
            fc_pos: None,
            fc_mom: None,
            diagnostics: RowDiagnostics::default(),
        }
    }

    pub fn get(&self, column: Column) -> Option<f64> {
        match column {
            Column::FqNumeric => self.fq_numeric,
            Column::FqAnalytic => self.fq_analytic,
            Column::FcPop => self.fc_pop,
            Column::FcPos => self.fc_pos,
            Column::FcMom => self.fc_mom,
        }
    }

    fn set(&mut self, column: Column, value: f64) {
        let slot = match column {
            Column::FqNumeric => &mut self.fq_numeric,
            Column::FqAnalytic => &mut self.fq_analytic,
            Column::FcPop => &mut self.fc_pop,
            Column::FcPos => &mut self.fc_pos,
            Column::FcMom => &mut self.fc_mom,
        };
        *slot = Some(value);
    }

    pub fn is_valid(&self) -> bool {
        self.diagnostics.error.is_none() && self.diagnostics.flags.is_empty()
    }

    fn record(&mut self, column: Column, est: &FisherEstimate, scale: f64) {
        self.set(column, est.value / scale);
        if let Some(c) = est.convergence_error {
            self.diagnostics.convergence.insert(column.header().into(), c);
        }
        if let Some(f) = est.floor_sensitivity {
            self.diagnostics.floor_sensitivity.insert(column.header().into(), f);
        }
        self.diagnostics.flags.extend(est.flags.iter().cloned());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceMetadata {
    pub preset: String,
    pub config: ScanConfig,
    pub dg: f64,
    pub floor: f64,
    /// Value of the reporting unit `k0^2 t_pi^4`.
    pub unit: f64,
    pub dz: f64,
    pub free_dt: Option<f64>,
    pub trap_dt: Option<f64>,
    pub pulse_steps: usize,
    pub initial_moments: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherTrace {
    pub metadata: TraceMetadata,
    pub rows: Vec<TraceRow>,
}

impl FisherTrace {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn column(&self, column: Column) -> Vec<Option<f64>> {
        self.rows.iter().map(|r| r.get(column)).collect()
    }

    pub fn is_valid(&self) -> bool {
        self.rows.iter().all(TraceRow::is_valid)
    }

    pub fn edge_max(&self) -> f64 {
        self.rows.iter().fold(0.0, |m, r| m.max(r.diagnostics.edge_max))
    }

    /// Row closest to `t`.
    pub fn row_at(&self, t: f64) -> Option<&TraceRow> {
        self.rows
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
    }
}

/// Shared, immutable inputs of a scan.
struct ScanContext {
    cfg: ScanConfig,
    initial: Spinor,
    moments: Moments,
    settings: FisherSettings,
    scale: f64,
}

impl ScanContext {
    fn new(cfg: &ScanConfig, times: &[f64]) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.build_grid()?;
        let initial = cfg.initial_spinor(&grid)?;
        let moments = moments(&initial, &cfg.params)?;
        Ok(Self {
            cfg: cfg.clone(),
            initial,
            moments,
            settings: cfg.settings(times)?,
            scale: cfg.scale(),
        })
    }

    fn metadata(&self) -> TraceMetadata {
        TraceMetadata {
            preset: self.cfg.preset.name().into(),
            config: self.cfg.clone(),
            dg: self.settings.dg,
            floor: self.settings.floor,
            unit: self.scale,
            dz: self.initial.grid().dz(),
            free_dt: match self.cfg.free_method {
                FreeMethod::Exact => None,
                FreeMethod::SplitStep { dt } => Some(dt),
            },
            trap_dt: (self.cfg.preset == Preset::Trap).then(|| self.cfg.trap_dt()),
            pulse_steps: PULSE_STEPS,
            initial_moments: self.moments,
        }
    }

    fn stencil_runs(&self, seq: &SequenceSpec) -> Result<StencilSamples<RunOutcome>> {
        crate::fisher::evaluate_stencil(|g| run_sequence(seq, g, &self.initial), self.settings)
    }

    /// Fisher columns of one row from the output states at the stencil points.
    fn fill_row(&self, row: &mut TraceRow, states: &StencilSamples<Spinor>) -> Result<()> {
        let params = &self.cfg.params;
        let qfi = qfi_from_samples(states)?;
        row.record(Column::FqNumeric, &qfi, self.scale);
        row.fq_analytic = Some(self.cfg.analytic_qfi(row.t, &self.moments) / self.scale);
        for &basis in &self.cfg.bases {
            let per_state = self.cfg.per_state && basis != Basis::Population;
            let dists = states.try_map(|s| measure_distribution(s, params, basis, per_state))?;
            let est = cfi_from_samples(&dists)?;
            let column = Column::for_basis(basis);
            row.record(column, &est, self.scale);
            if est.value > qfi.value * (1.0 + QCRB_TOLERANCE) + 1e-6 * self.scale {
                row.diagnostics.flags.push(format!(
                    "{} exceeds the quantum bound: {:.6e} > {:.6e}",
                    column.header(),
                    est.value / self.scale,
                    qfi.value / self.scale
                ));
            }
        }
        Ok(())
    }

    fn row_direct(&self, t: f64) -> TraceRow {
        let mut row = TraceRow::empty(t);
        let result = self.cfg.build_sequence(t).and_then(|seq| {
            let runs = self.stencil_runs(&seq)?;
            row.diagnostics.edge_max = stencil_max(&runs, |r| r.edge_max);
            row.diagnostics.norm_drift = stencil_max(&runs, |r| r.norm_drift);
            let states = runs.try_map(|r| Ok(r.state.clone()))?;
            self.fill_row(&mut row, &states)
        });
        if let Err(e) = result {
            row.diagnostics.error = Some(e.to_string());
        }
        row
    }

    /// Trap-window rows (`t >= 2 t_pi`) from one trajectory per stencil
    /// point; states are bit-identical to independent runs.
    fn trap_window(&self, times: &[(usize, f64)]) -> Vec<(usize, TraceRow)> {
        let cfg = &self.cfg;
        let params = &cfg.params;
        let t_start = 2.0 * cfg.t_pi;
        let h = cfg.trap_dt();
        let fail = |e: &Error| {
            times
                .iter()
                .map(|&(i, t)| {
                    let mut row = TraceRow::empty(t);
                    row.diagnostics.error = Some(e.to_string());
                    (i, row)
                })
                .collect::<Vec<_>>()
        };
        let prepared = (|| {
            let prefix = trap_prefix(params, cfg.t_pi)?.with_free_method(cfg.free_method);
            let runs = self.stencil_runs(&prefix)?;
            let pot = PotentialSpec::harmonic(cfg.trap_omega(), trap_centre(params, cfg.t_pi))?;
            let steppers = runs.try_map(|r| SplitStepper::new(&r.state, params, &pot, h))?;
            Ok::<_, Error>((runs, steppers, pot))
        })();
        let (runs, steppers, pot) = match prepared {
            Ok(v) => v,
            Err(e) => return fail(&e),
        };
        let prefix_edge = stencil_max(&runs, |r| r.edge_max);
        let prefix_drift = stencil_max(&runs, |r| r.norm_drift);
        let mut steppers = [
            steppers.center,
            steppers.plus,
            steppers.minus,
            steppers.plus_half,
            steppers.minus_half,
        ];
        let mut order: Vec<(usize, f64)> = times.to_vec();
        order.sort_by(|a, b| a.1.total_cmp(&b.1));
        let mut out = Vec::with_capacity(order.len());
        for (idx, t) in order {
            let mut row = TraceRow::empty(t);
            let (n, rest) = split_duration(t - t_start, h);
            steppers.par_iter_mut().for_each(|s| s.advance_to(n));
            let result = (|| {
                let snaps: Vec<Spinor> = steppers
                    .par_iter()
                    .map(|s| {
                        let mut snap = s.snapshot()?;
                        if rest > 0.0 {
                            snap = evolve_split_step(&snap, params, rest, &pot, rest)?;
                        }
                        Ok(apply_final_bs(&snap))
                    })
                    .collect::<Result<_>>()?;
                let mut it = snaps.into_iter();
                let mut next = || it.next().expect("five stencil states");
                let states = StencilSamples {
                    settings: self.settings,
                    center: next(),
                    plus: next(),
                    minus: next(),
                    plus_half: next(),
                    minus_half: next(),
                };
                row.diagnostics.edge_max = prefix_edge.max(stencil_max(&states, Spinor::edge_fraction));
                row.diagnostics.norm_drift = prefix_drift.max(stencil_max(&states, |s| (s.norm_sqr() - 1.0).abs()));
                self.fill_row(&mut row, &states)
            })();
            if let Err(e) = result {
                row.diagnostics.error = Some(e.to_string());
            }
            out.push((idx, row));
        }
        out
    }
}

fn stencil_max<T>(s: &StencilSamples<T>, f: impl Fn(&T) -> f64) -> f64 {
    [&s.center, &s.plus, &s.minus, &s.plus_half, &s.minus_half]
        .into_iter()
        .map(f)
        .fold(0.0, f64::max)
}

/// Evaluates every row of the preset over `cfg.times()`. Rows are independent
/// and computed in parallel; a failed row carries its diagnostic instead of
/// values.
pub fn scan(cfg: &ScanConfig) -> Result<FisherTrace> {
    let times = cfg.times();
    let ctx = ScanContext::new(cfg, &times)?;
    let window_start = 2.0 * cfg.t_pi;
    let (window, direct): (Vec<_>, Vec<_>) = times
        .iter()
        .copied()
        .enumerate()
        .partition(|&(_, t)| cfg.preset == Preset::Trap && t >= window_start);
    let mut rows: Vec<(usize, TraceRow)> = direct.par_iter().map(|&(i, t)| (i, ctx.row_direct(t))).collect();
    if !window.is_empty() {
        rows.extend(ctx.trap_window(&window));
    }
    rows.sort_by_key(|(i, _)| *i);
    Ok(FisherTrace {
        metadata: ctx.metadata(),
        rows: rows.into_iter().map(|(_, r)| r).collect(),
    })
}

/// One row evaluated by running the full sequence at each stencil point.
/// `scan` produces identical values.
pub fn scan_row(cfg: &ScanConfig, t: f64) -> Result<TraceRow> {
    let ctx = ScanContext::new(cfg, &cfg.times())?;
    Ok(ctx.row_direct(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionRow {
    pub sigma_p: f64,
    /// Per-state momentum CFI in units of `k0^2 t_pi^4`.
    pub fc_mom: f64,
    pub convergence_error: f64,
    pub floor_sensitivity: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolutionSweep {
    pub metadata: TraceMetadata,
    pub t: f64,
    pub rows: Vec<ResolutionRow>,
}

/// Momentum CFI at `2 t_pi` after blurring each internal-state momentum
/// distribution with a Gaussian of width `sigma_p`.
pub fn resolution_sweep(cfg: &ScanConfig, sigma_p_values: &[f64]) -> Result<ResolutionSweep> {
    if cfg.preset == Preset::Trap {
        return Err(Error::Unsupported("resolution sweeps use the kc or ramsey presets".into()));
    }
    let t = 2.0 * cfg.t_pi;
    let ctx = ScanContext::new(cfg, &[t])?;
    let seq = cfg.build_sequence(t)?;
    let runs = ctx.stencil_runs(&seq)?;
    let dists = runs.try_map(|r| measure_distribution(&r.state, &cfg.params, Basis::Momentum, true))?;
    let rows = sigma_p_values
        .par_iter()
        .map(|&sigma_p| {
            let blurred = dists.try_map(|d| convolve_resolution(d, sigma_p))?;
            let est = cfi_from_samples(&blurred)?;
            Ok(ResolutionRow {
                sigma_p,
                fc_mom: est.value / ctx.scale,
                convergence_error: est.convergence_error.unwrap_or(0.0),
                floor_sensitivity: est.floor_sensitivity.unwrap_or(0.0),
                flags: est.flags,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ResolutionSweep {
        metadata: ctx.metadata(),
        t,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseDurationRow {
    pub delta_t: f64,
    /// From the start of the first pulse to the end of the last.
    pub sequence_time: f64,
    pub row: TraceRow,
    /// Largest relative deviation of any Fisher column from the
    /// instantaneous-pulse reference.
    pub max_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseDurationSweep {
    pub metadata: TraceMetadata,
    pub reference: TraceRow,
    pub rows: Vec<PulseDurationRow>,
}

fn max_relative_deviation(row: &TraceRow, reference: &TraceRow) -> f64 {
    [Column::FqNumeric, Column::FcPop, Column::FcPos, Column::FcMom]
        .iter()
        .filter_map(|&c| match (row.get(c), reference.get(c)) {
            (Some(a), Some(b)) if b.abs() > 0.0 => Some((a - b).abs() / b.abs()),
            _ => None,
        })
        .fold(0.0, f64::max)
}

/// Symmetric Kasevich-Chu point (`2 t_pi` of free flight) with finite pulses
/// of each duration, compared with instantaneous pulses.
pub fn pulse_duration_sweep(cfg: &ScanConfig, delta_t_values: &[f64]) -> Result<PulseDurationSweep> {
    if cfg.preset != Preset::Kc && cfg.preset != Preset::KcChirped {
        return Err(Error::Unsupported("pulse-duration sweeps use the kc presets".into()));
    }
    let t = 2.0 * cfg.t_pi;
    let mut base = cfg.clone();
    base.pulses = PulseMode::Instantaneous;
    let ctx = ScanContext::new(&base, &[t])?;
    let reference = ctx.row_direct(t);
    if let Some(e) = &reference.diagnostics.error {
        return Err(Error::InvalidParameter(format!("instantaneous reference failed: {e}")));
    }
    let rows = delta_t_values
        .par_iter()
        .map(|&delta_t| {
            let mut finite = base.clone();
            finite.pulses = PulseMode::Finite { delta_t };
            finite.validate()?;
            let seq = finite.build_sequence(t)?;
            let sub = ScanContext {
                cfg: finite,
                initial: ctx.initial.clone(),
                moments: ctx.moments,
                settings: ctx.settings,
                scale: ctx.scale,
            };
            let row = sub.row_direct(t);
            Ok(PulseDurationRow {
                delta_t,
                sequence_time: seq.total_duration(),
                max_deviation: max_relative_deviation(&row, &reference),
                row,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PulseDurationSweep {
        metadata: ctx.metadata(),
        reference,
        rows,
    })
}
