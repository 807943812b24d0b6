//! Time evolution of spinors.
//!
//! Two routes are provided for motion in a uniform field: a Strang split-step
//! integrator that handles any scalar potential, and the exact factorized
//! gravity propagator `e^{-i T p^2/2m hbar} e^{-i g G0(T)} e^{i m g^2 T^3/12 hbar}`
//! with `G0(T) = (T/hbar)(T p/2 + m z)`. They cross-check each other.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::units::PhysicalParams;
use crate::wavepacket::Spinor;

/// Default step for free and gravity segments integrated by split-step.
pub const DEFAULT_DT: f64 = 0.05;
/// Finite pulses are resolved with this many steps per pulse duration.
pub const PULSE_STEPS: usize = 200;
/// Largest Rabi phase `Omega dt` accepted inside a finite pulse.
pub const MAX_RABI_PHASE_PER_STEP: f64 = 0.1;
/// Largest tolerated norm change over a propagation.
pub const NORM_DRIFT_LIMIT: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialKind {
    None,
    LinearGravity,
    /// `V(z) = m omega^2 (z - z0)^2 / 2`.
    Harmonic { omega: f64, z0: f64 },
}

/// Internal-state independent potential. The gravitational term `m g z` is
/// added whenever `gravity_enabled` is set, on top of any trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PotentialSpec {
    pub kind: PotentialKind,
    pub g: f64,
    pub gravity_enabled: bool,
}

impl PotentialSpec {
    pub fn free() -> Self {
        Self {
            kind: PotentialKind::None,
            g: 0.0,
            gravity_enabled: false,
        }
    }

    pub fn gravity(g: f64) -> Self {
        Self {
            kind: PotentialKind::LinearGravity,
            g,
            gravity_enabled: true,
        }
    }

    pub fn harmonic(omega: f64, z0: f64) -> Result<Self> {
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameter(format!("trap frequency must be positive, got {omega}")));
        }
        Ok(Self {
            kind: PotentialKind::Harmonic { omega, z0 },
            g: 0.0,
            gravity_enabled: false,
        })
    }

    pub fn with_gravity(mut self, g: f64, enabled: bool) -> Self {
        self.g = g;
        self.gravity_enabled = enabled;
        self
    }

    pub fn value(&self, z: f64, params: &PhysicalParams) -> f64 {
        let trap = match self.kind {
            PotentialKind::Harmonic { omega, z0 } => 0.5 * params.mass * omega * omega * (z - z0).powi(2),
            _ => 0.0,
        };
        let gravity = if self.gravity_enabled { params.mass * self.g * z } else { 0.0 };
        trap + gravity
    }
}

fn kinetic_factors(grid: &Grid, params: &PhysicalParams, tau: f64) -> Vec<Complex64> {
    let c = params.hbar * tau / (2.0 * params.mass);
    grid.wavenumbers()
        .iter()
        .map(|k| Complex64::from_polar(1.0, -c * k * k))
        .collect()
}

fn apply_spectral(grid: &Grid, field: &mut [Complex64], factors: &[Complex64]) {
    grid.forward(field);
    field.iter_mut().zip(factors).for_each(|(c, f)| *c *= f);
    grid.inverse(field);
}

fn apply_pointwise(field: &mut [Complex64], factors: &[Complex64]) {
    field.iter_mut().zip(factors).for_each(|(c, f)| *c *= f);
}

/// Free kinetic propagator `e^{-i t p^2 / 2 m hbar}` on both components.
pub fn apply_kinetic(state: &Spinor, params: &PhysicalParams, t: f64) -> Spinor {
    let mut out = state.clone();
    if t == 0.0 {
        return out;
    }
    let grid = state.grid().clone();
    let factors = kinetic_factors(&grid, params, t);
    for comp in out.components_mut() {
        apply_spectral(&grid, comp, &factors);
    }
    out
}

fn finish_checks(initial_norm: f64, state: &Spinor) -> Result<()> {
    let drift = (state.norm_sqr() - initial_norm).abs();
    if drift > NORM_DRIFT_LIMIT {
        return Err(Error::NormDrift { drift });
    }
    state.check_edges()?;
    Ok(())
}

/// Strang-split propagation under `p^2/2m + V(z)` for `duration`.
///
/// Steps have size `dt`; if `dt` does not divide `duration` the final step is
/// shortened to the remainder. Consecutive kinetic half steps are merged.
pub fn evolve_split_step(
    state: &Spinor,
    params: &PhysicalParams,
    duration: f64,
    pot: &PotentialSpec,
    dt: f64,
) -> Result<Spinor> {
    if !(duration.is_finite() && duration >= 0.0) {
        return Err(Error::InvalidParameter(format!("duration must be >= 0, got {duration}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let (full, rest) = split_duration(duration, dt);
    let mut out = evolve_split_step_sampled(state, params, pot, dt, &[full])?
        .pop()
        .expect("one sample requested");
    if rest > 0.0 {
        out = evolve_split_step_sampled(&out, params, pot, rest, &[1])?
            .pop()
            .expect("one sample requested");
    }
    Ok(out)
}

/// Incremental Strang integrator with fixed step. Closing kinetic half steps
/// are only applied when a snapshot is taken, so a snapshot after `n` steps is
/// bit-identical to an independent propagation over `n * dt`.
pub struct SplitStepper {
    grid: Arc<Grid>,
    half: Vec<Complex64>,
    whole: Vec<Complex64>,
    potential: Vec<Complex64>,
    psi: Spinor,
    steps: usize,
    initial_norm: f64,
}

impl SplitStepper {
    pub fn new(state: &Spinor, params: &PhysicalParams, pot: &PotentialSpec, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        let grid = state.grid().clone();
        let potential = grid
            .positions()
            .iter()
            .map(|&z| Complex64::from_polar(1.0, -pot.value(z, params) * dt / params.hbar))
            .collect();
        Ok(Self {
            half: kinetic_factors(&grid, params, 0.5 * dt),
            whole: kinetic_factors(&grid, params, dt),
            potential,
            psi: state.clone(),
            steps: 0,
            initial_norm: state.norm_sqr(),
            grid,
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn advance(&mut self, n: usize) {
        for _ in 0..n {
            let opening = if self.steps == 0 { &self.half } else { &self.whole };
            for comp in self.psi.components_mut() {
                apply_spectral(&self.grid, comp, opening);
                apply_pointwise(comp, &self.potential);
            }
            self.steps += 1;
        }
    }

    pub fn advance_to(&mut self, step: usize) {
        if step > self.steps {
            self.advance(step - self.steps);
        }
    }

    /// Current state with the pending kinetic half step applied.
    pub fn snapshot(&self) -> Result<Spinor> {
        let mut out = self.psi.clone();
        if self.steps > 0 {
            for comp in out.components_mut() {
                apply_spectral(&self.grid, comp, &self.half);
            }
        }
        finish_checks(self.initial_norm, &out)?;
        Ok(out)
    }
}

/// Propagates with fixed steps `dt`, returning the state after each requested
/// number of steps (`samples` ascending). Sample `n` is bit-identical to an
/// independent [`evolve_split_step`] over `n * dt`.
pub fn evolve_split_step_sampled(
    state: &Spinor,
    params: &PhysicalParams,
    pot: &PotentialSpec,
    dt: f64,
    samples: &[usize],
) -> Result<Vec<Spinor>> {
    if samples.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidParameter("sample steps must be ascending".into()));
    }
    let mut stepper = SplitStepper::new(state, params, pot, dt)?;
    samples
        .iter()
        .map(|&n| {
            stepper.advance_to(n);
            stepper.snapshot()
        })
        .collect()
}

/// Step count and leftover time when covering `duration` with steps `dt`.
pub fn split_duration(duration: f64, dt: f64) -> (usize, f64) {
    let mut full = (duration / dt).floor() as usize;
    let mut rest = duration - full as f64 * dt;
    if rest > dt * (1.0 - 1e-9) {
        full += 1;
        rest = 0.0;
    }
    if rest <= 1e-9 * dt {
        rest = 0.0;
    }
    (full, rest.max(0.0))
}

/// `e^{-i s G0(T)}` with `G0(T) = (T/hbar)(T p/2 + m z)`, applied as a
/// translation by `s T^2 / 2`, a position phase `e^{-i s T m z / hbar}` and the
/// commutator phase `e^{i s^2 T^3 m / 4 hbar}`.
pub fn apply_g0_generator(state: &Spinor, params: &PhysicalParams, strength: f64, t: f64) -> Spinor {
    let mut out = state.clone();
    if strength == 0.0 || t == 0.0 {
        return out;
    }
    let grid = state.grid().clone();
    let shift = strength * t * t / 2.0;
    let translation: Vec<Complex64> = grid
        .wavenumbers()
        .iter()
        .map(|k| Complex64::from_polar(1.0, -k * shift))
        .collect();
    let scalar = strength * strength * t.powi(3) * params.mass / (4.0 * params.hbar);
    let kick = strength * t * params.mass / params.hbar;
    let phase: Vec<Complex64> = grid
        .positions()
        .iter()
        .map(|&z| Complex64::from_polar(1.0, scalar - kick * z))
        .collect();
    for comp in out.components_mut() {
        apply_spectral(&grid, comp, &translation);
        apply_pointwise(comp, &phase);
    }
    out
}

/// Exact propagation for `t` under `p^2/2m + m g z`, including the global
/// phase `e^{i m g^2 t^3 / 12 hbar}`.
pub fn apply_ug_analytic(state: &Spinor, params: &PhysicalParams, t: f64, g: f64) -> Spinor {
    let pushed = apply_g0_generator(state, params, g, t);
    let phase = params.mass * g * g * t.powi(3) / (12.0 * params.hbar);
    apply_kinetic(&pushed, params, t).with_global_phase(phase)
}

/// Finite-duration Raman pulse: area `Omega * duration`, laser phase `phi`
/// and two-photon detuning (resonant `hbar k0^2 / 2m` when `None`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinitePulse {
    pub area: f64,
    pub phi: f64,
    pub duration: f64,
    pub detuning: Option<f64>,
}

impl FinitePulse {
    pub fn rabi_frequency(&self) -> f64 {
        if self.duration > 0.0 {
            self.area / self.duration
        } else {
            0.0
        }
    }
}

/// Evolves under `p^2/2m - hbar delta |b><b| + (hbar Omega/2)(|b><a| e^{i(k0 z - phi)} + h.c.)`.
///
/// The internal part of each Strang step is the closed-form 2x2 exponential
/// at every lattice point. `dt` is shrunk so that it divides the duration.
pub fn evolve_hbs(state: &Spinor, params: &PhysicalParams, pulse: &FinitePulse, dt: f64) -> Result<Spinor> {
    if !(pulse.duration.is_finite() && pulse.duration >= 0.0) {
        return Err(Error::InvalidParameter("pulse duration must be >= 0".into()));
    }
    if pulse.duration == 0.0 {
        if pulse.area != 0.0 {
            return Err(Error::InvalidParameter("nonzero pulse area needs a positive duration".into()));
        }
        return Ok(state.clone());
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let steps = (pulse.duration / dt * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let h = pulse.duration / steps as f64;
    let omega = pulse.rabi_frequency();
    if omega.abs() * h > MAX_RABI_PHASE_PER_STEP {
        return Err(Error::StepTooCoarse { phase: omega.abs() * h });
    }
    let delta = pulse.detuning.unwrap_or_else(|| params.resonance_detuning());

    let grid = state.grid().clone();
    let initial_norm = state.norm_sqr();
    let half = kinetic_factors(&grid, params, 0.5 * h);
    let whole = kinetic_factors(&grid, params, h);

    // exp(-i h M) with M = -delta/2 + [[delta/2, w*], [w, -delta/2]], |w| = Omega/2
    let lambda = (0.25 * delta * delta + 0.25 * omega * omega).sqrt();
    let (sin_l, cos_l) = (lambda * h).sin_cos();
    let s = if lambda > 0.0 { sin_l / lambda } else { h };
    let global = Complex64::from_polar(1.0, 0.5 * delta * h);
    let i = Complex64::i();
    let diag_a = global * (cos_l - i * s * 0.5 * delta);
    let diag_b = global * (cos_l + i * s * 0.5 * delta);
    let off = global * (-i * s * 0.5 * omega);
    let phases: Vec<Complex64> = grid
        .positions()
        .iter()
        .map(|&z| Complex64::from_polar(1.0, params.k0 * z - pulse.phi))
        .collect();

    let mut psi = state.clone();
    for step in 0..steps {
        let opening = if step == 0 { &half } else { &whole };
        for comp in psi.components_mut() {
            apply_spectral(&grid, comp, opening);
        }
        for (j, e) in phases.iter().enumerate() {
            let (a, b) = (psi.a[j], psi.b[j]);
            psi.a[j] = diag_a * a + off * e.conj() * b;
            psi.b[j] = off * e * a + diag_b * b;
        }
    }
    for comp in psi.components_mut() {
        apply_spectral(&grid, comp, &half);
    }
    finish_checks(initial_norm, &psi)?;
    Ok(psi)
}
