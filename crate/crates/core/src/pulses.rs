//! Instantaneous internal-state unitaries: Raman beam splitters and mirrors,
//! the state-selective momentum kick and the final real beam splitter.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::PhysicalParams;
use crate::wavepacket::Spinor;

/// Pulse area `theta` and laser phase `phi` of an instantaneous Raman pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSpec {
    pub theta: f64,
    pub phi: f64,
}

impl PulseSpec {
    pub fn new(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=2.0 * PI).contains(&theta) || !phi.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "pulse area must lie in [0, 2 pi], got {theta}"
            )));
        }
        Ok(Self { theta, phi })
    }

    pub fn beam_splitter(phi: f64) -> Self {
        Self { theta: FRAC_PI_2, phi }
    }

    pub fn mirror(phi: f64) -> Self {
        Self { theta: PI, phi }
    }
}

/// Raman pulse `cos(theta/2) - i sin(theta/2) (|b><a| e^{i(k0 z - phi)} + h.c.)`
/// evaluated pointwise in position space.
pub fn apply_pulse(state: &Spinor, params: &PhysicalParams, pulse: PulseSpec) -> Spinor {
    apply_rotation(state, params, pulse.theta, pulse.phi)
}

/// Same as [`apply_pulse`] without the `[0, 2 pi]` restriction, so negative
/// areas can undo a pulse.
pub fn apply_rotation(state: &Spinor, params: &PhysicalParams, theta: f64, phi: f64) -> Spinor {
    let (s, c) = (theta / 2.0).sin_cos();
    let mut out = state.clone();
    let z = state.grid().positions();
    for (j, &zj) in z.iter().enumerate() {
        let up = Complex64::from_polar(1.0, params.k0 * zj - phi);
        let a = state.a[j];
        let b = state.b[j];
        out.a[j] = c * a - Complex64::i() * s * up.conj() * b;
        out.b[j] = c * b - Complex64::i() * s * up * a;
    }
    out
}

/// Multiplies `comp_b` by `e^{i sign k0 z}`.
pub fn apply_state_kick(state: &Spinor, params: &PhysicalParams, sign: f64) -> Spinor {
    let mut out = state.clone();
    let z = state.grid().positions();
    out.b
        .iter_mut()
        .zip(z)
        .for_each(|(b, &zj)| *b *= Complex64::from_polar(1.0, sign * params.k0 * zj));
    out
}

/// `|a><a| + |b><b| e^{-i k0 z}`: removes the recoil of the `|b>` arm.
pub fn apply_momentum_reunite(state: &Spinor, params: &PhysicalParams) -> Spinor {
    apply_state_kick(state, params, -1.0)
}

/// `[1 + (|a><b| - |b><a|)] / sqrt(2)`, i.e. `(a, b) -> ((a + b), (b - a)) / sqrt(2)`.
pub fn apply_final_bs(state: &Spinor) -> Spinor {
    let mut out = state.clone();
    for j in 0..out.a.len() {
        let (a, b) = (state.a[j], state.b[j]);
        out.a[j] = (a + b) * FRAC_1_SQRT_2;
        out.b[j] = (b - a) * FRAC_1_SQRT_2;
    }
    out
}
