//! Spinor wavefunctions, their phase-space moments and measurement statistics.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fisher::{Basis, Distribution};
use crate::grid::{Grid, EDGE_LIMIT};
use crate::units::PhysicalParams;

/// Tolerance used when an operation requires a normalized input.
pub const NORM_TOLERANCE: f64 = 1e-8;

/// Two complex fields on a shared grid: `a` holds the amplitude of internal
/// state `|a>`, `b` that of `|b>`.
#[derive(Debug, Clone)]
pub struct Spinor {
    grid: Arc<Grid>,
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
}

impl Spinor {
    pub fn new(grid: Arc<Grid>, a: Vec<Complex64>, b: Vec<Complex64>) -> Result<Self> {
        if a.len() != grid.len() || b.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, a, b })
    }

    /// All amplitude in `|a>` with the given motional wavefunction.
    pub fn in_state_a(grid: Arc<Grid>, psi: Vec<Complex64>) -> Result<Self> {
        let b = vec![Complex64::new(0.0, 0.0); grid.len()];
        Self::new(grid, psi, b)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn same_grid(&self, other: &Spinor) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub fn components(&self) -> [&[Complex64]; 2] {
        [&self.a, &self.b]
    }

    pub fn components_mut(&mut self) -> [&mut Vec<Complex64>; 2] {
        [&mut self.a, &mut self.b]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.grid.norm_sqr_position(&self.a) + self.grid.norm_sqr_position(&self.b)
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            let s = 1.0 / n;
            for c in self.components_mut() {
                c.iter_mut().for_each(|x| *x *= s);
            }
        }
    }

    /// Populations `(P_a, P_b)`.
    pub fn populations(&self) -> (f64, f64) {
        (
            self.grid.norm_sqr_position(&self.a),
            self.grid.norm_sqr_position(&self.b),
        )
    }

    /// Position density `|a|^2 + |b|^2` on the lattice.
    pub fn density(&self) -> Vec<f64> {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }

    /// Fraction of the norm inside the outer edge bands of the domain.
    pub fn edge_fraction(&self) -> f64 {
        self.grid.edge_fraction(&self.density())
    }

    pub fn check_edges(&self) -> Result<f64> {
        let fraction = self.edge_fraction();
        if fraction > EDGE_LIMIT {
            return Err(Error::EdgeViolation {
                fraction,
                limit: EDGE_LIMIT,
            });
        }
        Ok(fraction)
    }

    fn require_normalized(&self) -> Result<()> {
        let norm = self.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Unnormalized { norm });
        }
        Ok(())
    }

    /// FFT-ordered spectra of both components.
    pub fn spectra(&self) -> [Vec<Complex64>; 2] {
        let mut a = self.a.clone();
        let mut b = self.b.clone();
        self.grid.forward(&mut a);
        self.grid.forward(&mut b);
        [a, b]
    }

    /// Multiplies every amplitude by a constant phase `e^{i theta}`.
    pub fn with_global_phase(mut self, theta: f64) -> Self {
        let f = Complex64::from_polar(1.0, theta);
        for c in self.components_mut() {
            c.iter_mut().for_each(|x| *x *= f);
        }
        self
    }

    /// `self - other`, both on the same grid.
    pub fn difference(&self, other: &Spinor) -> Result<Spinor> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        let sub = |x: &[Complex64], y: &[Complex64]| x.iter().zip(y).map(|(p, q)| p - q).collect();
        Ok(Spinor {
            grid: self.grid.clone(),
            a: sub(&self.a, &other.a),
            b: sub(&self.b, &other.b),
        })
    }

    pub fn l2_distance(&self, other: &Spinor) -> Result<f64> {
        Ok(self.difference(other)?.norm_sqr().sqrt())
    }
}

/// Phase-space moments of the motional state, summed over internal states.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean_z: f64,
    pub mean_p: f64,
    pub var_z: f64,
    pub var_p: f64,
    /// Symmetrized covariance `Re <(z - <z>)(p - <p>)>`.
    pub cov_zp: f64,
}

impl Moments {
    /// `var_z var_p - cov_zp^2`, bounded below by `hbar^2 / 4`.
    pub fn uncertainty_product(&self) -> f64 {
        self.var_z * self.var_p - self.cov_zp * self.cov_zp
    }

    /// Moments of the Gaussian amplitude `exp(-z^2/2 sigma^2)`.
    pub fn gaussian(sigma: f64, hbar: f64) -> Self {
        Self {
            mean_z: 0.0,
            mean_p: 0.0,
            var_z: sigma * sigma / 2.0,
            var_p: hbar * hbar / (2.0 * sigma * sigma),
            cov_zp: 0.0,
        }
    }

    /// Moments after free flight for `t`: the ballistic law
    /// `var_z(t) = var_z + 2 t cov / m + t^2 var_p / m^2`.
    pub fn ballistic(&self, t: f64, mass: f64) -> Self {
        Self {
            mean_z: self.mean_z + self.mean_p * t / mass,
            mean_p: self.mean_p,
            var_z: self.var_z + 2.0 * t * self.cov_zp / mass + t * t * self.var_p / (mass * mass),
            var_p: self.var_p,
            cov_zp: self.cov_zp + t * self.var_p / mass,
        }
    }
}

fn check_resolution(grid: &Grid, sigma: f64) -> Result<()> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma must be positive, got {sigma}")));
    }
    if sigma < 4.0 * grid.dz() {
        return Err(Error::UnderResolved { sigma, dz: grid.dz() });
    }
    Ok(())
}

/// Gaussian `exp(-(z-z_c)^2/2 sigma^2) e^{i p_c z / hbar} / (pi sigma^2)^{1/4}`
/// in internal state `|a>`.
pub fn gaussian(
    grid: &Arc<Grid>,
    params: &PhysicalParams,
    sigma: f64,
    z_center: f64,
    p_center: f64,
) -> Result<Spinor> {
    check_resolution(grid, sigma)?;
    let amp = (PI * sigma * sigma).powf(-0.25);
    let psi = grid
        .positions()
        .iter()
        .map(|&z| {
            let x = z - z_center;
            Complex64::from_polar(amp * (-x * x / (2.0 * sigma * sigma)).exp(), p_center * z / params.hbar)
        })
        .collect();
    let mut state = Spinor::in_state_a(grid.clone(), psi)?;
    state.normalize();
    state.check_edges()?;
    Ok(state)
}

/// Chirped Gaussian `exp(-(1/4 + i) z^2 / 2 sigma^2) / [pi (2 sigma)^2]^{1/4}`.
///
/// The density has variance `2 sigma^2`; the imaginary term gives a negative
/// position-momentum covariance that refocuses the packet during free flight.
pub fn chirped_gaussian(grid: &Arc<Grid>, sigma: f64) -> Result<Spinor> {
    check_resolution(grid, sigma)?;
    let amp = (PI * 4.0 * sigma * sigma).powf(-0.25);
    let psi = grid
        .positions()
        .iter()
        .map(|&z| {
            let q = z * z / (2.0 * sigma * sigma);
            Complex64::from_polar(amp * (-0.25 * q).exp(), -q)
        })
        .collect();
    let mut state = Spinor::in_state_a(grid.clone(), psi)?;
    state.normalize();
    state.check_edges()?;
    Ok(state)
}

pub fn moments(state: &Spinor, params: &PhysicalParams) -> Result<Moments> {
    state.require_normalized()?;
    let grid = state.grid();
    let dz = grid.dz();
    let z = grid.positions();
    let k = grid.wavenumbers();
    let hbar = params.hbar;

    let density = state.density();
    let mean_z: f64 = density.iter().zip(z).map(|(d, z)| d * z).sum::<f64>() * dz;
    let var_z: f64 = density
        .iter()
        .zip(z)
        .map(|(d, z)| d * (z - mean_z).powi(2))
        .sum::<f64>()
        * dz;

    let spectra = state.spectra();
    let weight = dz / grid.len() as f64;
    let mut mean_p = 0.0;
    for spec in &spectra {
        mean_p += spec.iter().zip(k).map(|(c, k)| c.norm_sqr() * hbar * k).sum::<f64>() * weight;
    }
    let mut var_p = 0.0;
    for spec in &spectra {
        var_p += spec
            .iter()
            .zip(k)
            .map(|(c, k)| c.norm_sqr() * (hbar * k - mean_p).powi(2))
            .sum::<f64>()
            * weight;
    }

    // Re <psi| (z - <z>) (p - <p>) |psi>, with p applied spectrally.
    let mut cov_zp = 0.0;
    for (comp, spec) in state.components().into_iter().zip(spectra) {
        let mut p_psi: Vec<Complex64> = spec
            .iter()
            .zip(k)
            .map(|(c, k)| c * (hbar * k - mean_p))
            .collect();
        grid.inverse(&mut p_psi);
        cov_zp += comp
            .iter()
            .zip(&p_psi)
            .zip(z)
            .map(|((psi, ppsi), z)| (psi.conj() * ppsi).re * (z - mean_z))
            .sum::<f64>()
            * dz;
    }

    Ok(Moments {
        mean_z,
        mean_p,
        var_z,
        var_p,
        cov_zp,
    })
}

/// Ideal measurement statistics of `state` in the requested basis.
///
/// Position and momentum densities are per unit length / momentum, with the
/// momentum lattice in ascending order. With `per_internal_state` set, one
/// channel per internal state is returned; their masses sum to one jointly.
/// The population basis always yields the single two-outcome channel
/// `(P_a, P_b)` with unit bin width.
pub fn measure_distribution(
    state: &Spinor,
    params: &PhysicalParams,
    basis: Basis,
    per_internal_state: bool,
) -> Result<Distribution> {
    state.require_normalized()?;
    let grid = state.grid();
    match basis {
        Basis::Population => {
            let (pa, pb) = state.populations();
            Ok(Distribution::new(basis, false, vec![0.5, -0.5], vec![vec![pa, pb]], 1.0))
        }
        Basis::Position => {
            let channels: Vec<Vec<f64>> = state
                .components()
                .iter()
                .map(|c| c.iter().map(|x| x.norm_sqr()).collect())
                .collect();
            Ok(Distribution::new(
                basis,
                per_internal_state,
                grid.positions().to_vec(),
                merge_channels(channels, per_internal_state),
                grid.dz(),
            ))
        }
        Basis::Momentum => {
            let dp = params.hbar * grid.dk();
            let weight = grid.dz() / (grid.len() as f64 * dp);
            let channels: Vec<Vec<f64>> = state
                .spectra()
                .iter()
                .map(|s| grid.to_natural(s).iter().map(|c| c.norm_sqr() * weight).collect())
                .collect();
            let bins = grid.wavenumbers_natural().iter().map(|k| params.hbar * k).collect();
            Ok(Distribution::new(
                basis,
                per_internal_state,
                bins,
                merge_channels(channels, per_internal_state),
                dp,
            ))
        }
    }
}

fn merge_channels(channels: Vec<Vec<f64>>, per_state: bool) -> Vec<Vec<f64>> {
    if per_state {
        channels
    } else {
        let summed = channels[0].iter().zip(&channels[1]).map(|(a, b)| a + b).collect();
        vec![summed]
    }
}

/// Discrete inner product `sum conj(x) y dz` over both components.
pub fn overlap(x: &Spinor, y: &Spinor) -> Result<Complex64> {
    if !x.same_grid(y) {
        return Err(Error::GridMismatch);
    }
    let dz = x.grid().dz();
    let dot = |p: &[Complex64], q: &[Complex64]| p.iter().zip(q).map(|(a, b)| a.conj() * b).sum::<Complex64>();
    Ok((dot(&x.a, &y.a) + dot(&x.b, &y.b)) * dz)
}

/// Phase-invariant fidelity `|<x|y>|`.
pub fn fidelity(x: &Spinor, y: &Spinor) -> Result<f64> {
    Ok(overlap(x, y)?.norm())
}

/// Rigid translation `psi(z) -> psi(z - shift)` applied spectrally.
pub fn translate(state: &Spinor, shift: f64) -> Spinor {
    let grid = state.grid().clone();
    let k = grid.wavenumbers();
    let mut out = state.clone();
    for comp in out.components_mut() {
        grid.forward(comp);
        comp.iter_mut()
            .zip(k)
            .for_each(|(c, k)| *c *= Complex64::from_polar(1.0, -k * shift));
        grid.inverse(comp);
    }
    out
}
