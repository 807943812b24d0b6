//! Uniform periodic lattice and its spectral (momentum) dual.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of the domain, at each end, watched by the edge-density monitor.
pub const EDGE_BAND: f64 = 0.05;
/// Largest tolerated norm fraction inside the edge bands.
pub const EDGE_LIMIT: f64 = 1e-10;

/// Plain description of a grid, used for configuration and metadata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_points: usize,
    pub z_min: f64,
    pub z_max: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            n_points: 8192,
            z_min: -512.0,
            z_max: 768.0,
        }
    }
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid> {
        make_grid(self.n_points, self.z_min, self.z_max)
    }
}

/// Spatial lattice `z_j = z_min + j dz` with periodic boundaries.
///
/// Wavenumbers are stored in FFT ordering (`0, dk, ..., -dk`); momenta are
/// `hbar * k`. The FFT plans live here so every state on the grid shares them.
pub struct Grid {
    n: usize,
    z_min: f64,
    z_max: f64,
    dz: f64,
    z: Vec<f64>,
    k: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n_points", &self.n)
            .field("z_min", &self.z_min)
            .field("z_max", &self.z_max)
            .field("dz", &self.dz)
            .finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.z_min == other.z_min && self.z_max == other.z_max
    }
}

pub fn make_grid(n_points: usize, z_min: f64, z_max: f64) -> Result<Grid> {
    if n_points < 2 || !n_points.is_power_of_two() {
        return Err(Error::InvalidGrid(format!(
            "n_points must be a power of two >= 2, got {n_points}"
        )));
    }
    if !(z_min.is_finite() && z_max.is_finite()) || z_max <= z_min {
        return Err(Error::InvalidGrid(format!(
            "z_max ({z_max}) must exceed z_min ({z_min})"
        )));
    }
    let n = n_points;
    let width = z_max - z_min;
    let dz = width / n as f64;
    let dk = 2.0 * PI / width;
    let z = (0..n).map(|j| z_min + j as f64 * dz).collect();
    let k = (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            m as f64 * dk
        })
        .collect();
    let mut planner = FftPlanner::new();
    Ok(Grid {
        n,
        z_min,
        z_max,
        dz,
        z,
        k,
        forward: planner.plan_fft_forward(n),
        inverse: planner.plan_fft_inverse(n),
    })
}

impl Grid {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn z_min(&self) -> f64 {
        self.z_min
    }

    pub fn z_max(&self) -> f64 {
        self.z_max
    }

    pub fn width(&self) -> f64 {
        self.z_max - self.z_min
    }

    pub fn dz(&self) -> f64 {
        self.dz
    }

    pub fn dk(&self) -> f64 {
        2.0 * PI / self.width()
    }

    /// Largest representable wavenumber magnitude, `pi / dz`.
    pub fn k_nyquist(&self) -> f64 {
        PI / self.dz
    }

    pub fn positions(&self) -> &[f64] {
        &self.z
    }

    /// Wavenumbers in FFT ordering.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n_points: self.n,
            z_min: self.z_min,
            z_max: self.z_max,
        }
    }

    /// Index permutation from monotone ordering to FFT ordering: entry `i` of
    /// a monotone array corresponds to FFT slot `natural_index(i)`.
    pub fn natural_index(&self, i: usize) -> usize {
        (i + self.n / 2) % self.n
    }

    /// Wavenumbers sorted ascending, `[-pi/dz, pi/dz)`.
    pub fn wavenumbers_natural(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.k[self.natural_index(i)]).collect()
    }

    /// Reorders an FFT-ordered array into ascending-wavenumber order.
    pub fn to_natural<T: Copy>(&self, spectral: &[T]) -> Vec<T> {
        (0..self.n).map(|i| spectral[self.natural_index(i)]).collect()
    }

    /// Unnormalized forward transform in place.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.forward.process(data);
    }

    /// Inverse transform in place, including the `1/n` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.inverse.process(data);
        let scale = 1.0 / self.n as f64;
        data.iter_mut().for_each(|c| *c *= scale);
    }

    /// Discrete L2 norm squared on the position lattice.
    pub fn norm_sqr_position(&self, field: &[Complex64]) -> f64 {
        field.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dz
    }

    /// Same norm evaluated from an FFT-ordered spectrum of the field.
    pub fn norm_sqr_spectral(&self, spectrum: &[Complex64]) -> f64 {
        spectrum.iter().map(|c| c.norm_sqr()).sum::<f64>() * self.dz / self.n as f64
    }

    /// Fraction of a density's total weight that lies in the outer
    /// [`EDGE_BAND`] of the domain on either side.
    pub fn edge_fraction(&self, density: &[f64]) -> f64 {
        let band = ((self.n as f64) * EDGE_BAND).ceil() as usize;
        let total: f64 = density.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let edge: f64 = density[..band].iter().sum::<f64>() + density[self.n - band..].iter().sum::<f64>();
        edge / total
    }

    pub fn shared(self) -> Arc<Grid> {
        Arc::new(self)
    }
}
