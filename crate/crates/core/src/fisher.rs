//! Quantum and classical Fisher information about the acceleration `g`.
//!
//! Numeric estimates use central finite differences in `g` around a working
//! point. Every estimate is repeated with half the step (convergence check)
//! and, for distributions, with a ten times higher probability floor
//! (floor-sensitivity check).

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::PhysicalParams;
use crate::wavepacket::{overlap, Moments, Spinor};

/// Bins below this fraction of the largest bin are left out of CFI sums.
pub const PROBABILITY_FLOOR: f64 = 1e-12;
pub const CONVERGENCE_LIMIT: f64 = 1e-2;
pub const FLOOR_SENSITIVITY_LIMIT: f64 = 5e-3;
/// Relative changes are measured against at least this fraction of the
/// reporting unit, so that values which are essentially zero are not flagged.
pub const NEGLIGIBLE_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    Position,
    Momentum,
    Population,
}

impl Basis {
    pub fn name(&self) -> &'static str {
        match self {
            Basis::Position => "position",
            Basis::Momentum => "momentum",
            Basis::Population => "population",
        }
    }
}

/// Outcome distribution. Each channel holds a density over `bins`; with
/// several channels (one per internal state) the outcomes form the joint
/// space `(state, bin)` and the masses of all channels sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Distribution {
    pub basis: Basis,
    pub per_state: bool,
    pub bins: Vec<f64>,
    pub channels: Vec<Vec<f64>>,
    pub bin_width: f64,
}

impl Distribution {
    pub fn new(basis: Basis, per_state: bool, bins: Vec<f64>, channels: Vec<Vec<f64>>, bin_width: f64) -> Self {
        Self {
            basis,
            per_state,
            bins,
            channels,
            bin_width,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.channels.iter().flatten().sum::<f64>() * self.bin_width
    }

    pub fn channel_mass(&self, channel: usize) -> f64 {
        self.channels[channel].iter().sum::<f64>() * self.bin_width
    }

    fn max_density(&self) -> f64 {
        self.channels.iter().flatten().fold(0.0_f64, |m, &x| m.max(x))
    }

    /// Sum of all channels, giving the state-blind marginal.
    pub fn marginal(&self) -> Distribution {
        let mut summed = vec![0.0; self.bins.len()];
        for ch in &self.channels {
            summed.iter_mut().zip(ch).for_each(|(s, x)| *s += x);
        }
        Distribution::new(self.basis, false, self.bins.clone(), vec![summed], self.bin_width)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FisherMethod {
    Analytic,
    FiniteDifference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherEstimate {
    pub value: f64,
    pub method: FisherMethod,
    pub dg: Option<f64>,
    /// `|v(dg) - v(dg/2)| / v(dg)`.
    pub convergence_error: Option<f64>,
    /// `|v(floor) - v(10 floor)| / v(floor)`.
    pub floor_sensitivity: Option<f64>,
    pub flags: Vec<String>,
}

impl FisherEstimate {
    pub fn analytic(value: f64) -> Self {
        Self {
            value,
            method: FisherMethod::Analytic,
            dg: None,
            convergence_error: None,
            floor_sensitivity: None,
            flags: Vec::new(),
        }
    }

    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

/// Finite-difference settings shared by all estimators of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FisherSettings {
    pub g0: f64,
    pub dg: f64,
    pub floor: f64,
    /// Reporting unit (usually `k0^2 T_pi^4`), used to decide when a value is
    /// negligible.
    pub scale: f64,
}

impl FisherSettings {
    pub fn new(g0: f64, dg: f64, scale: f64) -> Result<Self> {
        if !(dg.is_finite() && dg > 0.0) {
            return Err(Error::InvalidParameter(format!("dg must be positive, got {dg}")));
        }
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidParameter(format!("scale must be positive, got {scale}")));
        }
        Ok(Self {
            g0,
            dg,
            floor: PROBABILITY_FLOOR,
            scale,
        })
    }

    fn relative_change(&self, reference: f64, other: f64) -> f64 {
        (reference - other).abs() / reference.abs().max(NEGLIGIBLE_FRACTION * self.scale)
    }
}

/// Step giving an accrued phase `k0 dg T_ref^2 = 1e-3` rad, where `t_ref` is
/// the longest time gravity acts.
pub fn default_dg(params: &PhysicalParams, t_ref: f64) -> f64 {
    1e-3 / (params.k0 * t_ref * t_ref)
}

/// Results of a run at `g0`, `g0 +- dg` and `g0 +- dg/2`.
#[derive(Debug, Clone)]
pub struct StencilSamples<T> {
    pub settings: FisherSettings,
    pub center: T,
    pub plus: T,
    pub minus: T,
    pub plus_half: T,
    pub minus_half: T,
}

impl<T> StencilSamples<T> {
    pub fn try_map<U, F>(&self, f: F) -> Result<StencilSamples<U>>
    where
        F: Fn(&T) -> Result<U>,
    {
        Ok(StencilSamples {
            settings: self.settings,
            center: f(&self.center)?,
            plus: f(&self.plus)?,
            minus: f(&self.minus)?,
            plus_half: f(&self.plus_half)?,
            minus_half: f(&self.minus_half)?,
        })
    }
}

/// Runs `run` at the five stencil points concurrently.
pub fn evaluate_stencil<T, F>(run: F, settings: FisherSettings) -> Result<StencilSamples<T>>
where
    T: Send,
    F: Fn(f64) -> Result<T> + Sync,
{
    let offsets = [0.0, 1.0, -1.0, 0.5, -0.5];
    let mut results: Vec<Result<T>> = offsets
        .par_iter()
        .map(|o| run(settings.g0 + o * settings.dg))
        .collect();
    let mut take = || results.remove(0);
    Ok(StencilSamples {
        settings,
        center: take()?,
        plus: take()?,
        minus: take()?,
        plus_half: take()?,
        minus_half: take()?,
    })
}

/// `psi` multiplied by the phase that makes `<reference|psi>` real and positive.
fn align_phase(reference: &Spinor, psi: &Spinor) -> Result<Spinor> {
    let ov = overlap(reference, psi)?;
    Ok(psi.clone().with_global_phase(-ov.arg()))
}

/// `4 (<d|d> - |<psi|d>|^2)` with `d = (psi_+ - psi_-) / 2 dg`.
///
/// The displaced states are first phase-aligned with the centre state, which
/// makes the estimate exactly independent of any `g`-dependent global phase
/// (the bare finite difference is only invariant up to `O(dg^2)`).
pub fn qfi_from_states(center: &Spinor, plus: &Spinor, minus: &Spinor, dg: f64) -> Result<f64> {
    let plus = align_phase(center, plus)?;
    let minus = align_phase(center, minus)?;
    let mut d = plus.difference(&minus)?;
    let scale = 1.0 / (2.0 * dg);
    for comp in d.components_mut() {
        comp.iter_mut().for_each(|c| *c *= scale);
    }
    let dd = overlap(&d, &d)?.re;
    let pd = overlap(center, &d)?;
    Ok((4.0 * (dd - pd.norm_sqr())).max(0.0))
}

pub fn qfi_from_samples(s: &StencilSamples<Spinor>) -> Result<FisherEstimate> {
    let dg = s.settings.dg;
    let value = qfi_from_states(&s.center, &s.plus, &s.minus, dg)?;
    let refined = qfi_from_states(&s.center, &s.plus_half, &s.minus_half, dg / 2.0)?;
    let convergence = s.settings.relative_change(value, refined);
    let mut flags = Vec::new();
    if convergence > CONVERGENCE_LIMIT {
        flags.push(format!("qfi step refinement changed value by {convergence:.3e}"));
    }
    Ok(FisherEstimate {
        value,
        method: FisherMethod::FiniteDifference,
        dg: Some(dg),
        convergence_error: Some(convergence),
        floor_sensitivity: None,
        flags,
    })
}

/// Numeric QFI of the family `run(g)` around `settings.g0`.
pub fn qfi_numeric<F>(run: F, settings: FisherSettings) -> Result<FisherEstimate>
where
    F: Fn(f64) -> Result<Spinor> + Sync,
{
    qfi_from_samples(&evaluate_stencil(run, settings)?)
}

fn check_compatible(a: &Distribution, b: &Distribution) -> Result<()> {
    if a.basis != b.basis
        || a.channels.len() != b.channels.len()
        || a.bins.len() != b.bins.len()
        || a.bin_width != b.bin_width
    {
        return Err(Error::InvalidParameter("distributions are not on a common outcome space".into()));
    }
    Ok(())
}

/// `sum width (dP/dg)^2 / P` over all channels and bins above the floor.
pub fn cfi_from_distributions(
    center: &Distribution,
    plus: &Distribution,
    minus: &Distribution,
    dg: f64,
    floor: f64,
) -> Result<f64> {
    check_compatible(center, plus)?;
    check_compatible(center, minus)?;
    let cutoff = floor * center.max_density();
    let mut total = 0.0;
    for ((c, p), m) in center.channels.iter().zip(&plus.channels).zip(&minus.channels) {
        for ((&pc, &pp), &pm) in c.iter().zip(p).zip(m) {
            if pc > cutoff && pc > 0.0 {
                let deriv = (pp - pm) / (2.0 * dg);
                total += deriv * deriv / pc;
            }
        }
    }
    Ok(total * center.bin_width)
}

pub fn cfi_from_samples(s: &StencilSamples<Distribution>) -> Result<FisherEstimate> {
    let st = s.settings;
    let value = cfi_from_distributions(&s.center, &s.plus, &s.minus, st.dg, st.floor)?;
    let refined = cfi_from_distributions(&s.center, &s.plus_half, &s.minus_half, st.dg / 2.0, st.floor)?;
    let raised = cfi_from_distributions(&s.center, &s.plus, &s.minus, st.dg, 10.0 * st.floor)?;
    let convergence = st.relative_change(value, refined);
    let floor_sensitivity = st.relative_change(value, raised);
    let mut flags = Vec::new();
    if convergence > CONVERGENCE_LIMIT {
        flags.push(format!("{} cfi step refinement changed value by {convergence:.3e}", s.center.basis.name()));
    }
    if floor_sensitivity > FLOOR_SENSITIVITY_LIMIT {
        flags.push(format!(
            "{} cfi changed by {floor_sensitivity:.3e} when raising the probability floor",
            s.center.basis.name()
        ));
    }
    Ok(FisherEstimate {
        value,
        method: FisherMethod::FiniteDifference,
        dg: Some(st.dg),
        convergence_error: Some(convergence),
        floor_sensitivity: Some(floor_sensitivity),
        flags,
    })
}

/// Numeric CFI of the outcome distribution family `run(g)`.
pub fn cfi_distribution<F>(run: F, settings: FisherSettings) -> Result<FisherEstimate>
where
    F: Fn(f64) -> Result<Distribution> + Sync,
{
    cfi_from_samples(&evaluate_stencil(run, settings)?)
}

/// Free-fall QFI `4 Var(G0(T))` from the moments of the initial state.
pub fn qfi_free_analytic(t: f64, m: &Moments, params: &PhysicalParams) -> f64 {
    let (hbar, mass) = (params.hbar, params.mass);
    (t.powi(4) * m.var_p + 4.0 * mass * mass * t * t * m.var_z + 4.0 * mass * t.powi(3) * m.cov_zp) / (hbar * hbar)
}

/// QFI after the pulse sequence with free times `t1`, `t2` (Ramsey for `t2 = 0`).
pub fn qfi_kc_analytic(t1: f64, t2: f64, m: &Moments, params: &PhysicalParams) -> f64 {
    let t = t1 + t2;
    let internal = t * t - 2.0 * t2 * t2;
    qfi_free_analytic(t, m, params) + 0.25 * params.k0 * params.k0 * internal * internal
}

/// Overlap magnitude of the two output packets of a Gaussian of width `sigma`.
pub fn contrast_analytic(t1: f64, t2: f64, sigma: f64, params: &PhysicalParams) -> f64 {
    let v = params.hbar * params.k0 / params.mass;
    (-(v * v) * (t2 - t1).powi(2) / (4.0 * sigma * sigma)).exp()
}

/// Population CFI of the symmetric Gaussian input at acceleration `g`.
pub fn cfi_population_analytic(t1: f64, t2: f64, sigma: f64, g: f64, params: &PhysicalParams) -> f64 {
    let t = t1 + t2;
    let k0 = params.k0;
    let lever = t * t / 2.0 - t1 * t1;
    let phi_f = params.hbar * k0 * k0 * (t2 - t1) / (2.0 * params.mass);
    let phi_g = k0 * g * lever;
    let alpha = phi_f - phi_g;
    let c_sq = contrast_analytic(t1, t2, sigma, params).powi(2);
    let denom = 1.0 - c_sq * alpha.sin().powi(2);
    if denom <= 0.0 {
        // unit contrast at a fringe extremum: the derivative vanishes as well
        return 0.0;
    }
    c_sq * alpha.cos().powi(2) / denom * k0 * k0 * lever * lever
}

/// Per-state momentum CFI of the symmetric Kasevich-Chu output at `2 t_pi`.
pub fn cfi_kc_momentum_closed_form(t_pi: f64, sigma: f64, params: &PhysicalParams) -> f64 {
    let k0 = params.k0;
    k0 * k0 * t_pi.powi(4) + 8.0 * (params.mass * t_pi * sigma / params.hbar).powi(2)
}

/// Per-state position CFI of the symmetric Kasevich-Chu output at `2 t_pi`.
pub fn cfi_kc_position_closed_form(t_pi: f64, sigma: f64, params: &PhysicalParams) -> f64 {
    let (k0, m, hbar) = (params.k0, params.mass, params.hbar);
    let num = 8.0 * (sigma * m * t_pi * t_pi).powi(2);
    let den = (sigma * sigma * m).powi(2) + (2.0 * hbar * t_pi).powi(2);
    k0 * k0 * t_pi.powi(4) + num / den
}

/// Quadrature `Q = c1 z + c2 p` measured after free evolution for `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimalQuadrature {
    pub c1: f64,
    pub c2: f64,
    pub var_q: f64,
    /// `4 Var(G0'(t))`.
    pub fisher: f64,
}

/// `4 Var(G0'(t))` with `G0'(t) = (t/hbar)(m z - t p/2)` on the evolved state.
///
/// The coefficients satisfy `[G0', Q] = i`, i.e. `t (m c2 + t c1 / 2) = 1`;
/// the remaining freedom is fixed by minimizing `Var(Q)`, which gives
/// `c = S^-1 a / (t a^T S^-1 a)` with `a = (t/2, m)` and `S` the
/// covariance matrix. For pure Gaussian states `1/Var(Q) = 4 Var(G0')`.
pub fn optimal_quadrature(m: &Moments, t: f64, params: &PhysicalParams) -> OptimalQuadrature {
    let (hbar, mass) = (params.hbar, params.mass);
    let fisher = 4.0 * t * t / (hbar * hbar)
        * (mass * mass * m.var_z + t * t * m.var_p / 4.0 - mass * t * m.cov_zp);
    if t == 0.0 {
        return OptimalQuadrature {
            c1: 0.0,
            c2: 0.0,
            var_q: f64::INFINITY,
            fisher,
        };
    }
    let det = m.var_z * m.var_p - m.cov_zp * m.cov_zp;
    let a = [t / 2.0, mass];
    // S^-1 a
    let sa = [
        (m.var_p * a[0] - m.cov_zp * a[1]) / det,
        (-m.cov_zp * a[0] + m.var_z * a[1]) / det,
    ];
    let asa = a[0] * sa[0] + a[1] * sa[1];
    let c1 = sa[0] / (t * asa);
    let c2 = sa[1] / (t * asa);
    let var_q = c1 * c1 * m.var_z + c2 * c2 * m.var_p + 2.0 * c1 * c2 * m.cov_zp;
    OptimalQuadrature { c1, c2, var_q, fisher }
}

pub fn optimal_quadrature_cfi(m: &Moments, t: f64, params: &PhysicalParams) -> f64 {
    optimal_quadrature(m, t, params).fisher
}

/// Fisher information for translations of the outcome variable,
/// `sum (dP/d lambda)^2 / P`, with central differences between bins.
pub fn shift_cfi_oracle(d: &Distribution, floor: f64) -> Result<f64> {
    if d.basis == Basis::Population {
        return Err(Error::Unsupported("shift information needs a continuous basis".into()));
    }
    let cutoff = floor * d.max_density();
    let w = d.bin_width;
    let mut total = 0.0;
    for ch in &d.channels {
        for i in 1..ch.len().saturating_sub(1) {
            let p = ch[i];
            if p > cutoff && p > 0.0 {
                let deriv = (ch[i + 1] - ch[i - 1]) / (2.0 * w);
                total += deriv * deriv / p;
            }
        }
    }
    Ok(total * w)
}

/// Blurs every channel with a normalized Gaussian of width `sigma_res`
/// (outcome units). Convolution is circular; the kernel is truncated at six
/// widths and renormalized.
pub fn convolve_resolution(d: &Distribution, sigma_res: f64) -> Result<Distribution> {
    if d.basis == Basis::Population {
        return Err(Error::Unsupported("resolution blur applies to position or momentum".into()));
    }
    if !(sigma_res.is_finite() && sigma_res >= 0.0) {
        return Err(Error::InvalidParameter(format!("resolution must be >= 0, got {sigma_res}")));
    }
    if sigma_res == 0.0 {
        return Ok(d.clone());
    }
    let n = d.bins.len();
    let half = (6.0 * sigma_res / d.bin_width).ceil() as usize;
    if 2 * half + 1 > n {
        return Err(Error::KernelTooWide {
            kernel_bins: 2 * half + 1,
            bins: n,
        });
    }
    let mut kernel = vec![Complex64::new(0.0, 0.0); n];
    let mut total = 0.0;
    for j in 0..=half {
        let x = j as f64 * d.bin_width / sigma_res;
        let w = (-0.5 * x * x).exp();
        kernel[j].re += w;
        total += w;
        if j > 0 {
            kernel[n - j].re += w;
            total += w;
        }
    }
    kernel.iter_mut().for_each(|k| *k /= total);

    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    fwd.process(&mut kernel);
    let channels = d
        .channels
        .iter()
        .map(|ch| {
            let mut buf: Vec<Complex64> = ch.iter().map(|&x| Complex64::new(x, 0.0)).collect();
            fwd.process(&mut buf);
            buf.iter_mut().zip(&kernel).for_each(|(b, k)| *b *= k);
            inv.process(&mut buf);
            buf.iter().map(|c| (c.re / n as f64).max(0.0)).collect()
        })
        .collect();
    Ok(Distribution::new(d.basis, d.per_state, d.bins.clone(), channels, d.bin_width))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::propagator::{apply_g0_generator, apply_kinetic};
    use crate::wavepacket::{gaussian, measure_distribution, moments};

    fn params() -> PhysicalParams {
        PhysicalParams::default()
    }

    fn gaussian_density(n: usize, width: f64, var: f64, center: f64) -> Distribution {
        let bins: Vec<f64> = (0..n).map(|i| (i as f64 - n as f64 / 2.0) * width).collect();
        let density = bins
            .iter()
            .map(|x| (-(x - center).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt())
            .collect();
        Distribution::new(Basis::Position, false, bins, vec![density], width)
    }

    #[test]
    fn free_qfi_closed_form() {
        let p = params();
        let m = Moments::gaussian(10.0, 1.0);
        assert!((qfi_free_analytic(200.0, &m, &p) - 1.6e7).abs() < 1e-6);
        assert_eq!(qfi_free_analytic(0.0, &m, &p), 0.0);
    }

    #[test]
    fn kc_qfi_closed_form() {
        let p = params();
        let m = Moments::gaussian(10.0, 1.0);
        assert!((qfi_kc_analytic(100.0, 100.0, &m, &p) - 1.16e8).abs() < 1e-4);
        assert!((qfi_kc_analytic(200.0, 0.0, &m, &p) - 4.16e8).abs() < 1e-4);
        let point = Moments { var_z: 0.0, var_p: 0.0, ..m };
        assert!((qfi_kc_analytic(100.0, 100.0, &point, &p) - 1e8).abs() < 1e-6);
    }

    #[test]
    fn contrast_law() {
        let p = params();
        assert_eq!(contrast_analytic(50.0, 50.0, 10.0, &p), 1.0);
        let c = contrast_analytic(0.0, 20.0, 10.0, &p);
        assert!((c - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn population_closed_form_limits() {
        let p = params();
        assert!((cfi_population_analytic(100.0, 100.0, 10.0, 0.0, &p) - 1e8).abs() < 1e-6);
        assert!(cfi_population_analytic(100.0, 0.0, 10.0, 0.0, &p) < 1e-6 * 1e8);
    }

    #[test]
    fn kc_closed_forms() {
        let p = params();
        assert!((cfi_kc_momentum_closed_form(100.0, 10.0, &p) - 1.08e8).abs() < 1e-4);
        assert!((cfi_kc_position_closed_form(100.0, 10.0, &p) - 1.016e8).abs() < 1e-4);
    }

    #[test]
    fn qfi_numeric_free_fall() {
        let grid = make_grid(8192, -512.0, 768.0).unwrap().shared();
        let p = params();
        let psi = gaussian(&grid, &p, 10.0, 0.0, 0.0).unwrap();
        let t = 200.0;
        let settings = FisherSettings::new(0.0, default_dg(&p, t), 1e8).unwrap();
        let est = qfi_numeric(|g| Ok(apply_g0_generator(&psi, &p, g, t)), settings).unwrap();
        assert!((est.value - 1.6e7).abs() / 1.6e7 < 1e-6, "{}", est.value);
        assert!(!est.is_flagged());
    }

    #[test]
    fn qfi_numeric_of_constant_family_vanishes() {
        let grid = make_grid(4096, -256.0, 384.0).unwrap().shared();
        let p = params();
        let psi = gaussian(&grid, &p, 10.0, 0.0, 0.0).unwrap();
        let settings = FisherSettings::new(0.0, 1e-6, 1.0).unwrap();
        let est = qfi_numeric(|_| Ok(psi.clone()), settings).unwrap();
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn qfi_gauge_invariance() {
        let grid = make_grid(8192, -512.0, 768.0).unwrap().shared();
        let p = params();
        let psi = gaussian(&grid, &p, 10.0, 0.0, 0.0).unwrap();
        let t = 200.0;
        let settings = FisherSettings::new(0.0, default_dg(&p, t), 1e8).unwrap();
        let plain = qfi_numeric(|g| Ok(apply_g0_generator(&psi, &p, g, t)), settings).unwrap();
        let phased = qfi_numeric(
            |g| Ok(apply_g0_generator(&psi, &p, g, t).with_global_phase(3.0e4 * g + 7.0e9 * g * g + 0.3)),
            settings,
        )
        .unwrap();
        let rel = (plain.value - phased.value).abs() / plain.value;
        assert!(rel < 1e-9, "{rel}");
    }

    #[test]
    fn cfi_position_of_shifted_gaussian() {
        // P(z; g) = Gaussian of variance v centred at c g: F = c^2 / v
        let (c, v) = (5000.0, 50.0);
        let settings = FisherSettings::new(0.0, 1e-6, 1.0).unwrap();
        let est = cfi_distribution(|g| Ok(gaussian_density(4096, 0.25, v, c * g)), settings).unwrap();
        assert!((est.value - c * c / v).abs() / (c * c / v) < 1e-4, "{}", est.value);
        assert!(!est.is_flagged(), "{:?}", est.flags);
    }

    #[test]
    fn cfi_population_two_outcomes() {
        // P_a = (1 + sin(k g))/2 at g = 0 gives F = k^2
        let k = 1e4;
        let settings = FisherSettings::new(0.0, 1e-8, 1e8).unwrap();
        let est = cfi_distribution(
            |g| {
                let pa = 0.5 * (1.0 + (k * g).sin());
                Ok(Distribution::new(Basis::Population, false, vec![0.5, -0.5], vec![vec![pa, 1.0 - pa]], 1.0))
            },
            settings,
        )
        .unwrap();
        assert!((est.value - k * k).abs() / (k * k) < 1e-6);
    }

    #[test]
    fn shift_oracle_gaussians() {
        let pos = gaussian_density(8192, 0.15625, 50.0, 0.0);
        assert!((shift_cfi_oracle(&pos, PROBABILITY_FLOOR).unwrap() - 0.02).abs() / 0.02 < 1e-3);
        let mut mom = gaussian_density(8192, 2e-3, 0.005, 0.0);
        mom.basis = Basis::Momentum;
        assert!((shift_cfi_oracle(&mom, PROBABILITY_FLOOR).unwrap() - 200.0).abs() / 200.0 < 1e-3);
    }

    #[test]
    fn convolution_identity_and_mass() {
        let d = gaussian_density(1024, 0.5, 4.0, 10.0);
        assert_eq!(convolve_resolution(&d, 0.0).unwrap(), d);
        let blurred = convolve_resolution(&d, 2.0).unwrap();
        assert!((blurred.total_mass() - d.total_mass()).abs() < 1e-10);
        // variances add for Gaussians
        let var: f64 = blurred.bins.iter().zip(&blurred.channels[0]).map(|(x, p)| (x - 10.0).powi(2) * p).sum::<f64>()
            * blurred.bin_width;
        assert!((var - 8.0).abs() < 1e-6, "{var}");
        assert!(matches!(convolve_resolution(&d, 100.0), Err(Error::KernelTooWide { .. })));
    }

    #[test]
    fn convolution_population_rejected() {
        let d = Distribution::new(Basis::Population, false, vec![0.5, -0.5], vec![vec![1.0, 0.0]], 1.0);
        assert!(convolve_resolution(&d, 1.0).is_err());
    }

    #[test]
    fn blur_never_adds_information() {
        let settings = FisherSettings::new(0.0, 1e-6, 1.0).unwrap();
        let mut last = f64::INFINITY;
        for sigma in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let est = cfi_distribution(
                |g| convolve_resolution(&gaussian_density(2048, 0.25, 4.0, 3000.0 * g), sigma),
                settings,
            )
            .unwrap();
            assert!(est.value <= last * (1.0 + 1e-9), "sigma {sigma}: {} > {last}", est.value);
            last = est.value;
        }
    }

    #[test]
    fn optimal_quadrature_saturates_for_gaussians() {
        let grid = make_grid(8192, -512.0, 768.0).unwrap().shared();
        let p = params();
        let psi = gaussian(&grid, &p, 10.0, 0.0, 0.0).unwrap();
        let t = 200.0;
        let evolved = moments(&apply_kinetic(&psi, &p, t), &p).unwrap();
        let q = optimal_quadrature(&evolved, t, &p);
        assert!((q.fisher * q.var_q - 1.0).abs() < 1e-8);
        assert!((t * (q.c2 + t * q.c1 / 2.0) - 1.0).abs() < 1e-12);
        // the evolved free state reproduces the free-fall QFI of the input
        let initial = moments(&psi, &p).unwrap();
        let free = qfi_free_analytic(t, &initial, &p);
        assert!((q.fisher - free).abs() / free < 1e-8, "{} vs {free}", q.fisher);
        assert_eq!(optimal_quadrature_cfi(&evolved, 0.0, &p), 0.0);
    }

    #[test]
    fn population_matches_distribution_of_spinor() {
        let grid = make_grid(4096, -256.0, 384.0).unwrap().shared();
        let p = params();
        let psi = gaussian(&grid, &p, 10.0, 0.0, 0.0).unwrap();
        let d = measure_distribution(&psi, &p, Basis::Population, false).unwrap();
        assert!((d.channels[0][0] - 1.0).abs() < 1e-12 && d.channels[0][1] == 0.0);
    }
}
