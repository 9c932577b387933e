//! Time-domain biphoton wavepackets.
//!
//! Two independent routes produce G²(τ): the closed-form residue result
//! ([`g2_analytic`]) and a discrete Fourier transform of a sampled spectrum
//! ([`psi_numeric`]). The numeric route uses the kernel e^{−iωτ} with
//! trapezoid weights and the normalization
//!
//! ```text
//! ψ(τ) = (1/2π) ∫ F(ω) e^{−iωτ} dω,
//! ```
//!
//! so that ∫|ψ|² dτ = (1/2π) ∫|F|² dω with τ in units of 1/γ13.

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dressed_modes, AmplitudeModel, ComplexSpectrum, DressedModes, FrequencyGrid, SystemParams};
use crate::units::{natural_to_ns, ns_to_natural};

/// Sampling of the delay axis τ ∈ [0, tau_max] (ns).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGridConfig {
    pub tau_max: f64,
    pub n_points: usize,
}

impl Default for TimeGridConfig {
    fn default() -> Self {
        Self {
            tau_max: 400.0,
            n_points: 1601,
        }
    }
}

impl TimeGridConfig {
    pub fn new(tau_max: f64, n_points: usize) -> Result<Self> {
        let g = Self { tau_max, n_points };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_max > 0.0) || !self.tau_max.is_finite() {
            return Err(Error::invalid("tau_max", "must be positive and finite"));
        }
        if self.n_points < 16 {
            return Err(Error::invalid("n_points", "need at least 16 points"));
        }
        Ok(())
    }

    pub fn tau_step(&self) -> f64 {
        self.tau_max / (self.n_points - 1) as f64
    }

    pub fn tau(&self, i: usize) -> f64 {
        i as f64 * self.tau_step()
    }
}

/// G²(τ) on a uniform delay grid in ns, optionally with the amplitude ψ(τ).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wavepacket {
    pub tau_min: f64,
    pub tau_step: f64,
    pub g2: Vec<f64>,
    pub psi: Option<Vec<C64>>,
}

impl Wavepacket {
    pub fn from_g2(tau_min: f64, tau_step: f64, g2: Vec<f64>) -> Self {
        Self {
            tau_min,
            tau_step,
            g2,
            psi: None,
        }
    }

    pub fn from_psi(tau_min: f64, tau_step: f64, psi: Vec<C64>) -> Self {
        let g2 = psi.iter().map(|v| v.norm_sqr()).collect();
        Self {
            tau_min,
            tau_step,
            g2,
            psi: Some(psi),
        }
    }

    pub fn len(&self) -> usize {
        self.g2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g2.is_empty()
    }

    pub fn tau(&self, i: usize) -> f64 {
        self.tau_min + i as f64 * self.tau_step
    }

    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.tau(i))
    }

    pub fn tau_end(&self) -> f64 {
        self.tau(self.len().saturating_sub(1))
    }

    /// ∫G² dτ (trapezoid, τ in ns).
    pub fn energy(&self) -> f64 {
        trapezoid(&self.g2, self.tau_step)
    }

    /// Index and value of the global maximum.
    pub fn peak(&self) -> (usize, f64) {
        self.g2.iter().copied().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |best, (i, v)| if v > best.1 { (i, v) } else { best },
        )
    }

    /// Linear interpolation of G² at `tau`; zero outside the grid.
    pub fn g2_at(&self, tau: f64) -> f64 {
        let x = (tau - self.tau_min) / self.tau_step;
        if x < 0.0 || x > (self.len() - 1) as f64 {
            return 0.0;
        }
        let i = (x.floor() as usize).min(self.len() - 2);
        let f = x - i as f64;
        self.g2[i] * (1.0 - f) + self.g2[i + 1] * f
    }

    /// A copy scaled to unit peak.
    pub fn normalized(&self) -> Wavepacket {
        let (_, peak) = self.peak();
        let s = if peak > 0.0 { 1.0 / peak } else { 1.0 };
        Wavepacket {
            tau_min: self.tau_min,
            tau_step: self.tau_step,
            g2: self.g2.iter().map(|v| v * s).collect(),
            psi: self.psi.as_ref().map(|p| p.iter().map(|v| v * s.sqrt()).collect()),
        }
    }

    /// Last delay at which G² is still at least e⁻² of its peak (ns).
    pub fn temporal_length(&self) -> f64 {
        let (_, peak) = self.peak();
        let level = peak * (-2.0f64).exp();
        let last = self.g2.iter().rposition(|&v| v >= level).unwrap_or(0);
        if last + 1 < self.len() {
            // interpolate the crossing between `last` and `last + 1`
            let (a, b) = (self.g2[last], self.g2[last + 1]);
            let f = if a > b { (a - level) / (a - b) } else { 0.0 };
            self.tau(last) + f * self.tau_step
        } else {
            self.tau(last)
        }
    }

    pub(crate) fn same_grid(&self, other: &Wavepacket) -> bool {
        self.len() == other.len()
            && (self.tau_min - other.tau_min).abs() <= 1e-9 * self.tau_step
            && (self.tau_step - other.tau_step).abs() <= 1e-9 * self.tau_step
    }
}

pub(crate) fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => (values.iter().sum::<f64>() - 0.5 * (values[0] + values[n - 1])) * step,
    }
}

/// The bracket e^{−2γ+τ} + e^{−2γ−τ} − 2cos(Ωeτ)e^{−(γ++γ−)τ} for τ ≥ 0 (natural units).
#[inline]
pub fn two_component_shape(modes: &DressedModes, tau: f64) -> f64 {
    if tau < 0.0 {
        return 0.0;
    }
    let a = (-modes.gamma_plus * tau).exp();
    let b = (-modes.gamma_minus * tau).exp();
    // (a − b)² + 2ab(1 − cos Ωeτ), written to stay non-negative in floating point
    let half = 0.5 * modes.omega_e * tau;
    (a - b).powi(2) + 4.0 * a * b * half.sin().powi(2)
}

/// G²(τ) = ½|C|²[e^{−2γ+τ} + e^{−2γ−τ} − 2cos(Ωeτ)e^{−(γ++γ−)τ}]Θ(τ).
pub fn g2_analytic(p: &SystemParams, a: &AmplitudeModel, grid: &TimeGridConfig) -> Result<Wavepacket> {
    a.validate()?;
    grid.validate()?;
    let modes = dressed_modes(p)?;
    let pre = 0.5 * a.scale.norm_sqr();
    let g2 = (0..grid.n_points)
        .map(|i| pre * two_component_shape(&modes, ns_to_natural(grid.tau(i), p.si_gamma13)))
        .collect();
    Ok(Wavepacket::from_g2(0.0, grid.tau_step(), g2))
}

/// ψ(τ) on the full periodic FFT delay grid of a spectrum.
///
/// Samples run from τ = −N/2·dτ to (N/2 − 1)·dτ with dτ = 2π/(N dω), all in
/// natural units.
#[derive(Clone, Debug)]
pub struct PsiTrace {
    pub tau_start: f64,
    pub tau_step: f64,
    pub values: Vec<C64>,
}

impl PsiTrace {
    pub fn tau(&self, i: usize) -> f64 {
        self.tau_start + i as f64 * self.tau_step
    }

    /// ∫|ψ|² dτ over the whole period.
    pub fn energy(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.tau_step
    }

    /// Linear interpolation of ψ at `tau` (natural units).
    pub fn at(&self, tau: f64) -> C64 {
        let n = self.values.len();
        let x = (tau - self.tau_start) / self.tau_step;
        if x < 0.0 || x > (n - 1) as f64 {
            return C64::new(0.0, 0.0);
        }
        let i = (x.floor() as usize).min(n - 2);
        let f = x - i as f64;
        self.values[i] * (1.0 - f) + self.values[i + 1] * f
    }
}

/// Discrete Fourier transform of `spectrum` with trapezoid weights.
pub fn transform(spectrum: &ComplexSpectrum) -> Result<PsiTrace> {
    spectrum.validate()?;
    let n = spectrum.len();
    let dw = spectrum.omega_step;
    let dt = TAU / (n as f64 * dw);
    let mut buf: Vec<C64> = spectrum.values.clone();
    buf[0] *= 0.5;
    buf[n - 1] *= 0.5;
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    // ψ(τ_k) = (dω/2π) e^{−iω_min τ_k} Σ_j F_j e^{−2πi jk/N}, with τ_k = k dτ taken
    // periodically so that indices k ≥ N/2 are negative delays.
    let half = n / 2;
    let norm = dw / TAU;
    let values = (0..n)
        .map(|i| {
            let k = (i + n - half) % n;
            let tau = (i as f64 - half as f64) * dt;
            buf[k] * norm * C64::from_polar(1.0, -spectrum.omega_min * tau)
        })
        .collect();
    Ok(PsiTrace {
        tau_start: -(half as f64) * dt,
        tau_step: dt,
        values,
    })
}

/// ψ(τ) and G² = |ψ|² on the delay grid, by Fourier transform of `spectrum`.
///
/// Fails when the spectrum's sampling cannot resolve the requested grid:
/// the frequency span must be at least 2π/τ_step and the transform period
/// 2π/dω at least twice τ_max.
pub fn psi_numeric(spectrum: &ComplexSpectrum, grid: &TimeGridConfig, si_gamma13: f64) -> Result<Wavepacket> {
    grid.validate()?;
    spectrum.validate()?;
    let span = spectrum.grid().span() + spectrum.omega_step;
    let tau_step = ns_to_natural(grid.tau_step(), si_gamma13);
    if span < TAU / tau_step {
        return Err(Error::GridResolution(format!(
            "frequency span {span:.4} is below the Nyquist requirement 2π/τ_step = {:.4}",
            TAU / tau_step
        )));
    }
    let period = TAU / spectrum.omega_step;
    let tau_max = ns_to_natural(grid.tau_max, si_gamma13);
    if period < 2.0 * tau_max {
        return Err(Error::GridResolution(format!(
            "transform period {period:.3} is shorter than 2·τ_max = {:.3} (1/γ13 units)",
            2.0 * tau_max
        )));
    }
    let trace = transform(spectrum)?;
    let psi = (0..grid.n_points)
        .map(|i| trace.at(ns_to_natural(grid.tau(i), si_gamma13)))
        .collect();
    Ok(Wavepacket::from_psi(0.0, grid.tau_step(), psi))
}

/// Settings behind [`frequency_grid_for`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralWindow {
    /// Frequency span as a multiple of max(γ+, γ−, Ωe); zero keeps the floor only.
    pub span_factor: f64,
    /// Lower bound on the span as max(`span_floor_gamma`·γ+, `span_floor_omega`·Ωe).
    pub span_floor_gamma: f64,
    pub span_floor_omega: f64,
    /// Transform period in units of the slowest decay time 1/min(γ±).
    pub period_decays: f64,
    /// log2 of the minimum number of points.
    pub min_log2_points: u32,
}

impl Default for SpectralWindow {
    fn default() -> Self {
        Self {
            span_factor: 150.0,
            span_floor_gamma: 40.0,
            span_floor_omega: 4.0,
            period_decays: 16.0,
            min_log2_points: 14,
        }
    }
}

/// A frequency grid centred between the two poles that covers both with
/// margin and resolves the slowest decay for a delay window of
/// `tau_max_ns`.
pub fn frequency_grid_for(p: &SystemParams, tau_max_ns: f64, window: &SpectralWindow) -> Result<FrequencyGrid> {
    let modes = dressed_modes(p)?;
    let slow = modes.gamma_minus.min(modes.gamma_plus);
    let fast = modes.gamma_minus.max(modes.gamma_plus);
    let span = (window.span_factor * fast.max(modes.omega_e))
        .max(window.span_floor_gamma * modes.gamma_plus)
        .max(window.span_floor_omega * modes.omega_e);
    let period = (window.period_decays / slow).max(2.2 * ns_to_natural(tau_max_ns, p.si_gamma13));
    let dw = TAU / period;
    let n = ((span / dw).ceil() as usize)
        .max(1usize << window.min_log2_points)
        .next_power_of_two();
    let grid = FrequencyGrid::new(0.5 * p.delta_c - 0.5 * n as f64 * dw, dw, n)?;
    check_coverage(&grid, &modes)?;
    Ok(grid)
}

/// Both poles must sit at least 20·max(γ±) inside the grid.
pub fn check_coverage(grid: &FrequencyGrid, modes: &DressedModes) -> Result<()> {
    let margin = 20.0 * modes.gamma_plus.max(modes.gamma_minus);
    for pole in [modes.delta_plus, modes.delta_minus] {
        if pole - margin < grid.omega_min || pole + margin > grid.omega_max() {
            return Err(Error::GridResolution(format!(
                "pole at {pole:.3} lacks a margin of {margin:.3} inside [{:.3}, {:.3}]",
                grid.omega_min,
                grid.omega_max()
            )));
        }
    }
    Ok(())
}

/// |F(ω)|² normalized to unit peak.
pub fn spectrum_power(spectrum: &ComplexSpectrum) -> Result<Vec<f64>> {
    spectrum.validate()?;
    let power: Vec<f64> = spectrum.values.iter().map(|v| v.norm_sqr()).collect();
    let peak = power.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        Ok(power.into_iter().map(|v| v / peak).collect())
    } else {
        Ok(power)
    }
}

/// Quantum-beat period 2π/Ωe in ns.
pub fn beat_period(p: &SystemParams) -> Result<f64> {
    let modes = dressed_modes(p)?;
    Ok(natural_to_ns(TAU / modes.omega_e, p.si_gamma13))
}

/// Ratio |ψ|²/(½|C|²·bracket) that the numeric route carries relative to the
/// analytic one for a two-pole spectrum with residue scale `r`.
///
/// Evaluating the residues of r/((ω − a)(ω − b)) gives
/// ψ(τ) = −i r (e^{−iaτ} − e^{−ibτ})/(a − b), hence |ψ|² = |r|²/|a − b|² · bracket.
pub fn two_pole_gain(residue_scale: C64, modes: &DressedModes) -> f64 {
    let d = modes.pole_minus() - modes.pole_plus();
    residue_scale.norm_sqr() / d.norm_sqr()
}

/// Amplitude that puts [`g2_analytic`] on the scale of `psi_numeric(chi3_approx(p))`.
pub fn matched_amplitude(p: &SystemParams) -> Result<AmplitudeModel> {
    let modes = dressed_modes(p)?;
    let r = -0.25 / C64::new(p.delta_p, p.gamma14);
    AmplitudeModel::real((2.0 * two_pole_gain(r, &modes)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::two_pole_spectrum;

    #[test]
    fn zero_delay_is_dark() {
        for &(dc, oc) in &[(0.0, 14.8), (28.3, 14.8), (-100.0, 30.0)] {
            let w = g2_analytic(
                &SystemParams::with_coupling(dc, oc),
                &AmplitudeModel::default(),
                &TimeGridConfig::default(),
            )
            .unwrap();
            assert_eq!(w.g2[0], 0.0);
        }
    }

    #[test]
    fn resonant_form() {
        let p = SystemParams::with_coupling(0.0, 14.8);
        let grid = TimeGridConfig::new(300.0, 3001).unwrap();
        let w = g2_analytic(&p, &AmplitudeModel::real(2.0).unwrap(), &grid).unwrap();
        for (i, tau) in w.taus().enumerate() {
            let t = ns_to_natural(tau, p.si_gamma13);
            let expect = 4.0 * (-(1.0 + p.gamma12) * t).exp() * (1.0 - (p.omega_c * t).cos());
            assert!((w.g2[i] - expect).abs() <= 1e-12 * expect.max(1e-3));
        }
    }

    #[test]
    fn single_pole_is_pure_exponential() {
        let gamma = 0.3;
        let grid = FrequencyGrid::centered(2.0, 4000.0, 1 << 18).unwrap();
        let spec = grid.evaluate(|w| C64::new(1.0, 0.0) / C64::new(w - 2.0, gamma));
        let trace = transform(&spec).unwrap();
        // ψ(τ) = −i e^{−i·2τ} e^{−γτ}
        for &t in &[0.5, 1.0, 3.0, 6.0] {
            let v = trace.at(t);
            let expect = (-gamma * t).exp();
            assert!((v.norm() - expect).abs() < 2e-3, "{t}: {} vs {expect}", v.norm());
        }
    }

    #[test]
    fn nyquist_violation_is_reported() {
        let p = SystemParams::with_coupling(0.0, 14.8);
        let grid = FrequencyGrid::centered(0.0, 50.0, 256).unwrap();
        let spec = crate::model::chi3_approx(&p, &grid).unwrap();
        let err = psi_numeric(&spec, &TimeGridConfig::new(400.0, 4001).unwrap(), p.si_gamma13).unwrap_err();
        assert!(matches!(err, Error::GridResolution(_)));
    }

    #[test]
    fn coverage_violation_is_reported() {
        let p = SystemParams::with_coupling(45.0, 14.8);
        let modes = dressed_modes(&p).unwrap();
        let grid = FrequencyGrid::centered(0.0, 20.0, 1024).unwrap();
        assert!(check_coverage(&grid, &modes).is_err());
    }

    #[test]
    fn beat_periods() {
        let period = |dc, oc| beat_period(&SystemParams::with_coupling(dc, oc)).unwrap();
        assert!((period(0.0, 14.8) - 22.52).abs() < 0.01);
        assert!((period(45.0, 14.8) - 7.04).abs() < 0.01);
        assert!((period(-100.0, 30.0) - 3.19).abs() < 0.01);
    }

    #[test]
    fn gain_matches_transform() {
        let p = SystemParams::with_coupling(10.0, 12.0);
        let modes = dressed_modes(&p).unwrap();
        let grid = frequency_grid_for(&p, 200.0, &SpectralWindow::default()).unwrap();
        let r = C64::new(0.7, -0.2);
        let spec = two_pole_spectrum(r, modes.pole_minus(), modes.pole_plus(), &grid);
        let trace = transform(&spec).unwrap();
        let t = 1.3;
        let expect = two_pole_gain(r, &modes) * two_component_shape(&modes, t);
        assert!((trace.at(t).norm_sqr() - expect).abs() < 1e-3 * expect);
    }
}
