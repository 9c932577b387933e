//! Fabry–Pérot etalon filters acting on the anti-Stokes spectral amplitude.
//!
//! Within one free spectral range an etalon mode is a single causal pole.
//! The filter multiplies the biphoton amplitude χ³(ω) directly, since ω is
//! the anti-Stokes detuning.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ComplexSpectrum, DressedModes, FrequencyGrid};
use crate::units::{hz_to_rate, ns_to_natural, SI_GAMMA13};
use crate::wavepacket::Wavepacket;

/// One longitudinal mode of an etalon; frequencies in γ13 units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtalonFilter {
    pub center: f64,
    pub fwhm: f64,
    pub fsr: f64,
    pub peak_transmission: f64,
}

impl EtalonFilter {
    pub fn new(center: f64, fwhm: f64, fsr: f64, peak_transmission: f64) -> Result<Self> {
        let f = Self {
            center,
            fwhm,
            fsr,
            peak_transmission,
        };
        f.validate()?;
        Ok(f)
    }

    /// Builds a filter from instrument numbers in MHz/GHz.
    pub fn from_si(center: f64, fwhm_mhz: f64, fsr_ghz: f64, peak_transmission: f64, si_gamma13: f64) -> Result<Self> {
        Self::new(
            center,
            hz_to_rate(fwhm_mhz * 1e6, si_gamma13),
            hz_to_rate(fsr_ghz * 1e9, si_gamma13),
            peak_transmission,
        )
    }

    /// The 15-MHz, 22.9-GHz FSR, 12 % etalon that isolates the narrow mode.
    pub fn narrowband(center: f64) -> Self {
        Self::from_si(center, 15.0, 22.9, 0.12, SI_GAMMA13).expect("valid instrument constants")
    }

    /// The 500-MHz etalon used when both components should pass.
    pub fn broadband(center: f64) -> Self {
        Self::from_si(center, 500.0, 22.9, 0.45, SI_GAMMA13).expect("valid instrument constants")
    }

    /// A filter wide enough to act as the identity on any simulated window.
    pub fn all_pass(center: f64) -> Self {
        Self::new(center, 1e6, 1e9, 1.0).expect("valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !self.center.is_finite() {
            return Err(Error::invalid("center", "must be finite"));
        }
        if !(self.fwhm > 0.0) || !(self.fwhm < self.fsr) || !self.fsr.is_finite() {
            return Err(Error::invalid(
                "fwhm",
                format!("need 0 < fwhm < fsr, got fwhm = {}, fsr = {}", self.fwhm, self.fsr),
            ));
        }
        if !(self.peak_transmission > 0.0 && self.peak_transmission <= 1.0) {
            return Err(Error::invalid(
                "peak_transmission",
                format!("must lie in (0, 1], got {}", self.peak_transmission),
            ));
        }
        Ok(())
    }

    /// Amplitude response √T·(iΓ/2)/((ω − ω0) + iΓ/2).
    #[inline]
    pub fn response(&self, omega: f64) -> C64 {
        let hw = 0.5 * self.fwhm;
        self.peak_transmission.sqrt() * C64::new(0.0, hw) / C64::new(omega - self.center, hw)
    }

    /// Power transmission |t(ω)|².
    pub fn transmission(&self, omega: f64) -> f64 {
        self.response(omega).norm_sqr()
    }
}

/// Filter definition as written in run configs, with instrument units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EtalonSpec {
    /// Centre in γ13 units; `None` centres on the narrow dressed mode.
    #[serde(default)]
    pub center_gamma13: Option<f64>,
    pub fwhm_mhz: f64,
    pub fsr_ghz: f64,
    pub peak_transmission: f64,
}

impl EtalonSpec {
    pub fn resolve(&self, modes: &DressedModes, si_gamma13: f64) -> Result<EtalonFilter> {
        let center = self.center_gamma13.unwrap_or(modes.narrow_pole().re);
        EtalonFilter::from_si(center, self.fwhm_mhz, self.fsr_ghz, self.peak_transmission, si_gamma13)
    }
}

/// Etalon amplitude response sampled on `grid`.
///
/// Only one longitudinal mode is modelled, so the grid must stay within half
/// an FSR of the centre.
pub fn etalon_amplitude(f: &EtalonFilter, grid: &FrequencyGrid) -> Result<ComplexSpectrum> {
    f.validate()?;
    grid.validate()?;
    let half = 0.5 * f.fsr;
    if grid.omega_min < f.center - half || grid.omega_max() > f.center + half {
        return Err(Error::OutOfBand(format!(
            "grid [{:.1}, {:.1}] leaves the ±FSR/2 band [{:.1}, {:.1}] around the etalon mode",
            grid.omega_min,
            grid.omega_max(),
            f.center - half,
            f.center + half
        )));
    }
    Ok(grid.evaluate(|w| f.response(w)))
}

/// Pointwise product of two spectra on the same grid.
pub fn multiply(a: &ComplexSpectrum, b: &ComplexSpectrum) -> Result<ComplexSpectrum> {
    if !a.grid().same_as(&b.grid()) {
        return Err(Error::GridMismatch(format!("{:?} vs {:?}", a.grid(), b.grid())));
    }
    Ok(ComplexSpectrum {
        omega_min: a.omega_min,
        omega_step: a.omega_step,
        values: a.values.iter().zip(&b.values).map(|(x, y)| x * y).collect(),
    })
}

/// Biphoton amplitude after the etalon.
pub fn apply_filter(spectrum: &ComplexSpectrum, f: &EtalonFilter) -> Result<ComplexSpectrum> {
    spectrum.validate()?;
    let response = etalon_amplitude(f, &spectrum.grid())?;
    multiply(spectrum, &response)
}

/// Applies several filters in sequence.
pub fn apply_filters(spectrum: &ComplexSpectrum, filters: &[EtalonFilter]) -> Result<ComplexSpectrum> {
    filters.iter().try_fold(spectrum.clone(), |s, f| apply_filter(&s, f))
}

/// Mean beat visibility (max − min)/(max + min) over consecutive windows one
/// beat period long, covering [start, end) ns.
///
/// Each window holds one maximum and one minimum of a beat, so slow decay
/// contributes only its change across one period.
pub fn modulation_depth(w: &Wavepacket, start_ns: f64, end_ns: f64, period_ns: f64) -> Result<f64> {
    if !(period_ns > 0.0) {
        return Err(Error::invalid("period", "beat period must be positive"));
    }
    if end_ns - start_ns < period_ns {
        return Err(Error::InsufficientSpan(format!(
            "window [{start_ns:.2}, {end_ns:.2}] ns is shorter than one beat period {period_ns:.2} ns"
        )));
    }
    if start_ns < w.tau_min - 1e-9 || end_ns > w.tau_end() + 1e-6 * w.tau_step {
        return Err(Error::InsufficientSpan(format!(
            "window [{start_ns:.2}, {end_ns:.2}] ns exceeds the wavepacket span [{:.2}, {:.2}] ns",
            w.tau_min,
            w.tau_end()
        )));
    }
    let windows = ((end_ns - start_ns) / period_ns + 1e-9).floor() as usize;
    let mut total = 0.0;
    for k in 0..windows {
        let lo = start_ns + k as f64 * period_ns;
        let hi = lo + period_ns;
        let (mut max, mut min) = (f64::NEG_INFINITY, f64::INFINITY);
        for (i, tau) in w.taus().enumerate() {
            if tau >= lo - 1e-9 && tau <= hi + 1e-9 {
                max = max.max(w.g2[i]);
                min = min.min(w.g2[i]);
            }
        }
        if !max.is_finite() {
            return Err(Error::InsufficientSpan("beat window contains no samples".into()));
        }
        total += if max + min > 0.0 {
            (max - min) / (max + min)
        } else {
            0.0
        };
    }
    Ok(total / windows as f64)
}

/// Beat modulation depth over the first three beat periods after the peak.
pub fn beat_depth(w: &Wavepacket, period_ns: f64) -> Result<f64> {
    let (i, _) = w.peak();
    let start = w.tau(i);
    modulation_depth(w, start, start + 3.0 * period_ns, period_ns)
}

/// Depth before and after filtering.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeatSuppression {
    pub depth_before: f64,
    pub depth_after: f64,
}

pub fn beat_suppression(before: &Wavepacket, after: &Wavepacket, period_ns: f64) -> Result<BeatSuppression> {
    if !before.same_grid(after) {
        return Err(Error::GridMismatch(
            "wavepackets are sampled on different delay grids".into(),
        ));
    }
    Ok(BeatSuppression {
        depth_before: beat_depth(before, period_ns)?,
        depth_after: beat_depth(after, period_ns)?,
    })
}

/// Fraction of |ψ|² energy found at negative delays of a periodic transform.
pub fn acausal_fraction(trace: &crate::wavepacket::PsiTrace, si_gamma13: f64, guard_ns: f64) -> f64 {
    let guard = ns_to_natural(guard_ns, si_gamma13);
    let (mut neg, mut all) = (0.0, 0.0);
    for (i, v) in trace.values.iter().enumerate() {
        let e = v.norm_sqr();
        all += e;
        if trace.tau(i) < -guard {
            neg += e;
        }
    }
    if all > 0.0 {
        neg / all
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{chi3_approx, dressed_modes, SystemParams};
    use crate::wavepacket::{beat_period, frequency_grid_for, psi_numeric, SpectralWindow, TimeGridConfig};

    #[test]
    fn peak_and_half_power() {
        let f = EtalonFilter::narrowband(3.0);
        assert!((f.transmission(3.0) - 0.12).abs() < 1e-12);
        assert!((f.fwhm - 5.0).abs() < 1e-12);
        assert!((f.transmission(3.0 + 2.5) - 0.06).abs() < 1e-12);
        assert!((f.transmission(3.0 - 2.5) - 0.06).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_filters() {
        assert!(EtalonFilter::new(0.0, 0.0, 10.0, 0.5).is_err());
        assert!(EtalonFilter::new(0.0, 20.0, 10.0, 0.5).is_err());
        assert!(EtalonFilter::new(0.0, 1.0, 10.0, 1.5).is_err());
        assert!(EtalonFilter::new(0.0, 1.0, 10.0, 0.0).is_err());
    }

    #[test]
    fn out_of_band_grid() {
        let f = EtalonFilter::new(0.0, 1.0, 100.0, 0.5).unwrap();
        let grid = FrequencyGrid::centered(0.0, 200.0, 64).unwrap();
        assert!(matches!(etalon_amplitude(&f, &grid), Err(Error::OutOfBand(_))));
    }

    #[test]
    fn mismatched_grids() {
        let a = FrequencyGrid::centered(0.0, 10.0, 64)
            .unwrap()
            .evaluate(|_| C64::new(1.0, 0.0));
        let b = FrequencyGrid::centered(0.0, 10.0, 128)
            .unwrap()
            .evaluate(|_| C64::new(1.0, 0.0));
        assert!(matches!(multiply(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn resonant_beating_has_full_depth() {
        let p = SystemParams::with_coupling(0.0, 14.8);
        let grid = TimeGridConfig::new(200.0, 8001).unwrap();
        let w = crate::wavepacket::g2_analytic(&p, &Default::default(), &grid).unwrap();
        let depth = beat_depth(&w, beat_period(&p).unwrap()).unwrap();
        assert!(depth > 0.99, "{depth}");
    }

    #[test]
    fn short_wavepacket_is_rejected() {
        let p = SystemParams::with_coupling(0.0, 14.8);
        let grid = TimeGridConfig::new(30.0, 301).unwrap();
        let w = crate::wavepacket::g2_analytic(&p, &Default::default(), &grid).unwrap();
        assert!(matches!(
            beat_depth(&w, beat_period(&p).unwrap()),
            Err(Error::InsufficientSpan(_))
        ));
    }

    #[test]
    fn midpoint_filter_on_resonance_keeps_symmetric_beating() {
        let p = SystemParams::with_coupling(0.0, 14.8);
        let window = SpectralWindow::default();
        let grid = frequency_grid_for(&p, 300.0, &window).unwrap();
        let spec = chi3_approx(&p, &grid).unwrap();
        let filter = EtalonFilter::broadband(0.0);
        let filtered = apply_filter(&spec, &filter).unwrap();
        let power = crate::wavepacket::spectrum_power(&filtered).unwrap();
        let modes = dressed_modes(&p).unwrap();
        let at = |w: f64| power[((w - grid.omega_min) / grid.omega_step).round() as usize];
        let (left, right) = (at(modes.delta_plus), at(modes.delta_minus));
        assert!((left - right).abs() < 1e-3 * left.max(right), "{left} {right}");
        let tg = TimeGridConfig::new(300.0, 1501).unwrap();
        let w = psi_numeric(&filtered, &tg, p.si_gamma13).unwrap();
        let depth = beat_depth(&w, beat_period(&p).unwrap()).unwrap();
        assert!(depth > 0.95, "{depth}");
    }
}
