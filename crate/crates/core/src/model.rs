//! Physical parameters, dressed modes and the third-order susceptibility.
//!
//! All rates and detunings are in units of γ13. The coupling field splits the
//! anti-Stokes response into two dressed modes: one centred at δ+ with
//! half-width γ+, one at δ− with half-width γ−. For Δc > 0 the δ− mode is the
//! narrow one and its width approaches γ12 as Δc/Ωc grows.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::units::SI_GAMMA13;

/// Rates, detunings and optical depth of the four-level system.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemParams {
    /// γ13, the normalization rate (1 by convention).
    pub gamma13: f64,
    /// γ12, ground-state dephasing.
    pub gamma12: f64,
    /// γ14, dephasing of the pump transition.
    pub gamma14: f64,
    /// Pump detuning Δp.
    pub delta_p: f64,
    /// Coupling detuning Δc.
    pub delta_c: f64,
    /// Coupling Rabi frequency Ωc (real, non-negative).
    pub omega_c: f64,
    /// Optical depth; only enters through the amplitude.
    pub od: f64,
    /// γ13 in rad/s, used when reporting SI values.
    pub si_gamma13: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            gamma13: 1.0,
            gamma12: 0.084,
            gamma14: 1.0,
            delta_p: -14.0,
            delta_c: 0.0,
            omega_c: 14.8,
            od: 5.0,
            si_gamma13: SI_GAMMA13,
        }
    }
}

impl SystemParams {
    /// The baseline parameter set with the given coupling detuning and Rabi frequency.
    pub fn with_coupling(delta_c: f64, omega_c: f64) -> Self {
        Self {
            delta_c,
            omega_c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            ("gamma13", self.gamma13),
            ("gamma12", self.gamma12),
            ("gamma14", self.gamma14),
            ("delta_p", self.delta_p),
            ("delta_c", self.delta_c),
            ("omega_c", self.omega_c),
            ("od", self.od),
            ("si_gamma13", self.si_gamma13),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(Error::invalid(name, format!("must be finite, got {v}")));
            }
        }
        if self.gamma13 <= 0.0 {
            return Err(Error::invalid("gamma13", "must be positive"));
        }
        if self.si_gamma13 <= 0.0 {
            return Err(Error::invalid("si_gamma13", "must be positive"));
        }
        for (name, v) in [
            ("gamma12", self.gamma12),
            ("gamma14", self.gamma14),
            ("omega_c", self.omega_c),
            ("od", self.od),
        ] {
            if v < 0.0 {
                return Err(Error::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if self.gamma12 >= self.gamma13 {
            return Err(Error::invalid(
                "gamma12",
                format!(
                    "ground-state dephasing {} must be below gamma13 = {}",
                    self.gamma12, self.gamma13
                ),
            ));
        }
        Ok(())
    }

    /// Ωe = √(Ωc² + Δc²).
    pub fn omega_e(&self) -> f64 {
        self.omega_c.hypot(self.delta_c)
    }
}

/// Detunings and half-widths of the two dressed modes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DressedModes {
    pub omega_e: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl DressedModes {
    /// Complex pole of the (δ+, γ+) mode.
    pub fn pole_plus(&self) -> C64 {
        C64::new(self.delta_plus, -self.gamma_plus)
    }

    /// Complex pole of the (δ−, γ−) mode.
    pub fn pole_minus(&self) -> C64 {
        C64::new(self.delta_minus, -self.gamma_minus)
    }

    /// The pole with the smaller half-width (the δ− mode on ties).
    pub fn narrow_pole(&self) -> C64 {
        if self.gamma_minus <= self.gamma_plus {
            self.pole_minus()
        } else {
            self.pole_plus()
        }
    }

    pub fn broad_pole(&self) -> C64 {
        if self.gamma_minus <= self.gamma_plus {
            self.pole_plus()
        } else {
            self.pole_minus()
        }
    }

    /// Full width at half maximum of the (δ−, γ−) mode, 2γ−.
    pub fn fwhm_minus(&self) -> f64 {
        2.0 * self.gamma_minus
    }

    pub fn fwhm_plus(&self) -> f64 {
        2.0 * self.gamma_plus
    }
}

/// Dressed-mode detunings δ± = (Δc ∓ Ωe)/2 and half-widths
/// γ± = (γ13 + γ12)/2 ± (Δc/Ωe)(γ13 − γ12)/2.
pub fn dressed_modes(p: &SystemParams) -> Result<DressedModes> {
    p.validate()?;
    let omega_e = p.omega_e();
    if omega_e == 0.0 {
        return Err(Error::Degenerate(
            "Ωe = 0 (Δc = Ωc = 0): the ratio Δc/Ωe is undefined".into(),
        ));
    }
    let mean = 0.5 * (p.gamma13 + p.gamma12);
    let split = 0.5 * (p.delta_c / omega_e) * (p.gamma13 - p.gamma12);
    Ok(DressedModes {
        omega_e,
        delta_plus: 0.5 * (p.delta_c - omega_e),
        delta_minus: 0.5 * (p.delta_c + omega_e),
        gamma_plus: mean + split,
        gamma_minus: mean - split,
    })
}

/// The two exact roots of D(ω) = |Ωc|² − 4(ω + iγ13)(ω − Δc + iγ12), sorted by real part.
///
/// The first root pairs with the (δ+, γ+) mode and the second with (δ−, γ−).
pub fn exact_poles(p: &SystemParams) -> Result<[C64; 2]> {
    p.validate()?;
    // ω² + bω + c = 0
    let b = C64::new(-p.delta_c, p.gamma13 + p.gamma12);
    let c = C64::new(
        -p.gamma13 * p.gamma12 - 0.25 * p.omega_c * p.omega_c,
        -p.gamma13 * p.delta_c,
    );
    let disc = (b * b - 4.0 * c).sqrt();
    // avoid cancellation: compute the larger-magnitude root first
    let q = if (b.conj() * disc).re >= 0.0 {
        -0.5 * (b + disc)
    } else {
        -0.5 * (b - disc)
    };
    let r1 = q;
    let r2 = if q.norm() > 0.0 { c / q } else { -b - q };
    Ok(if r1.re <= r2.re { [r1, r2] } else { [r2, r1] })
}

/// D(ω) = |Ωc|² − 4(ω + iγ13)(ω − Δc + iγ12).
pub fn denominator(p: &SystemParams, omega: f64) -> C64 {
    let a = C64::new(omega, p.gamma13);
    let b = C64::new(omega - p.delta_c, p.gamma12);
    C64::new(p.omega_c * p.omega_c, 0.0) - 4.0 * a * b
}

/// Overall complex amplitude of the biphoton wavefunction.
///
/// Absorbs field amplitudes, density, dipole moments, the cloud length and
/// the pump-detuning denominator into one number.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeModel {
    pub scale: C64,
}

impl Default for AmplitudeModel {
    fn default() -> Self {
        Self {
            scale: C64::new(1.0, 0.0),
        }
    }
}

impl AmplitudeModel {
    pub fn new(scale: C64) -> Result<Self> {
        let m = Self { scale };
        m.validate()?;
        Ok(m)
    }

    pub fn real(scale: f64) -> Result<Self> {
        Self::new(C64::new(scale, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale.re.is_finite() && self.scale.im.is_finite()) || self.scale.norm() == 0.0 {
            return Err(Error::invalid("scale", "must be finite and non-zero"));
        }
        Ok(())
    }

    pub fn apply(&self, mut spectrum: ComplexSpectrum) -> ComplexSpectrum {
        for v in &mut spectrum.values {
            *v *= self.scale;
        }
        spectrum
    }
}

/// A uniform angular-frequency grid in γ13 units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    pub omega_min: f64,
    pub omega_step: f64,
    pub len: usize,
}

impl FrequencyGrid {
    pub fn new(omega_min: f64, omega_step: f64, len: usize) -> Result<Self> {
        let g = Self {
            omega_min,
            omega_step,
            len,
        };
        g.validate()?;
        Ok(g)
    }

    /// `len` points spanning `[center - span/2, center + span/2)`.
    pub fn centered(center: f64, span: f64, len: usize) -> Result<Self> {
        if !(span > 0.0) || len < 2 {
            return Err(Error::invalid("span", "need span > 0 and at least two points"));
        }
        let step = span / len as f64;
        Self::new(center - 0.5 * span, step, len)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega_min.is_finite() {
            return Err(Error::invalid("omega_min", "must be finite"));
        }
        if !(self.omega_step > 0.0) || !self.omega_step.is_finite() {
            return Err(Error::invalid("omega_step", "must be positive"));
        }
        if self.len < 2 {
            return Err(Error::invalid("len", "grid needs at least two points"));
        }
        Ok(())
    }

    #[inline]
    pub fn omega(&self, i: usize) -> f64 {
        self.omega_min + i as f64 * self.omega_step
    }

    pub fn omega_max(&self) -> f64 {
        self.omega(self.len - 1)
    }

    pub fn span(&self) -> f64 {
        self.omega_max() - self.omega_min
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.omega(i))
    }

    pub fn evaluate(&self, f: impl Fn(f64) -> C64) -> ComplexSpectrum {
        ComplexSpectrum {
            omega_min: self.omega_min,
            omega_step: self.omega_step,
            values: self.iter().map(f).collect(),
        }
    }

    /// True when both grids have identical sampling points.
    pub fn same_as(&self, other: &FrequencyGrid) -> bool {
        self.len == other.len
            && (self.omega_min - other.omega_min).abs() <= 1e-12 * self.omega_step.max(1.0)
            && (self.omega_step - other.omega_step).abs() <= 1e-12 * self.omega_step
    }
}

/// Complex amplitude sampled on a uniform frequency grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexSpectrum {
    pub omega_min: f64,
    pub omega_step: f64,
    pub values: Vec<C64>,
}

impl ComplexSpectrum {
    pub fn grid(&self) -> FrequencyGrid {
        FrequencyGrid {
            omega_min: self.omega_min,
            omega_step: self.omega_step,
            len: self.values.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.grid().validate()
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.omega_min + i as f64 * self.omega_step
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// ∫|F(ω)|² dω by the trapezoid rule.
    pub fn energy(&self) -> f64 {
        let n = self.values.len();
        let sum: f64 = self.values.iter().map(|v| v.norm_sqr()).sum();
        let ends = 0.5 * (self.values[0].norm_sqr() + self.values[n - 1].norm_sqr());
        (sum - ends) * self.omega_step
    }
}

/// Prefactor 1/(Δp + iγ14) shared by both susceptibility forms.
fn pump_factor(p: &SystemParams) -> C64 {
    C64::new(p.delta_p, p.gamma14).inv()
}

/// The full susceptibility shape 1/[(Δp + iγ14)·D(ω)] on `grid`.
pub fn chi3_full(p: &SystemParams, grid: &FrequencyGrid) -> Result<ComplexSpectrum> {
    p.validate()?;
    grid.validate()?;
    let pre = pump_factor(p);
    Ok(grid.evaluate(|w| pre / denominator(p, w)))
}

/// The two-pole approximation −1/[4(Δp + iγ14)(ω − δ− + iγ−)(ω − δ+ + iγ+)].
///
/// The −1/4 factor makes this agree with [`chi3_full`] in the strong-coupling
/// limit, where D(ω) ≈ −4(ω − δ− + iγ−)(ω − δ+ + iγ+).
pub fn chi3_approx(p: &SystemParams, grid: &FrequencyGrid) -> Result<ComplexSpectrum> {
    let modes = dressed_modes(p)?;
    grid.validate()?;
    let contrast = (p.gamma13 - p.gamma12).abs();
    if p.omega_c < 3.0 * contrast {
        log::warn!(
            "two-pole form used outside its regime: Ωc = {} < 3|γ13 − γ12| = {}",
            p.omega_c,
            3.0 * contrast
        );
    }
    Ok(two_pole_spectrum(
        -0.25 * pump_factor(p),
        modes.pole_minus(),
        modes.pole_plus(),
        grid,
    ))
}

/// `residue_scale / ((ω − a)(ω − b))` on `grid`.
pub fn two_pole_spectrum(residue_scale: C64, a: C64, b: C64, grid: &FrequencyGrid) -> ComplexSpectrum {
    grid.evaluate(|w| residue_scale / ((w - a) * (w - b)))
}

/// Integrated spectral power of each Lorentzian term of the two-pole form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentWeights {
    pub weight_narrow: f64,
    pub weight_broad: f64,
}

impl ComponentWeights {
    pub fn ratio(&self) -> f64 {
        self.weight_narrow / self.weight_broad
    }
}

/// Splits the two-pole susceptibility into partial fractions r/(ω − a) −
/// r/(ω − b) and integrates the power of each over the real line.
///
/// Both terms share |r|, so each carries π|r|²/γ and the ratio narrow/broad is
/// γ_broad/γ_narrow.
pub fn component_weights(p: &SystemParams) -> Result<ComponentWeights> {
    let modes = dressed_modes(p)?;
    let a = modes.narrow_pole();
    let b = modes.broad_pole();
    let r = (-0.25 * pump_factor(p) / (a - b)).norm_sqr();
    let pi = std::f64::consts::PI;
    if modes.gamma_plus == modes.gamma_minus {
        let w = pi * r / modes.gamma_plus;
        return Ok(ComponentWeights {
            weight_narrow: w,
            weight_broad: w,
        });
    }
    Ok(ComponentWeights {
        weight_narrow: pi * r / -a.im,
        weight_broad: pi * r / -b.im,
    })
}
