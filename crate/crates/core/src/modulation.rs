//! Heralded waveform shaping: a triggered intensity mask applied after a delay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{dressed_modes, AmplitudeModel, SystemParams};
use crate::units::natural_to_ns;
use crate::wavepacket::{beat_period, g2_analytic, TimeGridConfig, Wavepacket};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskKind {
    #[default]
    SquareTrain,
    CustomSamples,
}

/// Whether mask values multiply the intensity G² or the amplitude ψ.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskConvention {
    #[default]
    Intensity,
    Amplitude,
}

/// Transmission profile of the modulator in its own time frame (ns, zero at the trigger).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationMask {
    pub kind: MaskKind,
    pub pulse_width: f64,
    pub pulse_separation: f64,
    pub n_pulses: usize,
    pub start_offset: f64,
    /// Values in [0, 1] at start_offset + k·sample_step (custom masks).
    pub samples: Option<Vec<f64>>,
    pub sample_step: f64,
    pub convention: MaskConvention,
    /// 1/e time of single-pole edge smoothing; `None` gives sharp edges.
    pub rise_time: Option<f64>,
}

impl Default for ModulationMask {
    fn default() -> Self {
        Self::square_train(50.0, 50.0, 2, 0.0)
    }
}

impl ModulationMask {
    pub fn square_train(pulse_width: f64, pulse_separation: f64, n_pulses: usize, start_offset: f64) -> Self {
        Self {
            kind: MaskKind::SquareTrain,
            pulse_width,
            pulse_separation,
            n_pulses,
            start_offset,
            samples: None,
            sample_step: 1.0,
            convention: MaskConvention::Intensity,
            rise_time: None,
        }
    }

    pub fn custom(start_offset: f64, sample_step: f64, samples: Vec<f64>) -> Self {
        Self {
            kind: MaskKind::CustomSamples,
            samples: Some(samples),
            sample_step,
            start_offset,
            n_pulses: 0,
            ..Self::default()
        }
    }

    /// Constant unit transmission over [start_offset, start_offset + len).
    pub fn open(start_offset: f64, len: f64) -> Self {
        Self::square_train(len, 0.0, 1, start_offset)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.start_offset.is_finite() {
            return Err(Error::invalid("start_offset", "must be finite"));
        }
        if let Some(r) = self.rise_time {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::invalid("rise_time", "must be positive"));
            }
        }
        match self.kind {
            MaskKind::SquareTrain => {
                if !(self.pulse_width > 0.0 && self.pulse_width.is_finite()) {
                    return Err(Error::invalid("pulse_width", "must be positive"));
                }
                if !(self.pulse_separation >= 0.0 && self.pulse_separation.is_finite()) {
                    return Err(Error::invalid("pulse_separation", "must be non-negative"));
                }
                if self.n_pulses == 0 {
                    return Err(Error::invalid("n_pulses", "need at least one pulse"));
                }
            }
            MaskKind::CustomSamples => {
                let Some(s) = &self.samples else {
                    return Err(Error::invalid("samples", "custom mask needs samples"));
                };
                if s.len() < 2 {
                    return Err(Error::invalid("samples", "need at least two samples"));
                }
                if s.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::invalid("samples", "values must lie in [0, 1]"));
                }
                if !(self.sample_step > 0.0 && self.sample_step.is_finite()) {
                    return Err(Error::invalid("sample_step", "must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Mask-frame interval outside which the transmission is zero.
    pub fn window(&self) -> (f64, f64) {
        let len = match self.kind {
            MaskKind::SquareTrain => {
                let n = self.n_pulses as f64;
                n * self.pulse_width + (n - 1.0).max(0.0) * self.pulse_separation
            }
            MaskKind::CustomSamples => (self.samples.as_ref().map_or(1, |s| s.len()) - 1) as f64 * self.sample_step,
        };
        // smoothed edges leak past the last pulse; cut after 40 time constants
        let tail = if self.kind == MaskKind::SquareTrain {
            self.rise_time.map_or(0.0, |r| 40.0 * r)
        } else {
            0.0
        };
        (self.start_offset, self.start_offset + len + tail)
    }

    /// Transmission at mask-frame time `t` ns, in [0, 1].
    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            MaskKind::SquareTrain => {
                let period = self.pulse_width + self.pulse_separation;
                (0..self.n_pulses)
                    .map(|k| {
                        let a = self.start_offset + k as f64 * period;
                        pulse(t, a, a + self.pulse_width, self.rise_time)
                    })
                    .sum::<f64>()
                    .min(1.0)
            }
            MaskKind::CustomSamples => {
                let s = self.samples.as_deref().unwrap_or(&[]);
                let x = (t - self.start_offset) / self.sample_step;
                if s.len() < 2 || x < 0.0 || x > (s.len() - 1) as f64 {
                    return 0.0;
                }
                let i = (x.floor() as usize).min(s.len() - 2);
                let f = x - i as f64;
                s[i] * (1.0 - f) + s[i + 1] * f
            }
        }
    }
}

/// Square pulse on [a, b), optionally passed through a single-pole low-pass.
fn pulse(t: f64, a: f64, b: f64, rise: Option<f64>) -> f64 {
    match rise {
        None => {
            if t >= a && t < b {
                1.0
            } else {
                0.0
            }
        }
        Some(r) => {
            if t < a {
                0.0
            } else if t < b {
                1.0 - (-(t - a) / r).exp()
            } else {
                (1.0 - (-(b - a) / r).exp()) * (-(t - b) / r).exp()
            }
        }
    }
}

impl Wavepacket {
    /// The same samples on a delay grid moved by `d` ns.
    pub fn shifted(&self, d: f64) -> Wavepacket {
        Wavepacket {
            tau_min: self.tau_min + d,
            ..self.clone()
        }
    }
}

/// Multiplies `w` by the mask triggered `delay` ns after τ = 0.
///
/// With the intensity convention G² is multiplied by m(τ − delay) and ψ by
/// its square root; with the amplitude convention ψ is multiplied by m and G²
/// by m².
pub fn apply_mask(w: &Wavepacket, m: &ModulationMask, delay: f64) -> Result<Wavepacket> {
    m.validate()?;
    if !(delay >= 0.0 && delay.is_finite()) {
        return Err(Error::invalid("delay", "must be finite and non-negative"));
    }
    if w.is_empty() {
        return Err(Error::invalid("wavepacket", "no samples"));
    }
    let (lo, hi) = m.window();
    if lo + delay > w.tau_end() || hi + delay < w.tau_min {
        return Err(Error::Support(format!(
            "mask window [{:.2}, {:.2}] ns lies outside the wavepacket [{:.2}, {:.2}] ns",
            lo + delay,
            hi + delay,
            w.tau_min,
            w.tau_end()
        )));
    }
    let factor: Vec<(f64, f64)> = w
        .taus()
        .map(|tau| {
            let v = m.value(tau - delay);
            match m.convention {
                MaskConvention::Intensity => (v, v.sqrt()),
                MaskConvention::Amplitude => (v * v, v),
            }
        })
        .collect();
    Ok(Wavepacket {
        tau_min: w.tau_min,
        tau_step: w.tau_step,
        g2: w.g2.iter().zip(&factor).map(|(g, f)| g * f.0).collect(),
        psi: w
            .psi
            .as_ref()
            .map(|p| p.iter().zip(&factor).map(|(v, f)| v * f.1).collect()),
    })
}

/// Analytic wavepacket whose beats form the pulse train, and the train period in ns.
pub fn pulse_train_preview(p: &SystemParams, grid: &TimeGridConfig) -> Result<(Wavepacket, f64)> {
    p.validate()?;
    let w = g2_analytic(p, &AmplitudeModel::real(1.0)?, grid)?;
    Ok((w, beat_period(p)?))
}

/// Delay (ns) after which the local beat visibility sech((γ+ − γ−)τ) stays below `level`.
///
/// On resonance the two components decay together and the beats never fade.
pub fn front_end_delay(p: &SystemParams, level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("level", "must lie in (0, 1)"));
    }
    let modes = dressed_modes(p)?;
    let dg = (modes.gamma_plus - modes.gamma_minus).abs();
    if dg < 1e-12 {
        return Err(Error::Degenerate(
            "equal component linewidths: the beat visibility does not decay".into(),
        ));
    }
    Ok(natural_to_ns((1.0 / level).acosh() / dg, p.si_gamma13))
}

/// Two 50-ns square pulses separated by 50 ns, starting where the front beats have faded to 10%.
pub fn default_mask(p: &SystemParams) -> Result<ModulationMask> {
    Ok(ModulationMask::square_train(50.0, 50.0, 2, front_end_delay(p, 0.1)?))
}
