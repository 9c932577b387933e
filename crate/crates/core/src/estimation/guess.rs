//! Starting values for the fits, read off the histogram directly.

use rustfft::{num_complex::Complex64 as C64, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{FitParams, ModelKind};
use crate::error::{Error, Result};
use crate::photostatistics::CoincidenceHistogram;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialGuess {
    pub params: FitParams,
    pub beat_detected: bool,
    /// Height of the beat peak relative to the zero-frequency component.
    pub beat_strength: f64,
    /// Model suggested by the presence or absence of a beat.
    pub suggested: ModelKind,
}

/// Initial parameters for `h`.
///
/// Background from the decay of the second half of the record; beat frequency from the
/// zero-padded spectrum of the background-subtracted counts; decay rates from
/// log-linear fits to the upper envelope. Fails with `DegenerateData` when no
/// correlated signal stands out of the background.
pub fn initial_guess(h: &CoincidenceHistogram, si_gamma13: f64) -> Result<InitialGuess> {
    let n = h.len();
    if n < 20 {
        return Err(Error::invalid("histogram", "need at least 20 bins"));
    }
    if !(si_gamma13 > 0.0) || !(h.bin_width > 0.0) {
        return Err(Error::invalid("si_gamma13", "must be positive"));
    }
    let y: Vec<f64> = h.counts.iter().map(|&c| c as f64).collect();
    if y.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateData("histogram is empty".into()));
    }
    let background = estimate_background(&y);
    let x: Vec<f64> = y.iter().map(|v| v - background).collect();

    let k = (n / 100).max(1);
    let smooth = moving_average(&x, k);
    let (ip, peak) = argmax(&smooth);
    let noise = background.max(1.0).sqrt() / (k as f64).sqrt();
    if !(peak > 6.0 * noise) {
        return Err(Error::DegenerateData(format!(
            "no correlated signal: peak excess {peak:.3} vs noise {noise:.3} per bin"
        )));
    }

    // natural time units
    let dt = h.bin_width * 1e-9 * si_gamma13;
    let beat = detect_beat(&x, dt, y.iter().sum::<f64>());

    let env = match beat {
        Some((omega, _)) => {
            let half = ((std::f64::consts::PI / (omega * dt)).round() as usize).max(1);
            upper_envelope(&smooth, half)
        }
        None => smooth.clone(),
    };
    let tau = |i: usize| (i as f64 + 0.5) * dt;
    let emax = env[ip..].iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // slow decay of the envelope ≈ A·e^{−2γ−τ} once the fast part is gone
    let (idx, vals): (Vec<usize>, Vec<f64>) = (ip..n)
        .filter(|&i| env[i] <= 0.2 * emax && env[i] >= 0.01 * emax)
        .map(|i| (i, env[i].ln()))
        .unzip();
    let late_start = idx.first().copied().unwrap_or(ip);
    let (slope, intercept) = if idx.len() >= 5 {
        let t: Vec<f64> = idx.iter().map(|&i| tau(i)).collect();
        line_fit(&t, &vals)
    } else {
        // too few points: fall back to the e⁻² length
        let end = (ip..n).find(|&i| env[i] < emax * (-2.0f64).exp()).unwrap_or(n - 1);
        let len = (tau(end) - tau(ip)).max(dt);
        (-2.0 / len, emax.ln() + 2.0 * tau(ip) / len)
    };
    let gamma_minus = (-0.5 * slope).max(1e-6);
    let amplitude = intercept.exp().max(peak);

    let (params, suggested) = match beat {
        Some((omega_e, _)) => {
            // fast component from what is left over at early delays
            let (t, v): (Vec<f64>, Vec<f64>) = (0..late_start)
                .filter_map(|i| {
                    let u = (env[i].max(0.0) / amplitude).sqrt() - (-gamma_minus * tau(i)).exp();
                    (u > 0.05 && i >= ip).then(|| (tau(i), u.ln()))
                })
                .unzip();
            let mut gamma_plus = if t.len() >= 3 { -line_fit(&t, &v).0 } else { 0.0 };
            if !(gamma_plus > 1.5 * gamma_minus) {
                gamma_plus = 4.0 * gamma_minus;
            }
            (
                FitParams {
                    amplitude,
                    gamma_plus,
                    gamma_minus,
                    omega_e,
                    background,
                    t0: 0.0,
                },
                ModelKind::TwoComponent,
            )
        }
        None => (
            FitParams {
                amplitude,
                gamma_plus: gamma_minus,
                gamma_minus,
                omega_e: 0.0,
                background,
                t0: 0.0,
            },
            ModelKind::SingleExponential,
        ),
    };
    Ok(InitialGuess {
        params,
        beat_detected: beat.is_some(),
        beat_strength: beat.map(|b| b.1).unwrap_or(0.0),
        suggested,
    })
}

/// Constant floor under a decaying tail.
///
/// Block means m1, m2, m3 over the last half of the record follow
/// b + c·q^k for an exponential tail, which gives b = (m1·m3 − m2²)/(m1 + m3 − 2m2).
/// Falls back to the mean of the last tenth when the tail shows no clear decay.
fn estimate_background(y: &[f64]) -> f64 {
    let n = y.len();
    let tail = (n / 10).max(2);
    let floor = y[n - tail..].iter().sum::<f64>() / tail as f64;
    let len = n / 6;
    if len < 2 {
        return floor;
    }
    let start = n - 3 * len;
    let m: Vec<f64> = (0..3)
        .map(|k| y[start + k * len..start + (k + 1) * len].iter().sum::<f64>() / len as f64)
        .collect();
    let sigma = (m[2].max(1.0) / len as f64).sqrt();
    let denom = m[0] + m[2] - 2.0 * m[1];
    if m[0] - m[2] < 10.0 * sigma || !(m[0] > m[1] && m[1] > m[2]) || !(denom > 0.0) {
        return floor;
    }
    ((m[0] * m[2] - m[1] * m[1]) / denom).clamp(0.0, floor)
}

fn moving_average(x: &[f64], k: usize) -> Vec<f64> {
    if k <= 1 {
        return x.to_vec();
    }
    let half = k / 2;
    let mut prefix = vec![0.0; x.len() + 1];
    for (i, v) in x.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

fn argmax(x: &[f64]) -> (usize, f64) {
    x.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, v)| if v > b.1 { (i, v) } else { b })
}

fn upper_envelope(x: &[f64], half: usize) -> Vec<f64> {
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            x[lo..hi].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect()
}

/// Least-squares line; returns (slope, intercept).
fn line_fit(t: &[f64], v: &[f64]) -> (f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let sxy: f64 = t.iter().zip(v).map(|(a, b)| (a - mt) * (b - mv)).sum();
    let sxx: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (slope, mv - slope * mt)
}

/// Angular beat frequency (natural units) and relative strength, if a
/// spectral peak stands clear of both the low-frequency lobe and the noise.
fn detect_beat(x: &[f64], dt: f64, total_counts: f64) -> Option<(f64, f64)> {
    let n_pad = (x.len().next_power_of_two() * 8).max(64);
    let mut buf: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    buf.resize(n_pad, C64::new(0.0, 0.0));
    FftPlanner::new().plan_fft_forward(n_pad).process(&mut buf);
    let mag: Vec<f64> = buf[..n_pad / 2].iter().map(|c| c.norm()).collect();
    let dc = mag[0];
    let noise = 6.0 * total_counts.max(1.0).sqrt();
    let mut best: Option<(usize, f64)> = None;
    let mut running_min = f64::INFINITY;
    for k in 1..mag.len() - 1 {
        running_min = running_min.min(mag[k]);
        let is_max = mag[k] >= mag[k - 1] && mag[k] >= mag[k + 1];
        if k < 2 || !is_max {
            continue;
        }
        if mag[k] > 1.3 * running_min && mag[k] > noise && mag[k] > 0.05 * dc && best.map_or(true, |b| mag[k] > b.1) {
            best = Some((k, mag[k]));
        }
    }
    let (k, m) = best?;
    // parabolic refinement of the peak position
    let (a, b, c) = (mag[k - 1], mag[k], mag[k + 1]);
    let denom = a - 2.0 * b + c;
    let shift = if denom.abs() > 0.0 { 0.5 * (a - c) / denom } else { 0.0 };
    let omega = 2.0 * std::f64::consts::PI * (k as f64 + shift.clamp(-0.5, 0.5)) / (n_pad as f64 * dt);
    Some((omega, m / dc.abs().max(f64::MIN_POSITIVE)))
}
